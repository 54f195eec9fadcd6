#ifndef GCM_GCM_HPP
#define GCM_GCM_HPP

// Estimation and inference for the high-dimensional multi-response linear
// growth curve model: separable covariance decomposition, block-structured
// generalized least squares, a max-statistic global test, an FDR-controlled
// multiple testing procedure, and a Monte-Carlo study harness.

#include "gcm/analysis.hpp"
#include "gcm/covariance.hpp"
#include "gcm/csv.hpp"
#include "gcm/dataset.hpp"
#include "gcm/design.hpp"
#include "gcm/estimation.hpp"
#include "gcm/gls.hpp"
#include "gcm/inference.hpp"
#include "gcm/parallel.hpp"
#include "gcm/rng.hpp"
#include "gcm/simulation.hpp"
#include "gcm/study.hpp"
#include "gcm/types.hpp"

#endif  // GCM_GCM_HPP
