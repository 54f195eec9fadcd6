#ifndef GCM_TYPES_HPP
#define GCM_TYPES_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace gcm {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inconsistent array shapes or index ranges.
struct DimensionError : Error {
  using Error::Error;
};

// A computation produced or met values it cannot work with (non-finite
// entries, singular systems, non-positive denominators).
struct NumericError : Error {
  using Error::Error;
};

// Bad user input: malformed files, invalid configuration.
struct ValidationError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Collects non-fatal events (dropped region pairs, eigenvalue repairs,
// variance flooring) so callers can surface them in reports.
struct Diagnostics {
  int dropped_pairs = 0;
  int psd_repairs = 0;
  int floored_variances = 0;
  std::vector<std::string> notes;

  void note(std::string message) { notes.push_back(std::move(message)); }

  void merge(const Diagnostics& other) {
    dropped_pairs += other.dropped_pairs;
    psd_repairs += other.psd_repairs;
    floored_variances += other.floored_variances;
    notes.insert(notes.end(), other.notes.begin(), other.notes.end());
  }
};

}  // namespace gcm

#endif  // GCM_TYPES_HPP
