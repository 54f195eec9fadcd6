#ifndef GCM_CSV_HPP
#define GCM_CSV_HPP

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gcm/dataset.hpp"
#include "gcm/types.hpp"

namespace gcm {

// Shortest representation that parses back to the same double.
inline std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

// Which columns of a long-format file play which role. Every row is one
// (subject, time) observation. An empty response list means "all columns not
// claimed by another role, in file order".
struct ColumnMapping {
  std::string id_col = "subject";
  std::string time_col = "time";
  std::vector<std::string> static_cols;
  std::vector<std::string> dynamic_cols;
  std::vector<std::string> response_cols;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

// Comma only; the delimiter is deliberately not auto-detected.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream stream(line);
  while (std::getline(stream, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline double parse_double(const std::string& text, long row, const std::string& column) {
  const std::string trimmed = trim(text);
  if (trimmed.empty())
    throw ValidationError("row " + std::to_string(row) + ", column '" + column +
                          "': empty cell");
  char* end = nullptr;
  const double value = std::strtod(trimmed.c_str(), &end);
  if (end != trimmed.c_str() + trimmed.size())
    throw ValidationError("row " + std::to_string(row) + ", column '" + column +
                          "': non-numeric value '" + trimmed + "'");
  return value;
}

}  // namespace detail

// Reads a long-format delimited file into a dataset. Subjects are ordered by
// first appearance and rows within a subject by ascending time; every subject
// must contribute exactly the same number of rows, time-invariant columns
// must not vary within a subject, and duplicated (subject, time) rows are
// rejected.
inline GrowthCurveDataset ingest_csv(const std::string& path, const ColumnMapping& mapping) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot open input file '" + path + "'");

  std::string line;
  if (!std::getline(file, line)) throw ValidationError("'" + path + "' is empty");
  const std::vector<std::string> header = detail::split_csv_line(line);
  std::map<std::string, int> column_index;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    if (column_index.count(header[c]))
      throw ValidationError("duplicate column name '" + header[c] + "'");
    column_index[header[c]] = c;
  }

  auto require_column = [&](const std::string& name) {
    const auto it = column_index.find(name);
    if (it == column_index.end())
      throw ValidationError("mapped column '" + name + "' not found in '" + path + "'");
    return it->second;
  };

  const int id_idx = require_column(mapping.id_col);
  const int time_idx = require_column(mapping.time_col);
  std::vector<int> static_idx, dynamic_idx, response_idx;
  std::set<int> claimed{id_idx, time_idx};
  auto claim = [&](const std::string& name, std::vector<int>& out) {
    const int idx = require_column(name);
    if (!claimed.insert(idx).second)
      throw ValidationError("column '" + name + "' mapped to more than one role");
    out.push_back(idx);
  };
  for (const auto& name : mapping.static_cols) claim(name, static_idx);
  for (const auto& name : mapping.dynamic_cols) claim(name, dynamic_idx);
  if (mapping.response_cols.empty()) {
    for (int c = 0; c < static_cast<int>(header.size()); ++c)
      if (!claimed.count(c)) response_idx.push_back(c);
    if (response_idx.empty())
      throw ValidationError("no response columns remain after mapping id/time/covariates");
  } else {
    for (const auto& name : mapping.response_cols) claim(name, response_idx);
  }

  struct Row {
    double time;
    std::vector<double> statics, dynamics, responses;
  };
  std::vector<std::string> subject_order;
  std::map<std::string, std::vector<Row>> rows_by_subject;

  long row_number = 1;
  while (std::getline(file, line)) {
    ++row_number;
    if (detail::trim(line).empty()) continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ValidationError("row " + std::to_string(row_number) + " has " +
                            std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(header.size()));
    const std::string id = cells[id_idx];
    if (id.empty())
      throw ValidationError("row " + std::to_string(row_number) + ": empty subject id");
    Row row;
    row.time = detail::parse_double(cells[time_idx], row_number, mapping.time_col);
    for (int idx : static_idx)
      row.statics.push_back(detail::parse_double(cells[idx], row_number, header[idx]));
    for (int idx : dynamic_idx)
      row.dynamics.push_back(detail::parse_double(cells[idx], row_number, header[idx]));
    for (int idx : response_idx)
      row.responses.push_back(detail::parse_double(cells[idx], row_number, header[idx]));

    auto& bucket = rows_by_subject[id];
    if (bucket.empty()) subject_order.push_back(id);
    for (const Row& existing : bucket)
      if (existing.time == row.time)
        throw ValidationError("duplicate (subject, time) = ('" + id + "', " +
                              format_double(row.time) + ")");
    bucket.push_back(std::move(row));
  }
  if (subject_order.empty()) throw ValidationError("'" + path + "' contains no data rows");

  const int T = static_cast<int>(rows_by_subject[subject_order.front()].size());
  std::vector<std::string> ragged;
  for (const auto& id : subject_order)
    if (static_cast<int>(rows_by_subject[id].size()) != T)
      ragged.push_back(id + " (" + std::to_string(rows_by_subject[id].size()) + " rows)");
  if (!ragged.empty()) {
    std::string offenders;
    for (const auto& s : ragged) offenders += (offenders.empty() ? "" : ", ") + s;
    throw ValidationError("subjects with row counts different from " + std::to_string(T) +
                          ": " + offenders);
  }

  GrowthCurveDataset data;
  data.n_subjects = static_cast<int>(subject_order.size());
  data.n_times = T;
  data.n_regions = static_cast<int>(response_idx.size());
  data.n_static = static_cast<int>(static_idx.size());
  data.n_dynamic = static_cast<int>(dynamic_idx.size());
  data.subject_ids = subject_order;
  for (int idx : response_idx) data.region_names.push_back(header[idx]);
  for (int idx : static_idx) data.static_names.push_back(header[idx]);
  for (int idx : dynamic_idx) data.dynamic_names.push_back(header[idx]);

  data.time_values.resize(data.n_subjects, T);
  data.static_covariates.resize(data.n_subjects, data.n_static);
  data.responses.reserve(data.n_subjects);
  data.dynamic_covariates.reserve(data.n_subjects);

  for (int i = 0; i < data.n_subjects; ++i) {
    auto& bucket = rows_by_subject[subject_order[i]];
    std::stable_sort(bucket.begin(), bucket.end(),
                     [](const Row& a, const Row& b) { return a.time < b.time; });
    for (int j = 0; j < data.n_static; ++j) {
      const double first = bucket.front().statics[j];
      for (const Row& row : bucket)
        if (row.statics[j] != first)
          throw ValidationError("time-invariant column '" + data.static_names[j] +
                                "' varies within subject '" + subject_order[i] + "'");
      data.static_covariates(i, j) = first;
    }
    Eigen::MatrixXd y(data.n_regions, T);
    Eigen::MatrixXd z(T, data.n_dynamic);
    for (int t = 0; t < T; ++t) {
      data.time_values(i, t) = bucket[t].time;
      for (int r = 0; r < data.n_regions; ++r) y(r, t) = bucket[t].responses[r];
      for (int j = 0; j < data.n_dynamic; ++j) z(t, j) = bucket[t].dynamics[j];
    }
    data.responses.push_back(std::move(y));
    data.dynamic_covariates.push_back(std::move(z));
  }

  data.validate();
  return data;
}

// Writes a dataset in the same long format ingest_csv reads. Values keep
// their full precision, so write -> ingest reproduces the dataset exactly.
inline void write_dataset_csv(const GrowthCurveDataset& data, const std::string& path,
                              const ColumnMapping& mapping = {}) {
  std::ofstream file(path);
  if (!file) throw IoError("cannot open output file '" + path + "'");

  auto name_or = [](const std::vector<std::string>& names, int k, const std::string& prefix) {
    return k < static_cast<int>(names.size()) ? names[k] : prefix + std::to_string(k + 1);
  };

  file << mapping.id_col << ',' << mapping.time_col;
  for (int j = 0; j < data.n_static; ++j) file << ',' << name_or(data.static_names, j, "x");
  for (int j = 0; j < data.n_dynamic; ++j) file << ',' << name_or(data.dynamic_names, j, "z");
  for (int r = 0; r < data.n_regions; ++r) file << ',' << name_or(data.region_names, r, "y");
  file << '\n';

  for (int i = 0; i < data.n_subjects; ++i) {
    const std::string id =
        i < static_cast<int>(data.subject_ids.size()) ? data.subject_ids[i] : "s" + std::to_string(i + 1);
    for (int t = 0; t < data.n_times; ++t) {
      file << id << ',' << format_double(data.time_values(i, t));
      for (int j = 0; j < data.n_static; ++j)
        file << ',' << format_double(data.static_covariates(i, j));
      for (int j = 0; j < data.n_dynamic; ++j)
        file << ',' << format_double(data.dynamic_covariates[i](t, j));
      for (int r = 0; r < data.n_regions; ++r)
        file << ',' << format_double(data.responses[i](r, t));
      file << '\n';
    }
  }
  if (!file) throw IoError("failed while writing '" + path + "'");
}

}  // namespace gcm

#endif  // GCM_CSV_HPP
