// Dataset ingestion, standardization, splitting and sample serialization.
//
// CSV layout (long format, UTF-8, '.' decimal separator):
//   sample_id,time_index,f0,...,f{M-1}[,provenance]
// Every sample must cover exactly the time indices 0..N-1 once each. Values
// are printed with %.17g so save/load round trips are lossless.

#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "freqdiff/core.hpp"
#include "freqdiff/metrics.hpp"
#include "freqdiff/stochastic.hpp"

namespace freqdiff {

struct FeatureStats {
  Vec mean, sd;  // per feature, over all times and samples
};

struct Dataset {
  SampleSet set;
  std::vector<long long> sample_ids;
  FeatureStats stats;        // filled by standardize / apply_standardize
  bool standardized = false;
  std::string name;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  try {
    std::size_t pos = 0;
    double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw DataError("non-numeric cell at row " + std::to_string(row) + ", column " +
                    std::to_string(col) + ": '" + cell + "'");
  }
}

inline long long parse_id(const std::string& cell, std::size_t row) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw DataError("non-numeric cell at row " + std::to_string(row) + ", column 0: '" + cell +
                    "'");
  }
}

}  // namespace detail

/// Loads a long-format CSV into dense N x M series keyed and ordered by
/// sample_id. A trailing provenance column is tolerated and ignored.
inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("missing header in '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto cols = detail::split_csv_line(line);
  bool has_provenance = !cols.empty() && cols.back() == "provenance";
  if (has_provenance) cols.pop_back();
  if (cols.size() < 3 || cols[0] != "sample_id" || cols[1] != "time_index")
    throw DataError("missing header: expected 'sample_id,time_index,f0,...' in '" + path + "'");
  const Index m = static_cast<Index>(cols.size() - 2);
  for (Index v = 0; v < m; ++v)
    if (cols[static_cast<std::size_t>(v) + 2] != "f" + std::to_string(v))
      throw DataError("missing header: feature column " + std::to_string(v) +
                      " must be named f" + std::to_string(v));

  std::map<long long, std::map<long long, std::vector<double>>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    const std::size_t expected = static_cast<std::size_t>(m) + 2 + (has_provenance ? 1 : 0);
    if (cells.size() != expected)
      throw DataError("row " + std::to_string(lineno) + ": expected " + std::to_string(expected) +
                      " cells, got " + std::to_string(cells.size()));
    const long long sid = detail::parse_id(cells[0], lineno);
    long long tidx = 0;
    try {
      std::size_t pos = 0;
      tidx = std::stoll(cells[1], &pos);
      if (pos != cells[1].size()) throw std::invalid_argument(cells[1]);
    } catch (const std::exception&) {
      throw DataError("non-numeric cell at row " + std::to_string(lineno) + ", column 1: '" +
                      cells[1] + "'");
    }
    std::vector<double> feat(static_cast<std::size_t>(m));
    for (Index v = 0; v < m; ++v)
      feat[static_cast<std::size_t>(v)] =
          detail::parse_cell(cells[static_cast<std::size_t>(v) + 2], lineno,
                             static_cast<std::size_t>(v) + 2);
    auto [it, inserted] = rows[sid].emplace(tidx, std::move(feat));
    if (!inserted)
      throw DataError("duplicate (sample_id, time_index) = (" + std::to_string(sid) + ", " +
                      std::to_string(tidx) + ")");
  }
  if (rows.empty()) throw DataError("no samples in '" + path + "'");

  const Index n = static_cast<Index>(rows.begin()->second.size());
  Dataset ds;
  ds.name = path;
  for (const auto& [sid, times] : rows) {
    if (static_cast<Index>(times.size()) != n)
      throw DataError("ragged sample " + std::to_string(sid) + ": has " +
                      std::to_string(times.size()) + " time indices, expected " +
                      std::to_string(n));
    Mat series(n, m);
    long long expect = 0;
    for (const auto& [tidx, feat] : times) {
      if (tidx != expect)
        throw DataError("ragged sample " + std::to_string(sid) + ": missing time_index " +
                        std::to_string(expect));
      for (Index v = 0; v < m; ++v) series(static_cast<Index>(tidx), v) = feat[static_cast<std::size_t>(v)];
      ++expect;
    }
    ds.set.samples.push_back(std::move(series));
    ds.sample_ids.push_back(sid);
  }
  ds.set.label = path;
  return ds;
}

/// Writes the long-format CSV; a nonempty provenance string appends the
/// provenance column to every row.
inline void save_csv(const std::string& path, const SampleSet& set,
                     const std::string& provenance = "") {
  set.require_homogeneous("save_csv");
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "sample_id,time_index";
  for (Index v = 0; v < set.m(); ++v) out << ",f" << v;
  if (!provenance.empty()) out << ",provenance";
  out << "\n";
  char buf[32];
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const Mat& s = set.samples[i];
    for (Index t = 0; t < s.rows(); ++t) {
      out << i << "," << t;
      for (Index v = 0; v < s.cols(); ++v) {
        std::snprintf(buf, sizeof(buf), "%.17g", s(t, v));
        out << "," << buf;
      }
      if (!provenance.empty()) out << "," << provenance;
      out << "\n";
    }
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline FeatureStats compute_stats(const SampleSet& set) {
  set.require_homogeneous("compute_stats");
  const Index m = set.m();
  FeatureStats st;
  st.mean = Vec::Zero(m);
  st.sd = Vec::Zero(m);
  double count = 0.0;
  for (const Mat& s : set.samples) {
    st.mean += s.colwise().sum().transpose();
    count += static_cast<double>(s.rows());
  }
  st.mean /= count;
  for (const Mat& s : set.samples)
    st.sd += (s.rowwise() - st.mean.transpose()).colwise().squaredNorm().transpose();
  st.sd = (st.sd / count).cwiseSqrt();
  for (Index v = 0; v < m; ++v)
    if (!(st.sd(v) > 0))
      throw DataError("zero-variance feature f" + std::to_string(v) +
                      ": standardization undefined");
  return st;
}

inline SampleSet apply_standardize(const SampleSet& set, const FeatureStats& st) {
  set.require_homogeneous("apply_standardize");
  SampleSet out;
  out.label = set.label;
  out.samples.reserve(set.samples.size());
  for (const Mat& s : set.samples) {
    Mat z = (s.rowwise() - st.mean.transpose());
    z.array().rowwise() /= st.sd.transpose().array();
    out.samples.push_back(std::move(z));
  }
  return out;
}

inline SampleSet destandardize(const SampleSet& set, const FeatureStats& st) {
  set.require_homogeneous("destandardize");
  SampleSet out;
  out.label = set.label;
  out.samples.reserve(set.samples.size());
  for (const Mat& s : set.samples) {
    Mat z = s;
    z.array().rowwise() *= st.sd.transpose().array();
    z.rowwise() += st.mean.transpose();
    out.samples.push_back(std::move(z));
  }
  return out;
}

/// Standardizes against the dataset's own statistics and stores them for the
/// inverse transform. Errors on a zero-variance feature.
inline Dataset standardize(const Dataset& ds) {
  Dataset out = ds;
  out.stats = compute_stats(ds.set);
  out.set = apply_standardize(ds.set, out.stats);
  out.standardized = true;
  return out;
}

/// Deterministic shuffled split into disjoint, exhaustive (train, val).
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double val_fraction,
                                         std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("split: 0 < val_fraction < 1 violated");
  const std::size_t total = ds.set.samples.size();
  std::size_t n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(total)));
  n_val = std::max<std::size_t>(1, std::min(n_val, total - 1));

  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = total; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(i));
    std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
  }

  Dataset train, val;
  train.name = ds.name + ":train";
  val.name = ds.name + ":val";
  train.set.label = train.name;
  val.set.label = val.name;
  train.standardized = val.standardized = ds.standardized;
  train.stats = val.stats = ds.stats;
  for (std::size_t i = 0; i < total; ++i) {
    Dataset& dst = (i < n_val) ? val : train;
    dst.set.samples.push_back(ds.set.samples[idx[i]]);
    dst.sample_ids.push_back(ds.sample_ids.empty() ? static_cast<long long>(idx[i])
                                                   : ds.sample_ids[idx[i]]);
  }
  return {std::move(train), std::move(val)};
}

}  // namespace freqdiff
