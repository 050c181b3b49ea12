#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <string>
#include <vector>

#include "ran/error.hpp"
#include "ran/rng.hpp"

namespace ran {

// ============================================================================
// Containers
// ============================================================================

// Dense row-major matrix of 64-bit reals. Rows are subsequences.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {
    if (r < 0 || c < 0) throw ShapeError("matrix dimensions must be non-negative");
  }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
};

// n subsequences of length m with one integer class label each.
struct LabeledDataset {
  Matrix values;
  std::vector<int> labels;

  int n() const { return values.rows; }
  int m() const { return values.cols; }
};

// Output of the normal/anomaly split: training normals plus a labeled test
// set (0 = normal, 1 = anomaly, regardless of the original class ids).
struct SplitDataset {
  Matrix x_nor;
  Matrix x_test;
  std::vector<int> test_labels;
};

// Per-column mean and population standard deviation of a training matrix.
struct ColumnStats {
  std::vector<double> mu;
  std::vector<double> sigma;
};

enum class DatasetFormat { UcrText };
enum class SyntheticProfile { SineWithSpikes };

// ============================================================================
// Loading and saving
// ============================================================================

namespace detail {

inline void validate_dataset(const LabeledDataset& ds) {
  if (ds.n() < 1) throw FormatError("dataset needs at least one row");
  if (ds.m() < 2) throw FormatError("dataset needs at least two values per row");
  if (static_cast<int>(ds.labels.size()) != ds.n()) {
    throw FormatError("label count does not match row count");
  }
}

inline bool blank_line(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

}  // namespace detail

// One subsequence per line, class label first. Fields may be separated by
// commas, tabs, or spaces, which covers the common archive distributions.
// Labels may be printed as reals ("1.0000000e+00") and are rounded to ints.
inline LabeledDataset load_dataset(const std::string& path,
                                   DatasetFormat format = DatasetFormat::UcrText) {
  (void)format;
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (f == nullptr) throw IoError("cannot open dataset file: " + path);
  std::string contents;
  {
    char buf[1 << 16];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) contents.append(buf, got);
    const bool bad = std::ferror(f) != 0;
    std::fclose(f);
    if (bad) throw IoError("read failure on dataset file: " + path);
  }

  LabeledDataset ds;
  std::vector<double> row;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < contents.size()) {
    std::size_t eol = contents.find('\n', pos);
    if (eol == std::string::npos) eol = contents.size();
    std::string line = contents.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (detail::blank_line(line)) continue;

    row.clear();
    const char* p = line.c_str();
    while (*p != '\0') {
      while (*p == ',' || *p == ' ' || *p == '\t' || *p == '\r') ++p;
      if (*p == '\0') break;
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) {
        throw FormatError("line " + std::to_string(line_no) + ": unparseable field in " + path);
      }
      if (!std::isfinite(v)) {
        throw FormatError("line " + std::to_string(line_no) + ": non-finite value in " + path);
      }
      row.push_back(v);
      p = end;
    }
    if (row.size() < 3) {
      throw FormatError("line " + std::to_string(line_no) +
                        ": expected a label and at least two values in " + path);
    }
    const double lab = row[0];
    const long long li = std::llround(lab);
    if (std::fabs(lab - static_cast<double>(li)) > 1e-6) {
      throw FormatError("line " + std::to_string(line_no) + ": non-integer label in " + path);
    }

    const int m_here = static_cast<int>(row.size()) - 1;
    if (ds.values.rows == 0) {
      ds.values.cols = m_here;
    } else if (m_here != ds.values.cols) {
      throw FormatError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(ds.values.cols) + " values but found " +
                        std::to_string(m_here) + " in " + path);
    }
    ds.values.data.insert(ds.values.data.end(), row.begin() + 1, row.end());
    ds.values.rows += 1;
    ds.labels.push_back(static_cast<int>(li));
  }
  detail::validate_dataset(ds);
  return ds;
}

// Writes the same format back: label first, comma-separated, full round-trip
// precision for the values.
inline void save_dataset(const LabeledDataset& ds, const std::string& path) {
  detail::validate_dataset(ds);
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw IoError("cannot open file for writing: " + path);
  for (int i = 0; i < ds.n(); ++i) {
    std::fprintf(f, "%d", ds.labels[static_cast<std::size_t>(i)]);
    const double* r = ds.values.row(i);
    for (int j = 0; j < ds.m(); ++j) std::fprintf(f, ",%.17g", r[j]);
    std::fputc('\n', f);
  }
  if (std::fclose(f) != 0) throw IoError("write failure on " + path);
}

// ============================================================================
// Transformation
// ============================================================================

// Per-subsequence shift/scale to mean 0, population standard deviation 1.
// Near-constant rows (std below 1e-8) become all-zero instead of blowing up.
inline LabeledDataset znormalize(const LabeledDataset& ds) {
  detail::validate_dataset(ds);
  LabeledDataset out;
  out.labels = ds.labels;
  out.values = Matrix(ds.n(), ds.m());
  const int m = ds.m();
  for (int i = 0; i < ds.n(); ++i) {
    const double* src = ds.values.row(i);
    double* dst = out.values.row(i);
    double mean = 0.0;
    for (int j = 0; j < m; ++j) mean += src[j];
    mean /= m;
    double var = 0.0;
    for (int j = 0; j < m; ++j) {
      const double d = src[j] - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / m);
    if (sd < 1e-8) {
      std::fill(dst, dst + m, 0.0);
    } else {
      for (int j = 0; j < m; ++j) dst[j] = (src[j] - mean) / sd;
    }
  }
  return out;
}

// Column means and population standard deviations of a training matrix.
inline ColumnStats column_stats(const Matrix& x_nor) {
  if (x_nor.rows < 1 || x_nor.cols < 1) {
    throw ArgumentError("column_stats needs a non-empty matrix");
  }
  ColumnStats cs;
  cs.mu.assign(static_cast<std::size_t>(x_nor.cols), 0.0);
  cs.sigma.assign(static_cast<std::size_t>(x_nor.cols), 0.0);
  for (int i = 0; i < x_nor.rows; ++i) {
    const double* r = x_nor.row(i);
    for (int j = 0; j < x_nor.cols; ++j) cs.mu[static_cast<std::size_t>(j)] += r[j];
  }
  for (auto& v : cs.mu) v /= x_nor.rows;
  for (int i = 0; i < x_nor.rows; ++i) {
    const double* r = x_nor.row(i);
    for (int j = 0; j < x_nor.cols; ++j) {
      const double d = r[j] - cs.mu[static_cast<std::size_t>(j)];
      cs.sigma[static_cast<std::size_t>(j)] += d * d;
    }
  }
  for (auto& v : cs.sigma) v = std::sqrt(v / x_nor.rows);
  return cs;
}

// ============================================================================
// Splitting
// ============================================================================

// Partitions the rows of the designated normal class into training normals
// and test normals (seeded choice, original order preserved inside each
// part); every other class becomes a test anomaly. Test labels are binary.
inline SplitDataset split_normal_anomaly(const LabeledDataset& ds, int normal_label,
                                         double test_normal_fraction, std::uint64_t seed) {
  detail::validate_dataset(ds);
  if (!(test_normal_fraction > 0.0 && test_normal_fraction < 1.0)) {
    throw ArgumentError("test_normal_fraction must lie in (0,1)");
  }
  std::vector<int> normal_idx, anomaly_idx;
  for (int i = 0; i < ds.n(); ++i) {
    (ds.labels[static_cast<std::size_t>(i)] == normal_label ? normal_idx : anomaly_idx)
        .push_back(i);
  }
  if (normal_idx.empty()) {
    throw ArgumentError("normal label " + std::to_string(normal_label) +
                        " does not occur in the dataset");
  }
  if (anomaly_idx.empty()) {
    throw ArgumentError("dataset has no rows outside the normal class");
  }

  const int n_nor = static_cast<int>(normal_idx.size());
  int k_test = static_cast<int>(std::llround(test_normal_fraction * n_nor));
  k_test = std::clamp(k_test, n_nor > 1 ? 1 : 0, n_nor - 1);

  std::vector<int> shuffled = normal_idx;
  auto rng = make_rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::vector<int> test_nor(shuffled.begin(), shuffled.begin() + k_test);
  std::vector<int> train_nor(shuffled.begin() + k_test, shuffled.end());
  std::sort(test_nor.begin(), test_nor.end());
  std::sort(train_nor.begin(), train_nor.end());

  const int m = ds.m();
  SplitDataset out;
  out.x_nor = Matrix(static_cast<int>(train_nor.size()), m);
  out.x_test = Matrix(static_cast<int>(test_nor.size() + anomaly_idx.size()), m);
  int r = 0;
  for (int idx : train_nor) {
    std::copy(ds.values.row(idx), ds.values.row(idx) + m, out.x_nor.row(r++));
  }
  r = 0;
  for (int idx : test_nor) {
    std::copy(ds.values.row(idx), ds.values.row(idx) + m, out.x_test.row(r++));
    out.test_labels.push_back(0);
  }
  for (int idx : anomaly_idx) {
    std::copy(ds.values.row(idx), ds.values.row(idx) + m, out.x_test.row(r++));
    out.test_labels.push_back(1);
  }
  return out;
}

// ============================================================================
// Synthetic data
// ============================================================================

// One period of a sine with additive Gaussian noise; anomalies add a
// contiguous positive burst of amplitude 3 covering ceil(0.1*m) positions at
// a seeded random offset. Normal rows come first, labels are 0/1.
inline LabeledDataset make_synthetic(SyntheticProfile profile, int n_normal, int n_anomaly,
                                     int m, double noise_level, std::uint64_t seed) {
  if (profile != SyntheticProfile::SineWithSpikes) {
    throw ArgumentError("unknown synthetic profile");
  }
  if (n_normal < 8) throw ArgumentError("make_synthetic needs n_normal >= 8");
  if (n_anomaly < 1) throw ArgumentError("make_synthetic needs n_anomaly >= 1");
  if (m < 16) throw ArgumentError("make_synthetic needs m >= 16");
  if (noise_level < 0.0) throw ArgumentError("noise_level must be non-negative");

  const int burst_len = static_cast<int>(std::ceil(0.1 * m));
  const double burst_amp = 3.0;
  const double two_pi = 2.0 * std::acos(-1.0);

  LabeledDataset ds;
  ds.values = Matrix(n_normal + n_anomaly, m);
  ds.labels.assign(static_cast<std::size_t>(n_normal + n_anomaly), 0);

  auto rng = make_rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> offset(0, m - burst_len);

  for (int i = 0; i < n_normal + n_anomaly; ++i) {
    double* row = ds.values.row(i);
    for (int j = 0; j < m; ++j) {
      row[j] = std::sin(two_pi * j / m);
      if (noise_level > 0.0) row[j] += noise_level * noise(rng);
    }
    if (i >= n_normal) {
      ds.labels[static_cast<std::size_t>(i)] = 1;
      const int start = offset(rng);
      for (int j = start; j < start + burst_len; ++j) row[j] += burst_amp;
    }
  }
  return ds;
}

}  // namespace ran
