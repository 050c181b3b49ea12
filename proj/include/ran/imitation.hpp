#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "ran/dataset.hpp"
#include "ran/error.hpp"
#include "ran/rng.hpp"

namespace ran {

// Corrupt level and stream seed for imitated-anomaly generation.
struct CorruptionSpec {
  double c = 0.1;
  std::uint64_t seed = 0;
};

// Number of replaced positions per row: c*m rounded half-up, at least one
// whenever any corruption was requested.
inline int corruption_count(double c, int m) {
  if (c < 0.0 || c > 1.0) throw ArgumentError("corrupt level must lie in [0,1]");
  if (m < 1) throw ArgumentError("corruption_count needs m >= 1");
  int k = static_cast<int>(std::floor(c * m + 0.5));
  if (c > 0.0 && k < 1) k = 1;
  if (k > m) k = m;
  return k;
}

// Imitated matrix plus, per row, the sorted column indexes that were
// replaced.
struct ImitationResult {
  Matrix values;
  std::vector<std::vector<int>> replaced;
};

// Builds imitated anomaly subsequences: per row, k distinct column indexes
// are drawn from a stream derived from (seed, row) and the entries there are
// replaced by the out-of-distribution value mu[r] + factor * sigma[r]. All
// other entries are copied bit-for-bit. The factor is fixed at 4 everywhere
// except experiments that deliberately override it.
inline ImitationResult imitate_detailed(const Matrix& x_nor, const ColumnStats& stats,
                                        const CorruptionSpec& spec, double factor = 4.0) {
  if (x_nor.rows < 1 || x_nor.cols < 1) {
    throw ArgumentError("imitate needs a non-empty matrix");
  }
  const int m = x_nor.cols;
  if (static_cast<int>(stats.mu.size()) != m || static_cast<int>(stats.sigma.size()) != m) {
    throw ShapeError("column stats length does not match subsequence length");
  }
  const int k = corruption_count(spec.c, m);

  ImitationResult result{x_nor, std::vector<std::vector<int>>(static_cast<std::size_t>(x_nor.rows))};
  if (k == 0) return result;

  std::vector<int> idx(static_cast<std::size_t>(m));
  for (int i = 0; i < x_nor.rows; ++i) {
    auto rng = make_rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
    std::iota(idx.begin(), idx.end(), 0);
    double* row = result.values.row(i);
    auto& rowset = result.replaced[static_cast<std::size_t>(i)];
    rowset.reserve(static_cast<std::size_t>(k));
    // Partial Fisher-Yates: after j swaps the first j entries are a uniform
    // draw of j distinct indexes.
    for (int j = 0; j < k; ++j) {
      std::uniform_int_distribution<int> pick(j, m - 1);
      std::swap(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(pick(rng))]);
      const int r = idx[static_cast<std::size_t>(j)];
      row[r] = stats.mu[static_cast<std::size_t>(r)] +
               factor * stats.sigma[static_cast<std::size_t>(r)];
      rowset.push_back(r);
    }
    std::sort(rowset.begin(), rowset.end());
  }
  return result;
}

inline Matrix imitate(const Matrix& x_nor, const ColumnStats& stats,
                      const CorruptionSpec& spec, double factor = 4.0) {
  return imitate_detailed(x_nor, stats, spec, factor).values;
}

}  // namespace ran
