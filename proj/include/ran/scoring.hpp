#pragma once

// Testing phase: per-row reconstruction errors from a frozen model, min-max
// normalized anomaly scores, AUC-ROC, and score histograms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "ran/dataset.hpp"
#include "ran/error.hpp"
#include "ran/model.hpp"
#include "ran/tensor.hpp"

namespace ran {

struct ScoreHistogram {
  std::vector<int> normal;
  std::vector<int> anomaly;
  int bins() const { return static_cast<int>(normal.size()); }
};

struct ScoreReport {
  std::string dataset;
  std::uint64_t seed = 0;
  std::vector<double> rec_errors;
  std::vector<double> ano_scores;
  std::vector<int> labels;
  double auc = 0.0;
  ScoreHistogram histogram;
};

// Mean squared difference of one reconstruction against its input row.
inline double row_mse(const std::vector<double>& rec, const std::vector<double>& x) {
  if (rec.size() != x.size() || rec.empty())
    throw ShapeError("row_mse needs two equal non-empty rows");
  double acc = 0.0;
  for (std::size_t j = 0; j < rec.size(); ++j) {
    const double d = rec[j] - x[j];
    acc += d * d;
  }
  return acc / static_cast<double>(rec.size());
}

template <typename T>
std::vector<double> reconstruction_errors(const ModelParams<T>& params, const Matrix& x_test) {
  if (x_test.cols != params.config.m)
    throw ShapeError("test rows have length " + std::to_string(x_test.cols) +
                     " but the model expects " + std::to_string(params.config.m));
  if (x_test.rows < 1) throw ArgumentError("reconstruction_errors needs at least one row");

  const int m = params.config.m;
  std::vector<double> errors(static_cast<std::size_t>(x_test.rows));
  std::vector<T> row(static_cast<std::size_t>(m));
  std::vector<double> rec(static_cast<std::size_t>(m)), orig(static_cast<std::size_t>(m));
  for (int i = 0; i < x_test.rows; ++i) {
    const double* src = x_test.row(i);
    for (int j = 0; j < m; ++j) {
      row[static_cast<std::size_t>(j)] = static_cast<T>(src[j]);
      orig[static_cast<std::size_t>(j)] = src[j];
    }
    Tensor<T> x({1, m}, row);
    Tensor<T> y = decode<T>(nullptr, params, encode<T>(nullptr, params, x));
    for (int j = 0; j < m; ++j)
      rec[static_cast<std::size_t>(j)] = static_cast<double>(y.values()[static_cast<std::size_t>(j)]);
    errors[static_cast<std::size_t>(i)] = row_mse(rec, orig);
  }
  return errors;
}

// Min-max normalization of the evaluated batch. A constant input has no
// spread to normalize, so every score is defined as 0.
inline std::vector<double> anomaly_scores(const std::vector<double>& rec_errors) {
  if (rec_errors.empty()) throw ArgumentError("anomaly_scores needs a non-empty array");
  const auto [lo_it, hi_it] = std::minmax_element(rec_errors.begin(), rec_errors.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> scores(rec_errors.size(), 0.0);
  if (hi > lo)
    for (std::size_t i = 0; i < rec_errors.size(); ++i)
      scores[i] = (rec_errors[i] - lo) / (hi - lo);
  return scores;
}

// Deployment-style alternative: normalize against a frozen calibration
// range instead of the evaluated batch, clamping into [0,1].
inline std::vector<double> anomaly_scores(const std::vector<double>& rec_errors, double lo,
                                          double hi) {
  if (rec_errors.empty()) throw ArgumentError("anomaly_scores needs a non-empty array");
  if (!(hi >= lo)) throw ArgumentError("anomaly_scores range must satisfy hi >= lo");
  std::vector<double> scores(rec_errors.size(), 0.0);
  if (hi > lo)
    for (std::size_t i = 0; i < rec_errors.size(); ++i)
      scores[i] = std::clamp((rec_errors[i] - lo) / (hi - lo), 0.0, 1.0);
  return scores;
}

// Mann-Whitney formulation with average ranks: the probability that a random
// anomaly outscores a random normal, ties counted one half.
inline double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  if (n != labels.size()) throw ShapeError("auc_roc needs one label per score");
  long long n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(scores[i])) throw ArgumentError("auc_roc scores must be finite");
    if (labels[i] == 1)
      ++n_pos;
    else if (labels[i] == 0)
      ++n_neg;
    else
      throw ArgumentError("auc_roc labels must be 0 or 1, got " + std::to_string(labels[i]));
  }
  if (n_pos == 0 || n_neg == 0) throw ArgumentError("auc_roc needs both classes present");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (labels[idx[t]] == 1) pos_rank_sum += avg_rank;
    i = j;
  }
  const double u = pos_rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Equal-width bins on [0,1], half-open except the last, which keeps 1.0.
inline ScoreHistogram score_histogram(const std::vector<double>& scores,
                                      const std::vector<int>& labels, int bins) {
  if (bins < 2) throw ArgumentError("score_histogram needs bins >= 2");
  if (scores.size() != labels.size()) throw ShapeError("score_histogram needs one label per score");
  ScoreHistogram h;
  h.normal.assign(static_cast<std::size_t>(bins), 0);
  h.anomaly.assign(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    int b = static_cast<int>(scores[i] * bins);
    b = std::clamp(b, 0, bins - 1);
    if (labels[i] == 1)
      ++h.anomaly[static_cast<std::size_t>(b)];
    else
      ++h.normal[static_cast<std::size_t>(b)];
  }
  return h;
}

template <typename T>
ScoreReport evaluate(const ModelParams<T>& params, const SplitDataset& split, int bins,
                     const std::string& dataset = "", std::uint64_t seed = 0) {
  if (split.x_test.rows != static_cast<int>(split.test_labels.size()))
    throw ShapeError("split has " + std::to_string(split.x_test.rows) + " test rows but " +
                     std::to_string(split.test_labels.size()) + " labels");
  ScoreReport report;
  report.dataset = dataset;
  report.seed = seed;
  report.labels = split.test_labels;
  report.rec_errors = reconstruction_errors(params, split.x_test);
  report.ano_scores = anomaly_scores(report.rec_errors);
  report.auc = auc_roc(report.ano_scores, report.labels);
  report.histogram = score_histogram(report.ano_scores, report.labels, bins);
  return report;
}

inline void save_score_csv(const ScoreReport& report, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + path);
  std::fputs("row,label,rec_error,ano_score\n", f);
  for (std::size_t i = 0; i < report.rec_errors.size(); ++i)
    std::fprintf(f, "%zu,%d,%.9g,%.9g\n", i, report.labels[i], report.rec_errors[i],
                 report.ano_scores[i]);
  if (std::fclose(f) != 0) throw IoError("short write to " + path);
}

inline void save_histogram_csv(const ScoreHistogram& h, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + path);
  std::fputs("bin_lo,bin_hi,normal,anomaly\n", f);
  const int bins = h.bins();
  for (int b = 0; b < bins; ++b)
    std::fprintf(f, "%.9g,%.9g,%d,%d\n", static_cast<double>(b) / bins,
                 static_cast<double>(b + 1) / bins, h.normal[static_cast<std::size_t>(b)],
                 h.anomaly[static_cast<std::size_t>(b)]);
  if (std::fclose(f) != 0) throw IoError("short write to " + path);
}

inline void save_report_json(const ScoreReport& report, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + path);
  auto array = [&](const char* name, auto writer) {
    std::fprintf(f, "  \"%s\": [", name);
    writer();
    std::fputs("],\n", f);
  };
  std::fputs("{\n", f);
  std::fprintf(f, "  \"dataset\": \"%s\",\n", report.dataset.c_str());
  std::fprintf(f, "  \"seed\": %llu,\n", static_cast<unsigned long long>(report.seed));
  std::fprintf(f, "  \"n_test\": %zu,\n", report.rec_errors.size());
  std::fprintf(f, "  \"auc_roc\": %.9g,\n", report.auc);
  array("labels", [&] {
    for (std::size_t i = 0; i < report.labels.size(); ++i)
      std::fprintf(f, "%s%d", i ? ", " : "", report.labels[i]);
  });
  array("rec_errors", [&] {
    for (std::size_t i = 0; i < report.rec_errors.size(); ++i)
      std::fprintf(f, "%s%.9g", i ? ", " : "", report.rec_errors[i]);
  });
  array("ano_scores", [&] {
    for (std::size_t i = 0; i < report.ano_scores.size(); ++i)
      std::fprintf(f, "%s%.9g", i ? ", " : "", report.ano_scores[i]);
  });
  array("histogram_normal", [&] {
    for (std::size_t i = 0; i < report.histogram.normal.size(); ++i)
      std::fprintf(f, "%s%d", i ? ", " : "", report.histogram.normal[i]);
  });
  std::fprintf(f, "  \"histogram_anomaly\": [");
  for (std::size_t i = 0; i < report.histogram.anomaly.size(); ++i)
    std::fprintf(f, "%s%d", i ? ", " : "", report.histogram.anomaly[i]);
  std::fputs("]\n}\n", f);
  if (std::fclose(f) != 0) throw IoError("short write to " + path);
}

}  // namespace ran
