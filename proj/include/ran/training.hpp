#pragma once

// Alternating adversarial training loop. Each batch first updates the
// discriminator on detached reconstructions, then updates the autoencoder
// through the freshly updated (but frozen) discriminator. The three
// ablation variants reuse the same loop with their reduced losses.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ran/dataset.hpp"
#include "ran/error.hpp"
#include "ran/imitation.hpp"
#include "ran/model.hpp"
#include "ran/optimizer.hpp"
#include "ran/rng.hpp"
#include "ran/tensor.hpp"

namespace ran {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double lambda = 10.0;
  double corrupt_level = 0.1;
  AdamConfig adam{};
  std::uint64_t seed = 0;
};

// Per-epoch means. Terms a variant does not use stay zero.
struct LossRecord {
  std::vector<double> l_dx;
  std::vector<double> l_ae;
  std::vector<double> z_error;
  std::vector<double> gen_loss;
};

template <typename T>
struct TrainResult {
  ModelParams<T> params;
  LossRecord record;
};

namespace detail {

inline constexpr std::uint64_t kImitationStream = 0x696d6974ULL;
inline constexpr std::uint64_t kShuffleStream = 0x7368756666ULL;

template <typename T>
Tensor<T> row_tensor(const Matrix& x, int row) {
  std::vector<T> v(static_cast<std::size_t>(x.cols));
  const double* src = x.row(row);
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = static_cast<T>(src[j]);
  return Tensor<T>({1, x.cols}, std::move(v));
}

template <typename T>
Tensor<T> mean_scalars(Tape<T>* tape, const std::vector<Tensor<T>>& xs) {
  Tensor<T> acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(tape, acc, xs[i]);
  return scale(tape, acc, T(1) / static_cast<T>(xs.size()));
}

}  // namespace detail

// Mean over the batch of bce(d_rec, 0) + bce(d_nor, 1): call reconstructions
// fake and normal data real.
template <typename T>
Tensor<T> discriminator_loss(Tape<T>* tape, const std::vector<Tensor<T>>& d_rec,
                             const std::vector<Tensor<T>>& d_nor) {
  if (d_rec.empty() || d_rec.size() != d_nor.size())
    throw ShapeError("discriminator_loss needs matched non-empty batches");
  std::vector<Tensor<T>> terms;
  terms.reserve(d_rec.size());
  for (std::size_t i = 0; i < d_rec.size(); ++i)
    terms.push_back(add(tape, bce(tape, d_rec[i], 0), bce(tape, d_nor[i], 1)));
  return detail::mean_scalars(tape, terms);
}

template <typename T>
struct GeneratorLossParts {
  Tensor<T> total;
  Tensor<T> z_error;      // mean latent mse, unscaled
  Tensor<T> adversarial;  // mean bce(d_rec, 1), non-saturating form
};

template <typename T>
GeneratorLossParts<T> generator_loss_parts(Tape<T>* tape, const std::vector<Tensor<T>>& z,
                                           const std::vector<Tensor<T>>& z_imi,
                                           const std::vector<Tensor<T>>& d_rec, T lambda) {
  if (z.empty() || z.size() != z_imi.size() || z.size() != d_rec.size())
    throw ShapeError("generator_loss needs matched non-empty batches");
  if (lambda < T(0)) throw ArgumentError("lambda must be >= 0");
  std::vector<Tensor<T>> z_terms, adv_terms;
  z_terms.reserve(z.size());
  adv_terms.reserve(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z_terms.push_back(mse(tape, z[i], z_imi[i]));
    adv_terms.push_back(bce(tape, d_rec[i], 1));
  }
  GeneratorLossParts<T> parts{Tensor<T>(), detail::mean_scalars(tape, z_terms),
                              detail::mean_scalars(tape, adv_terms)};
  parts.total = add(tape, scale(tape, parts.z_error, lambda), parts.adversarial);
  return parts;
}

template <typename T>
Tensor<T> generator_loss(Tape<T>* tape, const std::vector<Tensor<T>>& z,
                         const std::vector<Tensor<T>>& z_imi,
                         const std::vector<Tensor<T>>& d_rec, T lambda) {
  return generator_loss_parts(tape, z, z_imi, d_rec, lambda).total;
}

template <typename T = float>
TrainResult<T> train(const Matrix& x_nor, const ColumnStats& stats, const TrainConfig& tc,
                     const ArchConfig& arch) {
  const int n = x_nor.rows;
  if (n < 1 || x_nor.cols < 1) throw ArgumentError("training set must be non-empty");
  if (tc.epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (tc.batch_size < 1 || tc.batch_size > n)
    throw ArgumentError("batch_size must be in [1, " + std::to_string(n) + "], got " +
                        std::to_string(tc.batch_size));
  if (tc.lambda < 0) throw ArgumentError("lambda must be >= 0");
  if (arch.m != x_nor.cols)
    throw ShapeError("training rows have length " + std::to_string(x_nor.cols) +
                     " but the architecture expects " + std::to_string(arch.m));

  const Variant v = arch.variant;
  const bool uses_imitation = v == Variant::RAN || v == Variant::LAE_FCN;

  ModelParams<T> params = init_params<T>(arch, tc.seed);
  Adam<T> opt_g(params.autoencoder_params(), tc.adam);
  std::optional<Adam<T>> opt_d;
  if (v == Variant::RAN) opt_d.emplace(params.discriminator, tc.adam);

  std::vector<Tensor<T>> nor_rows;
  nor_rows.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) nor_rows.push_back(detail::row_tensor<T>(x_nor, i));

  auto shuffle_rng = make_rng(derive_seed(tc.seed, detail::kShuffleStream));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  auto check_finite = [](double value, const char* name, int epoch, int batch) {
    if (!std::isfinite(value))
      throw NumericError("training diverged: " + std::string(name) + " = " +
                         std::to_string(value) + " at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(batch));
  };

  LossRecord record;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<Tensor<T>> imi_rows;
    if (uses_imitation) {
      const Matrix x_imi = imitate(
          x_nor, stats,
          CorruptionSpec{tc.corrupt_level,
                         derive_seed(tc.seed, detail::kImitationStream,
                                     static_cast<std::uint64_t>(epoch))});
      imi_rows.reserve(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) imi_rows.push_back(detail::row_tensor<T>(x_imi, i));
    }
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double sum_ldx = 0, sum_lae = 0, sum_zerr = 0, sum_gen = 0;
    int batches = 0;
    for (int start = 0; start < n; start += tc.batch_size) {
      const int end = std::min(n, start + tc.batch_size);
      double b_ldx = 0, b_lae = 0, b_zerr = 0, b_gen = 0;

      if (v == Variant::RAN) {
        Tape<T> tape1;
        std::vector<Tensor<T>> zs, z_imis, x_recs;
        for (int k = start; k < end; ++k) {
          const int i = order[static_cast<std::size_t>(k)];
          zs.push_back(encode(&tape1, params, nor_rows[static_cast<std::size_t>(i)]));
          z_imis.push_back(encode(&tape1, params, imi_rows[static_cast<std::size_t>(i)]));
          x_recs.push_back(decode(&tape1, params, z_imis.back()));
        }

        // Discriminator step. Reconstructions enter as plain value copies,
        // so no gradient can reach the autoencoder from this tape.
        Tape<T> tape2;
        std::vector<Tensor<T>> d_rec_det, d_nor;
        for (int k = start; k < end; ++k) {
          const std::size_t b = static_cast<std::size_t>(k - start);
          Tensor<T> frozen(x_recs[b].shape(), x_recs[b].values());
          d_rec_det.push_back(discriminate(&tape2, params, frozen));
          d_nor.push_back(discriminate(
              &tape2, params, nor_rows[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])]));
        }
        auto l_dx = discriminator_loss(&tape2, d_rec_det, d_nor);
        b_ldx = static_cast<double>(l_dx.values()[0]);
        check_finite(b_ldx, "L_Dx", epoch, batches);
        tape2.backward(l_dx);
        opt_d->step();

        // Autoencoder step through the updated discriminator, whose own
        // parameters stay fixed here.
        std::vector<Tensor<T>> d_rec;
        for (auto& xr : x_recs) d_rec.push_back(discriminate(&tape1, params, xr));
        auto parts = generator_loss_parts(&tape1, zs, z_imis, d_rec, static_cast<T>(tc.lambda));
        b_lae = static_cast<double>(parts.total.values()[0]);
        b_zerr = static_cast<double>(parts.z_error.values()[0]);
        b_gen = static_cast<double>(parts.adversarial.values()[0]);
        check_finite(b_lae, "L_AE", epoch, batches);
        tape1.backward(parts.total);
        opt_g.step();
        // The generator backward deposited gradients on the frozen
        // discriminator; drop them so the next batch starts clean.
        for (auto& t : params.discriminator) t.zero_grad();
      } else if (v == Variant::LAE_FCN) {
        Tape<T> tape;
        std::vector<Tensor<T>> rec_terms, z_terms;
        for (int k = start; k < end; ++k) {
          const std::size_t i = static_cast<std::size_t>(order[static_cast<std::size_t>(k)]);
          auto z = encode(&tape, params, nor_rows[i]);
          auto z_imi = encode(&tape, params, imi_rows[i]);
          auto x_rec = decode(&tape, params, z_imi);
          rec_terms.push_back(mse(&tape, x_rec, nor_rows[i]));
          z_terms.push_back(mse(&tape, z_imi, z));
        }
        auto recon = detail::mean_scalars(&tape, rec_terms);
        auto z_err = detail::mean_scalars(&tape, z_terms);
        auto total = add(&tape, recon, scale(&tape, z_err, static_cast<T>(tc.lambda)));
        b_lae = static_cast<double>(total.values()[0]);
        b_zerr = static_cast<double>(z_err.values()[0]);
        check_finite(b_lae, "L_AE", epoch, batches);
        tape.backward(total);
        opt_g.step();
      } else {
        Tape<T> tape;
        std::vector<Tensor<T>> rec_terms;
        for (int k = start; k < end; ++k) {
          const std::size_t i = static_cast<std::size_t>(order[static_cast<std::size_t>(k)]);
          auto x_rec = decode(&tape, params, encode(&tape, params, nor_rows[i]));
          rec_terms.push_back(mse(&tape, x_rec, nor_rows[i]));
        }
        auto total = detail::mean_scalars(&tape, rec_terms);
        b_lae = static_cast<double>(total.values()[0]);
        check_finite(b_lae, "L_AE", epoch, batches);
        tape.backward(total);
        opt_g.step();
      }

      sum_ldx += b_ldx;
      sum_lae += b_lae;
      sum_zerr += b_zerr;
      sum_gen += b_gen;
      ++batches;
    }

    record.l_dx.push_back(sum_ldx / batches);
    record.l_ae.push_back(sum_lae / batches);
    record.z_error.push_back(sum_zerr / batches);
    record.gen_loss.push_back(sum_gen / batches);
  }
  return {std::move(params), std::move(record)};
}

inline void save_loss_record(const LossRecord& rec, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + path);
  std::fputs("epoch,L_Dx,L_AE,Z_error,gen_loss\n", f);
  for (std::size_t e = 0; e < rec.l_ae.size(); ++e)
    std::fprintf(f, "%zu,%.9g,%.9g,%.9g,%.9g\n", e, rec.l_dx[e], rec.l_ae[e], rec.z_error[e],
                 rec.gen_loss[e]);
  if (std::fclose(f) != 0) throw IoError("short write to " + path);
}

}  // namespace ran
