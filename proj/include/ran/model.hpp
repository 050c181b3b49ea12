#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ran/error.hpp"
#include "ran/rng.hpp"
#include "ran/tensor.hpp"

namespace ran {

// ============================================================================
// Architecture description
// ============================================================================

struct ConvSpec {
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
};

enum class Variant { AE, AE_FCN, LAE_FCN, RAN };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::AE: return "AE";
    case Variant::AE_FCN: return "AE-FCN";
    case Variant::LAE_FCN: return "LAE-FCN";
    case Variant::RAN: return "RAN";
  }
  throw ArgumentError("unknown variant");
}

inline Variant parse_variant(const std::string& s) {
  if (s == "AE" || s == "ae") return Variant::AE;
  if (s == "AE-FCN" || s == "AE_FCN" || s == "ae-fcn" || s == "ae_fcn") return Variant::AE_FCN;
  if (s == "LAE-FCN" || s == "LAE_FCN" || s == "lae-fcn" || s == "lae_fcn")
    return Variant::LAE_FCN;
  if (s == "RAN" || s == "ran") return Variant::RAN;
  throw ArgumentError("unknown variant: " + s);
}

// Network shape shared by all four variants. The conv stacks apply to
// AE_FCN/LAE_FCN/RAN; the AE variant swaps the trunk for dense_hidden
// layers. Only the RAN variant instantiates the discriminator.
struct ArchConfig {
  int m = 64;
  int latent_dim = 32;
  std::vector<ConvSpec> encoder_layers{{16, 7, 2}, {32, 5, 2}, {64, 3, 2}};
  std::vector<ConvSpec> decoder_layers{};  // empty = mirror of the encoder
  std::vector<ConvSpec> discriminator_layers{{16, 5, 2}, {32, 5, 2}};
  std::vector<int> dense_hidden{96, 64, 48};
  Activation activation{ActivationKind::LeakyRelu, 0.2};
  double output_scale = 4.0;
  Variant variant = Variant::RAN;
};

inline bool uses_conv_trunk(Variant v) { return v != Variant::AE; }

// The decoder mirrors the encoder: same kernels and strides in reverse
// order, channel counts walked back down to the single input channel.
inline std::vector<ConvSpec> mirrored_decoder(const std::vector<ConvSpec>& encoder) {
  std::vector<ConvSpec> dec;
  const int n = static_cast<int>(encoder.size());
  for (int i = n - 1; i >= 0; --i) {
    const int out_ch = i > 0 ? encoder[static_cast<std::size_t>(i - 1)].out_channels : 1;
    dec.push_back({out_ch, encoder[static_cast<std::size_t>(i)].kernel,
                   encoder[static_cast<std::size_t>(i)].stride});
  }
  return dec;
}

// ============================================================================
// Geometry
// ============================================================================

// Resolved lengths of every stage. The input is right-padded with zeros from
// m up to padded_m, the smallest length the stride stack consumes evenly, so
// the mirrored transposed stack reproduces padded_m exactly and the
// reconstruction is cropped back to m.
struct Geometry {
  int padded_m = 0;
  std::vector<int> enc_lengths;  // enc_lengths[0] == padded_m, one entry per stage
  int flat = 0;                  // last channels x last length
  std::vector<int> disc_lengths;
  int disc_flat = 0;
};

namespace detail {

inline void check_layers(const std::vector<ConvSpec>& layers, const char* which) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.out_channels < 1 || l.kernel < 1 || l.stride < 1) {
      throw GeometryError(std::string(which) + " layer " + std::to_string(i) +
                          " has non-positive channels, kernel, or stride");
    }
  }
}

}  // namespace detail

inline Geometry compute_geometry(const ArchConfig& cfg) {
  if (cfg.m < 2) throw GeometryError("input length m must be at least 2");
  if (cfg.latent_dim < 1) throw GeometryError("latent_dim must be positive");

  Geometry g;
  if (!uses_conv_trunk(cfg.variant)) {
    for (std::size_t i = 0; i < cfg.dense_hidden.size(); ++i) {
      if (cfg.dense_hidden[i] < 1) {
        throw GeometryError("dense layer " + std::to_string(i) + " has non-positive width");
      }
    }
    g.padded_m = cfg.m;
    g.flat = cfg.m;
    return g;
  }

  const auto& enc = cfg.encoder_layers;
  if (enc.empty()) throw GeometryError("encoder needs at least one conv layer");
  detail::check_layers(enc, "encoder");

  // Search the smallest final length whose backward expansion through the
  // stack reaches at least m; that expansion is exact by construction, so
  // the mirrored decoder restores padded_m with no off-by-one.
  const int n = static_cast<int>(enc.size());
  for (int last = 1;; ++last) {
    std::vector<int> lengths(static_cast<std::size_t>(n + 1));
    lengths[static_cast<std::size_t>(n)] = last;
    for (int i = n - 1; i >= 0; --i) {
      lengths[static_cast<std::size_t>(i)] =
          (lengths[static_cast<std::size_t>(i + 1)] - 1) * enc[static_cast<std::size_t>(i)].stride +
          enc[static_cast<std::size_t>(i)].kernel;
    }
    if (lengths[0] >= cfg.m) {
      g.padded_m = lengths[0];
      g.enc_lengths = std::move(lengths);
      break;
    }
  }
  g.flat = enc.back().out_channels * g.enc_lengths.back();

  if (!cfg.decoder_layers.empty()) {
    const auto mirror = mirrored_decoder(enc);
    if (cfg.decoder_layers.size() != mirror.size()) {
      throw GeometryError("decoder layer count does not mirror the encoder");
    }
    for (std::size_t i = 0; i < mirror.size(); ++i) {
      const auto& d = cfg.decoder_layers[i];
      if (d.out_channels != mirror[i].out_channels || d.kernel != mirror[i].kernel ||
          d.stride != mirror[i].stride) {
        throw GeometryError("decoder layer " + std::to_string(i) +
                            " does not mirror the encoder stack");
      }
    }
  }

  if (cfg.variant == Variant::RAN) {
    const auto& disc = cfg.discriminator_layers;
    if (disc.empty()) throw GeometryError("discriminator needs at least one conv layer");
    detail::check_layers(disc, "discriminator");
    g.disc_lengths.push_back(cfg.m);
    int len = cfg.m;
    for (std::size_t i = 0; i < disc.size(); ++i) {
      const auto& l = disc[i];
      if (l.kernel > len) {
        throw GeometryError("discriminator layer " + std::to_string(i) +
                            " kernel exceeds its input length");
      }
      len = (len - l.kernel) / l.stride + 1;
      if (len < 1) {
        throw GeometryError("discriminator layer " + std::to_string(i) +
                            " produces an empty output");
      }
      g.disc_lengths.push_back(len);
    }
    g.disc_flat = disc.back().out_channels * len;
  }
  return g;
}

// ============================================================================
// Parameters
// ============================================================================

template <typename T>
struct ModelParams {
  ArchConfig config;
  Geometry geometry;
  std::uint64_t seed = 0;
  std::vector<Tensor<T>> encoder;
  std::vector<Tensor<T>> decoder;
  std::vector<Tensor<T>> discriminator;

  std::vector<Tensor<T>> autoencoder_params() const {
    std::vector<Tensor<T>> all = encoder;
    all.insert(all.end(), decoder.begin(), decoder.end());
    return all;
  }
};

// Exact number of scalars init_params will allocate, derived from the
// config alone.
inline long long param_count(const ArchConfig& cfg) {
  const Geometry g = compute_geometry(cfg);
  long long total = 0;
  auto dense_pair = [&](int f_in, int f_out) {
    total += static_cast<long long>(f_out) * f_in + f_out;
  };
  if (uses_conv_trunk(cfg.variant)) {
    int c_in = 1;
    for (const auto& l : cfg.encoder_layers) {
      total += static_cast<long long>(l.out_channels) * c_in * l.kernel + l.out_channels;
      c_in = l.out_channels;
    }
    dense_pair(g.flat, cfg.latent_dim);
    dense_pair(cfg.latent_dim, g.flat);
    c_in = cfg.encoder_layers.back().out_channels;
    for (const auto& l : mirrored_decoder(cfg.encoder_layers)) {
      total += static_cast<long long>(c_in) * l.out_channels * l.kernel + l.out_channels;
      c_in = l.out_channels;
    }
  } else {
    int width = cfg.m;
    for (int h : cfg.dense_hidden) {
      dense_pair(width, h);
      width = h;
    }
    dense_pair(width, cfg.latent_dim);
    width = cfg.latent_dim;
    for (auto it = cfg.dense_hidden.rbegin(); it != cfg.dense_hidden.rend(); ++it) {
      dense_pair(width, *it);
      width = *it;
    }
    dense_pair(width, cfg.m);
  }
  if (cfg.variant == Variant::RAN) {
    int c_in = 1;
    for (const auto& l : cfg.discriminator_layers) {
      total += static_cast<long long>(l.out_channels) * c_in * l.kernel + l.out_channels;
      c_in = l.out_channels;
    }
    dense_pair(g.disc_flat, 1);
  }
  return total;
}

namespace detail {

// Fan-in-scaled uniform weights, zero biases, one stream per model.
template <typename T>
void push_pair(std::vector<Tensor<T>>& list, std::vector<int> w_shape, int bias_len,
               int fan_in, std::mt19937_64& rng) {
  Tensor<T> w(std::move(w_shape));
  const double bound = std::sqrt(1.0 / fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : w.values()) v = static_cast<T>(u(rng));
  w.set_requires_grad(true);
  list.push_back(std::move(w));
  Tensor<T> b({bias_len});
  b.set_requires_grad(true);
  list.push_back(std::move(b));
}

}  // namespace detail

template <typename T>
ModelParams<T> init_params(const ArchConfig& cfg, std::uint64_t seed) {
  ModelParams<T> p;
  p.config = cfg;
  p.geometry = compute_geometry(cfg);
  p.seed = seed;
  auto rng = make_rng(derive_seed(seed, 0x6d6f64656cULL));

  if (uses_conv_trunk(cfg.variant)) {
    int c_in = 1;
    for (const auto& l : cfg.encoder_layers) {
      detail::push_pair(p.encoder, {l.out_channels, c_in, l.kernel}, l.out_channels,
                        c_in * l.kernel, rng);
      c_in = l.out_channels;
    }
    detail::push_pair(p.encoder, {cfg.latent_dim, p.geometry.flat}, cfg.latent_dim,
                      p.geometry.flat, rng);

    detail::push_pair(p.decoder, {p.geometry.flat, cfg.latent_dim}, p.geometry.flat,
                      cfg.latent_dim, rng);
    c_in = cfg.encoder_layers.back().out_channels;
    for (const auto& l : mirrored_decoder(cfg.encoder_layers)) {
      detail::push_pair(p.decoder, {c_in, l.out_channels, l.kernel}, l.out_channels,
                        c_in * l.kernel, rng);
      c_in = l.out_channels;
    }
  } else {
    int width = cfg.m;
    for (int h : cfg.dense_hidden) {
      detail::push_pair(p.encoder, {h, width}, h, width, rng);
      width = h;
    }
    detail::push_pair(p.encoder, {cfg.latent_dim, width}, cfg.latent_dim, width, rng);

    width = cfg.latent_dim;
    for (auto it = cfg.dense_hidden.rbegin(); it != cfg.dense_hidden.rend(); ++it) {
      detail::push_pair(p.decoder, {*it, width}, *it, width, rng);
      width = *it;
    }
    detail::push_pair(p.decoder, {cfg.m, width}, cfg.m, width, rng);
  }

  if (cfg.variant == Variant::RAN) {
    int c_in = 1;
    for (const auto& l : cfg.discriminator_layers) {
      detail::push_pair(p.discriminator, {l.out_channels, c_in, l.kernel}, l.out_channels,
                        c_in * l.kernel, rng);
      c_in = l.out_channels;
    }
    detail::push_pair(p.discriminator, {1, p.geometry.disc_flat}, 1, p.geometry.disc_flat,
                      rng);
  }
  return p;
}

// ============================================================================
// Forward passes
// ============================================================================

namespace detail {

template <typename T>
void check_input_row(const Tensor<T>& x, int m, const char* who) {
  if (!x.valid() || x.rank() != 2 || x.dim(0) != 1 || x.dim(1) != m) {
    throw ShapeError(std::string(who) + " expects a [1 x " + std::to_string(m) + "] tensor");
  }
}

// Right-pads a single-row tensor with zeros up to length target. Data
// tensors carry no gradient, so this happens outside the tape.
template <typename T>
Tensor<T> pad_row(const Tensor<T>& x, int target) {
  if (x.dim(1) == target) return x;
  Tensor<T> out({1, target});
  std::copy(x.values().begin(), x.values().end(), out.values().begin());
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> encode(Tape<T>* tape, const ModelParams<T>& p, const Tensor<T>& x) {
  const auto& cfg = p.config;
  detail::check_input_row(x, cfg.m, "encode");
  if (uses_conv_trunk(cfg.variant)) {
    Tensor<T> cur = detail::pad_row(x, p.geometry.padded_m);
    std::size_t t = 0;
    for (const auto& l : cfg.encoder_layers) {
      cur = conv1d(tape, cur, p.encoder[t], p.encoder[t + 1], l.stride, 0);
      cur = activation(tape, cur, cfg.activation);
      t += 2;
    }
    cur = reshape(tape, cur, {p.geometry.flat});
    return dense(tape, cur, p.encoder[t], p.encoder[t + 1]);
  }
  Tensor<T> cur = reshape(tape, x, {cfg.m});
  std::size_t t = 0;
  for (std::size_t i = 0; i < cfg.dense_hidden.size(); ++i, t += 2) {
    cur = dense(tape, cur, p.encoder[t], p.encoder[t + 1]);
    cur = activation(tape, cur, cfg.activation);
  }
  return dense(tape, cur, p.encoder[t], p.encoder[t + 1]);
}

template <typename T>
Tensor<T> decode(Tape<T>* tape, const ModelParams<T>& p, const Tensor<T>& z) {
  const auto& cfg = p.config;
  if (!z.valid() || z.rank() != 1 || z.dim(0) != cfg.latent_dim) {
    throw ShapeError("decode expects a [" + std::to_string(cfg.latent_dim) + "] latent");
  }
  if (uses_conv_trunk(cfg.variant)) {
    Tensor<T> cur = dense(tape, z, p.decoder[0], p.decoder[1]);
    cur = activation(tape, cur, cfg.activation);
    cur = reshape(tape, cur,
                  {cfg.encoder_layers.back().out_channels, p.geometry.enc_lengths.back()});
    const auto dec_layers = mirrored_decoder(cfg.encoder_layers);
    std::size_t t = 2;
    for (std::size_t i = 0; i < dec_layers.size(); ++i, t += 2) {
      const auto& l = dec_layers[i];
      cur = conv1d_transpose(tape, cur, p.decoder[t], p.decoder[t + 1], l.stride, 0);
      if (i + 1 < dec_layers.size()) cur = activation(tape, cur, cfg.activation);
    }
    cur = tanh_act(tape, cur);
    cur = scale(tape, cur, static_cast<T>(cfg.output_scale));
    return crop1d(tape, cur, cfg.m);
  }
  Tensor<T> cur = z;
  std::size_t t = 0;
  for (std::size_t i = 0; i < cfg.dense_hidden.size(); ++i, t += 2) {
    cur = dense(tape, cur, p.decoder[t], p.decoder[t + 1]);
    cur = activation(tape, cur, cfg.activation);
  }
  cur = dense(tape, cur, p.decoder[t], p.decoder[t + 1]);
  cur = tanh_act(tape, cur);
  cur = scale(tape, cur, static_cast<T>(cfg.output_scale));
  return reshape(tape, cur, {1, cfg.m});
}

template <typename T>
Tensor<T> discriminate(Tape<T>* tape, const ModelParams<T>& p, const Tensor<T>& x) {
  const auto& cfg = p.config;
  if (cfg.variant != Variant::RAN) {
    throw UseError("only the RAN variant has a discriminator");
  }
  detail::check_input_row(x, cfg.m, "discriminate");
  Tensor<T> cur = x;
  std::size_t t = 0;
  for (const auto& l : cfg.discriminator_layers) {
    cur = conv1d(tape, cur, p.discriminator[t], p.discriminator[t + 1], l.stride, 0);
    cur = activation(tape, cur, cfg.activation);
    t += 2;
  }
  cur = reshape(tape, cur, {p.geometry.disc_flat});
  cur = dense(tape, cur, p.discriminator[t], p.discriminator[t + 1]);
  return sigmoid(tape, cur);
}

}  // namespace ran
