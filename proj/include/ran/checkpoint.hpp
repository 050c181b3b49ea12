#pragma once

// Versioned binary container for trained model parameters.
//
// Layout: 8-byte magic "RANMODEL", u32 format version, u32 header length,
// a JSON header (architecture, seed, tensor manifest), then every tensor's
// values as 32-bit floats in manifest order. All integers and floats are
// little-endian regardless of host byte order.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ran/error.hpp"
#include "ran/model.hpp"
#include "ran/tensor.hpp"

namespace ran {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[9] = "RANMODEL";

namespace detail {

inline const char* activation_kind_name(ActivationKind k) {
  switch (k) {
    case ActivationKind::LeakyRelu: return "leaky_relu";
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::Tanh: return "tanh";
  }
  throw ArgumentError("unknown activation kind");
}

inline ActivationKind parse_activation_kind(const std::string& s) {
  if (s == "leaky_relu") return ActivationKind::LeakyRelu;
  if (s == "sigmoid") return ActivationKind::Sigmoid;
  if (s == "tanh") return ActivationKind::Tanh;
  throw ArgumentError("unknown activation kind: " + s);
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct ByteReader {
  const unsigned char* p = nullptr;
  std::size_t n = 0;
  std::size_t at = 0;

  void need(std::size_t k) const {
    if (k > n - at) throw FormatError("truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[at + static_cast<std::size_t>(i)]) << (8 * i);
    at += 4;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v = 0;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(std::size_t k) {
    need(k);
    std::string s(reinterpret_cast<const char*>(p) + at, k);
    at += k;
    return s;
  }
};

inline nlohmann::json conv_layers_to_json(const std::vector<ConvSpec>& layers) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& l : layers) a.push_back({l.out_channels, l.kernel, l.stride});
  return a;
}

inline std::vector<ConvSpec> conv_layers_from_json(const nlohmann::json& a) {
  std::vector<ConvSpec> layers;
  for (const auto& l : a) {
    if (!l.is_array() || l.size() != 3) throw FormatError("corrupt checkpoint header: bad layer spec");
    layers.push_back({l.at(0).get<int>(), l.at(1).get<int>(), l.at(2).get<int>()});
  }
  return layers;
}

inline nlohmann::json config_to_json(const ArchConfig& c) {
  return {
      {"m", c.m},
      {"latent_dim", c.latent_dim},
      {"encoder_layers", conv_layers_to_json(c.encoder_layers)},
      {"decoder_layers", conv_layers_to_json(c.decoder_layers)},
      {"discriminator_layers", conv_layers_to_json(c.discriminator_layers)},
      {"dense_hidden", c.dense_hidden},
      {"activation", {{"kind", activation_kind_name(c.activation.kind)}, {"alpha", c.activation.alpha}}},
      {"output_scale", c.output_scale},
      {"variant", variant_name(c.variant)},
  };
}

inline ArchConfig config_from_json(const nlohmann::json& j) {
  ArchConfig c;
  c.m = j.at("m").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.encoder_layers = conv_layers_from_json(j.at("encoder_layers"));
  c.decoder_layers = conv_layers_from_json(j.at("decoder_layers"));
  c.discriminator_layers = conv_layers_from_json(j.at("discriminator_layers"));
  c.dense_hidden = j.at("dense_hidden").get<std::vector<int>>();
  c.activation.kind = parse_activation_kind(j.at("activation").at("kind").get<std::string>());
  c.activation.alpha = j.at("activation").at("alpha").get<double>();
  c.output_scale = j.at("output_scale").get<double>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  return c;
}

inline nlohmann::json shape_manifest(const std::vector<Tensor<float>>& tensors) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& t : tensors) a.push_back(t.shape());
  return a;
}

inline void read_group(ByteReader& r, const nlohmann::json& manifest, const char* group,
                       std::vector<Tensor<float>>& tensors) {
  std::vector<std::vector<int>> shapes;
  try {
    shapes = manifest.at(group).get<std::vector<std::vector<int>>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (shapes.size() != tensors.size())
    throw FormatError(std::string("checkpoint ") + group + " holds " + std::to_string(shapes.size()) +
                      " tensors, the architecture needs " + std::to_string(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (shapes[i] != tensors[i].shape()) {
      auto fmt = [](const std::vector<int>& s) {
        std::string out = "[";
        for (std::size_t k = 0; k < s.size(); ++k) out += (k ? "x" : "") + std::to_string(s[k]);
        return out + "]";
      };
      throw FormatError(std::string("checkpoint ") + group + " tensor " + std::to_string(i) +
                        " has shape " + fmt(shapes[i]) + ", the architecture needs " +
                        fmt(tensors[i].shape()));
    }
    float* dst = tensors[i].data();
    for (int k = 0; k < tensors[i].size(); ++k) dst[static_cast<std::size_t>(k)] = r.f32();
  }
}

}  // namespace detail

inline void save_checkpoint(const ModelParams<float>& params, const std::string& path) {
  nlohmann::json header;
  header["config"] = detail::config_to_json(params.config);
  header["seed"] = params.seed;
  header["tensors"] = {
      {"encoder", detail::shape_manifest(params.encoder)},
      {"decoder", detail::shape_manifest(params.decoder)},
      {"discriminator", detail::shape_manifest(params.discriminator)},
  };
  const std::string head = header.dump();

  std::string out;
  out.append(kCheckpointMagic, 8);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(head.size()));
  out += head;
  for (const auto* group : {&params.encoder, &params.decoder, &params.discriminator})
    for (const auto& t : *group)
      for (const float v : t.values()) detail::put_f32(out, v);

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + path);
  const std::size_t written = std::fwrite(out.data(), 1, out.size(), f);
  const bool closed = std::fclose(f) == 0;
  if (written != out.size() || !closed) throw IoError("short write to " + path);
}

// Rebuilds the model described by the file header, then overwrites its
// parameters with the stored payload. `expect_m` lets callers assert the
// checkpoint matches the series length they are about to feed it.
inline ModelParams<float> load_checkpoint(const std::string& path,
                                          std::optional<int> expect_m = std::nullopt) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path);
  std::string raw;
  char buf[1 << 16];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) raw.append(buf, got);
  std::fclose(f);

  detail::ByteReader r{reinterpret_cast<const unsigned char*>(raw.data()), raw.size()};
  if (r.bytes(8) != std::string(kCheckpointMagic, 8))
    throw FormatError(path + " is not a model checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                      " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  const std::uint32_t head_len = r.u32();
  const std::string head = r.bytes(head_len);

  nlohmann::json header;
  nlohmann::json manifest;
  ArchConfig cfg;
  std::uint64_t seed = 0;
  try {
    header = nlohmann::json::parse(head);
    cfg = detail::config_from_json(header.at("config"));
    seed = header.at("seed").get<std::uint64_t>();
    manifest = header.at("tensors");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (expect_m && *expect_m != cfg.m)
    throw ShapeError("checkpoint was built for series length " + std::to_string(cfg.m) +
                     " but length " + std::to_string(*expect_m) + " was requested");

  ModelParams<float> params = init_params<float>(cfg, seed);
  detail::read_group(r, manifest, "encoder", params.encoder);
  detail::read_group(r, manifest, "decoder", params.decoder);
  detail::read_group(r, manifest, "discriminator", params.discriminator);
  if (r.at != r.n)
    throw FormatError("checkpoint has " + std::to_string(r.n - r.at) + " trailing bytes");
  return params;
}

}  // namespace ran
