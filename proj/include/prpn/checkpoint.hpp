#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "prpn/model.hpp"

namespace prpn {

// Binary checkpoint: magic, format version, a JSON config header and a list
// of (name, shape, raw doubles) records. Values round-trip bitwise.

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"vocab_size", c.vocab_size},   {"embed_dim", c.embed_dim},
                        {"hidden_dim", c.hidden_dim},   {"lookback", c.lookback},
                        {"memory_span", c.memory_span}, {"temperature", c.temperature},
                        {"mlp_depth", c.mlp_depth},     {"mlp_width", c.mlp_width},
                        {"preset", c.preset}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.lookback = j.value("lookback", c.lookback);
  c.memory_span = j.value("memory_span", c.memory_span);
  c.temperature = j.value("temperature", c.temperature);
  c.mlp_depth = j.value("mlp_depth", c.mlp_depth);
  c.mlp_width = j.value("mlp_width", c.mlp_width);
  c.preset = j.value("preset", c.preset);
  return c;
}

namespace detail {

constexpr char kCkptMagic[8] = {'P', 'R', 'P', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
void read_pod(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod(out, static_cast<std::uint64_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  std::uint64_t n = 0;
  read_pod(in, n);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

}  // namespace detail

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(detail::kCkptMagic, sizeof detail::kCkptMagic);
  detail::write_pod(out, detail::kCkptVersion);
  detail::write_string(out, config_to_json(params.config).dump());

  std::uint64_t count = 0;
  params.for_each([&](const std::string&, const ad::Tensor&) { ++count; });
  detail::write_pod(out, count);
  params.for_each([&](const std::string& name, const ad::Tensor& t) {
    detail::write_string(out, name);
    detail::write_pod(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) detail::write_pod(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.v.data()),
              static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  });
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, detail::kCkptMagic, sizeof magic) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t version = 0;
  detail::read_pod(in, version);
  if (version != detail::kCkptVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  ModelConfig cfg = config_from_json(nlohmann::json::parse(detail::read_string(in)));
  ModelParams params = ModelParams::shaped(cfg);

  std::uint64_t count = 0;
  detail::read_pod(in, count);
  std::map<std::string, ad::Tensor*> slots;
  params.for_each([&](const std::string& name, ad::Tensor& t) { slots[name] = &t; });
  if (count != slots.size())
    throw std::runtime_error("checkpoint: tensor count mismatch in " + path);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = detail::read_string(in);
    auto it = slots.find(name);
    if (it == slots.end()) throw std::runtime_error("checkpoint: unknown tensor " + name);
    std::uint32_t rank = 0;
    detail::read_pod(in, rank);
    ad::Shape shape(rank);
    for (auto& d : shape) {
      std::uint64_t v = 0;
      detail::read_pod(in, v);
      d = static_cast<std::size_t>(v);
    }
    if (shape != it->second->shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(it->second->v.data()),
            static_cast<std::streamsize>(it->second->v.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor " + name);
  }
  return params;
}

}  // namespace prpn
