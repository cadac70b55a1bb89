// Copyright 2026 The ctxmt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ctxmt/model_state.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "ctxmt/error.hpp"

namespace ctxmt {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

enum class Init { kXavier, kEmbedding, kSmallNormal, kOnes, kZeros };

struct ParamSpec {
  Shape shape;
  Init init;
};

void add_attention(std::map<std::string, ParamSpec>& specs, const std::string& prefix,
                   std::size_t d) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) specs[prefix + "." + w] = {{d, d}, Init::kXavier};
  for (const char* b : {"bq", "bk", "bv", "bo"}) specs[prefix + "." + b] = {{d}, Init::kZeros};
}

void add_norm(std::map<std::string, ParamSpec>& specs, const std::string& prefix, std::size_t d) {
  specs[prefix + ".gain"] = {{d}, Init::kOnes};
  specs[prefix + ".bias"] = {{d}, Init::kZeros};
}

void add_ffn(std::map<std::string, ParamSpec>& specs, const std::string& prefix, std::size_t d,
             std::size_t f) {
  specs[prefix + ".w1"] = {{d, f}, Init::kXavier};
  specs[prefix + ".b1"] = {{f}, Init::kZeros};
  specs[prefix + ".w2"] = {{f, d}, Init::kXavier};
  specs[prefix + ".b2"] = {{d}, Init::kZeros};
}

std::map<std::string, ParamSpec> parameter_specs(const ModelConfig& c) {
  std::map<std::string, ParamSpec> specs;
  const std::size_t d = c.d_model;
  specs["embed.word"] = {{c.vocab_size, d}, Init::kEmbedding};
  specs["embed.position"] = {{c.max_positions, d}, Init::kSmallNormal};
  specs["embed.segment"] = {{3, d}, Init::kSmallNormal};
  for (std::size_t l = 0; l < c.encoder_layers(); ++l) {
    const std::string p = "enc." + std::to_string(l);
    add_norm(specs, p + ".ln_attn", d);
    add_attention(specs, p + ".attn", d);
    add_norm(specs, p + ".ln_ffn", d);
    add_ffn(specs, p + ".ffn", d, c.d_ffn);
  }
  add_norm(specs, "enc.ln_final", d);
  for (std::size_t l = 0; l < c.decoder_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    add_norm(specs, p + ".ln_self", d);
    add_attention(specs, p + ".self_attn", d);
    add_norm(specs, p + ".ln_cross", d);
    add_attention(specs, p + ".src_attn", d);
    add_attention(specs, p + ".tgt_attn", d);
    specs[p + ".gate.w_s"] = {{d, 1}, Init::kXavier};
    specs[p + ".gate.u_t"] = {{d, 1}, Init::kXavier};
    specs[p + ".gate.b"] = {{1}, Init::kZeros};
    add_norm(specs, p + ".ln_ffn", d);
    add_ffn(specs, p + ".ffn", d, c.d_ffn);
  }
  add_norm(specs, "dec.ln_final", d);
  return specs;
}

// Little-endian binary helpers.
template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("checkpoint " + path + ": truncated file");
  return v;
}

void write_group(std::ostream& os, const NamedTensors& group) {
  put<std::uint64_t>(os, group.size());
  for (const auto& [name, t] : group) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.ndim()));
    for (auto dim : t.shape()) put<std::uint64_t>(os, dim);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
}

NamedTensors read_group(std::istream& is, const std::string& path) {
  NamedTensors group;
  const auto count = take<std::uint64_t>(is, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = take<std::uint32_t>(is, path);
    if (len > 4096) throw DataError("checkpoint " + path + ": corrupt tensor name");
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto ndim = take<std::uint32_t>(is, path);
    if (ndim > 8) throw DataError("checkpoint " + path + ": corrupt tensor rank for " + name);
    Shape shape(ndim);
    for (auto& dim : shape) dim = take<std::uint64_t>(is, path);
    std::vector<double> values(shape_numel(shape));
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!is) throw DataError("checkpoint " + path + ": truncated data for " + name);
    group.emplace(name, Tensor::from_data(std::move(shape), std::move(values)));
  }
  return group;
}

}  // namespace

std::map<std::string, Shape> ModelState::parameter_shapes(const ModelConfig& config) {
  std::map<std::string, Shape> shapes;
  for (auto& [name, spec] : parameter_specs(config)) shapes[name] = spec.shape;
  return shapes;
}

ModelState ModelState::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState state;
  state.config_ = config;
  std::mt19937_64 rng(seed);
  // std::map iteration order makes the draw sequence independent of insertion.
  for (auto& [name, spec] : parameter_specs(config)) {
    std::vector<double> values(shape_numel(spec.shape));
    switch (spec.init) {
      case Init::kXavier: {
        const double fan_in = static_cast<double>(spec.shape[0]);
        const double fan_out = static_cast<double>(spec.shape[1]);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (double& v : values) v = u(rng);
        break;
      }
      case Init::kEmbedding: {
        std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(config.d_model)));
        for (double& v : values) v = n(rng);
        break;
      }
      case Init::kSmallNormal: {
        std::normal_distribution<double> n(0.0, 0.1);
        for (double& v : values) v = n(rng);
        break;
      }
      case Init::kOnes:
        std::fill(values.begin(), values.end(), 1.0);
        break;
      case Init::kZeros:
        break;
    }
    state.params_.emplace(name, Tensor::from_data(spec.shape, std::move(values), true));
  }
  return state;
}

ModelState ModelState::from_tensors(const ModelConfig& config, NamedTensors tensors) {
  config.validate();
  const auto expected = parameter_shapes(config);
  for (const auto& [name, shape] : expected) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("checkpoint is missing parameter " + name);
    if (it->second.shape() != shape) {
      throw DataError("parameter " + name + " has shape " + shape_string(it->second.shape()) +
                      " but the model config needs " + shape_string(shape));
    }
  }
  for (const auto& [name, _] : tensors) {
    if (!expected.count(name)) throw DataError("checkpoint has unexpected parameter " + name);
  }
  ModelState state;
  state.config_ = config;
  for (auto& [name, t] : tensors) {
    t.set_requires_grad(true);
    state.params_.emplace(name, t);
  }
  return state;
}

const Tensor& ModelState::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter " + name);
  return it->second;
}

Tensor& ModelState::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter " + name);
  return it->second;
}

void ModelState::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint " + path);
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put<std::uint32_t>(os, kCheckpointVersion);
    const std::string meta = checkpoint.meta.dump();
    put<std::uint64_t>(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    write_group(os, checkpoint.parameters);
    write_group(os, checkpoint.optimizer);
    if (!os) throw DataError("failed writing checkpoint " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("cannot move checkpoint into place at " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  char magic[sizeof(kCheckpointMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw DataError(path + " is not a ctxmt checkpoint");
  }
  const auto version = take<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint " + path + " has format version " + std::to_string(version) +
                    ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto meta_len = take<std::uint64_t>(is, path);
  std::string meta(meta_len, '\0');
  is.read(meta.data(), static_cast<std::streamsize>(meta_len));
  if (!is) throw DataError("checkpoint " + path + ": truncated metadata");
  Checkpoint ck;
  try {
    ck.meta = nlohmann::json::parse(meta);
  } catch (const std::exception& e) {
    throw DataError("checkpoint " + path + ": bad metadata: " + e.what());
  }
  ck.parameters = read_group(is, path);
  ck.optimizer = read_group(is, path);
  return ck;
}

}  // namespace ctxmt
