#pragma once
#include <cstdint>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "semdnn/device.hpp"
#include "semdnn/mapped.hpp"
#include "semdnn/model.hpp"
#include "semdnn/tpe.hpp"
#include "semdnn/train.hpp"

namespace semdnn {

// One config object for the whole pipeline. Everything has a default; a JSON
// file overrides only the keys it mentions. The FNV hash of the canonical
// dump is stamped into every artifact so mismatched runs are detectable.
struct RunConfig {
  std::uint64_t seed = 42;
  ModelSpec model = ModelSpec::mnist_default();
  TrainConfig train;
  DeviceStats device;
  PipelineOptions pipeline{8, 14, false, 512};
  tpe::TPEConfig tpe;
  double adc_headroom = 1.0;  // multiplier on calibrated ADC ranges
};

namespace detail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  nlohmann::json blocks = nlohmann::json::array();
  for (auto& b : c.model.blocks)
    blocks.push_back({{"out_c", b.out_c},
                      {"stride", b.stride},
                      {"convs", b.convs},
                      {"exit", b.exit_point}});
  j["model"] = {{"in_h", c.model.in_h},     {"in_w", c.model.in_w},
                {"in_c", c.model.in_c},     {"stem_c", c.model.stem_c},
                {"n_classes", c.model.n_classes}, {"blocks", blocks}};
  j["train"] = {{"optimizer", c.train.optimizer}, {"lr", c.train.lr},
                {"momentum", c.train.momentum},   {"beta2", c.train.beta2},
                {"eps", c.train.eps},         {"weight_decay", c.train.weight_decay},
                {"epochs", c.train.epochs},   {"batch", c.train.batch},
                {"init_scale", c.train.init_scale}, {"quantize", c.train.quantize},
                {"cosine_lr", c.train.cosine_lr}};
  j["device"] = {{"g_on_us", c.device.g_on},       {"g_off_us", c.device.g_off},
                 {"sigma_write", c.device.sigma_write}, {"read_a", c.device.read_a},
                 {"read_b", c.device.read_b}};
  j["pipeline"] = {{"input_bits", c.pipeline.input_bits},
                   {"adc_bits", c.pipeline.adc_bits},
                   {"read_noise", c.pipeline.read_noise},
                   {"tile", c.pipeline.tile},
                   {"adc_headroom", c.adc_headroom}};
  j["tpe"] = {{"gamma", c.tpe.gamma},
              {"n_startup", c.tpe.n_startup},
              {"n_candidates", c.tpe.n_candidates},
              {"n_iterations", c.tpe.n_iterations},
              {"low", c.tpe.low},
              {"high", c.tpe.high},
              {"target_budget", c.tpe.target_budget},
              {"omega", c.tpe.omega}};
  return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  detail::maybe(j, "seed", c.seed);
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::maybe(m, "in_h", c.model.in_h);
    detail::maybe(m, "in_w", c.model.in_w);
    detail::maybe(m, "in_c", c.model.in_c);
    detail::maybe(m, "stem_c", c.model.stem_c);
    detail::maybe(m, "n_classes", c.model.n_classes);
    if (m.contains("blocks")) {
      c.model.blocks.clear();
      for (const auto& jb : m.at("blocks")) {
        BlockSpec b;
        detail::maybe(jb, "out_c", b.out_c);
        detail::maybe(jb, "stride", b.stride);
        detail::maybe(jb, "convs", b.convs);
        detail::maybe(jb, "exit", b.exit_point);
        c.model.blocks.push_back(b);
      }
    }
    c.model.validate();
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::maybe(t, "optimizer", c.train.optimizer);
    detail::maybe(t, "lr", c.train.lr);
    detail::maybe(t, "momentum", c.train.momentum);
    detail::maybe(t, "beta2", c.train.beta2);
    detail::maybe(t, "eps", c.train.eps);
    detail::maybe(t, "weight_decay", c.train.weight_decay);
    detail::maybe(t, "epochs", c.train.epochs);
    detail::maybe(t, "batch", c.train.batch);
    detail::maybe(t, "init_scale", c.train.init_scale);
    detail::maybe(t, "quantize", c.train.quantize);
    detail::maybe(t, "cosine_lr", c.train.cosine_lr);
    c.train.validate();
  }
  if (j.contains("device")) {
    const auto& d = j.at("device");
    detail::maybe(d, "g_on_us", c.device.g_on);
    detail::maybe(d, "g_off_us", c.device.g_off);
    detail::maybe(d, "sigma_write", c.device.sigma_write);
    detail::maybe(d, "read_a", c.device.read_a);
    detail::maybe(d, "read_b", c.device.read_b);
    c.device.validate();
  }
  if (j.contains("pipeline")) {
    const auto& p = j.at("pipeline");
    detail::maybe(p, "input_bits", c.pipeline.input_bits);
    detail::maybe(p, "adc_bits", c.pipeline.adc_bits);
    detail::maybe(p, "read_noise", c.pipeline.read_noise);
    detail::maybe(p, "tile", c.pipeline.tile);
    detail::maybe(p, "adc_headroom", c.adc_headroom);
  }
  if (j.contains("tpe")) {
    const auto& t = j.at("tpe");
    detail::maybe(t, "gamma", c.tpe.gamma);
    detail::maybe(t, "n_startup", c.tpe.n_startup);
    detail::maybe(t, "n_candidates", c.tpe.n_candidates);
    detail::maybe(t, "n_iterations", c.tpe.n_iterations);
    detail::maybe(t, "low", c.tpe.low);
    detail::maybe(t, "high", c.tpe.high);
    detail::maybe(t, "target_budget", c.tpe.target_budget);
    detail::maybe(t, "omega", c.tpe.omega);
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open config");
  nlohmann::json j;
  in >> j;
  return config_from_json(j);
}

// FNV-1a over the canonical (sorted-key, compact) dump.
inline std::string config_hash(const RunConfig& c) {
  const std::string s = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace semdnn
