// dmenc/config.hpp

// Copyright 2026  dmenc authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Layered JSON run configuration: built-in defaults, then an optional config
// file, then repeated dotted-key overrides. Every run snapshots its resolved
// config; the snapshot's hash names run directories.

#ifndef DMENC_CONFIG_HPP_
#define DMENC_CONFIG_HPP_

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmenc/common.hpp"

namespace dmenc {

inline nlohmann::json default_config() {
  return nlohmann::json{
      {"data",
       {{"train_manifest", ""},
        {"dev_manifest", ""},
        {"test_manifest", ""},
        {"feature_cache", ""}}},
      {"encoder",
       {{"preset", "toy"},
        {"n_blocks", 4},
        {"d_model", 144},
        {"d_ff", 576},
        {"n_heads", 4},
        {"conv_kernel", 15},
        {"frontend_dim", 512}}},
      {"quantizer",
       {{"d_q", 16},
        {"k_brq", 1024},
        {"k_km", 64},
        {"subsample", 1.0},
        {"tap", "auto"},
        {"sweep_report", ""},
        {"checkpoint", ""},
        {"embeddings", ""}}},
      {"stage",
       {{"kind", "s1"},
        {"total_steps", 400},
        {"batch_size", 4},
        {"sampling_space", "T1"},
        {"span_frames", 8},
        {"p_start", 0.02},
        {"warm_start_decoder", false},
        {"log_every", 25},
        {"checkpoint_every", 0},
        {"init", ""},
        {"teacher", ""},
        {"labels", ""},
        {"resume", ""}}},
      {"decoder",
       {{"pred_hidden", 128}, {"pred_layers", 2}, {"joint_hidden", 256}}},
      {"optimizer",
       {{"lr", 2e-3},
        {"beta1", 0.9},
        {"beta2", 0.98},
        {"eps", 1e-9},
        {"warmup_steps", 500},
        {"clip_norm", 5.0}}},
      {"specaug",
       {{"n_freq_masks", 2},
        {"max_freq_width", 64},
        {"n_time_masks", 2},
        {"max_time_width", 10}}},
      {"eval",
       {{"checkpoint", ""},
        {"grid",
         {{{"lb_s", "inf"}, {"la_s", "inf"}},
          {{"lb_s", 5.4}, {"la_s", 1.0}},
          {{"lb_s", 5.4}, {"la_s", 0.6}},
          {{"lb_s", 5.4}, {"la_s", 0.0}}}}}},
      {"probe",
       {{"checkpoint", ""},
        {"task", "classification"},
        {"tasks", {"asr_ctc", "classification", "pitch_contour",
                   "intensity_contour", "speaking_rate"}},
        {"layer", "all"},
        {"ctx", {{"lb_s", "inf"}, {"la_s", "inf"}}},
        {"steps", 300},
        {"lr", 5e-3},
        {"batch_size", 8},
        {"dtw_window", 5}}},
      {"synth",
       {{"n_utts", 200},
        {"n_classes", 4},
        {"noise_level", 0.02},
        {"untranscribed_fraction", 0.1},
        {"min_words", 2},
        {"max_words", 8},
        {"dev_fraction", 0.1},
        {"test_fraction", 0.2}}},
  };
}

class RunConfig {
 public:
  RunConfig() : root_(default_config()) {}

  static RunConfig from_file(const std::filesystem::path& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream is(path);
    if (!is.good()) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    cfg.merge(file, "");
    return cfg;
  }

  // key is a dotted path; the key must already exist so typos fail loudly.
  void apply_override(const std::string& key, const std::string& value) {
    nlohmann::json* node = &root_;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = key.find('.', start);
      const std::string part = key.substr(start, dot - start);
      if (!node->is_object() || !node->contains(part))
        throw ConfigError("unknown config key '" + key + "'");
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;  // bare strings
    *node = parsed;
    overrides_.push_back(key + "=" + value);
  }

  const nlohmann::json& json() const { return root_; }
  nlohmann::json& json() { return root_; }
  const std::vector<std::string>& overrides() const { return overrides_; }

  const nlohmann::json& at_path(const std::string& key) const {
    const nlohmann::json* node = &root_;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = key.find('.', start);
      const std::string part = key.substr(start, dot - start);
      if (!node->is_object() || !node->contains(part))
        throw ConfigError("missing config key '" + key + "'");
      node = &(*node)[part];
      if (dot == std::string::npos) return *node;
      start = dot + 1;
    }
  }

  template <typename T>
  T get(const std::string& key) const {
    const nlohmann::json& node = at_path(key);
    try {
      return node.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + key + "' has the wrong type: " +
                        node.dump());
    }
  }

  // Accepts the string "inf" wherever a duration can be unbounded.
  double get_seconds(const std::string& key) const {
    const nlohmann::json& node = at_path(key);
    if (node.is_string()) {
      if (node.get<std::string>() == "inf") return kInfSeconds;
      throw ConfigError("config key '" + key + "' must be a number or \"inf\"");
    }
    if (!node.is_number())
      throw ConfigError("config key '" + key + "' must be a number or \"inf\"");
    return node.get<double>();
  }

  uint64_t hash() const {
    const std::string dump = root_.dump();
    return fnv1a(dump.data(), dump.size());
  }

  void snapshot(const std::filesystem::path& path, uint64_t seed) const {
    nlohmann::json j = root_;
    j["_seed"] = seed;
    j["_overrides"] = overrides_;
    std::ofstream os(path);
    DMENC_CHECK(os.good(), "cannot write config snapshot " << path);
    os << j.dump(2) << "\n";
  }

 private:
  void merge(const nlohmann::json& patch, const std::string& prefix) {
    for (auto it = patch.begin(); it != patch.end(); ++it) {
      const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
      nlohmann::json* node = nullptr;
      try {
        node = const_cast<nlohmann::json*>(&at_path(key));
      } catch (const ConfigError&) {
        throw ConfigError("unknown config key '" + key + "' in config file");
      }
      if (it.value().is_object() && node->is_object()) {
        merge(it.value(), key);
      } else {
        *node = it.value();
      }
    }
  }

  nlohmann::json root_;
  std::vector<std::string> overrides_;
};

}  // namespace dmenc

#endif  // DMENC_CONFIG_HPP_
