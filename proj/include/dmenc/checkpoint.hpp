// dmenc/checkpoint.hpp

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

// Checkpoint = directory of named float tensors plus meta.json holding the
// resolved config, stage name, step, rng state, and lineage (the chain of
// checkpoint ids this one was trained from). Writes go to a temp directory
// first and are renamed into place.

#ifndef DMENC_CHECKPOINT_HPP_
#define DMENC_CHECKPOINT_HPP_

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmenc/common.hpp"
#include "dmenc/tape.hpp"
#include "dmenc/tensor_io.hpp"

namespace dmenc {

struct CheckpointMeta {
  nlohmann::json config;
  std::string stage;
  int64_t step = 0;
  std::string rng_state;
  std::vector<std::string> lineage;  // oldest ancestor first
  std::string checkpoint_id;
  uint64_t param_hash = 0;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, MatF>> tensors;

  const MatF* find(const std::string& name) const {
    for (const auto& [n, m] : tensors)
      if (n == name) return &m;
    return nullptr;
  }

  const MatF& require(const std::string& name) const {
    const MatF* m = find(name);
    DMENC_CHECK(m != nullptr, "checkpoint is missing tensor '" << name << "'");
    return *m;
  }
};

namespace internal {

inline std::string tensor_file(const std::string& name) {
  std::string s = name;
  for (char& c : s)
    if (c == '/' || c == '\\' || c == ':') c = '_';
  return s + ".bin";
}

}  // namespace internal

inline void save_checkpoint(
    const std::filesystem::path& dir, CheckpointMeta meta,
    const std::vector<std::pair<std::string, const MatF*>>& tensors) {
  namespace fs = std::filesystem;
  if (meta.checkpoint_id.empty()) {
    uint64_t h = fnv1a(meta.stage.data(), meta.stage.size());
    h = fnv1a(&meta.step, sizeof(meta.step), h);
    h ^= meta.param_hash;
    meta.checkpoint_id = meta.stage + "-" + hex64(h);
  }
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  nlohmann::json j;
  j["config"] = meta.config;
  j["stage"] = meta.stage;
  j["step"] = meta.step;
  j["rng_state"] = meta.rng_state;
  j["lineage"] = meta.lineage;
  j["checkpoint_id"] = meta.checkpoint_id;
  j["param_hash"] = hex64(meta.param_hash);
  j["tensors"] = nlohmann::json::array();
  for (const auto& [name, m] : tensors) {
    const std::string f = internal::tensor_file(name);
    write_tensor(tmp / f, *m);
    j["tensors"].push_back(
        {{"name", name}, {"file", f}, {"rows", m->rows()}, {"cols", m->cols()}});
  }
  {
    std::ofstream os(tmp / "meta.json");
    DMENC_CHECK(os.good(), "cannot write " << (tmp / "meta.json"));
    os << j.dump(2) << "\n";
  }
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream is(dir / "meta.json");
  DMENC_CHECK(is.good(), "no checkpoint at " << dir);
  nlohmann::json j = nlohmann::json::parse(is);
  Checkpoint ckpt;
  ckpt.meta.config = j.value("config", nlohmann::json::object());
  ckpt.meta.stage = j.value("stage", "");
  ckpt.meta.step = j.value("step", int64_t{0});
  ckpt.meta.rng_state = j.value("rng_state", "");
  ckpt.meta.lineage = j.value("lineage", std::vector<std::string>{});
  ckpt.meta.checkpoint_id = j.value("checkpoint_id", "");
  if (j.contains("param_hash"))
    ckpt.meta.param_hash =
        std::stoull(j["param_hash"].get<std::string>(), nullptr, 16);
  for (const auto& t : j.at("tensors")) {
    MatF m = read_tensor<float>(dir / t.at("file").get<std::string>());
    DMENC_CHECK(m.rows() == t.at("rows").get<index_t>() &&
                    m.cols() == t.at("cols").get<index_t>(),
                "tensor '" << t.at("name").get<std::string>() << "' shape mismatch");
    ckpt.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  return ckpt;
}

// Collect (name, value pointer) pairs from tape parameters for saving.
inline std::vector<std::pair<std::string, const MatF*>> tensor_refs(
    std::vector<std::pair<std::string, tape::Var<float>*>> params) {
  std::vector<std::pair<std::string, const MatF*>> out;
  out.reserve(params.size());
  for (auto& [name, v] : params) out.emplace_back(name, &v->value());
  return out;
}

// Load checkpoint tensors into existing parameters; every parameter must be
// present with a matching shape.
inline void assign_params(const Checkpoint& ckpt,
                          std::vector<std::pair<std::string, tape::Var<float>*>> params) {
  for (auto& [name, v] : params) {
    const MatF& m = ckpt.require(name);
    DMENC_CHECK(m.rows() == v->rows() && m.cols() == v->cols(),
                "tensor '" << name << "' is " << m.rows() << "x" << m.cols()
                           << ", expected " << v->rows() << "x" << v->cols());
    v->mutable_value() = m;
  }
}

}  // namespace dmenc

#endif  // DMENC_CHECKPOINT_HPP_
