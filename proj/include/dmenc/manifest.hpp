// dmenc/manifest.hpp

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

#ifndef DMENC_MANIFEST_HPP_
#define DMENC_MANIFEST_HPP_

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dmenc/common.hpp"

namespace dmenc {

// One utterance record of a JSONL manifest:
//   {"utt_id": ..., "audio_path": ..., "duration_s": ...,
//    "transcript"?: ..., "class_label"?: ...}
struct ManifestEntry {
  std::string utt_id;
  std::string audio_path;  // as stored; resolve against the manifest directory
  double duration_s = 0.0;
  std::optional<std::string> transcript;
  std::optional<std::string> class_label;
};

inline std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is.good()) throw DataError("manifest not found: " + path.string());
  std::vector<ManifestEntry> entries;
  std::unordered_map<std::string, int> seen;  // utt_id -> line number
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": malformed JSON on line " +
                      std::to_string(line_no) + ": " + e.what());
    }
    ManifestEntry e;
    try {
      e.utt_id = j.at("utt_id").get<std::string>();
      e.audio_path = j.at("audio_path").get<std::string>();
      e.duration_s = j.at("duration_s").get<double>();
    } catch (const nlohmann::json::exception& e2) {
      throw DataError(path.string() + ": missing required key on line " +
                      std::to_string(line_no) + ": " + e2.what());
    }
    if (e.duration_s <= 0.0)
      throw DataError(path.string() + ": non-positive duration_s on line " +
                      std::to_string(line_no));
    if (j.contains("transcript") && !j["transcript"].is_null())
      e.transcript = j["transcript"].get<std::string>();
    if (j.contains("class_label") && !j["class_label"].is_null())
      e.class_label = j["class_label"].get<std::string>();
    auto [it, inserted] = seen.emplace(e.utt_id, line_no);
    if (!inserted)
      throw DataError(path.string() + ": duplicate utt_id \"" + e.utt_id +
                      "\" on line " + std::to_string(line_no) +
                      " (first seen on line " + std::to_string(it->second) + ")");
    entries.push_back(std::move(e));
  }
  return entries;
}

inline void save_manifest(const std::filesystem::path& path,
                          const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path);
  if (!os.good()) throw DataError("cannot write manifest: " + path.string());
  for (const auto& e : entries) {
    nlohmann::json j;
    j["utt_id"] = e.utt_id;
    j["audio_path"] = e.audio_path;
    j["duration_s"] = e.duration_s;
    if (e.transcript) j["transcript"] = *e.transcript;
    if (e.class_label) j["class_label"] = *e.class_label;
    os << j.dump() << "\n";
  }
  DMENC_CHECK(os.good(), "short write: " << path.string());
}

inline std::filesystem::path resolve_audio_path(const std::filesystem::path& manifest_path,
                                                const ManifestEntry& e) {
  std::filesystem::path p(e.audio_path);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

}  // namespace dmenc

#endif  // DMENC_MANIFEST_HPP_
