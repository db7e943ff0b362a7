// dmenc/probe.hpp

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

// Frozen-encoder probing: lightweight task heads trained on top of cached
// encoder taps, layer-wise sweeps, and the sequence metrics (WER, windowed
// DTW with correlation cost) plus signal-derived reference contours.

#ifndef DMENC_PROBE_HPP_
#define DMENC_PROBE_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "dmenc/pipeline.hpp"
#include "dmenc/wav.hpp"

namespace dmenc {

// ---- metrics ----

// Levenshtein distance over token sequences.
int64_t edit_distance(const std::vector<int>& a, const std::vector<int>& b);

// Edit distance / reference length. An empty reference with a nonempty
// hypothesis counts the insertions against a length of 1.
double wer(const std::vector<int>& ref, const std::vector<int>& hyp);

// Windowed DTW with correlation cost: sequences become length-`window`
// sliding windows, cost(i,j) = 1 - Pearson(w_i, w_j) (cost 1 when either
// window has zero variance), and the accumulated match/insert/delete path
// cost is divided by the path length.
double dtw_corr(const VecF& pred, const VecF& ref, int window = 5);

// ---- reference targets ----

struct ReferenceContours {
  VecF pitch;      // Hz per 40 ms frame; unvoiced frames 0
  VecF intensity;  // log RMS per 40 ms frame
  double speaking_rate = 0.0;  // transcript tokens per second
};

ReferenceContours reference_contours(const Waveform& wav, int n_tokens);

// ---- tasks ----

enum class ProbeTaskKind {
  kAsrCtc,
  kClassification,
  kSpeakingRate,
  kPitchContour,
  kIntensityContour,
};

ProbeTaskKind probe_task_from_name(const std::string& name);
std::string probe_task_name(ProbeTaskKind kind);
// wer | accuracy | dtw_corr | rmse (rmse covers the scalar regression task)
std::string probe_metric_name(ProbeTaskKind kind);

struct LayerSelection {
  bool weighted_sum = false;
  index_t block_index = 0;  // used when !weighted_sum

  static LayerSelection single(index_t block) { return {false, block}; }
  static LayerSelection all() { return {true, 0}; }
};

struct ProbeOptions {
  int steps = 300;
  double lr = 5e-3;
  int batch_size = 8;
  int dtw_window = 5;
  uint64_t seed = 0;
};

struct ProbeResult {
  ProbeTaskKind task;
  std::string layer;       // block index or "all"
  ContextSpec ctx;
  double train_metric = 0.0;
  double eval_metric = 0.0;
  std::string metric_name;
  std::vector<double> layer_weights;  // simplex weights when weighted_sum
  uint64_t encoder_hash_before = 0;
  uint64_t encoder_hash_after = 0;
};

// Per-utterance cached encoder taps (block outputs only, frontend excluded).
struct TapCache {
  std::vector<std::vector<MatF>> taps;  // [utt][block] -> [T x d_model]
  index_t n_blocks = 0;
  index_t d_model = 0;
};

TapCache compute_taps(EncoderParams<float>& enc, const Dataset& data,
                      const ContextSpec& ctx);

// Trains one head on the train split and scores the eval split. The encoder
// is only ever run in inference mode; its parameters cannot move.
ProbeResult train_probe(EncoderParams<float>& enc, const Dataset& train,
                        const Dataset& eval, ProbeTaskKind task,
                        const LayerSelection& sel, const ContextSpec& ctx,
                        const ProbeOptions& opt);

// ---- sweep ----

struct ProbeReportRow {
  std::string task;
  std::string layer;
  std::string metric;
  double dev_value = 0.0;
  ContextSpec ctx;
};

struct ProbeReport {
  std::string checkpoint_id;
  uint64_t seed = 0;
  std::vector<ProbeReportRow> rows;
  // Per task: best/worst layer by metric orientation (lower is better for
  // wer/dtw_corr/rmse, higher for accuracy).
  std::vector<std::pair<std::string, index_t>> best_layer;
  std::vector<std::pair<std::string, index_t>> worst_layer;

  void write_csv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path) const;
  void write_svgs(const std::filesystem::path& dir) const;
};

ProbeReport layer_sweep(EncoderParams<float>& enc, const std::string& checkpoint_id,
                        const Dataset& train, const Dataset& eval,
                        const std::vector<ProbeTaskKind>& tasks,
                        const ContextSpec& ctx, const ProbeOptions& opt);

}  // namespace dmenc

#endif  // DMENC_PROBE_HPP_
