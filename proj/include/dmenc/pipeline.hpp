// dmenc/pipeline.hpp

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

// Stage orchestration: the four-stage recipe (self-supervised pretraining,
// full-context transducer fine-tuning, pseudo-label distillation, dual-mode
// fine-tuning), the single-mode baselines, the alternative pretraining
// ablations, and the inference-setting evaluation grid.

#ifndef DMENC_PIPELINE_HPP_
#define DMENC_PIPELINE_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmenc/checkpoint.hpp"
#include "dmenc/config.hpp"
#include "dmenc/encoder.hpp"
#include "dmenc/fbank.hpp"
#include "dmenc/kmeans.hpp"
#include "dmenc/manifest.hpp"
#include "dmenc/maskgen.hpp"
#include "dmenc/objectives.hpp"
#include "dmenc/optimizer.hpp"

namespace dmenc {

// ---- tokenizer ----

// Word-level vocabulary; id 0 is the transducer/CTC blank.
struct Vocabulary {
  std::vector<std::string> words;

  static Vocabulary build(const std::vector<ManifestEntry>& entries);
  static Vocabulary from_words(std::vector<std::string> words);

  int size() const { return static_cast<int>(words.size()) + 1; }
  std::vector<int> encode(const std::string& transcript) const;
  std::string decode(const std::vector<int>& ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);
};

// ---- data ----

struct Dataset {
  std::vector<ManifestEntry> entries;
  std::vector<MatF> features;  // stacked 512-dim encoder inputs, one per entry
};

// Computes (or loads from cache_dir when non-empty) the encoder inputs for
// every manifest entry.
Dataset prepare_dataset(const std::filesystem::path& manifest_path,
                        const std::filesystem::path& cache_dir);

// ---- transducer decoder (prediction network + joint) ----

struct DecoderConfig {
  int pred_hidden = 128;
  int pred_layers = 2;
  int joint_hidden = 256;
  int vocab_size = 0;  // incl. blank
};

struct DecoderParams {
  using V = tape::Var<float>;
  DecoderConfig cfg;
  V embed;  // [vocab x pred_hidden]; row 0 doubles as the start symbol
  struct LstmLayer {
    V w, u, b;  // input, recurrent, bias; gate order i,f,g,o
  };
  std::vector<LstmLayer> layers;
  V enc_proj_w, enc_proj_b;
  V pred_proj_w, pred_proj_b;
  V out_w, out_b;

  void init(const DecoderConfig& c, Rng& rng);
  std::vector<std::pair<std::string, V*>> named_params();
  int64_t parameter_count();
};

// Taped prediction-network outputs for [start, y_1..y_U]: [ (U+1) x H ].
tape::Var<float> predictor_forward(DecoderParams& dec, const std::vector<int>& labels);

// Taped joint logits [(T*(U+1)) x V] from encoder output and labels.
tape::Var<float> joint_logits(DecoderParams& dec, const tape::Var<float>& enc_out,
                              const std::vector<int>& labels);

// Greedy transducer decode over a plain encoder output matrix.
std::vector<int> greedy_transducer_decode(DecoderParams& dec, const MatF& enc_out,
                                          int max_symbols_per_frame = 10);

// ---- stages ----

struct StageSetup {
  std::string kind;  // s1 s2 s3 s4 baseline_streaming baseline_full_context
                     // brq_dm distill_from_e1
  RunConfig config;
  uint64_t seed = 0;
  std::filesystem::path out_dir;
  std::filesystem::path train_manifest;
  std::filesystem::path feature_cache;
  std::filesystem::path init_checkpoint;     // encoder warm start (s2/s4/baselines)
  std::filesystem::path teacher_checkpoint;  // distill stages
  std::filesystem::path labels_dir;          // pseudo labels (distill stages)
  std::filesystem::path resume_checkpoint;
};

struct StageResult {
  std::filesystem::path checkpoint_dir;
  CheckpointMeta meta;
  std::vector<double> losses;  // one per step
};

StageResult run_stage(const StageSetup& setup);

// ---- offline embedding extraction ----

EmbeddingStore extract_embeddings(const std::filesystem::path& checkpoint_dir,
                                  index_t block_index, const Dataset& data);

// ---- evaluation ----

struct EvalRow {
  ContextSpec ctx;
  double wer = 0.0;
  int n_utts = 0;
  int n_ref_tokens = 0;
};

struct EvalTable {
  std::string checkpoint_id;
  std::vector<EvalRow> rows;

  void write_csv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path) const;
};

// Decodes every transcribed utterance under each context. Finite-look-ahead
// rows run through the incremental streaming forward; unbounded look-ahead
// rows run the full-sequence masked forward.
EvalTable evaluate_grid(const std::filesystem::path& checkpoint_dir,
                        const std::vector<ContextSpec>& grid, const Dataset& test);

// ---- checkpoint <-> model glue ----

struct ModelBundle {
  EncoderParams<float> encoder;
  std::optional<DecoderParams> decoder;
  tape::Var<float> head_w, head_b;  // code-prediction head (s1/s3 family)
  index_t head_dim = 0;

  std::vector<std::pair<std::string, tape::Var<float>*>> named_params();
};

EncoderConfig encoder_config_from(const RunConfig& cfg);
std::vector<ContextSpec> grid_from(const RunConfig& cfg);
SamplingSpace sampling_space_from(const RunConfig& cfg, const std::string& stage_kind);

// Loads the encoder (and decoder if present) out of a checkpoint.
ModelBundle load_model(const Checkpoint& ckpt);

}  // namespace dmenc

#endif  // DMENC_PIPELINE_HPP_
