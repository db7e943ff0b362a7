// dmenc/pipeline.cc

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

#include "dmenc/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "dmenc/probe.hpp"
#include "dmenc/wav.hpp"

namespace dmenc {

// ---- Vocabulary ----

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

// Reference words outside the training vocabulary map to an id no hypothesis
// can emit, so each counts as a guaranteed error instead of aborting scoring.
std::vector<int> encode_for_scoring(const Vocabulary& vocab,
                                    const std::string& transcript) {
  std::vector<int> ids;
  for (const auto& w : split_words(transcript)) {
    const auto it = std::lower_bound(vocab.words.begin(), vocab.words.end(), w);
    ids.push_back(it != vocab.words.end() && *it == w
                      ? static_cast<int>(it - vocab.words.begin()) + 1
                      : -1);
  }
  return ids;
}

}  // namespace

Vocabulary Vocabulary::build(const std::vector<ManifestEntry>& entries) {
  std::set<std::string> uniq;
  for (const auto& e : entries)
    if (e.transcript)
      for (const auto& w : split_words(*e.transcript)) uniq.insert(w);
  DMENC_CHECK(!uniq.empty(), "no transcribed utterances to build a vocabulary from");
  Vocabulary v;
  v.words.assign(uniq.begin(), uniq.end());
  return v;
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  Vocabulary v;
  v.words = std::move(words);
  return v;
}

std::vector<int> Vocabulary::encode(const std::string& transcript) const {
  std::vector<int> ids;
  for (const auto& w : split_words(transcript)) {
    const auto it = std::lower_bound(words.begin(), words.end(), w);
    if (it == words.end() || *it != w)
      throw DataError("word '" + w + "' is not in the vocabulary");
    ids.push_back(static_cast<int>(it - words.begin()) + 1);
  }
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    DMENC_CHECK(id >= 1 && id <= static_cast<int>(words.size()),
                "token id " << id << " out of range");
    if (!out.empty()) out += ' ';
    out += words[static_cast<std::size_t>(id - 1)];
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["words"] = words;
  std::ofstream os(path);
  DMENC_CHECK(os.good(), "cannot write vocabulary " << path);
  os << j.dump(2) << "\n";
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  DMENC_CHECK(is.good(), "cannot open vocabulary " << path);
  nlohmann::json j = nlohmann::json::parse(is);
  return from_words(j.at("words").get<std::vector<std::string>>());
}

// ---- data ----

Dataset prepare_dataset(const std::filesystem::path& manifest_path,
                        const std::filesystem::path& cache_dir) {
  Dataset ds;
  ds.entries = load_manifest(manifest_path);
  if (!cache_dir.empty()) std::filesystem::create_directories(cache_dir);
  ds.features.reserve(ds.entries.size());
  for (auto& e : ds.entries) {
    // Entries keep the resolved path so downstream consumers (probe targets)
    // can reopen the audio without the manifest.
    e.audio_path = resolve_audio_path(manifest_path, e).string();
    if (!cache_dir.empty() && feature_cache_has(cache_dir, e.utt_id)) {
      ds.features.push_back(read_feature_cache(cache_dir, e.utt_id).frames);
      continue;
    }
    Waveform wav = read_audio(e.audio_path);
    EncoderInput input = waveform_to_input(wav);
    DMENC_CHECK(input.frames.rows() >= 1,
                "utterance " << e.utt_id << " is too short for one frame");
    if (!cache_dir.empty()) write_feature_cache(cache_dir, e.utt_id, input);
    ds.features.push_back(std::move(input.frames));
  }
  return ds;
}

// ---- decoder ----

void DecoderParams::init(const DecoderConfig& c, Rng& rng) {
  DMENC_CHECK(c.vocab_size >= 2, "decoder needs a vocabulary");
  DMENC_CHECK(c.pred_layers >= 1 && c.pred_hidden >= 1 && c.joint_hidden >= 1,
              "bad decoder dims");
  cfg = c;
  auto xavier = [&rng](index_t rows, index_t cols) {
    const double lim = std::sqrt(6.0 / static_cast<double>(rows + cols));
    MatF m(rows, cols);
    for (index_t j = 0; j < cols; ++j)
      for (index_t i = 0; i < rows; ++i)
        m(i, j) = static_cast<float>(rng.uniform(-lim, lim));
    return V::parameter(std::move(m));
  };
  auto zeros = [](index_t rows, index_t cols) {
    return V::parameter(MatF::Zero(rows, cols));
  };
  const index_t H = c.pred_hidden;
  embed = xavier(c.vocab_size, H);
  layers.clear();
  layers.resize(static_cast<std::size_t>(c.pred_layers));
  for (auto& l : layers) {
    l.w = xavier(H, 4 * H);
    l.u = xavier(H, 4 * H);
    // Forget-gate bias starts at one.
    MatF b = MatF::Zero(1, 4 * H);
    b.middleCols(H, H).setOnes();
    l.b = V::parameter(std::move(b));
  }
  // Encoder width is only known at wiring time; set by init_joint.
  enc_proj_w = V();
  pred_proj_w = xavier(H, c.joint_hidden);
  pred_proj_b = zeros(1, c.joint_hidden);
  out_w = xavier(c.joint_hidden, c.vocab_size);
  out_b = zeros(1, c.vocab_size);
}

std::vector<std::pair<std::string, tape::Var<float>*>> DecoderParams::named_params() {
  std::vector<std::pair<std::string, V*>> out;
  out.emplace_back("dec.embed", &embed);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "dec.lstm." + std::to_string(i) + ".";
    out.emplace_back(p + "w", &layers[i].w);
    out.emplace_back(p + "u", &layers[i].u);
    out.emplace_back(p + "b", &layers[i].b);
  }
  out.emplace_back("dec.enc_proj.w", &enc_proj_w);
  out.emplace_back("dec.enc_proj.b", &enc_proj_b);
  out.emplace_back("dec.pred_proj.w", &pred_proj_w);
  out.emplace_back("dec.pred_proj.b", &pred_proj_b);
  out.emplace_back("dec.out.w", &out_w);
  out.emplace_back("dec.out.b", &out_b);
  return out;
}

int64_t DecoderParams::parameter_count() {
  // The joint's encoder projection stays unwired until the first joint call;
  // count only materialized tensors.
  int64_t n = 0;
  for (auto& [name, v] : named_params())
    if (v->valid()) n += v->value().size();
  return n;
}

namespace {

// One taped LSTM step for a [1 x H] state; gates ordered i,f,g,o.
void lstm_step(const DecoderParams::LstmLayer& l, const tape::Var<float>& x,
               tape::Var<float>& h, tape::Var<float>& c) {
  using namespace tape;
  const index_t H = l.u.rows();
  auto gates = add_rowvec(add(matmul(x, l.w), matmul(h, l.u)), l.b);
  auto i = sigmoid(slice_cols(gates, 0, H));
  auto f = sigmoid(slice_cols(gates, H, H));
  auto g = tanh_(slice_cols(gates, 2 * H, H));
  auto o = sigmoid(slice_cols(gates, 3 * H, H));
  c = add(mul(f, c), mul(i, g));
  h = mul(o, tanh_(c));
}

tape::Var<float> onehot_row(int id, index_t n) {
  MatF m = MatF::Zero(1, n);
  m(0, id) = 1.0f;
  return tape::Var<float>::constant(std::move(m));
}

}  // namespace

tape::Var<float> predictor_forward(DecoderParams& dec, const std::vector<int>& labels) {
  using namespace tape;
  const index_t H = dec.cfg.pred_hidden;
  std::vector<Var<float>> h(dec.layers.size()), c(dec.layers.size());
  for (std::size_t i = 0; i < dec.layers.size(); ++i) {
    h[i] = Var<float>::constant(MatF::Zero(1, H));
    c[i] = Var<float>::constant(MatF::Zero(1, H));
  }
  std::vector<Var<float>> outs;
  outs.reserve(labels.size() + 1);
  for (std::size_t step = 0; step <= labels.size(); ++step) {
    const int tok = step == 0 ? 0 : labels[step - 1];
    DMENC_CHECK(tok >= 0 && tok < dec.cfg.vocab_size, "label out of range");
    auto x = matmul(onehot_row(tok, dec.cfg.vocab_size), dec.embed);
    for (std::size_t i = 0; i < dec.layers.size(); ++i) {
      lstm_step(dec.layers[i], x, h[i], c[i]);
      x = h[i];
    }
    outs.push_back(x);
  }
  return concat_rows(outs);
}

tape::Var<float> joint_logits(DecoderParams& dec, const tape::Var<float>& enc_out,
                              const std::vector<int>& labels) {
  using namespace tape;
  DMENC_CHECK(dec.enc_proj_w.valid(), "decoder joint is not wired to an encoder");
  const index_t T = enc_out.rows();
  const index_t U1 = static_cast<index_t>(labels.size()) + 1;
  auto enc_proj = add_rowvec(matmul(enc_out, dec.enc_proj_w), dec.enc_proj_b);
  auto pred = predictor_forward(dec, labels);
  auto pred_proj = add_rowvec(matmul(pred, dec.pred_proj_w), dec.pred_proj_b);
  auto z = tanh_(add(repeat_rows_each(enc_proj, U1), tile_rows(pred_proj, T)));
  return add_rowvec(matmul(z, dec.out_w), dec.out_b);
}

namespace {

// Plain-matrix LSTM state for greedy decoding.
struct PlainPredictor {
  DecoderParams* dec;
  std::vector<RowVec<float>> h, c;

  explicit PlainPredictor(DecoderParams& d) : dec(&d) {
    const index_t H = d.cfg.pred_hidden;
    h.assign(d.layers.size(), RowVec<float>::Zero(H));
    c.assign(d.layers.size(), RowVec<float>::Zero(H));
  }

  RowVec<float> step(int tok) {
    const index_t H = dec->cfg.pred_hidden;
    RowVec<float> x = dec->embed.value().row(tok);
    for (std::size_t i = 0; i < dec->layers.size(); ++i) {
      const auto& l = dec->layers[i];
      RowVec<float> gates = x * l.w.value() + h[i] * l.u.value() + l.b.value();
      auto seg = [&](index_t k) { return gates.segment(k * H, H).array(); };
      auto sig = [](auto a) { return (1.0f / (1.0f + (-a).exp())).eval(); };
      auto ia = sig(seg(0));
      auto fa = sig(seg(1));
      auto ga = seg(2).tanh().eval();
      auto oa = sig(seg(3));
      c[i] = (fa * c[i].array() + ia * ga).matrix();
      h[i] = (oa * c[i].array().tanh()).matrix();
      x = h[i];
    }
    return x;
  }
};

}  // namespace

std::vector<int> greedy_transducer_decode(DecoderParams& dec, const MatF& enc_out,
                                          int max_symbols_per_frame) {
  DMENC_CHECK(dec.enc_proj_w.valid(), "decoder joint is not wired to an encoder");
  MatF enc_proj = enc_out * dec.enc_proj_w.value();
  enc_proj.rowwise() += RowVec<float>(dec.enc_proj_b.value().row(0));
  PlainPredictor pred(dec);
  RowVec<float> g = pred.step(0);  // start symbol
  std::vector<int> out;
  for (index_t t = 0; t < enc_out.rows(); ++t) {
    for (int k = 0; k < max_symbols_per_frame; ++k) {
      RowVec<float> pj = g * dec.pred_proj_w.value() + dec.pred_proj_b.value();
      RowVec<float> z = (enc_proj.row(t) + pj).array().tanh().matrix();
      RowVec<float> logits = z * dec.out_w.value() + dec.out_b.value();
      index_t best;
      logits.maxCoeff(&best);
      if (best == kBlankId) break;
      out.push_back(static_cast<int>(best));
      g = pred.step(static_cast<int>(best));
    }
  }
  return out;
}

// ---- config glue ----

EncoderConfig encoder_config_from(const RunConfig& cfg) {
  const std::string preset = cfg.get<std::string>("encoder.preset");
  if (preset != "toy") return EncoderConfig::preset(preset);
  EncoderConfig c;
  c.n_blocks = cfg.get<index_t>("encoder.n_blocks");
  c.d_model = cfg.get<index_t>("encoder.d_model");
  c.d_ff = cfg.get<index_t>("encoder.d_ff");
  c.n_heads = cfg.get<index_t>("encoder.n_heads");
  c.conv_kernel = cfg.get<index_t>("encoder.conv_kernel");
  c.frontend_dim = cfg.get<index_t>("encoder.frontend_dim");
  c.validate();
  return c;
}

std::vector<ContextSpec> grid_from(const RunConfig& cfg) {
  std::vector<ContextSpec> grid;
  const auto& arr = cfg.at_path("eval.grid");
  DMENC_CHECK(arr.is_array() && !arr.empty(), "eval.grid must be a nonempty array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    auto sec = [&](const char* key) -> double {
      const auto& node = arr[i];
      if (!node.contains(key))
        throw ConfigError("eval.grid entry missing '" + std::string(key) + "'");
      if (node[key].is_string() && node[key] == "inf") return kInfSeconds;
      if (node[key].is_number()) return node[key].get<double>();
      throw ConfigError("eval.grid entries must be numbers or \"inf\"");
    };
    grid.push_back(ContextSpec{sec("lb_s"), sec("la_s")});
  }
  return grid;
}

SamplingSpace sampling_space_from(const RunConfig& cfg, const std::string& kind) {
  if (kind == "s1" || kind == "s2" || kind == "baseline_full_context")
    return SamplingSpace::singleton(ContextSpec::full_context(), "full");
  if (kind == "baseline_streaming")
    return SamplingSpace::singleton(ContextSpec::streaming(), "streaming");
  return SamplingSpace::preset(cfg.get<std::string>("stage.sampling_space"));
}

// ---- model bundle ----

std::vector<std::pair<std::string, tape::Var<float>*>> ModelBundle::named_params() {
  auto out = encoder.named_params();
  if (decoder) {
    auto d = decoder->named_params();
    out.insert(out.end(), d.begin(), d.end());
  }
  if (head_dim > 0) {
    out.emplace_back("head.w", &head_w);
    out.emplace_back("head.b", &head_b);
  }
  return out;
}

ModelBundle load_model(const Checkpoint& ckpt) {
  ModelBundle m;
  DMENC_CHECK(ckpt.meta.config.contains("encoder"),
              "checkpoint meta has no encoder config");
  const auto& ec = ckpt.meta.config["encoder"];
  EncoderConfig cfg;
  cfg.n_blocks = ec.at("n_blocks").get<index_t>();
  cfg.d_model = ec.at("d_model").get<index_t>();
  cfg.d_ff = ec.at("d_ff").get<index_t>();
  cfg.n_heads = ec.at("n_heads").get<index_t>();
  cfg.conv_kernel = ec.at("conv_kernel").get<index_t>();
  cfg.frontend_dim = ec.at("frontend_dim").get<index_t>();
  Rng scratch(0);
  m.encoder.init(cfg, scratch);

  if (ckpt.find("dec.embed") != nullptr) {
    DecoderConfig dc;
    const auto& dj = ckpt.meta.config.at("decoder");
    dc.pred_hidden = dj.at("pred_hidden").get<int>();
    dc.pred_layers = dj.at("pred_layers").get<int>();
    dc.joint_hidden = dj.at("joint_hidden").get<int>();
    dc.vocab_size = static_cast<int>(ckpt.require("dec.embed").rows());
    DecoderParams dec;
    dec.init(dc, scratch);
    dec.enc_proj_w = tape::Var<float>::parameter(
        MatF::Zero(cfg.d_model, dc.joint_hidden));
    dec.enc_proj_b = tape::Var<float>::parameter(MatF::Zero(1, dc.joint_hidden));
    m.decoder = std::move(dec);
  }
  if (const MatF* hw = ckpt.find("head.w")) {
    m.head_dim = hw->cols();
    m.head_w = tape::Var<float>::parameter(MatF::Zero(hw->rows(), hw->cols()));
    m.head_b = tape::Var<float>::parameter(MatF::Zero(1, hw->cols()));
  }
  assign_params(ckpt, m.named_params());
  return m;
}

// ---- stage running ----

namespace {

struct TrainLog {
  std::ofstream os;

  explicit TrainLog(const std::filesystem::path& path) : os(path) {
    DMENC_CHECK(os.good(), "cannot open train log " << path);
    os << "step,loss,lr,grad_norm,lb_s,la_s\n";
  }

  void row(int64_t step, double loss, double lr, double gnorm,
           const ContextSpec& ctx) {
    os << step << ',' << loss << ',' << lr << ',' << gnorm << ',' << ctx.lb_s
       << ',' << ctx.la_s << "\n";
  }
};

bool is_brq_kind(const std::string& k) { return k == "s1" || k == "brq_dm"; }
bool is_distill_kind(const std::string& k) {
  return k == "s3" || k == "distill_from_e1";
}
bool is_rnnt_kind(const std::string& k) {
  return k == "s2" || k == "s4" || k == "baseline_streaming" ||
         k == "baseline_full_context";
}

}  // namespace

StageResult run_stage(const StageSetup& setup) {
  const std::string& kind = setup.kind;
  DMENC_CHECK(is_brq_kind(kind) || is_distill_kind(kind) || is_rnnt_kind(kind),
              "unknown stage kind '" << kind << "'");
  const RunConfig& cfg = setup.config;
  std::filesystem::create_directories(setup.out_dir);

  Dataset train = prepare_dataset(setup.train_manifest, setup.feature_cache);
  DMENC_CHECK(!train.entries.empty(), "empty training manifest");

  EncoderConfig enc_cfg = encoder_config_from(cfg);
  Rng init_rng(Rng::derive(setup.seed, 0x696e6974u));

  ModelBundle model;
  model.encoder.init(enc_cfg, init_rng);

  std::vector<std::string> lineage;
  CheckpointMeta parent_meta;

  // Stage prerequisites.
  if (kind == "s2" || kind == "s4" || kind == "baseline_streaming" ||
      kind == "baseline_full_context") {
    DMENC_CHECK(!setup.init_checkpoint.empty(),
                "stage " << kind << " needs an initial encoder checkpoint");
    Checkpoint init = load_checkpoint(setup.init_checkpoint);
    const std::string& from = init.meta.stage;
    if (kind == "s2")
      DMENC_CHECK(from == "s1", "stage s2 must start from an s1 checkpoint, got '"
                                    << from << "'");
    if (kind == "s4")
      DMENC_CHECK(from == "s3" || from == "brq_dm" || from == "distill_from_e1",
                  "stage s4 must start from a dual-mode pretrained checkpoint, got '"
                      << from << "'");
    if (kind == "baseline_streaming" || kind == "baseline_full_context")
      DMENC_CHECK(from == "s1" || from == "brq_dm",
                  "baselines start from a pretrained checkpoint, got '" << from
                                                                        << "'");
    assign_params(init, model.encoder.named_params());
    lineage = init.meta.lineage;
    parent_meta = init.meta;
  }

  PseudoLabelStore labels;
  index_t k_km = 0;
  if (is_distill_kind(kind)) {
    DMENC_CHECK(!setup.teacher_checkpoint.empty(),
                "stage " << kind << " needs a teacher checkpoint");
    DMENC_CHECK(!setup.labels_dir.empty(),
                "stage " << kind << " needs a pseudo-label directory");
    Checkpoint teacher = load_checkpoint(setup.teacher_checkpoint);
    if (kind == "s3")
      DMENC_CHECK(teacher.meta.stage == "s2",
                  "stage s3 distills from an s2 teacher, got '"
                      << teacher.meta.stage << "'");
    if (kind == "distill_from_e1")
      DMENC_CHECK(teacher.meta.stage == "s1",
                  "distill_from_e1 distills from an s1 teacher, got '"
                      << teacher.meta.stage << "'");
    labels = PseudoLabelStore::load(setup.labels_dir);
    // Lineage gate: the labels must have been extracted from this teacher.
    if (!labels.checkpoint_id.empty())
      DMENC_CHECK(labels.checkpoint_id == teacher.meta.checkpoint_id,
                  "pseudo labels come from checkpoint "
                      << labels.checkpoint_id << " but the teacher is "
                      << teacher.meta.checkpoint_id);
    lineage = teacher.meta.lineage;
    parent_meta = teacher.meta;
    k_km = cfg.get<index_t>("quantizer.k_km");
    for (const auto& [id, v] : labels.codes)
      if (v.size() > 0)
        DMENC_CHECK(v.maxCoeff() < k_km, "pseudo label out of range in " << id);
  }

  // Vocabulary: built fresh for s2; inherited through meta for later stages.
  Vocabulary vocab;
  bool have_vocab = false;
  if (is_rnnt_kind(kind)) {
    if (parent_meta.config.contains("_vocab")) {
      vocab = Vocabulary::from_words(
          parent_meta.config["_vocab"].get<std::vector<std::string>>());
    } else {
      vocab = Vocabulary::build(train.entries);
    }
    have_vocab = true;
  }

  // Heads.
  RandomQuantizer quantizer;
  if (is_brq_kind(kind)) {
    quantizer = RandomQuantizer::make(enc_cfg.frontend_dim,
                                      cfg.get<index_t>("quantizer.d_q"),
                                      cfg.get<index_t>("quantizer.k_brq"),
                                      setup.seed);
    model.head_dim = quantizer.K;
  } else if (is_distill_kind(kind)) {
    model.head_dim = k_km;
  }
  if (model.head_dim > 0) {
    const double lim = std::sqrt(6.0 / static_cast<double>(enc_cfg.d_model +
                                                           model.head_dim));
    MatF hw(enc_cfg.d_model, model.head_dim);
    for (index_t j = 0; j < hw.cols(); ++j)
      for (index_t i = 0; i < hw.rows(); ++i)
        hw(i, j) = static_cast<float>(init_rng.uniform(-lim, lim));
    model.head_w = tape::Var<float>::parameter(std::move(hw));
    model.head_b = tape::Var<float>::parameter(MatF::Zero(1, model.head_dim));
  }
  if (is_rnnt_kind(kind)) {
    DecoderConfig dc;
    dc.pred_hidden = cfg.get<int>("decoder.pred_hidden");
    dc.pred_layers = cfg.get<int>("decoder.pred_layers");
    dc.joint_hidden = cfg.get<int>("decoder.joint_hidden");
    dc.vocab_size = vocab.size();
    DecoderParams dec;
    dec.init(dc, init_rng);
    {
      const double lim =
          std::sqrt(6.0 / static_cast<double>(enc_cfg.d_model + dc.joint_hidden));
      MatF w(enc_cfg.d_model, dc.joint_hidden);
      for (index_t j = 0; j < w.cols(); ++j)
        for (index_t i = 0; i < w.rows(); ++i)
          w(i, j) = static_cast<float>(init_rng.uniform(-lim, lim));
      dec.enc_proj_w = tape::Var<float>::parameter(std::move(w));
      dec.enc_proj_b = tape::Var<float>::parameter(MatF::Zero(1, dc.joint_hidden));
    }
    model.decoder = std::move(dec);
    if (kind == "s4" && cfg.get<bool>("stage.warm_start_decoder")) {
      // Optional warm start of prediction/joint networks from the
      // full-context transducer checkpoint given as stage.teacher.
      DMENC_CHECK(!setup.teacher_checkpoint.empty(),
                  "decoder warm start needs a transducer checkpoint in stage.teacher");
      Checkpoint src = load_checkpoint(setup.teacher_checkpoint);
      DMENC_CHECK(src.find("dec.embed") != nullptr,
                  "warm-start checkpoint has no decoder tensors");
      assign_params(src, model.decoder->named_params());
    }
  }

  // Eligible training indices.
  std::vector<index_t> eligible;
  std::vector<std::vector<int>> token_ids(train.entries.size());
  std::vector<VecI> code_targets(train.entries.size());
  for (std::size_t i = 0; i < train.entries.size(); ++i) {
    const auto& e = train.entries[i];
    if (is_rnnt_kind(kind)) {
      if (!e.transcript) continue;  // untranscribed data is pretraining-only
      token_ids[i] = vocab.encode(*e.transcript);
      if (token_ids[i].empty()) continue;
    } else if (is_distill_kind(kind)) {
      const VecI* codes = nullptr;
      for (const auto& [id, v] : labels.codes)
        if (id == e.utt_id) codes = &v;
      DMENC_CHECK(codes != nullptr, "no pseudo labels for utterance " << e.utt_id);
      DMENC_CHECK(codes->size() == train.features[i].rows(),
                  "pseudo label count mismatch for " << e.utt_id);
      code_targets[i] = *codes;
    } else {
      code_targets[i] = brq_codes(train.features[i], quantizer);
    }
    eligible.push_back(static_cast<index_t>(i));
  }
  DMENC_CHECK(!eligible.empty(), "no usable training utterances for stage " << kind);

  // Optimizer over every trainable parameter.
  OptimizerConfig ocfg;
  ocfg.lr = cfg.get<double>("optimizer.lr");
  ocfg.beta1 = cfg.get<double>("optimizer.beta1");
  ocfg.beta2 = cfg.get<double>("optimizer.beta2");
  ocfg.eps = cfg.get<double>("optimizer.eps");
  ocfg.warmup_steps = cfg.get<int64_t>("optimizer.warmup_steps");
  ocfg.clip_norm = cfg.get<double>("optimizer.clip_norm");
  Adam<float> adam(ocfg, model.named_params());

  int64_t start_step = 0;
  if (!setup.resume_checkpoint.empty()) {
    Checkpoint res = load_checkpoint(setup.resume_checkpoint);
    DMENC_CHECK(res.meta.stage == kind, "resume checkpoint is stage '"
                                            << res.meta.stage << "', expected '"
                                            << kind << "'");
    assign_params(res, model.named_params());
    for (auto& [name, m] : adam.named_state()) {
      const MatF* t = res.find(name);
      if (t != nullptr) *m = *t;
    }
    start_step = res.meta.step;
    adam.set_step_count(start_step);
    lineage = res.meta.lineage;
    if (!lineage.empty()) lineage.pop_back();  // replaced by the new final id
  }

  const int64_t total_steps = cfg.get<int64_t>("stage.total_steps");
  const int64_t batch_size = std::max<int64_t>(1, cfg.get<int64_t>("stage.batch_size"));
  const int64_t checkpoint_every = cfg.get<int64_t>("stage.checkpoint_every");
  const index_t span_frames = cfg.get<index_t>("stage.span_frames");
  const double p_start = cfg.get<double>("stage.p_start");
  SpecAugConfig sa;
  sa.n_freq_masks = cfg.get<int>("specaug.n_freq_masks");
  sa.max_freq_width = cfg.get<index_t>("specaug.max_freq_width");
  sa.n_time_masks = cfg.get<int>("specaug.n_time_masks");
  sa.max_time_width = cfg.get<index_t>("specaug.max_time_width");
  SamplingSpace space = sampling_space_from(cfg, kind);

  TrainLog log(setup.out_dir / "train_log.csv");
  StageResult result;

  // Snapshot of config + vocabulary travels inside the checkpoint meta.
  nlohmann::json meta_cfg = cfg.json();
  meta_cfg["_seed"] = setup.seed;
  meta_cfg["stage"]["kind"] = kind;
  if (have_vocab) meta_cfg["_vocab"] = vocab.words;
  // Distill stages carry the teacher's vocabulary forward so the dual-mode
  // fine-tune sees the same token inventory as the full-context teacher.
  if (is_distill_kind(kind) && parent_meta.config.contains("_vocab"))
    meta_cfg["_vocab"] = parent_meta.config["_vocab"];

  auto save_at = [&](const std::filesystem::path& dir, int64_t step) {
    CheckpointMeta meta;
    meta.config = meta_cfg;
    meta.stage = kind;
    meta.step = step;
    meta.rng_state = std::to_string(setup.seed);
    meta.param_hash = model.encoder.param_hash();
    meta.lineage = lineage;
    uint64_t idh = fnv1a(kind.data(), kind.size());
    idh = fnv1a(&step, sizeof(step), idh);
    idh ^= meta.param_hash;
    meta.checkpoint_id = kind + "-" + hex64(idh);
    meta.lineage.push_back(meta.checkpoint_id);
    auto tensors = tensor_refs(model.named_params());
    for (auto& [name, m] : adam.named_state()) tensors.emplace_back(name, m);
    save_checkpoint(dir, meta, tensors);
    return load_checkpoint(dir).meta;
  };

  for (int64_t step = start_step + 1; step <= total_steps; ++step) {
    Rng rng(Rng::derive(setup.seed, 0x73746570u, static_cast<uint64_t>(step)));
    ContextSpec ctx = sample_context(space, rng);

    // Distinct batch indices.
    std::vector<index_t> batch;
    {
      const int64_t n = static_cast<int64_t>(eligible.size());
      const int64_t b = std::min<int64_t>(batch_size, n);
      std::vector<index_t> pool = eligible;
      for (int64_t i = 0; i < b; ++i) {
        const int64_t j = i + rng.uniform_int(n - i);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        batch.push_back(pool[static_cast<std::size_t>(i)]);
      }
    }

    std::vector<tape::Var<float>> utt_losses;
    for (index_t bi : batch) {
      const MatF& clean = train.features[static_cast<std::size_t>(bi)];
      const AttentionMask mask = build_mask(clean.rows(), ctx);
      if (is_brq_kind(kind)) {
        SpanMask span = SpanMask::generate(clean.rows(), span_frames, p_start, rng);
        if (span.count() == 0) {
          // Force one span so the loss is defined on short utterances.
          const index_t at = rng.uniform_int(clean.rows());
          for (index_t s = at; s < std::min(clean.rows(), at + span_frames); ++s)
            span.masked[static_cast<std::size_t>(s)] = 1;
        }
        MatF masked = apply_span_mask(clean, span, rng);
        auto taps = encoder_forward(model.encoder, masked, mask);
        auto logits = tape::add_rowvec(
            tape::matmul(taps.final_output(), model.head_w), model.head_b);
        utt_losses.push_back(
            brq_loss(logits, code_targets[static_cast<std::size_t>(bi)], span.masked));
      } else if (is_distill_kind(kind)) {
        auto taps = encoder_forward(model.encoder, clean, mask);
        auto logits = tape::add_rowvec(
            tape::matmul(taps.final_output(), model.head_w), model.head_b);
        utt_losses.push_back(
            distill_loss(logits, code_targets[static_cast<std::size_t>(bi)]));
      } else {
        MatF aug = specaug(clean, sa, rng);
        auto taps = encoder_forward(model.encoder, aug, mask);
        const auto& ids = token_ids[static_cast<std::size_t>(bi)];
        auto logits = joint_logits(*model.decoder, taps.final_output(), ids);
        auto nll = rnnt_loss_op(logits, ids, clean.rows());
        // Per-symbol normalization keeps the loss scale usable across
        // utterance lengths.
        utt_losses.push_back(tape::scale(
            nll, 1.0f / static_cast<float>(clean.rows() + ids.size())));
      }
    }
    tape::Var<float> loss = utt_losses[0];
    for (std::size_t i = 1; i < utt_losses.size(); ++i)
      loss = tape::add(loss, utt_losses[i]);
    loss = tape::scale(loss, 1.0f / static_cast<float>(utt_losses.size()));
    tape::backward(loss);
    const double gnorm = adam.step();
    const double lval = static_cast<double>(loss.value()(0, 0));
    DMENC_CHECK(std::isfinite(lval), "training loss diverged at step " << step);
    result.losses.push_back(lval);
    log.row(step, lval, lr_at(ocfg, step), gnorm, ctx);

    if (checkpoint_every > 0 && step % checkpoint_every == 0 && step < total_steps)
      save_at(setup.out_dir / ("ckpt-step-" + std::to_string(step)), step);
  }

  result.checkpoint_dir = setup.out_dir / "checkpoint";
  result.meta = save_at(result.checkpoint_dir, total_steps);
  return result;
}

// ---- embedding extraction ----

EmbeddingStore extract_embeddings(const std::filesystem::path& checkpoint_dir,
                                  index_t block_index, const Dataset& data) {
  Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  ModelBundle model = load_model(ckpt);
  DMENC_CHECK(block_index >= 0 && block_index < model.encoder.cfg.n_blocks,
              "block index " << block_index << " out of range");
  EmbeddingStore store;
  store.checkpoint_id = ckpt.meta.checkpoint_id;
  store.block_index = block_index;
  for (std::size_t i = 0; i < data.entries.size(); ++i) {
    const MatF& f = data.features[i];
    AttentionMask mask = build_mask(f.rows(), ContextSpec::full_context());
    auto taps = encoder_infer(model.encoder, f, mask);
    store.embeddings.emplace_back(data.entries[i].utt_id,
                                  taps[static_cast<std::size_t>(1 + block_index)]);
  }
  return store;
}

// ---- evaluation ----

EvalTable evaluate_grid(const std::filesystem::path& checkpoint_dir,
                        const std::vector<ContextSpec>& grid, const Dataset& test) {
  Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  ModelBundle model = load_model(ckpt);
  DMENC_CHECK(model.decoder.has_value(),
              "checkpoint " << ckpt.meta.checkpoint_id
                            << " has no transducer decoder");
  DMENC_CHECK(ckpt.meta.config.contains("_vocab"),
              "checkpoint carries no vocabulary");
  Vocabulary vocab = Vocabulary::from_words(
      ckpt.meta.config["_vocab"].get<std::vector<std::string>>());

  EvalTable table;
  table.checkpoint_id = ckpt.meta.checkpoint_id;
  for (const ContextSpec& ctx : grid) {
    EvalRow row;
    row.ctx = ctx;
    int64_t edits = 0, ref_tokens = 0;
    for (std::size_t i = 0; i < test.entries.size(); ++i) {
      if (!test.entries[i].transcript) continue;
      const MatF& f = test.features[i];
      MatF enc_out;
      if (std::isinf(ctx.la_s)) {
        AttentionMask mask = build_mask(f.rows(), ctx);
        enc_out = encoder_infer(model.encoder, f, mask).back();
      } else {
        // Finite look-ahead rows run the genuine incremental path.
        const index_t C = to_frames(ctx.la_s) + 1;
        auto state = StreamingState<float>::fresh(model.encoder.cfg);
        enc_out = MatF(f.rows(), model.encoder.cfg.d_model);
        for (index_t at = 0; at < f.rows(); at += C) {
          const index_t len = std::min(C, f.rows() - at);
          enc_out.middleRows(at, len) = encoder_forward_streaming(
              model.encoder, MatF(f.middleRows(at, len)), ctx, state);
        }
      }
      std::vector<int> hyp = greedy_transducer_decode(*model.decoder, enc_out);
      std::vector<int> ref =
          encode_for_scoring(vocab, *test.entries[i].transcript);
      edits += edit_distance(ref, hyp);
      ref_tokens += static_cast<int64_t>(ref.size());
      ++row.n_utts;
    }
    DMENC_CHECK(row.n_utts > 0, "no transcribed utterances in the test set");
    row.n_ref_tokens = static_cast<int>(ref_tokens);
    row.wer = static_cast<double>(edits) / static_cast<double>(std::max<int64_t>(
                                               ref_tokens, 1));
    table.rows.push_back(row);
  }
  return table;
}

namespace {

std::string ctx_str(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

void EvalTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  DMENC_CHECK(os.good(), "cannot write " << path);
  os << "lb_s,la_s,wer,n_utts,n_ref_tokens\n";
  for (const auto& r : rows)
    os << ctx_str(r.ctx.lb_s) << ',' << ctx_str(r.ctx.la_s) << ',' << r.wer << ','
       << r.n_utts << ',' << r.n_ref_tokens << "\n";
}

void EvalTable::write_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["checkpoint_id"] = checkpoint_id;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"lb_s", ctx_str(r.ctx.lb_s)},
                         {"la_s", ctx_str(r.ctx.la_s)},
                         {"wer", r.wer},
                         {"n_utts", r.n_utts},
                         {"n_ref_tokens", r.n_ref_tokens}});
  }
  std::ofstream os(path);
  DMENC_CHECK(os.good(), "cannot write " << path);
  os << j.dump(2) << "\n";
}

}  // namespace dmenc
