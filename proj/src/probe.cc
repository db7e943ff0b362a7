// dmenc/probe.cc

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

#include "dmenc/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dmenc/objectives.hpp"
#include "dmenc/transducer.hpp"

namespace dmenc {

// ---- metrics ----

int64_t edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int64_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int64_t>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int64_t>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double wer(const std::vector<int>& ref, const std::vector<int>& hyp) {
  if (ref.empty()) {
    if (hyp.empty()) return 0.0;
    std::fprintf(stderr,
                 "warning: empty reference with %zu hypothesis tokens; "
                 "scoring against length 1\n",
                 hyp.size());
    return static_cast<double>(hyp.size());
  }
  return static_cast<double>(edit_distance(ref, hyp)) /
         static_cast<double>(ref.size());
}

namespace {

// 1 - Pearson correlation of two equal-length windows; 1 when either window
// has zero variance.
double window_cost(const VecF& x, index_t i, const VecF& y, index_t j, int w) {
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int k = 0; k < w; ++k) {
    const double a = x(i + k), b = y(j + k);
    sx += a;
    sy += b;
    sxx += a * a;
    syy += b * b;
    sxy += a * b;
  }
  const double n = static_cast<double>(w);
  const double vx = sxx - sx * sx / n;
  const double vy = syy - sy * sy / n;
  if (vx <= 1e-12 || vy <= 1e-12) return 1.0;
  const double cov = sxy - sx * sy / n;
  return 1.0 - cov / std::sqrt(vx * vy);
}

}  // namespace

double dtw_corr(const VecF& pred, const VecF& ref, int window) {
  DMENC_CHECK(window >= 2, "dtw window must span at least two samples");
  const index_t n = pred.size() - window + 1;
  const index_t m = ref.size() - window + 1;
  DMENC_CHECK(n >= 1 && m >= 1,
              "contours must be at least as long as the dtw window");
  MatD cost(n, m);
  for (index_t i = 0; i < n; ++i)
    for (index_t j = 0; j < m; ++j) cost(i, j) = window_cost(pred, i, ref, j, window);
  // Accumulated cost with match/insert/delete steps; steps(i,j) counts the
  // cells on the best path so the total can be path-length normalized.
  MatD acc(n, m);
  Eigen::Matrix<int64_t, Eigen::Dynamic, Eigen::Dynamic> steps(n, m);
  acc(0, 0) = cost(0, 0);
  steps(0, 0) = 1;
  for (index_t i = 1; i < n; ++i) {
    acc(i, 0) = acc(i - 1, 0) + cost(i, 0);
    steps(i, 0) = steps(i - 1, 0) + 1;
  }
  for (index_t j = 1; j < m; ++j) {
    acc(0, j) = acc(0, j - 1) + cost(0, j);
    steps(0, j) = steps(0, j - 1) + 1;
  }
  for (index_t i = 1; i < n; ++i) {
    for (index_t j = 1; j < m; ++j) {
      double best = acc(i - 1, j - 1);
      int64_t s = steps(i - 1, j - 1);
      if (acc(i - 1, j) < best) {
        best = acc(i - 1, j);
        s = steps(i - 1, j);
      }
      if (acc(i, j - 1) < best) {
        best = acc(i, j - 1);
        s = steps(i, j - 1);
      }
      acc(i, j) = best + cost(i, j);
      steps(i, j) = s + 1;
    }
  }
  return acc(n - 1, m - 1) / static_cast<double>(steps(n - 1, m - 1));
}

// ---- reference targets ----

namespace {

constexpr int kFrame40 = 4 * kHopSamples;  // 640 samples
constexpr double kIntensityFloor = 1e-5;

double frame_rms(const VecF& x, index_t start, index_t len) {
  double acc = 0;
  for (index_t i = 0; i < len; ++i) {
    const double v = x(start + i);
    acc += v * v;
  }
  return std::sqrt(acc / static_cast<double>(std::max<index_t>(len, 1)));
}

// Normalized autocorrelation F0 over one analysis window; 0 when unvoiced.
double frame_pitch(const VecF& x, index_t start, index_t len) {
  const index_t lag_min = kSampleRate / 400;  // 400 Hz
  const index_t lag_max = kSampleRate / 50;   // 50 Hz
  if (len < 2 * lag_min) return 0.0;
  const index_t hi = std::min<index_t>(lag_max, len - 1);
  double best_r = 0.0;
  index_t best_lag = 0;
  std::vector<double> r(static_cast<std::size_t>(hi + 1), 0.0);
  for (index_t lag = lag_min; lag <= hi; ++lag) {
    double num = 0, e0 = 0, e1 = 0;
    const index_t n = len - lag;
    for (index_t i = 0; i < n; ++i) {
      const double a = x(start + i), b = x(start + i + lag);
      num += a * b;
      e0 += a * a;
      e1 += b * b;
    }
    const double denom = std::sqrt(e0 * e1);
    const double nr = denom > 1e-12 ? num / denom : 0.0;
    r[static_cast<std::size_t>(lag)] = nr;
    if (nr > best_r) {
      best_r = nr;
      best_lag = lag;
    }
  }
  if (best_lag == 0 || best_r < 0.5) return 0.0;
  // Parabolic refinement around the peak.
  double lag = static_cast<double>(best_lag);
  if (best_lag > lag_min && best_lag < hi) {
    const double a = r[static_cast<std::size_t>(best_lag - 1)];
    const double b = r[static_cast<std::size_t>(best_lag)];
    const double c = r[static_cast<std::size_t>(best_lag + 1)];
    const double denom = a - 2 * b + c;
    if (std::abs(denom) > 1e-12) {
      const double shift = 0.5 * (a - c) / denom;
      if (std::abs(shift) <= 1.0) lag += shift;
    }
  }
  return static_cast<double>(kSampleRate) / lag;
}

}  // namespace

ReferenceContours reference_contours(const Waveform& wav, int n_tokens) {
  DMENC_CHECK(wav.sample_rate == kSampleRate, "contours expect 16 kHz audio");
  const index_t n = wav.samples.size();
  const index_t T40 = num_frames_10ms(n) / 4;
  ReferenceContours out;
  out.pitch = VecF::Zero(std::max<index_t>(T40, 0));
  out.intensity = VecF::Zero(std::max<index_t>(T40, 0));
  for (index_t t = 0; t < T40; ++t) {
    const index_t start = t * kFrame40;
    const index_t ilen = std::min<index_t>(kFrame40, n - start);
    out.intensity(t) =
        static_cast<float>(std::log(std::max(frame_rms(wav.samples, start, ilen),
                                             kIntensityFloor)));
    const index_t plen = std::min<index_t>(2 * kFrame40, n - start);
    out.pitch(t) = static_cast<float>(frame_pitch(wav.samples, start, plen));
  }
  out.speaking_rate =
      wav.duration_s() > 0 ? static_cast<double>(n_tokens) / wav.duration_s() : 0.0;
  return out;
}

// ---- task plumbing ----

ProbeTaskKind probe_task_from_name(const std::string& name) {
  if (name == "asr_ctc") return ProbeTaskKind::kAsrCtc;
  if (name == "classification") return ProbeTaskKind::kClassification;
  if (name == "speaking_rate") return ProbeTaskKind::kSpeakingRate;
  if (name == "pitch_contour") return ProbeTaskKind::kPitchContour;
  if (name == "intensity_contour") return ProbeTaskKind::kIntensityContour;
  throw ConfigError("unknown probe task '" + name + "'");
}

std::string probe_task_name(ProbeTaskKind kind) {
  switch (kind) {
    case ProbeTaskKind::kAsrCtc: return "asr_ctc";
    case ProbeTaskKind::kClassification: return "classification";
    case ProbeTaskKind::kSpeakingRate: return "speaking_rate";
    case ProbeTaskKind::kPitchContour: return "pitch_contour";
    case ProbeTaskKind::kIntensityContour: return "intensity_contour";
  }
  throw Error("bad probe task enum");
}

std::string probe_metric_name(ProbeTaskKind kind) {
  switch (kind) {
    case ProbeTaskKind::kAsrCtc: return "wer";
    case ProbeTaskKind::kClassification: return "accuracy";
    case ProbeTaskKind::kSpeakingRate: return "rmse";
    case ProbeTaskKind::kPitchContour:
    case ProbeTaskKind::kIntensityContour: return "dtw_corr";
  }
  throw Error("bad probe task enum");
}

TapCache compute_taps(EncoderParams<float>& enc, const Dataset& data,
                      const ContextSpec& ctx) {
  TapCache cache;
  cache.n_blocks = enc.cfg.n_blocks;
  cache.d_model = enc.cfg.d_model;
  cache.taps.reserve(data.entries.size());
  for (const MatF& f : data.features) {
    AttentionMask mask = build_mask(f.rows(), ctx);
    auto taps = encoder_infer(enc, f, mask);
    // Drop the frontend tap; probes see block outputs only.
    cache.taps.emplace_back(taps.begin() + 1, taps.end());
  }
  return cache;
}

namespace {

// Labels and targets for one dataset under one task family.
struct TaskTargets {
  std::vector<std::vector<int>> tokens;  // asr
  std::vector<int> class_ids;            // classification; -1 when absent
  std::vector<VecF> contours;            // pitch or intensity per 40 ms frame
  std::vector<double> rates;             // tokens per second
  std::vector<index_t> usable;           // entries carrying this task's label
};

int count_words(const std::string& s) {
  std::istringstream is(s);
  std::string w;
  int n = 0;
  while (is >> w) ++n;
  return n;
}

TaskTargets build_targets(const Dataset& data, const TapCache& taps,
                          ProbeTaskKind task, const Vocabulary& vocab,
                          const std::map<std::string, int>& class_map) {
  TaskTargets t;
  const std::size_t N = data.entries.size();
  t.tokens.resize(N);
  t.class_ids.assign(N, -1);
  t.contours.resize(N);
  t.rates.assign(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const ManifestEntry& e = data.entries[i];
    const index_t T = taps.taps[i][0].rows();
    switch (task) {
      case ProbeTaskKind::kAsrCtc: {
        if (!e.transcript) continue;
        t.tokens[i] = vocab.encode(*e.transcript);
        if (t.tokens[i].empty()) continue;
        // CTC feasibility: repeated words need a separating blank frame.
        index_t need = static_cast<index_t>(t.tokens[i].size());
        for (std::size_t k = 1; k < t.tokens[i].size(); ++k)
          if (t.tokens[i][k] == t.tokens[i][k - 1]) ++need;
        if (need > T) continue;
        break;
      }
      case ProbeTaskKind::kClassification: {
        if (!e.class_label) continue;
        t.class_ids[i] = class_map.at(*e.class_label);
        break;
      }
      case ProbeTaskKind::kSpeakingRate: {
        if (!e.transcript) continue;
        Waveform wav = read_audio(e.audio_path);
        t.rates[i] = reference_contours(wav, count_words(*e.transcript)).speaking_rate;
        break;
      }
      case ProbeTaskKind::kPitchContour:
      case ProbeTaskKind::kIntensityContour: {
        Waveform wav = read_audio(e.audio_path);
        ReferenceContours rc = reference_contours(wav, 0);
        VecF c = task == ProbeTaskKind::kPitchContour ? rc.pitch : rc.intensity;
        DMENC_CHECK(c.size() == T, "contour length " << c.size()
                                                     << " != frame count " << T
                                                     << " for " << e.utt_id);
        t.contours[i] = std::move(c);
        break;
      }
    }
    t.usable.push_back(static_cast<index_t>(i));
  }
  return t;
}

// Head parameters for every task shape; unused members stay invalid.
struct ProbeHead {
  using V = tape::Var<float>;
  V w, b;        // linear heads (asr / contour / rate)
  V w1, b1, w2, b2;  // classification MLP
  V layer_logits;    // weighted-sum selection, softmaxed to the simplex

  std::vector<std::pair<std::string, V*>> named(bool weighted, ProbeTaskKind task) {
    std::vector<std::pair<std::string, V*>> out;
    if (task == ProbeTaskKind::kClassification) {
      out = {{"probe.w1", &w1}, {"probe.b1", &b1}, {"probe.w2", &w2}, {"probe.b2", &b2}};
    } else {
      out = {{"probe.w", &w}, {"probe.b", &b}};
    }
    if (weighted) out.emplace_back("probe.layer_logits", &layer_logits);
    return out;
  }
};

// Softmax over the layer logits as plain floats (for reporting and plain
// feature mixing outside the tape).
VecD layer_weights_of(const ProbeHead& head, index_t n_blocks) {
  VecD w(n_blocks);
  const MatF& l = head.layer_logits.value();
  double mx = l.maxCoeff();
  double z = 0;
  for (index_t b = 0; b < n_blocks; ++b) {
    w(b) = std::exp(static_cast<double>(l(0, b)) - mx);
    z += w(b);
  }
  return w / z;
}

MatF mixed_feature(const TapCache& taps, std::size_t utt, const LayerSelection& sel,
                   const ProbeHead& head) {
  if (!sel.weighted_sum) return taps.taps[utt][static_cast<std::size_t>(sel.block_index)];
  VecD w = layer_weights_of(head, taps.n_blocks);
  MatF out = MatF::Zero(taps.taps[utt][0].rows(), taps.d_model);
  for (index_t b = 0; b < taps.n_blocks; ++b)
    out += static_cast<float>(w(b)) * taps.taps[utt][static_cast<std::size_t>(b)];
  return out;
}

tape::Var<float> taped_feature(const TapCache& taps, std::size_t utt,
                               const LayerSelection& sel, ProbeHead& head) {
  using namespace tape;
  if (!sel.weighted_sum)
    return Var<float>::constant(
        taps.taps[utt][static_cast<std::size_t>(sel.block_index)]);
  auto sm = softmax_rows_biased(head.layer_logits,
                                MatF(MatF::Zero(1, taps.n_blocks)));
  Var<float> out;
  for (index_t b = 0; b < taps.n_blocks; ++b) {
    auto term = scale_by(
        Var<float>::constant(taps.taps[utt][static_cast<std::size_t>(b)]),
        slice_cols(sm, b, 1));
    out = b == 0 ? term : add(out, term);
  }
  return out;
}

tape::Var<float> utt_loss(const TapCache& taps, std::size_t utt, ProbeTaskKind task,
                          const TaskTargets& targets, const LayerSelection& sel,
                          ProbeHead& head) {
  using namespace tape;
  auto feat = taped_feature(taps, utt, sel, head);
  switch (task) {
    case ProbeTaskKind::kAsrCtc: {
      auto logits = add_rowvec(matmul(feat, head.w), head.b);
      auto nll = ctc_loss_op(logits, targets.tokens[utt]);
      return scale(nll, 1.0f / static_cast<float>(feat.rows()));
    }
    case ProbeTaskKind::kClassification: {
      auto hid = tanh_(add_rowvec(matmul(mean_rows(feat), head.w1), head.b1));
      auto logits = add_rowvec(matmul(hid, head.w2), head.b2);
      return cross_entropy_rows(logits, {targets.class_ids[utt]},
                                VecF(VecF::Ones(1)));
    }
    case ProbeTaskKind::kSpeakingRate: {
      auto pred = mean_rows(add_rowvec(matmul(feat, head.w), head.b));
      MatF target(1, 1);
      target(0, 0) = static_cast<float>(targets.rates[utt]);
      return mse_loss(pred, target);
    }
    case ProbeTaskKind::kPitchContour:
    case ProbeTaskKind::kIntensityContour: {
      auto pred = add_rowvec(matmul(feat, head.w), head.b);
      MatF target = targets.contours[utt];
      return mse_loss(pred, target);
    }
  }
  throw Error("bad probe task enum");
}

double score_dataset(const TapCache& taps, ProbeTaskKind task,
                     const TaskTargets& targets, const LayerSelection& sel,
                     const ProbeHead& head, int dtw_window) {
  switch (task) {
    case ProbeTaskKind::kAsrCtc: {
      int64_t edits = 0, ref_len = 0;
      for (index_t u : targets.usable) {
        const std::size_t i = static_cast<std::size_t>(u);
        MatF feat = mixed_feature(taps, i, sel, head);
        MatF logits = feat * head.w.value();
        logits.rowwise() += RowVec<float>(head.b.value().row(0));
        std::vector<int> hyp = ctc_greedy_decode(logits);
        edits += edit_distance(targets.tokens[i], hyp);
        ref_len += static_cast<int64_t>(targets.tokens[i].size());
      }
      return static_cast<double>(edits) / static_cast<double>(std::max<int64_t>(ref_len, 1));
    }
    case ProbeTaskKind::kClassification: {
      int64_t correct = 0;
      for (index_t u : targets.usable) {
        const std::size_t i = static_cast<std::size_t>(u);
        MatF feat = mixed_feature(taps, i, sel, head);
        RowVec<float> pooled = feat.colwise().mean();
        RowVec<float> hid =
            ((pooled * head.w1.value() + head.b1.value()).array().tanh()).matrix();
        RowVec<float> logits = hid * head.w2.value() + head.b2.value();
        index_t best;
        logits.maxCoeff(&best);
        if (static_cast<int>(best) == targets.class_ids[i]) ++correct;
      }
      return static_cast<double>(correct) /
             static_cast<double>(std::max<std::size_t>(targets.usable.size(), 1));
    }
    case ProbeTaskKind::kSpeakingRate: {
      double se = 0;
      for (index_t u : targets.usable) {
        const std::size_t i = static_cast<std::size_t>(u);
        MatF feat = mixed_feature(taps, i, sel, head);
        MatF pred = feat * head.w.value();
        const double p = pred.mean() + static_cast<double>(head.b.value()(0, 0));
        const double d = p - targets.rates[i];
        se += d * d;
      }
      return std::sqrt(se / static_cast<double>(std::max<std::size_t>(
                                targets.usable.size(), 1)));
    }
    case ProbeTaskKind::kPitchContour:
    case ProbeTaskKind::kIntensityContour: {
      double total = 0;
      int64_t n = 0;
      for (index_t u : targets.usable) {
        const std::size_t i = static_cast<std::size_t>(u);
        MatF feat = mixed_feature(taps, i, sel, head);
        MatF pred = feat * head.w.value();
        pred.array() += head.b.value()(0, 0);
        if (pred.rows() < dtw_window ||
            targets.contours[i].size() < dtw_window)
          continue;
        total += dtw_corr(VecF(pred.col(0)), targets.contours[i], dtw_window);
        ++n;
      }
      return n > 0 ? total / static_cast<double>(n) : 1.0;
    }
  }
  throw Error("bad probe task enum");
}

ProbeResult train_probe_on_taps(EncoderParams<float>& enc, const TapCache& train_taps,
                                const TapCache& eval_taps, const TaskTargets& train_t,
                                const TaskTargets& eval_t, ProbeTaskKind task,
                                const LayerSelection& sel, const ContextSpec& ctx,
                                const ProbeOptions& opt, index_t vocab_size,
                                index_t n_classes) {
  using V = tape::Var<float>;
  DMENC_CHECK(sel.weighted_sum ||
                  (sel.block_index >= 0 && sel.block_index < train_taps.n_blocks),
              "probe layer index " << sel.block_index << " out of range");
  DMENC_CHECK(!train_t.usable.empty(),
              "no usable training labels for task " << probe_task_name(task));
  DMENC_CHECK(!eval_t.usable.empty(),
              "no usable eval labels for task " << probe_task_name(task));

  ProbeResult res;
  res.task = task;
  res.layer = sel.weighted_sum ? "all" : std::to_string(sel.block_index);
  res.ctx = ctx;
  res.metric_name = probe_metric_name(task);
  res.encoder_hash_before = enc.param_hash();

  const index_t d = train_taps.d_model;
  Rng rng(Rng::derive(opt.seed, 0x70726f62u));
  auto xavier = [&rng](index_t rows, index_t cols) {
    const double lim = std::sqrt(6.0 / static_cast<double>(rows + cols));
    MatF m(rows, cols);
    for (index_t j = 0; j < cols; ++j)
      for (index_t i = 0; i < rows; ++i)
        m(i, j) = static_cast<float>(rng.uniform(-lim, lim));
    return V::parameter(std::move(m));
  };

  ProbeHead head;
  if (task == ProbeTaskKind::kClassification) {
    const index_t h = 64;
    head.w1 = xavier(d, h);
    head.b1 = V::parameter(MatF::Zero(1, h));
    head.w2 = xavier(h, n_classes);
    head.b2 = V::parameter(MatF::Zero(1, n_classes));
  } else if (task == ProbeTaskKind::kAsrCtc) {
    head.w = xavier(d, vocab_size);
    head.b = V::parameter(MatF::Zero(1, vocab_size));
  } else {
    head.w = xavier(d, 1);
    head.b = V::parameter(MatF::Zero(1, 1));
  }
  if (sel.weighted_sum)
    head.layer_logits = V::parameter(MatF::Zero(1, train_taps.n_blocks));

  OptimizerConfig ocfg;
  ocfg.lr = opt.lr;
  ocfg.warmup_steps = std::max(opt.steps / 10, 1);
  Adam<float> adam(ocfg, head.named(sel.weighted_sum, task));

  const int64_t n_usable = static_cast<int64_t>(train_t.usable.size());
  for (int step = 1; step <= opt.steps; ++step) {
    Rng srng(Rng::derive(opt.seed, 0x70737465u, static_cast<uint64_t>(step)));
    const int64_t b = std::min<int64_t>(opt.batch_size, n_usable);
    std::vector<index_t> pool = train_t.usable;
    tape::Var<float> loss;
    for (int64_t i = 0; i < b; ++i) {
      const int64_t j = i + srng.uniform_int(n_usable - i);
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
      auto l = utt_loss(train_taps,
                        static_cast<std::size_t>(pool[static_cast<std::size_t>(i)]),
                        task, train_t, sel, head);
      loss = i == 0 ? l : tape::add(loss, l);
    }
    loss = tape::scale(loss, 1.0f / static_cast<float>(b));
    tape::backward(loss);
    adam.step();
    if (sel.weighted_sum) {
      // Simplex check: softmax weights always sum to one.
      VecD w = layer_weights_of(head, train_taps.n_blocks);
      DMENC_CHECK(std::abs(w.sum() - 1.0) < 1e-6, "layer weights left the simplex");
    }
  }

  res.train_metric = score_dataset(train_taps, task, train_t, sel, head, opt.dtw_window);
  res.eval_metric = score_dataset(eval_taps, task, eval_t, sel, head, opt.dtw_window);
  if (sel.weighted_sum) {
    VecD w = layer_weights_of(head, train_taps.n_blocks);
    res.layer_weights.assign(w.data(), w.data() + w.size());
  }
  res.encoder_hash_after = enc.param_hash();
  DMENC_CHECK(res.encoder_hash_before == res.encoder_hash_after,
              "encoder parameters moved during probe training");
  return res;
}

Vocabulary probe_vocab(const Dataset& train, const Dataset& eval) {
  std::vector<ManifestEntry> all = train.entries;
  all.insert(all.end(), eval.entries.begin(), eval.entries.end());
  return Vocabulary::build(all);
}

std::map<std::string, int> probe_classes(const Dataset& train, const Dataset& eval) {
  std::set<std::string> labels;
  for (const auto& e : train.entries)
    if (e.class_label) labels.insert(*e.class_label);
  for (const auto& e : eval.entries)
    if (e.class_label) labels.insert(*e.class_label);
  std::map<std::string, int> out;
  int next = 0;
  for (const auto& l : labels) out[l] = next++;
  return out;
}

}  // namespace

ProbeResult train_probe(EncoderParams<float>& enc, const Dataset& train,
                        const Dataset& eval, ProbeTaskKind task,
                        const LayerSelection& sel, const ContextSpec& ctx,
                        const ProbeOptions& opt) {
  TapCache train_taps = compute_taps(enc, train, ctx);
  TapCache eval_taps = compute_taps(enc, eval, ctx);
  Vocabulary vocab;
  std::map<std::string, int> class_map;
  if (task == ProbeTaskKind::kAsrCtc) vocab = probe_vocab(train, eval);
  if (task == ProbeTaskKind::kClassification) class_map = probe_classes(train, eval);
  TaskTargets train_t = build_targets(train, train_taps, task, vocab, class_map);
  TaskTargets eval_t = build_targets(eval, eval_taps, task, vocab, class_map);
  return train_probe_on_taps(enc, train_taps, eval_taps, train_t, eval_t, task, sel,
                             ctx, opt, vocab.size(),
                             static_cast<index_t>(class_map.size()));
}

// ---- sweep ----

namespace {

bool lower_is_better(const std::string& metric) { return metric != "accuracy"; }

}  // namespace

ProbeReport layer_sweep(EncoderParams<float>& enc, const std::string& checkpoint_id,
                        const Dataset& train, const Dataset& eval,
                        const std::vector<ProbeTaskKind>& tasks,
                        const ContextSpec& ctx, const ProbeOptions& opt) {
  ProbeReport report;
  report.checkpoint_id = checkpoint_id;
  report.seed = opt.seed;
  TapCache train_taps = compute_taps(enc, train, ctx);
  TapCache eval_taps = compute_taps(enc, eval, ctx);
  Vocabulary vocab;
  bool have_vocab = false;
  std::map<std::string, int> class_map;

  for (ProbeTaskKind task : tasks) {
    if (task == ProbeTaskKind::kAsrCtc && !have_vocab) {
      vocab = probe_vocab(train, eval);
      have_vocab = true;
    }
    if (task == ProbeTaskKind::kClassification && class_map.empty())
      class_map = probe_classes(train, eval);
    TaskTargets train_t = build_targets(train, train_taps, task, vocab, class_map);
    TaskTargets eval_t = build_targets(eval, eval_taps, task, vocab, class_map);

    double best_v = 0, worst_v = 0;
    index_t best_b = 0, worst_b = 0;
    const std::string metric = probe_metric_name(task);
    for (index_t b = 0; b < train_taps.n_blocks; ++b) {
      ProbeResult r = train_probe_on_taps(
          enc, train_taps, eval_taps, train_t, eval_t, task,
          LayerSelection::single(b), ctx, opt, vocab.size(),
          static_cast<index_t>(class_map.size()));
      report.rows.push_back(
          {probe_task_name(task), r.layer, metric, r.eval_metric, ctx});
      const bool better = lower_is_better(metric) ? r.eval_metric < best_v
                                                  : r.eval_metric > best_v;
      const bool worse = lower_is_better(metric) ? r.eval_metric > worst_v
                                                 : r.eval_metric < worst_v;
      if (b == 0 || better) {
        best_v = r.eval_metric;
        best_b = b;
      }
      if (b == 0 || worse) {
        worst_v = r.eval_metric;
        worst_b = b;
      }
    }
    report.best_layer.emplace_back(probe_task_name(task), best_b);
    report.worst_layer.emplace_back(probe_task_name(task), worst_b);
  }
  return report;
}

// ---- report output ----

namespace {

std::string ctx_str(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

void ProbeReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  DMENC_CHECK(os.good(), "cannot write " << path);
  os << "task,layer,metric,dev_value,lb_s,la_s\n";
  for (const auto& r : rows)
    os << r.task << ',' << r.layer << ',' << r.metric << ',' << r.dev_value << ','
       << ctx_str(r.ctx.lb_s) << ',' << ctx_str(r.ctx.la_s) << "\n";
}

void ProbeReport::write_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["checkpoint_id"] = checkpoint_id;
  j["seed"] = seed;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"task", r.task},
                         {"layer", r.layer},
                         {"metric", r.metric},
                         {"dev_value", r.dev_value},
                         {"lb_s", ctx_str(r.ctx.lb_s)},
                         {"la_s", ctx_str(r.ctx.la_s)}});
  j["best_layer"] = nlohmann::json::object();
  for (const auto& [task, b] : best_layer) j["best_layer"][task] = b;
  j["worst_layer"] = nlohmann::json::object();
  for (const auto& [task, b] : worst_layer) j["worst_layer"][task] = b;
  std::ofstream os(path);
  DMENC_CHECK(os.good(), "cannot write " << path);
  os << j.dump(2) << "\n";
}

void ProbeReport::write_svgs(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::set<std::string> tasks;
  for (const auto& r : rows) tasks.insert(r.task);
  for (const auto& task : tasks) {
    std::vector<std::pair<int, double>> pts;
    std::string metric;
    for (const auto& r : rows)
      if (r.task == task && r.layer != "all") {
        pts.emplace_back(std::stoi(r.layer), r.dev_value);
        metric = r.metric;
      }
    if (pts.empty()) continue;
    std::sort(pts.begin(), pts.end());
    double lo = pts[0].second, hi = pts[0].second;
    for (const auto& p : pts) {
      lo = std::min(lo, p.second);
      hi = std::max(hi, p.second);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double W = 480, H = 320, ml = 64, mr = 16, mt = 32, mb = 48;
    auto px = [&](int i) {
      return ml + (W - ml - mr) * (pts.size() > 1
                                       ? static_cast<double>(i) /
                                             static_cast<double>(pts.size() - 1)
                                       : 0.5);
    };
    auto py = [&](double v) { return mt + (H - mt - mb) * (1.0 - (v - lo) / (hi - lo)); };
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
        << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
    svg << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"14\">" << task << " (" << metric
        << " vs layer)</text>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr
        << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << H - mb << "\" stroke=\"black\"/>\n";
    svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      svg << px(static_cast<int>(i)) << ',' << py(pts[i].second) << ' ';
    svg << "\"/>\n";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      svg << "<circle cx=\"" << px(static_cast<int>(i)) << "\" cy=\""
          << py(pts[i].second) << "\" r=\"3\" fill=\"steelblue\"/>\n";
      svg << "<text x=\"" << px(static_cast<int>(i)) << "\" y=\"" << H - mb + 18
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
          << pts[i].first << "</text>\n";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", lo);
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << H - mb + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << buf
        << "</text>\n";
    std::snprintf(buf, sizeof buf, "%.3g", hi);
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << buf
        << "</text>\n";
    svg << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 10
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << "encoder block</text>\n";
    svg << "</svg>\n";
    std::ofstream os(dir / (task + ".svg"));
    DMENC_CHECK(os.good(), "cannot write svg for task " << task);
    os << svg.str();
  }
}

}  // namespace dmenc
