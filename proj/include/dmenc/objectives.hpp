// dmenc/objectives.hpp

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

// Training objectives and input augmentations: masked code prediction
// against a frozen random-projection quantizer, pseudo-label cross-entropy
// distillation, span masking, and SpecAug. The lattice losses live in
// transducer.hpp; here they get tape adapters.

#ifndef DMENC_OBJECTIVES_HPP_
#define DMENC_OBJECTIVES_HPP_

#include <vector>

#include "dmenc/common.hpp"
#include "dmenc/rng.hpp"
#include "dmenc/tape.hpp"
#include "dmenc/transducer.hpp"

namespace dmenc {

// Frozen random projection plus codebook. Neither matrix ever receives a
// gradient; codes depend only on the seed and the input.
struct RandomQuantizer {
  MatF projection;  // [input_dim x d_q]
  MatF codebook;    // [K x d_q], rows l2-normalized at construction
  index_t d_q = 16;
  index_t K = 1024;

  static RandomQuantizer make(index_t input_dim, index_t d_q, index_t K,
                              uint64_t seed) {
    DMENC_CHECK(d_q >= 1 && K >= 1, "quantizer dims must be positive");
    RandomQuantizer q;
    q.d_q = d_q;
    q.K = K;
    Rng rng(Rng::derive(seed, 0x62727166u));
    q.projection = MatF(input_dim, d_q);
    for (index_t j = 0; j < d_q; ++j)
      for (index_t i = 0; i < input_dim; ++i)
        q.projection(i, j) = static_cast<float>(rng.normal());
    q.codebook = MatF(K, d_q);
    for (index_t j = 0; j < d_q; ++j)
      for (index_t i = 0; i < K; ++i)
        q.codebook(i, j) = static_cast<float>(rng.normal());
    for (index_t i = 0; i < K; ++i) {
      const float n = q.codebook.row(i).norm();
      if (n > 1e-12f) q.codebook.row(i) /= n;
    }
    return q;
  }
};

// Nearest codebook row to the l2-normalized projection of each frame,
// squared Euclidean distance, ties toward the lower index.
inline VecI brq_codes(const MatF& input, const RandomQuantizer& q) {
  DMENC_CHECK(input.cols() == q.projection.rows(),
              "quantizer input dim " << input.cols() << " != "
                                     << q.projection.rows());
  MatF proj = input * q.projection;
  VecI codes(input.rows());
  for (index_t t = 0; t < proj.rows(); ++t) {
    RowVec<float> f = proj.row(t);
    const float n = f.norm();
    if (n > 1e-12f) f /= n;
    index_t best = 0;
    float best_d = std::numeric_limits<float>::infinity();
    for (index_t k = 0; k < q.K; ++k) {
      const float d = (f - q.codebook.row(k)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    codes(t) = best;
  }
  return codes;
}

// Overlapping fixed-length spans, each opened by a Bernoulli draw per frame.
struct SpanMask {
  std::vector<uint8_t> masked;
  index_t span_frames = 8;
  double p_start = 0.02;

  static SpanMask generate(index_t T, index_t span_frames, double p_start,
                           Rng& rng) {
    DMENC_CHECK(span_frames >= 1, "span must cover at least one frame");
    SpanMask m;
    m.span_frames = span_frames;
    m.p_start = p_start;
    m.masked.assign(static_cast<std::size_t>(T), 0);
    for (index_t t = 0; t < T; ++t) {
      if (!rng.bernoulli(p_start)) continue;
      for (index_t s = t; s < std::min(T, t + span_frames); ++s)
        m.masked[static_cast<std::size_t>(s)] = 1;
    }
    return m;
  }

  index_t count() const {
    index_t n = 0;
    for (uint8_t v : masked) n += v;
    return n;
  }
};

// Masked frames replaced by Gaussian noise, stddev 0.1.
inline MatF apply_span_mask(const MatF& input, const SpanMask& m, Rng& rng) {
  DMENC_CHECK(static_cast<index_t>(m.masked.size()) == input.rows(),
              "span mask length mismatch");
  MatF out = input;
  for (index_t t = 0; t < out.rows(); ++t) {
    if (!m.masked[static_cast<std::size_t>(t)]) continue;
    for (index_t j = 0; j < out.cols(); ++j)
      out(t, j) = static_cast<float>(rng.normal(0.0, 0.1));
  }
  return out;
}

// Mean cross-entropy over masked positions only.
template <typename S>
tape::Var<S> brq_loss(const tape::Var<S>& logits, const VecI& codes,
                      const std::vector<uint8_t>& masked) {
  DMENC_CHECK(codes.size() == logits.rows(), "code count mismatch");
  DMENC_CHECK(static_cast<index_t>(masked.size()) == logits.rows(),
              "mask length mismatch");
  Vec<S> w(logits.rows());
  index_t n_masked = 0;
  std::vector<int> targets(static_cast<std::size_t>(logits.rows()));
  for (index_t t = 0; t < logits.rows(); ++t) {
    w(t) = masked[static_cast<std::size_t>(t)] ? S(1) : S(0);
    n_masked += masked[static_cast<std::size_t>(t)];
    targets[static_cast<std::size_t>(t)] = static_cast<int>(codes(t));
  }
  DMENC_CHECK(n_masked > 0, "masked-prediction loss needs at least one masked frame");
  return tape::cross_entropy_rows(logits, targets, w);
}

// Mean cross-entropy over all frames (distillation applies no input masking).
template <typename S>
tape::Var<S> distill_loss(const tape::Var<S>& logits, const VecI& codes) {
  DMENC_CHECK(codes.size() == logits.rows(), "code count mismatch");
  std::vector<int> targets(static_cast<std::size_t>(logits.rows()));
  for (index_t t = 0; t < logits.rows(); ++t)
    targets[static_cast<std::size_t>(t)] = static_cast<int>(codes(t));
  return tape::cross_entropy_rows(logits, targets,
                                  Vec<S>::Ones(logits.rows()).eval());
}

// Tape adapters for the lattice losses; gradients come from the lattice.
template <typename S>
tape::Var<S> rnnt_loss_op(const tape::Var<S>& joint_logits,
                          const std::vector<int>& labels, index_t T) {
  auto res = rnnt_loss<S>(joint_logits.value(), labels, T);
  return tape::external_scalar<S>(res.loss, std::move(res.grad), joint_logits);
}

template <typename S>
tape::Var<S> ctc_loss_op(const tape::Var<S>& logits, const std::vector<int>& labels) {
  auto res = ctc_loss<S>(logits.value(), labels);
  return tape::external_scalar<S>(res.loss, std::move(res.grad), logits);
}

struct SpecAugConfig {
  int n_freq_masks = 2;
  index_t max_freq_width = 64;
  int n_time_masks = 2;
  index_t max_time_width = 10;
};

inline MatF specaug(const MatF& input, const SpecAugConfig& cfg, Rng& rng) {
  MatF out = input;
  const index_t T = out.rows(), D = out.cols();
  for (int i = 0; i < cfg.n_freq_masks; ++i) {
    const index_t w = rng.uniform_int(std::min(cfg.max_freq_width, D) + 1);
    if (w == 0) continue;
    const index_t start = rng.uniform_int(D - w + 1);
    out.middleCols(start, w).setZero();
  }
  for (int i = 0; i < cfg.n_time_masks; ++i) {
    const index_t w = rng.uniform_int(std::min(cfg.max_time_width, T) + 1);
    if (w == 0) continue;
    const index_t start = rng.uniform_int(T - w + 1);
    out.middleRows(start, w).setZero();
  }
  return out;
}

}  // namespace dmenc

#endif  // DMENC_OBJECTIVES_HPP_
