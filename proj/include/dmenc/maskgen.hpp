// dmenc/maskgen.hpp

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

// Variable attention masks: fixed-window look-back, chunked look-ahead.
// Chunking (rather than a sliding future window) keeps the reachable future
// of a frame constant under layer stacking, so look-ahead does not accumulate
// with encoder depth.

#ifndef DMENC_MASKGEN_HPP_
#define DMENC_MASKGEN_HPP_

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dmenc/common.hpp"
#include "dmenc/rng.hpp"

namespace dmenc {

// A sampled (look-back, look-ahead) pair in seconds; infinity = unbounded.
struct ContextSpec {
  double lb_s = kInfSeconds;
  double la_s = kInfSeconds;

  static ContextSpec full_context() { return {kInfSeconds, kInfSeconds}; }
  static ContextSpec streaming() { return {5.4, 0.0}; }
};

// The uniform discrete supports the per-batch context pair is drawn from.
struct SamplingSpace {
  std::vector<double> l_past;    // seconds or infinity
  std::vector<double> l_future;
  std::string name;

  // Named presets for the three sampling-space configurations.
  static SamplingSpace preset(const std::string& name) {
    SamplingSpace s;
    s.name = name;
    const double inf = kInfSeconds;
    if (name == "T1") {
      s.l_past = {inf, 5.4, 4.6, 3.6};
      s.l_future = {0.0, 1.0, 1.8, inf};
    } else if (name == "T2") {
      s.l_past = {inf, 5.4};
      s.l_future = {0.0, inf};
    } else if (name == "T3") {
      for (double v = 5.8; v > 3.59; v -= 0.2) s.l_past.push_back(v);
      s.l_past.insert(s.l_past.begin(), inf);
      for (double v = 0.0; v < 1.81; v += 0.2) s.l_future.push_back(v);
      s.l_future.push_back(inf);
    } else {
      throw ConfigError("unknown sampling-space preset: " + name);
    }
    return s;
  }

  static SamplingSpace singleton(const ContextSpec& ctx, std::string name = "fixed") {
    return SamplingSpace{{ctx.lb_s}, {ctx.la_s}, std::move(name)};
  }
};

// Seconds -> frames at the 40 ms rate, rounding half-up; infinity passes
// through as kInfFrames.
inline std::int64_t to_frames(double seconds, double frame_rate_s = 0.040) {
  if (seconds == kInfSeconds) return kInfFrames;
  DMENC_CHECK(seconds >= 0.0, "context seconds must be >= 0, got " << seconds);
  return static_cast<std::int64_t>(std::floor(seconds / frame_rate_s + 0.5));
}

// allow[t][s] = frame t may attend to frame s. Rule-built masks keep
// (lb, chunk) parameters and materialize the boolean matrix only for
// T <= kDenseMaskLimit; both representations answer allowed() identically.
constexpr index_t kDenseMaskLimit = 4096;

class AttentionMask {
 public:
  // build_mask: chunk size C = la + 1 (so la = 0 degenerates to strict
  // causality and the maximum single-layer look-ahead is exactly la, attained
  // at chunk starts); unchunked full future when la is infinite.
  static AttentionMask build(index_t T, std::int64_t lb_frames, std::int64_t la_frames) {
    DMENC_CHECK(T >= 1, "mask needs T >= 1");
    DMENC_CHECK(lb_frames >= 0 && la_frames >= 0, "negative context frames");
    AttentionMask m;
    m.T_ = T;
    m.lb_frames_ = lb_frames;
    m.la_frames_ = la_frames;
    m.chunk_size_ = is_inf_frames(la_frames) ? kInfFrames : la_frames + 1;
    m.rule_based_ = true;
    if (T <= kDenseMaskLimit) {
      MatB d(T, T);
      for (index_t t = 0; t < T; ++t)
        for (index_t s = 0; s < T; ++s) d(t, s) = m.rule_allows(t, s);
      m.dense_ = std::move(d);
    }
    return m;
  }

  // Hand-built masks (tests, counterexamples) carry only the dense matrix.
  static AttentionMask from_matrix(MatB allow) {
    DMENC_CHECK(allow.rows() == allow.cols() && allow.rows() >= 1, "mask must be square");
    AttentionMask m;
    m.T_ = allow.rows();
    m.rule_based_ = false;
    m.dense_ = std::move(allow);
    return m;
  }

  index_t T() const { return T_; }
  std::int64_t lb_frames() const { return lb_frames_; }
  std::int64_t la_frames() const { return la_frames_; }
  std::int64_t chunk_size() const { return chunk_size_; }
  bool rule_based() const { return rule_based_; }

  index_t chunk_end(index_t t) const {
    if (!rule_based_ || is_inf_frames(chunk_size_)) return T_ - 1;
    return std::min<index_t>(T_ - 1, (t / chunk_size_ + 1) * chunk_size_ - 1);
  }

  bool allowed(index_t t, index_t s) const {
    DMENC_CHECK(t >= 0 && t < T_ && s >= 0 && s < T_, "mask index out of range");
    if (dense_) return (*dense_)(t, s);
    return rule_allows(t, s);
  }

  // 0 / -inf additive bias for attention logits.
  template <typename S>
  Mat<S> bias() const {
    const S neg_inf = -std::numeric_limits<S>::infinity();
    Mat<S> b = Mat<S>::Zero(T_, T_);
    for (index_t t = 0; t < T_; ++t)
      for (index_t s = 0; s < T_; ++s)
        if (!allowed(t, s)) b(t, s) = neg_inf;
    return b;
  }

 private:
  bool rule_allows(index_t t, index_t s) const {
    if (!is_inf_frames(lb_frames_) && s < t - lb_frames_) return false;
    return s <= chunk_end(t);
  }

  index_t T_ = 0;
  std::int64_t lb_frames_ = kInfFrames;
  std::int64_t la_frames_ = kInfFrames;
  std::int64_t chunk_size_ = kInfFrames;
  bool rule_based_ = false;
  std::optional<MatB> dense_;
};

inline AttentionMask build_mask(index_t T, std::int64_t lb_frames, std::int64_t la_frames) {
  return AttentionMask::build(T, lb_frames, la_frames);
}

inline AttentionMask build_mask(index_t T, const ContextSpec& ctx) {
  return AttentionMask::build(T, to_frames(ctx.lb_s), to_frames(ctx.la_s));
}

// Per-batch draw: look-back and look-ahead sampled independently and
// uniformly from their supports.
inline ContextSpec sample_context(const SamplingSpace& space, Rng& rng) {
  DMENC_CHECK(!space.l_past.empty() && !space.l_future.empty(),
              "sampling space must be non-empty");
  ContextSpec ctx;
  ctx.lb_s = space.l_past[static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(space.l_past.size())))];
  ctx.la_s = space.l_future[static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(space.l_future.size())))];
  return ctx;
}

// Per-frame reach after n_layers of masked attention: smallest and largest
// source index with a path to the frame through the L-fold boolean
// composition of allow.
struct ReachTable {
  VecI min_reach;
  VecI max_reach;
};

namespace internal {

// Rows of allow as bitsets, for boolean composition.
class BitRows {
 public:
  BitRows(index_t T) : T_(T), words_((T + 63) / 64), bits_(T * words_, 0) {}

  static BitRows from_mask(const AttentionMask& m) {
    BitRows r(m.T());
    for (index_t t = 0; t < m.T(); ++t)
      for (index_t s = 0; s < m.T(); ++s)
        if (m.allowed(t, s)) r.set(t, s);
    return r;
  }

  void set(index_t t, index_t s) {
    bits_[t * words_ + s / 64] |= (std::uint64_t{1} << (s % 64));
  }
  bool get(index_t t, index_t s) const {
    return (bits_[t * words_ + s / 64] >> (s % 64)) & 1;
  }
  void or_row(index_t dst, const BitRows& src, index_t src_row) {
    for (index_t w = 0; w < words_; ++w)
      bits_[dst * words_ + w] |= src.bits_[src_row * words_ + w];
  }

  // reach' = compose(base, reach): reach'(t) = union of reach(s) over
  // base-allowed s.
  BitRows compose(const BitRows& reach) const {
    BitRows out(T_);
    for (index_t t = 0; t < T_; ++t)
      for (index_t s = 0; s < T_; ++s)
        if (get(t, s)) out.or_row(t, reach, s);
    return out;
  }

  void min_max(index_t t, index_t* mn, index_t* mx) const {
    *mn = -1;
    *mx = -1;
    for (index_t s = 0; s < T_; ++s)
      if (get(t, s)) {
        if (*mn < 0) *mn = s;
        *mx = s;
      }
  }

  index_t T() const { return T_; }

 private:
  index_t T_;
  index_t words_;
  std::vector<std::uint64_t> bits_;
};

}  // namespace internal

inline ReachTable receptive_field(const AttentionMask& mask, int n_layers) {
  DMENC_CHECK(n_layers >= 1, "n_layers must be >= 1");
  auto base = internal::BitRows::from_mask(mask);
  auto reach = base;
  for (int l = 1; l < n_layers; ++l) reach = base.compose(reach);
  ReachTable out;
  out.min_reach.resize(mask.T());
  out.max_reach.resize(mask.T());
  for (index_t t = 0; t < mask.T(); ++t) {
    index_t mn, mx;
    reach.min_max(t, &mn, &mx);
    out.min_reach(t) = mn;
    out.max_reach(t) = mx;
  }
  return out;
}

// True iff the furthest future frame reachable from every position is the
// same after 1..n_layers masked-attention layers.
inline bool verify_no_lookahead_accumulation(const AttentionMask& mask, int n_layers) {
  DMENC_CHECK(n_layers >= 1, "n_layers must be >= 1");
  auto base = internal::BitRows::from_mask(mask);
  VecI max1(mask.T());
  for (index_t t = 0; t < mask.T(); ++t) {
    index_t mn, mx;
    base.min_max(t, &mn, &mx);
    max1(t) = mx;
  }
  auto reach = base;
  for (int l = 2; l <= n_layers; ++l) {
    reach = base.compose(reach);
    for (index_t t = 0; t < mask.T(); ++t) {
      index_t mn, mx;
      reach.min_max(t, &mn, &mx);
      if (mx != max1(t)) return false;
    }
  }
  return true;
}

}  // namespace dmenc

#endif  // DMENC_MASKGEN_HPP_
