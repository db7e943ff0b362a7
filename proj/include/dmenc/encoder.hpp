// dmenc/encoder.hpp

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

// Dual-mode Conformer encoder. Blocks place the convolution module before
// self-attention, every convolution is causal, and there are no positional
// embeddings; the attention mask is the only thing that differs between
// inference modes, so one parameter set serves full-context, partial
// look-ahead, and pure streaming. Three forward paths share the parameters:
// a taped one for training, a plain one for full-sequence inference, and an
// incremental one driven by StreamingState.

#ifndef DMENC_ENCODER_HPP_
#define DMENC_ENCODER_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "dmenc/common.hpp"
#include "dmenc/maskgen.hpp"
#include "dmenc/rng.hpp"
#include "dmenc/tape.hpp"

namespace dmenc {

struct EncoderConfig {
  index_t n_blocks = 4;
  index_t d_model = 144;
  index_t d_ff = 576;
  index_t n_heads = 4;
  index_t conv_kernel = 15;
  index_t frontend_dim = 512;

  void validate() const {
    if (n_blocks < 1) throw ConfigError("encoder.n_blocks must be >= 1");
    if (d_model < 1 || d_ff < 1) throw ConfigError("encoder dims must be positive");
    if (n_heads < 1 || d_model % n_heads != 0)
      throw ConfigError("encoder.d_model must be divisible by n_heads");
    if (conv_kernel < 3) throw ConfigError("encoder.conv_kernel must be >= 3");
    if (frontend_dim < 1) throw ConfigError("encoder.frontend_dim must be positive");
  }

  index_t head_dim() const { return d_model / n_heads; }

  // "toy" trains on a laptop; the large presets exist for config parity only.
  static EncoderConfig preset(const std::string& name) {
    EncoderConfig c;
    if (name == "toy") {
      // defaults
    } else if (name == "200m") {
      c.n_blocks = 18; c.d_model = 512; c.d_ff = 2048; c.n_heads = 8;
    } else if (name == "2b") {
      c.n_blocks = 20; c.d_model = 2048; c.d_ff = 8192; c.n_heads = 16;
    } else {
      throw ConfigError("unknown encoder preset '" + name + "'");
    }
    return c;
  }
};

template <typename S>
struct BlockParams {
  using V = tape::Var<S>;
  // macaron feed-forward 1
  V ff1_ln_g, ff1_ln_b, ff1_w1, ff1_b1, ff1_w2, ff1_b2;
  // convolution module
  V conv_ln_g, conv_ln_b;        // pre-norm
  V conv_pw1_w, conv_pw1_b;      // pointwise d -> 2d, GLU halves it
  V conv_dw_w, conv_dw_b;        // depthwise causal [K x d]
  V conv_mid_ln_g, conv_mid_ln_b;  // per-frame norm after depthwise
  V conv_pw2_w, conv_pw2_b;      // pointwise d -> d
  // self-attention
  V attn_ln_g, attn_ln_b, wq, bq, wk, bk, wv, bv, wo, bo;
  // macaron feed-forward 2
  V ff2_ln_g, ff2_ln_b, ff2_w1, ff2_b1, ff2_w2, ff2_b2;
  // closing norm
  V out_ln_g, out_ln_b;
};

template <typename S>
struct EncoderParams {
  using V = tape::Var<S>;
  EncoderConfig cfg;
  V frontend_w, frontend_b;  // causal conv as [(K*frontend_dim) x d_model]
  std::vector<BlockParams<S>> blocks;

  void init(const EncoderConfig& c, Rng& rng) {
    c.validate();
    cfg = c;
    auto xavier = [&rng](index_t rows, index_t cols, index_t fan_in,
                         index_t fan_out) {
      const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      Mat<S> m(rows, cols);
      for (index_t j = 0; j < cols; ++j)
        for (index_t i = 0; i < rows; ++i)
          m(i, j) = static_cast<S>(rng.uniform(-lim, lim));
      return V::parameter(std::move(m));
    };
    auto zeros = [](index_t rows, index_t cols) {
      return V::parameter(Mat<S>::Zero(rows, cols));
    };
    auto ones = [](index_t rows, index_t cols) {
      return V::parameter(Mat<S>::Ones(rows, cols));
    };
    const index_t d = c.d_model, K = c.conv_kernel;
    frontend_w = xavier(K * c.frontend_dim, d, c.frontend_dim, d);
    frontend_b = zeros(1, d);
    blocks.clear();
    blocks.resize(static_cast<std::size_t>(c.n_blocks));
    for (auto& b : blocks) {
      b.ff1_ln_g = ones(1, d); b.ff1_ln_b = zeros(1, d);
      b.ff1_w1 = xavier(d, c.d_ff, d, c.d_ff); b.ff1_b1 = zeros(1, c.d_ff);
      b.ff1_w2 = xavier(c.d_ff, d, c.d_ff, d); b.ff1_b2 = zeros(1, d);
      b.conv_ln_g = ones(1, d); b.conv_ln_b = zeros(1, d);
      b.conv_pw1_w = xavier(d, 2 * d, d, 2 * d); b.conv_pw1_b = zeros(1, 2 * d);
      b.conv_dw_w = xavier(K, d, K, 1); b.conv_dw_b = zeros(1, d);
      b.conv_mid_ln_g = ones(1, d); b.conv_mid_ln_b = zeros(1, d);
      b.conv_pw2_w = xavier(d, d, d, d); b.conv_pw2_b = zeros(1, d);
      b.attn_ln_g = ones(1, d); b.attn_ln_b = zeros(1, d);
      b.wq = xavier(d, d, d, d); b.bq = zeros(1, d);
      b.wk = xavier(d, d, d, d); b.bk = zeros(1, d);
      b.wv = xavier(d, d, d, d); b.bv = zeros(1, d);
      b.wo = xavier(d, d, d, d); b.bo = zeros(1, d);
      b.ff2_ln_g = ones(1, d); b.ff2_ln_b = zeros(1, d);
      b.ff2_w1 = xavier(d, c.d_ff, d, c.d_ff); b.ff2_b1 = zeros(1, c.d_ff);
      b.ff2_w2 = xavier(c.d_ff, d, c.d_ff, d); b.ff2_b2 = zeros(1, d);
      b.out_ln_g = ones(1, d); b.out_ln_b = zeros(1, d);
    }
  }

  std::vector<std::pair<std::string, V*>> named_params() {
    std::vector<std::pair<std::string, V*>> out;
    out.emplace_back("frontend.w", &frontend_w);
    out.emplace_back("frontend.b", &frontend_b);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      auto& b = blocks[i];
      const std::string p = "block." + std::to_string(i) + ".";
      const std::pair<std::string, V*> entries[] = {
          {"ff1_ln.g", &b.ff1_ln_g}, {"ff1_ln.b", &b.ff1_ln_b},
          {"ff1.w1", &b.ff1_w1},     {"ff1.b1", &b.ff1_b1},
          {"ff1.w2", &b.ff1_w2},     {"ff1.b2", &b.ff1_b2},
          {"conv_ln.g", &b.conv_ln_g}, {"conv_ln.b", &b.conv_ln_b},
          {"conv.pw1_w", &b.conv_pw1_w}, {"conv.pw1_b", &b.conv_pw1_b},
          {"conv.dw_w", &b.conv_dw_w},   {"conv.dw_b", &b.conv_dw_b},
          {"conv_mid_ln.g", &b.conv_mid_ln_g},
          {"conv_mid_ln.b", &b.conv_mid_ln_b},
          {"conv.pw2_w", &b.conv_pw2_w}, {"conv.pw2_b", &b.conv_pw2_b},
          {"attn_ln.g", &b.attn_ln_g},   {"attn_ln.b", &b.attn_ln_b},
          {"attn.wq", &b.wq}, {"attn.bq", &b.bq},
          {"attn.wk", &b.wk}, {"attn.bk", &b.bk},
          {"attn.wv", &b.wv}, {"attn.bv", &b.bv},
          {"attn.wo", &b.wo}, {"attn.bo", &b.bo},
          {"ff2_ln.g", &b.ff2_ln_g}, {"ff2_ln.b", &b.ff2_ln_b},
          {"ff2.w1", &b.ff2_w1},     {"ff2.b1", &b.ff2_b1},
          {"ff2.w2", &b.ff2_w2},     {"ff2.b2", &b.ff2_b2},
          {"out_ln.g", &b.out_ln_g}, {"out_ln.b", &b.out_ln_b},
      };
      for (const auto& [name, var] : entries) out.emplace_back(p + name, var);
    }
    return out;
  }

  int64_t parameter_count() {
    int64_t n = 0;
    for (auto& [name, v] : named_params()) n += v->value().size();
    return n;
  }

  // Order-stable hash of raw parameter bytes; used by the frozen-encoder
  // contract and bit-reproducibility checks.
  uint64_t param_hash() {
    uint64_t h = kFnvOffset;
    for (auto& [name, v] : named_params()) {
      h = fnv1a(name.data(), name.size(), h);
      const auto& m = v->value();
      h = fnv1a(m.data(), static_cast<std::size_t>(m.size()) * sizeof(S), h);
    }
    return h;
  }
};

// ---- taped forward (training) ----

namespace internal {

template <typename S>
tape::Var<S> ffn_module(const BlockParams<S>& b, const tape::Var<S>& x, bool second) {
  using namespace tape;
  const auto& ln_g = second ? b.ff2_ln_g : b.ff1_ln_g;
  const auto& ln_b = second ? b.ff2_ln_b : b.ff1_ln_b;
  const auto& w1 = second ? b.ff2_w1 : b.ff1_w1;
  const auto& b1 = second ? b.ff2_b1 : b.ff1_b1;
  const auto& w2 = second ? b.ff2_w2 : b.ff1_w2;
  const auto& b2 = second ? b.ff2_b2 : b.ff1_b2;
  auto h = swish(add_rowvec(matmul(layer_norm(x, ln_g, ln_b), w1), b1));
  return add_rowvec(matmul(h, w2), b2);
}

template <typename S>
tape::Var<S> conv_module(const BlockParams<S>& b, const tape::Var<S>& x) {
  using namespace tape;
  auto y = layer_norm(x, b.conv_ln_g, b.conv_ln_b);
  auto gated = glu(add_rowvec(matmul(y, b.conv_pw1_w), b.conv_pw1_b));
  auto dw = causal_depthwise_conv(gated, b.conv_dw_w, b.conv_dw_b);
  auto act = swish(layer_norm(dw, b.conv_mid_ln_g, b.conv_mid_ln_b));
  return add_rowvec(matmul(act, b.conv_pw2_w), b.conv_pw2_b);
}

template <typename S>
tape::Var<S> attn_module(const BlockParams<S>& b, const tape::Var<S>& x,
                         const Mat<S>& bias, index_t n_heads) {
  using namespace tape;
  auto y = layer_norm(x, b.attn_ln_g, b.attn_ln_b);
  auto q = add_rowvec(matmul(y, b.wq), b.bq);
  auto k = add_rowvec(matmul(y, b.wk), b.bk);
  auto v = add_rowvec(matmul(y, b.wv), b.bv);
  const index_t dh = x.cols() / n_heads;
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
  std::vector<Var<S>> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  for (index_t h = 0; h < n_heads; ++h) {
    auto qh = slice_cols(q, h * dh, dh);
    auto kh = slice_cols(k, h * dh, dh);
    auto vh = slice_cols(v, h * dh, dh);
    auto scores = scale(matmul_nt(qh, kh), inv_sqrt);
    auto attn = softmax_rows_biased(scores, bias);
    heads.push_back(matmul(attn, vh));
  }
  return add_rowvec(matmul(concat_cols(heads), b.wo), b.bo);
}

template <typename S>
tape::Var<S> block_forward_taped(const BlockParams<S>& b, const tape::Var<S>& in,
                                 const Mat<S>& bias, index_t n_heads) {
  using namespace tape;
  auto x = add(in, scale(ffn_module(b, in, false), S(0.5)));
  x = add(x, conv_module(b, x));
  x = add(x, attn_module(b, x, bias, n_heads));
  x = add(x, scale(ffn_module(b, x, true), S(0.5)));
  return layer_norm(x, b.out_ln_g, b.out_ln_b);
}

}  // namespace internal

// All block outputs: taps[0] is the frontend projection, taps[1+i] block i.
template <typename S>
struct EncoderTaps {
  std::vector<tape::Var<S>> taps;
  const tape::Var<S>& final_output() const { return taps.back(); }
};

template <typename S>
EncoderTaps<S> encoder_forward(EncoderParams<S>& p, const Mat<S>& input,
                               const AttentionMask& mask) {
  using namespace tape;
  DMENC_CHECK(input.cols() == p.cfg.frontend_dim,
              "encoder input dim " << input.cols() << " != " << p.cfg.frontend_dim);
  DMENC_CHECK(input.rows() == mask.T(), "mask length != input length");
  Mat<S> bias = mask.template bias<S>();
  EncoderTaps<S> out;
  auto x = swish(causal_conv_proj(Var<S>::constant(input), p.frontend_w,
                                  p.frontend_b, p.cfg.conv_kernel));
  out.taps.push_back(x);
  for (index_t i = 0; i < p.cfg.n_blocks; ++i) {
    x = dmenc::internal::block_forward_taped(p.blocks[static_cast<std::size_t>(i)],
                                             x, bias, p.cfg.n_heads);
    DMENC_CHECK(x.value().allFinite(), "non-finite activations in block " << i);
    out.taps.push_back(x);
  }
  return out;
}

// ---- plain forward (inference, no graph) ----

namespace internal {

template <typename S>
Mat<S> ln_rows(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b, S eps = S(1e-5)) {
  Mat<S> y(x.rows(), x.cols());
  for (index_t t = 0; t < x.rows(); ++t) {
    const S mu = x.row(t).mean();
    auto c = (x.row(t).array() - mu).eval();
    const S inv = S(1) / std::sqrt(c.square().mean() + eps);
    y.row(t) = ((c * inv) * g.row(0).array() + b.row(0).array()).matrix();
  }
  return y;
}

template <typename S>
Mat<S> swish_m(const Mat<S>& x) {
  return (x.array() / (S(1) + (-x.array()).exp())).matrix();
}

template <typename S>
Mat<S> glu_m(const Mat<S>& x) {
  const index_t d = x.cols() / 2;
  return (x.leftCols(d).array() /
          (S(1) + (-x.rightCols(d).array()).exp()))
      .matrix();
}

// Depthwise causal conv where `hist` holds up to kernel-1 rows preceding x.
template <typename S>
Mat<S> depthwise_causal(const Mat<S>& x, const Mat<S>& hist, const Mat<S>& w,
                        const Mat<S>& b) {
  const index_t K = w.rows(), T = x.rows(), H = hist.rows();
  Mat<S> y(T, x.cols());
  y.rowwise() = Eigen::Matrix<S, 1, Eigen::Dynamic>(b.row(0));
  for (index_t t = 0; t < T; ++t) {
    for (index_t k = 0; k < K; ++k) {
      const index_t src = t - (K - 1) + k;  // index into x; negatives hit hist
      if (src >= 0)
        y.row(t).array() += w.row(k).array() * x.row(src).array();
      else if (src + H >= 0)
        y.row(t).array() += w.row(k).array() * hist.row(src + H).array();
    }
  }
  return y;
}

template <typename S>
Mat<S> ffn_module_m(const BlockParams<S>& bp, const Mat<S>& x, bool second) {
  const auto& ln_g = second ? bp.ff2_ln_g : bp.ff1_ln_g;
  const auto& ln_b = second ? bp.ff2_ln_b : bp.ff1_ln_b;
  const auto& w1 = second ? bp.ff2_w1 : bp.ff1_w1;
  const auto& b1 = second ? bp.ff2_b1 : bp.ff1_b1;
  const auto& w2 = second ? bp.ff2_w2 : bp.ff1_w2;
  const auto& b2 = second ? bp.ff2_b2 : bp.ff1_b2;
  Mat<S> h = ln_rows(x, ln_g.value(), ln_b.value()) * w1.value();
  h.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b1.value().row(0));
  h = swish_m(h);
  Mat<S> o = h * w2.value();
  o.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b2.value().row(0));
  return o;
}

// Attention over rows [q0, q0+Tq) of a key/value context whose global frame
// indices start at k0. allowed(t, s) comes from global mask semantics.
template <typename S>
Mat<S> attend(const Mat<S>& q, const Mat<S>& k, const Mat<S>& v, index_t n_heads,
              const MatB& allow) {
  const index_t dh = q.cols() / n_heads;
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
  Mat<S> out(q.rows(), q.cols());
  const S ninf = -std::numeric_limits<S>::infinity();
  for (index_t h = 0; h < n_heads; ++h) {
    Mat<S> scores = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose();
    scores *= inv_sqrt;
    for (index_t t = 0; t < scores.rows(); ++t) {
      for (index_t s = 0; s < scores.cols(); ++s)
        if (!allow(t, s)) scores(t, s) = ninf;
      const S m = scores.row(t).maxCoeff();
      DMENC_CHECK(m > ninf, "attention row " << t << " fully masked");
      auto e = (scores.row(t).array() - m).exp().eval();
      scores.row(t) = (e / e.sum()).matrix();
    }
    out.middleCols(h * dh, dh).noalias() = scores * v.middleCols(h * dh, dh);
  }
  return out;
}

}  // namespace internal

template <typename S>
std::vector<Mat<S>> encoder_infer(EncoderParams<S>& p, const Mat<S>& input,
                                  const AttentionMask& mask) {
  using internal::attend;
  using internal::ln_rows;
  DMENC_CHECK(input.cols() == p.cfg.frontend_dim, "encoder input dim mismatch");
  DMENC_CHECK(input.rows() == mask.T(), "mask length != input length");
  const index_t T = input.rows();
  MatB allow(T, T);
  for (index_t t = 0; t < T; ++t)
    for (index_t s = 0; s < T; ++s) allow(t, s) = mask.allowed(t, s);

  std::vector<Mat<S>> taps;
  Mat<S> u = tape::causal_unroll(input, p.cfg.conv_kernel);
  Mat<S> x = u * p.frontend_w.value();
  x.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(p.frontend_b.value().row(0));
  x = internal::swish_m(x);
  taps.push_back(x);

  const Mat<S> no_hist(0, p.cfg.d_model);
  for (index_t i = 0; i < p.cfg.n_blocks; ++i) {
    auto& b = p.blocks[static_cast<std::size_t>(i)];
    x += S(0.5) * internal::ffn_module_m(b, x, false);
    {
      Mat<S> y = ln_rows(x, b.conv_ln_g.value(), b.conv_ln_b.value());
      Mat<S> g = y * b.conv_pw1_w.value();
      g.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b.conv_pw1_b.value().row(0));
      g = internal::glu_m(g);
      Mat<S> dw = internal::depthwise_causal(g, no_hist, b.conv_dw_w.value(),
                                             b.conv_dw_b.value());
      Mat<S> act = internal::swish_m(
          ln_rows(dw, b.conv_mid_ln_g.value(), b.conv_mid_ln_b.value()));
      Mat<S> o = act * b.conv_pw2_w.value();
      o.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b.conv_pw2_b.value().row(0));
      x += o;
    }
    {
      Mat<S> y = ln_rows(x, b.attn_ln_g.value(), b.attn_ln_b.value());
      Mat<S> q = y * b.wq.value();
      q.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b.bq.value().row(0));
      Mat<S> k = y * b.wk.value();
      k.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b.bk.value().row(0));
      Mat<S> v = y * b.wv.value();
      v.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b.bv.value().row(0));
      Mat<S> ctx = attend(q, k, v, p.cfg.n_heads, allow);
      Mat<S> o = ctx * b.wo.value();
      o.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b.bo.value().row(0));
      x += o;
    }
    x += S(0.5) * internal::ffn_module_m(b, x, true);
    x = ln_rows(x, b.out_ln_g.value(), b.out_ln_b.value());
    DMENC_CHECK(x.allFinite(), "non-finite activations in block " << i);
    taps.push_back(x);
  }
  return taps;
}

// ---- incremental streaming forward ----

template <typename S>
struct StreamingState {
  Mat<S> frontend_cache;               // last conv_kernel-1 raw input rows
  std::vector<Mat<S>> conv_cache;      // per block, last conv_kernel-1 gated rows
  std::vector<Mat<S>> k_cache, v_cache;  // per block, last lb projected rows
  index_t frames_seen = 0;

  static StreamingState fresh(const EncoderConfig& cfg) {
    StreamingState s;
    s.frontend_cache = Mat<S>(0, cfg.frontend_dim);
    s.conv_cache.assign(static_cast<std::size_t>(cfg.n_blocks),
                        Mat<S>(0, cfg.d_model));
    s.k_cache.assign(static_cast<std::size_t>(cfg.n_blocks), Mat<S>(0, cfg.d_model));
    s.v_cache.assign(static_cast<std::size_t>(cfg.n_blocks), Mat<S>(0, cfg.d_model));
    return s;
  }
};

namespace internal {

template <typename S>
void roll_cache(Mat<S>& cache, const Mat<S>& fresh, index_t limit) {
  if (limit <= 0) { cache.resize(0, fresh.cols()); return; }
  const index_t keep_new = std::min(limit, fresh.rows());
  const index_t keep_old = std::min(cache.rows(), limit - keep_new);
  Mat<S> next(keep_old + keep_new, fresh.cols());
  if (keep_old > 0) next.topRows(keep_old) = cache.bottomRows(keep_old);
  next.bottomRows(keep_new) = fresh.bottomRows(keep_new);
  cache = std::move(next);
}

}  // namespace internal

constexpr index_t kDefaultStreamLookbackCap = 135;  // 5.4 s at 40 ms frames

// Process one chunk of at most la_frames+1 rows. Outputs equal the matching
// rows of encoder_infer on the whole utterance. INF look-back is capped at
// lb_cap frames; callers wanting exact INF behavior must use encoder_infer.
template <typename S>
Mat<S> encoder_forward_streaming(EncoderParams<S>& p, const Mat<S>& chunk,
                                 const ContextSpec& ctx, StreamingState<S>& state,
                                 index_t lb_cap = kDefaultStreamLookbackCap) {
  using internal::ln_rows;
  DMENC_CHECK(!std::isinf(ctx.la_s), "streaming needs finite look-ahead");
  const index_t la = to_frames(ctx.la_s);
  const index_t C = la + 1;
  DMENC_CHECK(chunk.rows() >= 1 && chunk.rows() <= C,
              "chunk of " << chunk.rows() << " rows exceeds chunk size " << C);
  DMENC_CHECK(chunk.cols() == p.cfg.frontend_dim, "chunk dim mismatch");
  DMENC_CHECK(state.conv_cache.size() == static_cast<std::size_t>(p.cfg.n_blocks),
              "state does not match encoder config");
  const index_t lb =
      std::isinf(ctx.lb_s) ? lb_cap : std::min(to_frames(ctx.lb_s), lb_cap);
  const index_t c0 = state.frames_seen;
  DMENC_CHECK(c0 % C == 0, "chunk does not start on a chunk boundary");
  const index_t Tc = chunk.rows();
  const index_t K = p.cfg.conv_kernel;

  // Frontend conv over [cache; chunk].
  Mat<S> x;
  {
    Mat<S> joined(state.frontend_cache.rows() + Tc, chunk.cols());
    if (state.frontend_cache.rows() > 0)
      joined.topRows(state.frontend_cache.rows()) = state.frontend_cache;
    joined.bottomRows(Tc) = chunk;
    Mat<S> u = tape::causal_unroll(joined, K);
    Mat<S> full = u * p.frontend_w.value();
    full.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(p.frontend_b.value().row(0));
    // With fewer than K-1 cached rows the unroll's zero padding coincides
    // with the start of the utterance, so the tail rows are exact.
    x = internal::swish_m(Mat<S>(full.bottomRows(Tc)));
    internal::roll_cache(state.frontend_cache, chunk, K - 1);
  }

  for (index_t i = 0; i < p.cfg.n_blocks; ++i) {
    auto& b = p.blocks[static_cast<std::size_t>(i)];
    auto& cc = state.conv_cache[static_cast<std::size_t>(i)];
    auto& kc = state.k_cache[static_cast<std::size_t>(i)];
    auto& vc = state.v_cache[static_cast<std::size_t>(i)];

    x += S(0.5) * internal::ffn_module_m(b, x, false);
    {
      Mat<S> y = ln_rows(x, b.conv_ln_g.value(), b.conv_ln_b.value());
      Mat<S> g = y * b.conv_pw1_w.value();
      g.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b.conv_pw1_b.value().row(0));
      g = internal::glu_m(g);
      Mat<S> dw = internal::depthwise_causal(g, cc, b.conv_dw_w.value(),
                                             b.conv_dw_b.value());
      internal::roll_cache(cc, g, K - 1);
      Mat<S> act = internal::swish_m(
          ln_rows(dw, b.conv_mid_ln_g.value(), b.conv_mid_ln_b.value()));
      Mat<S> o = act * b.conv_pw2_w.value();
      o.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b.conv_pw2_b.value().row(0));
      x += o;
    }
    {
      Mat<S> y = ln_rows(x, b.attn_ln_g.value(), b.attn_ln_b.value());
      Mat<S> q = y * b.wq.value();
      q.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b.bq.value().row(0));
      Mat<S> k = y * b.wk.value();
      k.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b.bk.value().row(0));
      Mat<S> v = y * b.wv.value();
      v.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b.bv.value().row(0));
      Mat<S> kfull(kc.rows() + Tc, k.cols());
      if (kc.rows() > 0) kfull.topRows(kc.rows()) = kc;
      kfull.bottomRows(Tc) = k;
      Mat<S> vfull(vc.rows() + Tc, v.cols());
      if (vc.rows() > 0) vfull.topRows(vc.rows()) = vc;
      vfull.bottomRows(Tc) = v;
      // Global frame index of key column s is c0 - kc.rows() + s; the whole
      // context sits at or before this chunk's end, so only the look-back
      // bound needs enforcing.
      const index_t kbase = c0 - kc.rows();
      MatB allow(Tc, kfull.rows());
      for (index_t t = 0; t < Tc; ++t)
        for (index_t s = 0; s < kfull.rows(); ++s)
          allow(t, s) = (kbase + s) >= (c0 + t) - lb;
      Mat<S> ctxm = internal::attend(q, kfull, vfull, p.cfg.n_heads, allow);
      Mat<S> o = ctxm * b.wo.value();
      o.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b.bo.value().row(0));
      x += o;
      internal::roll_cache(kc, k, lb);
      internal::roll_cache(vc, v, lb);
    }
    x += S(0.5) * internal::ffn_module_m(b, x, true);
    x = ln_rows(x, b.out_ln_g.value(), b.out_ln_b.value());
  }
  state.frames_seen += Tc;
  return x;
}

}  // namespace dmenc

#endif  // DMENC_ENCODER_HPP_
