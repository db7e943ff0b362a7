// dmenc/transducer.hpp

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

// Transducer and CTC lattice losses with analytic gradients, computed in log
// space over the full alignment lattice. Joint logits for the transducer are
// laid out row-major over (t, u): row t*(U+1)+u holds the vocabulary logits
// at encoder frame t after emitting u labels. Label id 0 is the blank.

#ifndef DMENC_TRANSDUCER_HPP_
#define DMENC_TRANSDUCER_HPP_

#include <cmath>
#include <limits>
#include <vector>

#include "dmenc/common.hpp"

namespace dmenc {

constexpr int kBlankId = 0;

namespace internal {

template <typename S>
S log_sum_exp(S a, S b) {
  const S inf = std::numeric_limits<S>::infinity();
  if (a == -inf) return b;
  if (b == -inf) return a;
  const S m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

template <typename S>
Mat<S> log_softmax_rows(const Mat<S>& logits) {
  Mat<S> lp(logits.rows(), logits.cols());
  for (index_t i = 0; i < logits.rows(); ++i) {
    const S m = logits.row(i).maxCoeff();
    auto shifted = (logits.row(i).array() - m).eval();
    lp.row(i) = (shifted - std::log(shifted.exp().sum())).matrix();
  }
  return lp;
}

}  // namespace internal

template <typename S>
struct LatticeLossResult {
  S loss = 0;              // negative log likelihood of the label sequence
  Mat<S> grad;             // d loss / d logits, same shape as the input
};

// Transducer loss over joint logits [(T*(U+1)) x V].
template <typename S>
LatticeLossResult<S> rnnt_loss(const Mat<S>& logits, const std::vector<int>& labels,
                               index_t T) {
  const index_t U = static_cast<index_t>(labels.size());
  const index_t V = logits.cols();
  DMENC_CHECK(T >= 1, "transducer needs at least one frame");
  DMENC_CHECK(logits.rows() == T * (U + 1),
              "joint logits rows " << logits.rows() << " != " << T * (U + 1));
  for (int l : labels)
    DMENC_CHECK(l > kBlankId && l < V, "label " << l << " out of range");

  const S inf = std::numeric_limits<S>::infinity();
  Mat<S> lp = internal::log_softmax_rows(logits);
  auto row = [&](index_t t, index_t u) { return t * (U + 1) + u; };
  auto blank_lp = [&](index_t t, index_t u) { return lp(row(t, u), kBlankId); };
  auto label_lp = [&](index_t t, index_t u) {
    return lp(row(t, u), labels[static_cast<std::size_t>(u)]);
  };

  Mat<S> alpha = Mat<S>::Constant(T, U + 1, -inf);
  alpha(0, 0) = 0;
  for (index_t t = 0; t < T; ++t) {
    for (index_t u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      S a = -inf;
      if (t > 0) a = alpha(t - 1, u) + blank_lp(t - 1, u);
      if (u > 0) a = internal::log_sum_exp(a, alpha(t, u - 1) + label_lp(t, u - 1));
      alpha(t, u) = a;
    }
  }
  const S log_p = alpha(T - 1, U) + blank_lp(T - 1, U);

  Mat<S> beta = Mat<S>::Constant(T, U + 1, -inf);
  beta(T - 1, U) = blank_lp(T - 1, U);
  for (index_t t = T - 1; t >= 0; --t) {
    for (index_t u = U; u >= 0; --u) {
      if (t == T - 1 && u == U) continue;
      S b = -inf;
      if (t + 1 < T) b = blank_lp(t, u) + beta(t + 1, u);
      if (u + 1 <= U) b = internal::log_sum_exp(b, label_lp(t, u) + beta(t, u + 1));
      beta(t, u) = b;
    }
  }
  DMENC_CHECK(std::abs(beta(0, 0) - log_p) < S(1e-3) * (S(1) + std::abs(log_p)),
              "lattice forward/backward disagree: " << beta(0, 0) << " vs " << log_p);

  LatticeLossResult<S> res;
  res.loss = -log_p;
  res.grad = Mat<S>::Zero(logits.rows(), V);
  for (index_t t = 0; t < T; ++t) {
    for (index_t u = 0; u <= U; ++u) {
      if (alpha(t, u) == -inf) continue;
      // Transition posteriors out of (t, u).
      S gb = 0, gl = 0;
      if (t + 1 < T)
        gb = std::exp(alpha(t, u) + blank_lp(t, u) + beta(t + 1, u) - log_p);
      else if (u == U)
        gb = std::exp(alpha(t, u) + blank_lp(t, u) - log_p);
      if (u < U) gl = std::exp(alpha(t, u) + label_lp(t, u) + beta(t, u + 1) - log_p);
      const S occ = gb + gl;
      if (occ == 0) continue;
      const index_t r = row(t, u);
      auto p = (lp.row(r).array().exp()).eval();
      res.grad.row(r) = (p * occ).matrix();
      res.grad(r, kBlankId) -= gb;
      if (u < U) res.grad(r, labels[static_cast<std::size_t>(u)]) -= gl;
    }
  }
  return res;
}

// CTC loss over per-frame logits [T x V].
template <typename S>
LatticeLossResult<S> ctc_loss(const Mat<S>& logits, const std::vector<int>& labels) {
  const index_t T = logits.rows();
  const index_t V = logits.cols();
  const index_t U = static_cast<index_t>(labels.size());
  for (int l : labels)
    DMENC_CHECK(l > kBlankId && l < V, "label " << l << " out of range");
  const index_t L = 2 * U + 1;  // blanks interleaved
  auto ext = [&](index_t s) -> int {
    return (s % 2 == 0) ? kBlankId : labels[static_cast<std::size_t>(s / 2)];
  };
  // Feasibility: need at least U frames plus one per repeated adjacent label.
  index_t needed = U;
  for (index_t u = 1; u < U; ++u)
    if (labels[static_cast<std::size_t>(u)] == labels[static_cast<std::size_t>(u - 1)])
      ++needed;
  DMENC_CHECK(T >= needed, "label sequence needs " << needed << " frames, have " << T);

  const S inf = std::numeric_limits<S>::infinity();
  Mat<S> lp = internal::log_softmax_rows(logits);

  Mat<S> alpha = Mat<S>::Constant(T, L, -inf);
  alpha(0, 0) = lp(0, kBlankId);
  if (L > 1) alpha(0, 1) = lp(0, ext(1));
  for (index_t t = 1; t < T; ++t) {
    for (index_t s = 0; s < L; ++s) {
      S a = alpha(t - 1, s);
      if (s >= 1) a = internal::log_sum_exp(a, alpha(t - 1, s - 1));
      if (s >= 2 && ext(s) != kBlankId && ext(s) != ext(s - 2))
        a = internal::log_sum_exp(a, alpha(t - 1, s - 2));
      alpha(t, s) = a + lp(t, ext(s));
    }
  }
  S log_p = alpha(T - 1, L - 1);
  if (L > 1) log_p = internal::log_sum_exp(log_p, alpha(T - 1, L - 2));

  Mat<S> beta = Mat<S>::Constant(T, L, -inf);
  beta(T - 1, L - 1) = lp(T - 1, ext(L - 1));
  if (L > 1) beta(T - 1, L - 2) = lp(T - 1, ext(L - 2));
  for (index_t t = T - 2; t >= 0; --t) {
    for (index_t s = L - 1; s >= 0; --s) {
      S b = beta(t + 1, s);
      if (s + 1 < L) b = internal::log_sum_exp(b, beta(t + 1, s + 1));
      if (s + 2 < L && ext(s + 2) != kBlankId && ext(s + 2) != ext(s))
        b = internal::log_sum_exp(b, beta(t + 1, s + 2));
      beta(t, s) = b + lp(t, ext(s));
    }
  }

  LatticeLossResult<S> res;
  res.loss = -log_p;
  res.grad = Mat<S>::Zero(T, V);
  for (index_t t = 0; t < T; ++t) {
    // d(-log_p)/d lp(t, v) = -sum over lattice states s with symbol v of the
    // state posterior; alpha and beta both include the emission at t.
    Vec<S> gl = Vec<S>::Zero(V);
    for (index_t s = 0; s < L; ++s) {
      if (alpha(t, s) == -inf || beta(t, s) == -inf) continue;
      const S post = std::exp(alpha(t, s) + beta(t, s) - lp(t, ext(s)) - log_p);
      gl(ext(s)) += post;
    }
    auto p = lp.row(t).array().exp().eval();
    const S total = gl.sum();
    res.grad.row(t) = (p * total).matrix() - gl.transpose();
  }
  return res;
}

// Collapse repeats then drop blanks (CTC decoding rule).
inline std::vector<int> collapse_ctc_path(const std::vector<int>& path) {
  std::vector<int> out;
  int prev = kBlankId;
  for (int v : path) {
    if (v != kBlankId && v != prev) out.push_back(v);
    prev = v;
  }
  return out;
}

template <typename S>
std::vector<int> ctc_greedy_decode(const Mat<S>& logits) {
  std::vector<int> path(static_cast<std::size_t>(logits.rows()));
  for (index_t t = 0; t < logits.rows(); ++t) {
    index_t best;
    logits.row(t).maxCoeff(&best);
    path[static_cast<std::size_t>(t)] = static_cast<int>(best);
  }
  return collapse_ctc_path(path);
}

}  // namespace dmenc

#endif  // DMENC_TRANSDUCER_HPP_
