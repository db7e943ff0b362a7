// tests/test_transducer.cpp

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

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "dmenc/transducer.hpp"
#include "test_support.hpp"

namespace {

using dmenc::index_t;
using dmenc::kBlankId;
using dmenc::Mat;
using dmenc::Rng;
using MatD = Mat<double>;
using dmenc_test::random_mat;

MatD softmax_rows(const MatD& logits) {
  MatD p(logits.rows(), logits.cols());
  for (index_t i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    auto e = (logits.row(i).array() - m).exp().eval();
    p.row(i) = (e / e.sum()).matrix();
  }
  return p;
}

// Oracle: total transducer probability by explicit recursion over the
// (t, u) lattice. Blank advances t, the u-th label advances u, and the
// final blank is emitted from (T-1, U).
double enumerate_rnnt(const MatD& logits, const std::vector<int>& labels,
                      index_t T) {
  const index_t U = static_cast<index_t>(labels.size());
  const MatD p = softmax_rows(logits);
  auto row = [&](index_t t, index_t u) { return t * (U + 1) + u; };
  std::function<double(index_t, index_t)> go = [&](index_t t,
                                                   index_t u) -> double {
    if (t == T - 1 && u == U) return p(row(t, u), kBlankId);
    double total = 0.0;
    if (t + 1 < T) total += p(row(t, u), kBlankId) * go(t + 1, u);
    if (u < U)
      total += p(row(t, u), labels[static_cast<std::size_t>(u)]) * go(t, u + 1);
    return total;
  };
  return go(0, 0);
}

// Oracle collapse: drop consecutive repeats, then blanks.
std::vector<int> oracle_collapse(const std::vector<int>& path) {
  std::vector<int> out;
  int prev = -1;
  for (int s : path) {
    if (s != prev && s != kBlankId) out.push_back(s);
    prev = s;
  }
  return out;
}

// Oracle: total CTC probability by brute force over all V^T frame paths.
double enumerate_ctc(const MatD& logits, const std::vector<int>& labels) {
  const index_t T = logits.rows();
  const index_t V = logits.cols();
  const MatD p = softmax_rows(logits);
  double total = 0.0;
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  std::function<void(index_t, double)> go = [&](index_t t, double prob) {
    if (t == T) {
      if (oracle_collapse(path) == labels) total += prob;
      return;
    }
    for (int v = 0; v < V; ++v) {
      path[static_cast<std::size_t>(t)] = v;
      go(t + 1, prob * p(t, v));
    }
  };
  go(0, 1.0);
  return total;
}

std::int64_t binom(int n, int k) {
  std::int64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

TEST_CASE("transducer loss matches hand-computed two-path example") {
  // T=2, one label: either emit the label on frame 0 or on frame 1.
  const index_t T = 2, V = 3;
  Rng rng(21);
  MatD logits = random_mat(T * 2, V, rng);
  const std::vector<int> labels = {2};
  const MatD p = softmax_rows(logits);
  // Rows: (t,u) -> t*(U+1)+u with U=1.
  const double path_label_first = p(0, 2) * p(1, kBlankId) * p(3, kBlankId);
  const double path_blank_first = p(0, kBlankId) * p(2, 2) * p(3, kBlankId);
  const double expect = -std::log(path_label_first + path_blank_first);
  const auto res = dmenc::rnnt_loss(logits, labels, T);
  CHECK(res.loss == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("transducer loss equals the path-enumeration oracle") {
  Rng rng(22);
  for (int trial = 0; trial < 40; ++trial) {
    const index_t T = 1 + static_cast<index_t>(rng.uniform_int(4));
    const index_t V = 2 + static_cast<index_t>(rng.uniform_int(3));
    const index_t U = static_cast<index_t>(rng.uniform_int(4));
    std::vector<int> labels;
    for (index_t u = 0; u < U; ++u)
      labels.push_back(1 + static_cast<int>(rng.uniform_int(V - 1)));
    MatD logits = random_mat(T * (U + 1), V, rng, 1.5);
    const auto res = dmenc::rnnt_loss(logits, labels, T);
    const double oracle = -std::log(enumerate_rnnt(logits, labels, T));
    CHECK(res.loss == doctest::Approx(oracle).epsilon(1e-6));
  }
}

TEST_CASE("transducer loss on uniform logits has the closed form") {
  // Every monotone path has T+U emissions at probability 1/V each, and
  // there are C(T-1+U, U) of them.
  const index_t T = 3, U = 2, V = 5;
  MatD logits = MatD::Zero(T * (U + 1), V);
  const std::vector<int> labels = {1, 2};
  const auto res = dmenc::rnnt_loss(logits, labels, T);
  const double expect =
      -(std::log(static_cast<double>(binom(T - 1 + U, U))) -
        (T + U) * std::log(static_cast<double>(V)));
  CHECK(res.loss == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("transducer gradient matches finite differences") {
  Rng rng(23);
  const index_t T = 3, V = 4;
  const std::vector<int> labels = {2, 1};
  const index_t U = 2;
  MatD logits = random_mat(T * (U + 1), V, rng);
  const auto res = dmenc::rnnt_loss(logits, labels, T);
  const double eps = 1e-6;
  for (index_t i = 0; i < logits.rows(); ++i) {
    for (index_t j = 0; j < V; ++j) {
      MatD lp = logits, lm = logits;
      lp(i, j) += eps;
      lm(i, j) -= eps;
      const double fd = (dmenc::rnnt_loss(lp, labels, T).loss -
                         dmenc::rnnt_loss(lm, labels, T).loss) /
                        (2 * eps);
      CHECK(res.grad(i, j) == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
    }
  }
}

TEST_CASE("transducer gradient rows sum to zero") {
  // Softmax-lattice gradients redistribute mass within each row.
  Rng rng(24);
  const index_t T = 4;
  const std::vector<int> labels = {1, 3, 2};
  MatD logits = random_mat(T * 4, 5, rng);
  const auto res = dmenc::rnnt_loss(logits, labels, T);
  for (index_t i = 0; i < res.grad.rows(); ++i)
    CHECK(res.grad.row(i).sum() == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
}

TEST_CASE("transducer handles the empty label sequence") {
  Rng rng(25);
  const index_t T = 3, V = 4;
  MatD logits = random_mat(T, V, rng);
  const auto res = dmenc::rnnt_loss(logits, {}, T);
  const MatD p = softmax_rows(logits);
  const double expect =
      -(std::log(p(0, kBlankId)) + std::log(p(1, kBlankId)) +
        std::log(p(2, kBlankId)));
  CHECK(res.loss == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("ctc loss matches hand-computed three-path example") {
  // T=2, labels={a}: the alignments are aa, a-, -a.
  const index_t T = 2, V = 3;
  Rng rng(26);
  MatD logits = random_mat(T, V, rng);
  const int a = 2;
  const MatD p = softmax_rows(logits);
  const double expect = -std::log(p(0, a) * p(1, a) + p(0, a) * p(1, kBlankId) +
                                  p(0, kBlankId) * p(1, a));
  const auto res = dmenc::ctc_loss(logits, std::vector<int>{a});
  CHECK(res.loss == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("ctc loss equals the brute-force alignment oracle") {
  Rng rng(27);
  int done = 0;
  while (done < 40) {
    const index_t T = 1 + static_cast<index_t>(rng.uniform_int(4));
    const index_t V = 2 + static_cast<index_t>(rng.uniform_int(3));
    const index_t U = static_cast<index_t>(rng.uniform_int(4));
    std::vector<int> labels;
    for (index_t u = 0; u < U; ++u)
      labels.push_back(1 + static_cast<int>(rng.uniform_int(V - 1)));
    // Feasibility: need T >= U plus one frame per consecutive repeat.
    index_t need = U;
    for (std::size_t u = 1; u < labels.size(); ++u)
      if (labels[u] == labels[u - 1]) ++need;
    if (need > T) continue;
    ++done;
    MatD logits = random_mat(T, V, rng, 1.5);
    const auto res = dmenc::ctc_loss(logits, labels);
    const double oracle = -std::log(enumerate_ctc(logits, labels));
    CHECK(res.loss == doctest::Approx(oracle).epsilon(1e-6));
  }
}

TEST_CASE("ctc gradient matches finite differences") {
  Rng rng(28);
  const index_t T = 4, V = 4;
  const std::vector<int> labels = {2, 2};
  MatD logits = random_mat(T, V, rng);
  const auto res = dmenc::ctc_loss(logits, labels);
  const double eps = 1e-6;
  for (index_t i = 0; i < T; ++i) {
    for (index_t j = 0; j < V; ++j) {
      MatD lp = logits, lm = logits;
      lp(i, j) += eps;
      lm(i, j) -= eps;
      const double fd = (dmenc::ctc_loss(lp, labels).loss -
                         dmenc::ctc_loss(lm, labels).loss) /
                        (2 * eps);
      CHECK(res.grad(i, j) == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
    }
  }
}

TEST_CASE("ctc handles the empty label sequence as all blanks") {
  Rng rng(29);
  const index_t T = 3;
  MatD logits = random_mat(T, 4, rng);
  const MatD p = softmax_rows(logits);
  double expect = 0.0;
  for (index_t t = 0; t < T; ++t) expect -= std::log(p(t, kBlankId));
  const auto res = dmenc::ctc_loss(logits, {});
  CHECK(res.loss == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("collapse drops repeats before blanks") {
  using V = std::vector<int>;
  CHECK(dmenc::collapse_ctc_path(V{1, 1, 0, 2}) == V{1, 2});
  CHECK(dmenc::collapse_ctc_path(V{0, 0, 0}) == V{});
  CHECK(dmenc::collapse_ctc_path(V{1, 0, 1}) == V{1, 1});
  CHECK(dmenc::collapse_ctc_path(V{3, 3, 3, 0, 0, 3}) == V{3, 3});
  CHECK(dmenc::collapse_ctc_path(V{}) == V{});
}

TEST_CASE("ctc greedy decode takes the per-frame argmax then collapses") {
  MatD logits(4, 3);
  // argmax per row: 2, 2, 0, 1 -> collapse(2,2,0,1) = {2, 1}.
  logits << 0, 1, 5, 0, 1, 5, 9, 1, 5, 0, 7, 5;
  CHECK(dmenc::ctc_greedy_decode(logits) == std::vector<int>{2, 1});
}
