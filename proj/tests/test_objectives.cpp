// tests/test_objectives.cpp

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
#include <vector>

#include "dmenc/objectives.hpp"
#include "test_support.hpp"

namespace {

using dmenc::index_t;
using dmenc::Mat;
using dmenc::MatF;
using dmenc::RandomQuantizer;
using dmenc::Rng;
using dmenc::SpanMask;
using dmenc::VecI;
using VarD = dmenc::tape::Var<double>;
using MatD = Mat<double>;
using dmenc_test::random_matf;

// Oracle: nearest-neighbor assignment recomputed in double precision.
VecI oracle_codes(const MatF& input, const RandomQuantizer& q) {
  const MatD proj =
      input.cast<double>() * q.projection.cast<double>();
  const MatD book = q.codebook.cast<double>();
  VecI out(input.rows());
  for (index_t t = 0; t < proj.rows(); ++t) {
    Eigen::RowVectorXd f = proj.row(t);
    const double n = f.norm();
    if (n > 1e-12) f /= n;
    index_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (index_t k = 0; k < book.rows(); ++k) {
      const double d = (f - book.row(k)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    out(t) = best;
  }
  return out;
}

}  // namespace

TEST_CASE("random quantizer is seed-deterministic with unit-norm codewords") {
  const auto q1 = RandomQuantizer::make(6, 4, 20, 99);
  const auto q2 = RandomQuantizer::make(6, 4, 20, 99);
  const auto q3 = RandomQuantizer::make(6, 4, 20, 100);
  CHECK(q1.projection == q2.projection);
  CHECK(q1.codebook == q2.codebook);
  CHECK(q1.projection != q3.projection);
  for (index_t k = 0; k < q1.K; ++k)
    CHECK(q1.codebook.row(k).norm() == doctest::Approx(1.0f).epsilon(1e-5));
}

TEST_CASE("code assignment matches a double-precision nearest neighbor") {
  const auto q = RandomQuantizer::make(6, 4, 20, 7);
  Rng rng(8);
  const MatF input = random_matf(40, 6, rng);
  const VecI fast = dmenc::brq_codes(input, q);
  const VecI slow = oracle_codes(input, q);
  for (index_t t = 0; t < fast.size(); ++t) CHECK(fast(t) == slow(t));
  for (index_t t = 0; t < fast.size(); ++t) {
    CHECK(fast(t) >= 0);
    CHECK(fast(t) < q.K);
  }
}

TEST_CASE("exact distance ties resolve to the lower codeword index") {
  auto q = RandomQuantizer::make(3, 3, 6, 11);
  MatF input(1, 3);
  input << 1.0f, 2.0f, -0.5f;
  // Plant the frame's own normalized projection at two codebook rows.
  Eigen::RowVector3f f = input.row(0) * q.projection;
  f /= f.norm();
  q.codebook.row(2) = f;
  q.codebook.row(5) = f;
  const VecI codes = dmenc::brq_codes(input, q);
  CHECK(codes(0) == 2);
}

TEST_CASE("span masking covers the expected fraction of frames") {
  // Each frame is inside some span unless all 8 potential starts missed:
  // coverage = 1 - (1 - p)^span = 0.1492 for p=0.02, span=8.
  const index_t T = 2000;
  const double p = 0.02;
  const index_t span = 8;
  Rng rng(123);
  double total = 0.0;
  const int trials = 60;
  for (int i = 0; i < trials; ++i) {
    const auto m = SpanMask::generate(T, span, p, rng);
    total += static_cast<double>(m.count()) / static_cast<double>(T);
  }
  const double mean = total / trials;
  const double expect = 1.0 - std::pow(1.0 - p, static_cast<double>(span));
  CHECK(std::abs(mean - expect) < 0.02);
}

TEST_CASE("masked frames form runs no shorter than the span") {
  Rng rng(124);
  for (int trial = 0; trial < 20; ++trial) {
    const index_t T = 50 + static_cast<index_t>(rng.uniform_int(100));
    const auto m = SpanMask::generate(T, 8, 0.05, rng);
    index_t run = 0;
    for (index_t t = 0; t < T; ++t) {
      if (m.masked[static_cast<std::size_t>(t)]) {
        ++run;
      } else {
        if (run > 0) CHECK(run >= 8);
        run = 0;
      }
    }
    // A run cut off by the end of the utterance may be shorter.
  }
}

TEST_CASE("mask application replaces only masked rows, with small noise") {
  Rng rng(125);
  const MatF input = random_matf(30, 5, rng, 4.0);
  Rng mask_rng(126);
  const auto m = SpanMask::generate(30, 4, 0.1, mask_rng);
  REQUIRE(m.count() > 0);
  REQUIRE(m.count() < 30);
  Rng noise_rng(127);
  const MatF out = dmenc::apply_span_mask(input, m, noise_rng);
  for (index_t t = 0; t < 30; ++t) {
    if (m.masked[static_cast<std::size_t>(t)]) {
      // Replacement noise has stddev 0.1, far below the 4.0-scale input.
      CHECK(out.row(t).array().abs().maxCoeff() < 1.0f);
    } else {
      CHECK(out.row(t) == input.row(t));
    }
  }
}

TEST_CASE("masked-prediction loss on uniform logits equals log K") {
  for (index_t K : {1024, 2500}) {
    const index_t T = 12;
    auto logits = VarD::parameter(MatD::Zero(T, K));
    VecI codes(T);
    std::vector<uint8_t> masked(T, 0);
    Rng rng(128);
    for (index_t t = 0; t < T; ++t) {
      codes(t) = rng.uniform_int(K);
      masked[static_cast<std::size_t>(t)] = t % 3 == 0;
    }
    auto loss = dmenc::brq_loss(logits, codes, masked);
    CHECK(loss.value()(0, 0) ==
          doctest::Approx(std::log(static_cast<double>(K))).epsilon(1e-6));
  }
}

TEST_CASE("masked-prediction loss ignores unmasked rows") {
  const index_t T = 6, K = 8;
  MatD base = MatD::Zero(T, K);
  VecI codes(T);
  codes << 1, 2, 3, 4, 5, 6;
  std::vector<uint8_t> masked = {1, 0, 1, 0, 1, 0};
  auto l1 = dmenc::brq_loss(VarD::parameter(base), codes, masked);
  MatD spiked = base;
  spiked.row(1).setConstant(50.0);
  spiked.row(3).setConstant(-30.0);
  auto l2 = dmenc::brq_loss(VarD::parameter(spiked), codes, masked);
  CHECK(l1.value()(0, 0) == doctest::Approx(l2.value()(0, 0)).epsilon(1e-12));
}

TEST_CASE("distillation loss spans all frames and rewards confident hits") {
  const index_t T = 5, K = 7;
  VecI codes(T);
  codes << 0, 3, 6, 2, 2;
  auto uniform = dmenc::distill_loss(VarD::parameter(MatD::Zero(T, K)), codes);
  CHECK(uniform.value()(0, 0) ==
        doctest::Approx(std::log(7.0)).epsilon(1e-9));
  MatD confident = MatD::Zero(T, K);
  for (index_t t = 0; t < T; ++t) confident(t, codes(t)) = 30.0;
  auto sharp = dmenc::distill_loss(VarD::parameter(confident), codes);
  CHECK(sharp.value()(0, 0) < 1e-6);
}

TEST_CASE("lattice loss adapters push their analytic gradient into the tape") {
  Rng rng(129);
  const index_t T = 3;
  const std::vector<int> labels = {1, 2};
  MatD logits(T * 3, 4);
  for (index_t i = 0; i < logits.rows(); ++i)
    for (index_t j = 0; j < logits.cols(); ++j) logits(i, j) = rng.normal();
  const auto direct = dmenc::rnnt_loss(logits, labels, T);
  auto v = VarD::parameter(logits);
  auto loss = dmenc::rnnt_loss_op(v, labels, T);
  CHECK(loss.value()(0, 0) == doctest::Approx(direct.loss).epsilon(1e-12));
  dmenc::tape::backward(loss);
  CHECK((v.grad() - direct.grad).array().abs().maxCoeff() < 1e-12);

  const auto cdirect = dmenc::ctc_loss(logits, labels);
  auto v2 = VarD::parameter(logits);
  auto closs = dmenc::ctc_loss_op(v2, labels);
  CHECK(closs.value()(0, 0) == doctest::Approx(cdirect.loss).epsilon(1e-12));
  dmenc::tape::backward(closs);
  CHECK((v2.grad() - cdirect.grad).array().abs().maxCoeff() < 1e-12);
}

TEST_CASE("spectrogram masking zeroes whole rows or columns and nothing else") {
  Rng data_rng(130);
  const MatF input =
      random_matf(40, 30, data_rng).array() + 5.0f;  // keep entries nonzero
  dmenc::SpecAugConfig cfg;
  cfg.n_freq_masks = 2;
  cfg.max_freq_width = 6;
  cfg.n_time_masks = 2;
  cfg.max_time_width = 5;
  Rng rng(131);
  const MatF out = dmenc::specaug(input, cfg, rng);
  std::vector<bool> col_zero(30, true), row_zero(40, true);
  for (index_t t = 0; t < 40; ++t)
    for (index_t d = 0; d < 30; ++d) {
      if (out(t, d) != 0.0f) {
        CHECK(out(t, d) == input(t, d));
        col_zero[static_cast<std::size_t>(d)] = false;
        row_zero[static_cast<std::size_t>(t)] = false;
      }
    }
  // Every zeroed entry is covered by a fully zero row or column.
  for (index_t t = 0; t < 40; ++t)
    for (index_t d = 0; d < 30; ++d)
      if (out(t, d) == 0.0f)
        CHECK((col_zero[static_cast<std::size_t>(d)] ||
               row_zero[static_cast<std::size_t>(t)]));
  // Width limits hold.
  CHECK(std::count(col_zero.begin(), col_zero.end(), true) <= 12);
  CHECK(std::count(row_zero.begin(), row_zero.end(), true) <= 10);

  // Same seed, same masks.
  Rng rng2(131);
  const MatF out2 = dmenc::specaug(input, cfg, rng2);
  CHECK(out == out2);
}

TEST_CASE("derived random streams are tag- and index-separated") {
  Rng a(Rng::derive(5, 0x1111u));
  Rng b(Rng::derive(5, 0x2222u));
  Rng c(Rng::derive(5, 0x1111u));
  bool all_same = true;
  for (int i = 0; i < 16; ++i) {
    const double va = a.normal(), vb = b.normal(), vc = c.normal();
    if (va != vb) all_same = false;
    CHECK(va == vc);
  }
  CHECK_FALSE(all_same);

  Rng s1(Rng::derive(5, 0x3333u, 1));
  Rng s2(Rng::derive(5, 0x3333u, 2));
  bool step_same = true;
  for (int i = 0; i < 16; ++i)
    if (s1.normal() != s2.normal()) step_same = false;
  CHECK_FALSE(step_same);
}
