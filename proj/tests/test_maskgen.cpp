// tests/test_maskgen.cpp

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

#include <map>
#include <set>
#include <vector>

#include "dmenc/maskgen.hpp"

namespace {

using dmenc::AttentionMask;
using dmenc::ContextSpec;
using dmenc::build_mask;
using dmenc::index_t;
using dmenc::kInfFrames;
using dmenc::kInfSeconds;
using dmenc::MatB;
using dmenc::ReachTable;
using dmenc::Rng;
using dmenc::SamplingSpace;
using dmenc::to_frames;

// Independent oracle: L-fold boolean composition of the allow matrix, done
// the slow O(L T^3) way on a plain bool matrix. reach_L(t,s) = exists a path
// t -> ... -> s through L masked-attention layers.
MatB naive_reach(const AttentionMask& mask, int n_layers) {
  const index_t T = mask.T();
  MatB base(T, T);
  for (index_t t = 0; t < T; ++t)
    for (index_t s = 0; s < T; ++s) base(t, s) = mask.allowed(t, s);
  MatB reach = base;
  for (int l = 1; l < n_layers; ++l) {
    MatB next(T, T);
    next.setConstant(false);
    for (index_t t = 0; t < T; ++t)
      for (index_t m = 0; m < T; ++m)
        if (base(t, m))
          for (index_t s = 0; s < T; ++s)
            if (reach(m, s)) next(t, s) = true;
    reach = next;
  }
  return reach;
}

ReachTable naive_reach_table(const AttentionMask& mask, int n_layers) {
  const MatB r = naive_reach(mask, n_layers);
  ReachTable out;
  out.min_reach.resize(mask.T());
  out.max_reach.resize(mask.T());
  for (index_t t = 0; t < mask.T(); ++t) {
    index_t mn = -1, mx = -1;
    for (index_t s = 0; s < mask.T(); ++s)
      if (r(t, s)) {
        if (mn < 0) mn = s;
        mx = s;
      }
    out.min_reach(t) = mn;
    out.max_reach(t) = mx;
  }
  return out;
}

std::set<index_t> allowed_set(const AttentionMask& m, index_t t) {
  std::set<index_t> s;
  for (index_t j = 0; j < m.T(); ++j)
    if (m.allowed(t, j)) s.insert(j);
  return s;
}

}  // namespace

TEST_CASE("to_frames rounds half-up at the 40 ms rate") {
  CHECK(to_frames(5.4) == 135);
  CHECK(to_frames(0.0) == 0);
  CHECK(to_frames(1.8) == 45);
  CHECK(to_frames(1.0) == 25);
  CHECK(to_frames(kInfSeconds) == kInfFrames);
  // Half-up at the midpoint: 0.02 s is exactly half a frame.
  CHECK(to_frames(0.02) == 1);
  CHECK(to_frames(0.019) == 0);
  CHECK(to_frames(0.06) == 2);
  CHECK(to_frames(4.6) == 115);
  CHECK(to_frames(3.6) == 90);
}

TEST_CASE("chunked mask: T=6 lb=2 la=2 row by row") {
  const auto m = build_mask(6, 2, 2);
  CHECK(m.chunk_size() == 3);
  CHECK(allowed_set(m, 0) == std::set<index_t>{0, 1, 2});
  CHECK(allowed_set(m, 1) == std::set<index_t>{0, 1, 2});
  CHECK(allowed_set(m, 2) == std::set<index_t>{0, 1, 2});
  CHECK(allowed_set(m, 3) == std::set<index_t>{1, 2, 3, 4, 5});
  CHECK(allowed_set(m, 4) == std::set<index_t>{2, 3, 4, 5});
  CHECK(allowed_set(m, 5) == std::set<index_t>{3, 4, 5});
}

TEST_CASE("degenerate masks: full context and pure causal") {
  SUBCASE("infinite both ways is all-true") {
    const auto m = build_mask(4, kInfFrames, kInfFrames);
    for (index_t t = 0; t < 4; ++t)
      for (index_t s = 0; s < 4; ++s) CHECK(m.allowed(t, s));
  }
  SUBCASE("zero look-ahead with infinite look-back is lower-triangular") {
    const auto m = build_mask(4, kInfFrames, 0);
    CHECK(m.chunk_size() == 1);
    for (index_t t = 0; t < 4; ++t)
      for (index_t s = 0; s < 4; ++s) CHECK(m.allowed(t, s) == (s <= t));
  }
  SUBCASE("lb=0 la=0 leaves only the diagonal") {
    const auto m = build_mask(5, 0, 0);
    for (index_t t = 0; t < 5; ++t)
      for (index_t s = 0; s < 5; ++s) CHECK(m.allowed(t, s) == (s == t));
  }
}

TEST_CASE("mask invariants over a sweep of shapes") {
  const std::vector<std::int64_t> lbs = {0, 1, 2, 5, 17, kInfFrames};
  const std::vector<std::int64_t> las = {0, 1, 2, 3, 7, kInfFrames};
  for (index_t T : {1, 2, 3, 7, 16, 33}) {
    for (auto lb : lbs) {
      for (auto la : las) {
        const auto m = build_mask(T, lb, la);
        for (index_t t = 0; t < T; ++t) {
          // Self-attention is never masked.
          CHECK(m.allowed(t, t));
          // Within-chunk frames up to chunk_end are visible, subject to lb.
          const index_t ce = m.chunk_end(t);
          CHECK(ce >= t);
          for (index_t s = 0; s < T; ++s) {
            const bool in_past_window =
                dmenc::is_inf_frames(lb) || s >= t - lb;
            CHECK(m.allowed(t, s) == (in_past_window && s <= ce));
          }
        }
      }
    }
  }
}

TEST_CASE("enlarging look-back never removes an allowed entry") {
  const std::vector<std::int64_t> lbs = {0, 1, 2, 3, 8, 20, kInfFrames};
  for (index_t T : {5, 12, 30}) {
    for (std::int64_t la : {0LL, 1LL, 2LL, 5LL, (long long)kInfFrames}) {
      for (std::size_t i = 0; i + 1 < lbs.size(); ++i) {
        const auto small = build_mask(T, lbs[i], la);
        const auto big = build_mask(T, lbs[i + 1], la);
        for (index_t t = 0; t < T; ++t)
          for (index_t s = 0; s < T; ++s)
            if (small.allowed(t, s)) CHECK(big.allowed(t, s));
      }
    }
  }
}

TEST_CASE("enlarging look-ahead keeps entries when chunk sizes divide") {
  // Chunk grids nest only when the smaller chunk size divides the larger
  // one; then every small chunk sits inside a large chunk and no entry is
  // lost. Without divisibility the chunk boundaries move and entries near
  // them can disappear (checked explicitly below).
  const std::vector<std::pair<std::int64_t, std::int64_t>> nested = {
      {0, 1}, {0, 3}, {1, 3}, {1, 7}, {3, 7}, {0, kInfFrames}, {2, kInfFrames}};
  for (index_t T : {6, 13, 29}) {
    for (auto [la_small, la_big] : nested) {
      const auto small = build_mask(T, kInfFrames, la_small);
      const auto big = build_mask(T, kInfFrames, la_big);
      for (index_t t = 0; t < T; ++t)
        for (index_t s = 0; s < T; ++s)
          if (small.allowed(t, s)) CHECK(big.allowed(t, s));
    }
  }
}

TEST_CASE("non-nested chunk grids can lose entries when look-ahead grows") {
  // la=1 gives chunks {0,1},{2,3},... so frame 2 sees frame 3. la=2 gives
  // chunks {0,1,2},{3,4,5},... and frame 2 no longer sees frame 3. This is
  // a property of chunked masking, not a bug: look-ahead bounds the maximum
  // per-layer future, attained at chunk starts, not a per-frame guarantee.
  const auto la1 = build_mask(6, kInfFrames, 1);
  const auto la2 = build_mask(6, kInfFrames, 2);
  CHECK(la1.allowed(2, 3));
  CHECK_FALSE(la2.allowed(2, 3));
}

TEST_CASE("rule evaluation agrees with the dense matrix past the dense limit") {
  // Above kDenseMaskLimit the mask answers from the rule alone; spot-check
  // against a local recomputation of the rule.
  const index_t T = dmenc::kDenseMaskLimit + 10;
  const std::int64_t lb = 135, la = 25;
  const auto m = build_mask(T, lb, la);
  const std::int64_t C = la + 1;
  Rng rng(123);
  for (int k = 0; k < 2000; ++k) {
    const index_t t = static_cast<index_t>(rng.uniform_int(T));
    const index_t s = static_cast<index_t>(rng.uniform_int(T));
    const index_t ce = std::min<index_t>(T - 1, (t / C + 1) * C - 1);
    const bool expect = (s >= t - lb) && (s <= ce);
    CHECK(m.allowed(t, s) == expect);
  }
}

TEST_CASE("attention bias is zero on allowed entries and -inf elsewhere") {
  const auto m = build_mask(6, 2, 2);
  const auto b = m.bias<float>();
  for (index_t t = 0; t < 6; ++t)
    for (index_t s = 0; s < 6; ++s) {
      if (m.allowed(t, s)) {
        CHECK(b(t, s) == 0.0f);
      } else {
        CHECK(std::isinf(b(t, s)));
        CHECK(b(t, s) < 0.0f);
      }
    }
}

TEST_CASE("sample_context draws from the named supports") {
  SUBCASE("two-by-two support stays inside its four pairs") {
    const auto space = SamplingSpace::preset("T2");
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
      const auto ctx = dmenc::sample_context(space, rng);
      CHECK((ctx.lb_s == kInfSeconds || ctx.lb_s == 5.4));
      CHECK((ctx.la_s == 0.0 || ctx.la_s == kInfSeconds));
    }
  }
  SUBCASE("singleton space always returns its one pair") {
    const auto space = SamplingSpace::singleton(ContextSpec::streaming());
    Rng rng(11);
    for (int i = 0; i < 50; ++i) {
      const auto ctx = dmenc::sample_context(space, rng);
      CHECK(ctx.lb_s == 5.4);
      CHECK(ctx.la_s == 0.0);
    }
  }
  SUBCASE("four-by-four support is uniform over its 16 combinations") {
    const auto space = SamplingSpace::preset("T1");
    REQUIRE(space.l_past.size() == 4);
    REQUIRE(space.l_future.size() == 4);
    Rng rng(42);
    std::map<std::pair<double, double>, int> counts;
    const int n = 16000;
    for (int i = 0; i < n; ++i) {
      const auto ctx = dmenc::sample_context(space, rng);
      counts[{ctx.lb_s, ctx.la_s}]++;
    }
    CHECK(counts.size() == 16);
    for (const auto& [pair, c] : counts) {
      const double freq = static_cast<double>(c) / n;
      CHECK(std::abs(freq - 1.0 / 16.0) < 0.01);
    }
  }
  SUBCASE("largest preset support has the expected extent") {
    const auto space = SamplingSpace::preset("T3");
    CHECK(space.l_past.size() == 13);
    CHECK(space.l_future.size() == 11);
    CHECK(space.l_past.front() == kInfSeconds);
    CHECK(space.l_future.back() == kInfSeconds);
  }
}

TEST_CASE("receptive field after stacked layers") {
  SUBCASE("anchor values for T=6 lb=2 la=2") {
    const auto m = build_mask(6, 2, 2);
    const auto r1 = dmenc::receptive_field(m, 1);
    // One layer: per-row min and max of the allow sets.
    CHECK(r1.min_reach(0) == 0);
    CHECK(r1.max_reach(0) == 2);
    CHECK(r1.min_reach(3) == 1);
    CHECK(r1.max_reach(3) == 5);
    CHECK(r1.min_reach(5) == 3);
    CHECK(r1.max_reach(5) == 5);
    const auto r2 = dmenc::receptive_field(m, 2);
    CHECK(r2.min_reach(0) == 0);
    CHECK(r2.max_reach(0) == 2);
    CHECK(r2.min_reach(5) == 1);
    CHECK(r2.max_reach(5) == 5);
  }
  SUBCASE("matches the boolean-power oracle on random masks") {
    Rng rng(99);
    for (int trial = 0; trial < 30; ++trial) {
      const index_t T = 2 + static_cast<index_t>(rng.uniform_int(30));
      const std::int64_t lb = rng.uniform_int(8);
      const std::int64_t la =
          rng.uniform_int(4) == 0 ? kInfFrames : rng.uniform_int(6);
      const int L = 1 + static_cast<int>(rng.uniform_int(6));
      const auto m = build_mask(T, lb, la);
      const auto fast = dmenc::receptive_field(m, L);
      const auto slow = naive_reach_table(m, L);
      for (index_t t = 0; t < T; ++t) {
        CHECK(fast.min_reach(t) == slow.min_reach(t));
        CHECK(fast.max_reach(t) == slow.max_reach(t));
      }
    }
  }
  SUBCASE("hand-built masks go through the same reach machinery") {
    MatB allow(3, 3);
    allow.setConstant(false);
    allow(0, 0) = allow(1, 0) = allow(1, 1) = allow(2, 1) = allow(2, 2) = true;
    const auto m = AttentionMask::from_matrix(allow);
    const auto r2 = dmenc::receptive_field(m, 2);
    CHECK(r2.min_reach(2) == 0);
    CHECK(r2.max_reach(2) == 2);
  }
}

TEST_CASE("chunked masks never accumulate look-ahead across layers") {
  // The key property of chunk-based masking: the furthest future frame any
  // position can see is fixed by its chunk end and does not grow with
  // depth, because every frame inside a chunk shares the same chunk end.
  const auto space = SamplingSpace::preset("T1");
  for (index_t T : {1, 2, 5, 16, 37, 64}) {
    for (double lb_s : space.l_past) {
      for (double la_s : space.l_future) {
        const auto m = build_mask(T, {lb_s, la_s});
        CHECK(dmenc::verify_no_lookahead_accumulation(m, 20));
      }
    }
  }
}

TEST_CASE("fixed-window future masking does accumulate look-ahead") {
  // Counterexample: allow s <= t+2 for every t (sliding window, not
  // chunked). After two layers frame 0 reaches frame 4, so the one-layer
  // bound of 2 future frames is not preserved.
  const index_t T = 8;
  MatB allow(T, T);
  for (index_t t = 0; t < T; ++t)
    for (index_t s = 0; s < T; ++s) allow(t, s) = (s <= t + 2);
  const auto m = AttentionMask::from_matrix(allow);
  CHECK_FALSE(dmenc::verify_no_lookahead_accumulation(m, 2));
  // The naive composition confirms the leak.
  const auto r2 = naive_reach_table(m, 2);
  CHECK(r2.max_reach(0) == 4);
}

TEST_CASE("pure causal masks trivially pass the accumulation check") {
  for (index_t T : {1, 4, 19}) {
    const auto m = build_mask(T, kInfFrames, 0);
    CHECK(dmenc::verify_no_lookahead_accumulation(m, 12));
  }
}
