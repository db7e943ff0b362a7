// tests/test_kmeans.cpp

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

#include <vector>

#include "dmenc/kmeans.hpp"
#include "test_support.hpp"

namespace {

using dmenc::Centroids;
using dmenc::EmbeddingStore;
using dmenc::index_t;
using dmenc::KmeansOptions;
using dmenc::MatF;
using dmenc::Rng;
using dmenc_test::TempDir;

// Two well-separated Gaussian blobs: means +/-mu, unit-free sigma.
MatF two_blobs(index_t per_blob, index_t dim, float mu, float sigma,
               uint64_t seed) {
  Rng rng(seed);
  MatF x(2 * per_blob, dim);
  for (index_t i = 0; i < 2 * per_blob; ++i) {
    const float center = i < per_blob ? -mu : mu;
    for (index_t j = 0; j < dim; ++j)
      x(i, j) = center + sigma * static_cast<float>(rng.normal());
  }
  return x;
}

}  // namespace

TEST_CASE("two blobs ten sigmas apart are recovered exactly") {
  const float mu = 5.0f, sigma = 1.0f;  // centers 10 sigma apart
  const MatF x = two_blobs(100, 3, mu, sigma, 61);
  KmeansOptions opt;
  opt.K = 2;
  opt.seed = 62;
  const Centroids c = dmenc::kmeans_fit(x, opt);
  REQUIRE(c.centers.rows() == 2);
  // One center per blob, each within one sigma of the blob mean.
  float lo = c.centers.row(0).mean(), hi = c.centers.row(1).mean();
  if (lo > hi) std::swap(lo, hi);
  CHECK(std::abs(lo - (-mu)) < sigma);
  CHECK(std::abs(hi - mu) < sigma);
  // Every frame lands on its own blob's centroid.
  for (index_t i = 0; i < x.rows(); ++i) {
    const index_t k = dmenc::nearest_centroid(x, i, c.centers);
    const bool left = x.row(i).mean() < 0;
    const bool center_left = c.centers.row(k).mean() < 0;
    CHECK(left == center_left);
  }
}

TEST_CASE("more clusters never increase converged inertia") {
  const MatF x = two_blobs(80, 4, 3.0f, 1.5f, 63);
  double prev = std::numeric_limits<double>::infinity();
  for (index_t K : {2, 4, 8, 16}) {
    KmeansOptions opt;
    opt.K = K;
    opt.seed = 64;
    const Centroids c = dmenc::kmeans_fit(x, opt);
    CHECK(c.inertia <= prev * (1.0 + 1e-9));
    prev = c.inertia;
    CHECK(c.iterations >= 1);
  }
}

TEST_CASE("fitting is reproducible for a fixed seed") {
  const MatF x = two_blobs(50, 5, 2.0f, 1.0f, 65);
  KmeansOptions opt;
  opt.K = 6;
  opt.seed = 66;
  const Centroids a = dmenc::kmeans_fit(x, opt);
  const Centroids b = dmenc::kmeans_fit(x, opt);
  CHECK(a.centers == b.centers);
  CHECK(a.inertia == b.inertia);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("recorded inertia matches the final assignment distances") {
  const MatF x = two_blobs(60, 3, 2.5f, 1.2f, 67);
  KmeansOptions opt;
  opt.K = 4;
  opt.seed = 68;
  const Centroids c = dmenc::kmeans_fit(x, opt);
  double inertia = 0;
  for (index_t i = 0; i < x.rows(); ++i) {
    const index_t k = dmenc::nearest_centroid(x, i, c.centers);
    inertia += dmenc::internal::sqdist(x, i, c.centers, k);
  }
  CHECK(inertia == doctest::Approx(c.inertia).epsilon(1e-9));
}

TEST_CASE("subsampled fitting still separates easy blobs") {
  const MatF x = two_blobs(200, 3, 5.0f, 1.0f, 69);
  KmeansOptions opt;
  opt.K = 2;
  opt.seed = 70;
  opt.subsample = 0.2;
  const Centroids c = dmenc::kmeans_fit(x, opt);
  float lo = c.centers.row(0).mean(), hi = c.centers.row(1).mean();
  if (lo > hi) std::swap(lo, hi);
  CHECK(lo < -3.0f);
  CHECK(hi > 3.0f);
}

TEST_CASE("asking for more clusters than frames is a hard error") {
  MatF x(3, 2);
  x.setZero();
  KmeansOptions opt;
  opt.K = 8;
  CHECK_THROWS_AS(dmenc::kmeans_fit(x, opt), dmenc::Error);
}

TEST_CASE("duplicate-heavy data still yields finite centers") {
  // 2 distinct payload values for K=3 forces an empty-cluster reseed path.
  MatF x(30, 2);
  for (index_t i = 0; i < 30; ++i) {
    x(i, 0) = i < 15 ? 0.0f : 4.0f;
    x(i, 1) = i < 15 ? 0.0f : 4.0f;
  }
  KmeansOptions opt;
  opt.K = 3;
  opt.seed = 71;
  const Centroids c = dmenc::kmeans_fit(x, opt);
  CHECK(c.centers.allFinite());
  CHECK(c.inertia >= 0.0);
}

TEST_CASE("embedding and label stores round-trip through disk") {
  TempDir tmp("kmstore");
  Rng rng(72);
  EmbeddingStore store;
  store.checkpoint_id = "s2-abcdef";
  store.block_index = 3;
  MatF a = dmenc_test::random_matf(7, 4, rng);
  MatF b = dmenc_test::random_matf(5, 4, rng);
  store.embeddings.emplace_back("utt_a", a);
  store.embeddings.emplace_back("utt/b:1", b);  // exercises name sanitizing
  store.save(tmp.path / "emb");
  const auto back = EmbeddingStore::load(tmp.path / "emb");
  CHECK(back.checkpoint_id == "s2-abcdef");
  CHECK(back.block_index == 3);
  REQUIRE(back.embeddings.size() == 2);
  CHECK(back.embeddings[0].first == "utt_a");
  CHECK(back.embeddings[1].first == "utt/b:1");
  CHECK(back.embeddings[0].second == a);
  CHECK(back.embeddings[1].second == b);
  CHECK(back.total_frames() == 12);
  CHECK(back.dim() == 4);

  KmeansOptions opt;
  opt.K = 3;
  opt.seed = 73;
  const Centroids c = dmenc::kmeans_fit(store.flatten(), opt);
  c.save(tmp.path / "cent");
  const auto cb = Centroids::load(tmp.path / "cent");
  CHECK(cb.centers == c.centers);
  CHECK(cb.inertia == doctest::Approx(c.inertia));
  CHECK(cb.seed == c.seed);

  auto labels = dmenc::assign(store, c);
  labels.checkpoint_id = store.checkpoint_id;
  REQUIRE(labels.codes.size() == 2);
  CHECK(labels.codes[0].second.size() == 7);
  CHECK(labels.codes[1].second.size() == 5);
  for (const auto& [id, v] : labels.codes)
    for (index_t i = 0; i < v.size(); ++i) {
      CHECK(v(i) >= 0);
      CHECK(v(i) < 3);
    }
  labels.save(tmp.path / "lab");
  const auto lb = dmenc::PseudoLabelStore::load(tmp.path / "lab");
  CHECK(lb.checkpoint_id == "s2-abcdef");
  REQUIRE(lb.codes.size() == 2);
  CHECK(lb.codes[0].second == labels.codes[0].second);
  CHECK(lb.codes[1].second == labels.codes[1].second);
}

TEST_CASE("assignment refuses dimension mismatches") {
  EmbeddingStore store;
  store.embeddings.emplace_back("u", MatF(MatF::Zero(4, 5)));
  Centroids c;
  c.centers = MatF::Zero(2, 3);
  CHECK_THROWS_AS(dmenc::assign(store, c), dmenc::Error);
}
