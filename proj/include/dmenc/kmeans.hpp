// dmenc/kmeans.hpp

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

// Offline embedding store, k-means fitting (k-means++ init, Lloyd updates,
// empty-cluster reseeding), and frame-level pseudo-label assignment.

#ifndef DMENC_KMEANS_HPP_
#define DMENC_KMEANS_HPP_

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmenc/common.hpp"
#include "dmenc/rng.hpp"
#include "dmenc/tensor_io.hpp"

namespace dmenc {

struct EmbeddingStore {
  std::vector<std::pair<std::string, MatF>> embeddings;
  std::string checkpoint_id;
  index_t block_index = -1;

  index_t total_frames() const {
    index_t n = 0;
    for (const auto& [id, m] : embeddings) n += m.rows();
    return n;
  }

  index_t dim() const {
    DMENC_CHECK(!embeddings.empty(), "empty embedding store");
    return embeddings.front().second.cols();
  }

  MatF flatten() const {
    MatF x(total_frames(), dim());
    index_t at = 0;
    for (const auto& [id, m] : embeddings) {
      x.middleRows(at, m.rows()) = m;
      at += m.rows();
    }
    return x;
  }

  void save(const std::filesystem::path& dir) const;
  static EmbeddingStore load(const std::filesystem::path& dir);
};

struct Centroids {
  MatF centers;  // [K x d]
  int iterations = 0;
  double inertia = 0.0;
  uint64_t seed = 0;

  void save(const std::filesystem::path& dir) const;
  static Centroids load(const std::filesystem::path& dir);
};

struct PseudoLabelStore {
  std::vector<std::pair<std::string, VecI>> codes;
  // Checkpoint the teacher embeddings came from; consumers refuse labels
  // whose source does not match their teacher.
  std::string checkpoint_id;

  void save(const std::filesystem::path& dir) const;
  static PseudoLabelStore load(const std::filesystem::path& dir);
};

namespace internal {

inline std::string safe_name(const std::string& utt_id) {
  std::string s = utt_id;
  for (char& c : s)
    if (c == '/' || c == '\\' || c == ':') c = '_';
  return s;
}

// Distances and means accumulate in double so inertia comparisons are stable.
inline double sqdist(const MatF& x, index_t i, const MatF& c, index_t k) {
  double d = 0;
  for (index_t j = 0; j < x.cols(); ++j) {
    const double diff = static_cast<double>(x(i, j)) - static_cast<double>(c(k, j));
    d += diff * diff;
  }
  return d;
}

}  // namespace internal

struct KmeansOptions {
  index_t K = 64;
  uint64_t seed = 0;
  int max_iters = 100;
  double rel_tol = 1e-4;
  double subsample = 1.0;  // fraction of frames used for fitting
};

inline index_t nearest_centroid(const MatF& x, index_t i, const MatF& centers) {
  index_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (index_t k = 0; k < centers.rows(); ++k) {
    const double d = internal::sqdist(x, i, centers, k);
    if (d < best_d) {  // strict: ties keep the lower index
      best_d = d;
      best = k;
    }
  }
  return best;
}

inline Centroids kmeans_fit(const MatF& data, const KmeansOptions& opt) {
  DMENC_CHECK(opt.K >= 1, "K must be positive");
  Rng rng(Rng::derive(opt.seed, 0x6b6d6e73u));
  MatF x = data;
  if (opt.subsample < 1.0) {
    const index_t keep = std::max<index_t>(
        opt.K, static_cast<index_t>(std::llround(opt.subsample * data.rows())));
    DMENC_CHECK(keep <= data.rows(), "subsample fraction out of range");
    // Partial Fisher-Yates over row indices.
    std::vector<index_t> idx(static_cast<std::size_t>(data.rows()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<index_t>(i);
    for (index_t i = 0; i < keep; ++i) {
      const index_t j = i + rng.uniform_int(data.rows() - i);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    x = MatF(keep, data.cols());
    for (index_t i = 0; i < keep; ++i)
      x.row(i) = data.row(idx[static_cast<std::size_t>(i)]);
  }
  const index_t N = x.rows();
  DMENC_CHECK(N >= opt.K, "need at least K=" << opt.K << " frames, have " << N);

  Centroids c;
  c.seed = opt.seed;
  c.centers = MatF(opt.K, x.cols());

  // k-means++ seeding.
  std::vector<double> d2(static_cast<std::size_t>(N),
                         std::numeric_limits<double>::infinity());
  c.centers.row(0) = x.row(rng.uniform_int(N));
  for (index_t k = 1; k < opt.K; ++k) {
    double total = 0;
    for (index_t i = 0; i < N; ++i) {
      const double d = internal::sqdist(x, i, c.centers, k - 1);
      if (d < d2[static_cast<std::size_t>(i)]) d2[static_cast<std::size_t>(i)] = d;
      total += d2[static_cast<std::size_t>(i)];
    }
    index_t pick = 0;
    if (total > 0) {
      double r = rng.uniform() * total, acc = 0;
      for (index_t i = 0; i < N; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_int(N);
    }
    c.centers.row(k) = x.row(pick);
  }

  std::vector<index_t> assign_idx(static_cast<std::size_t>(N), 0);
  double prev_inertia = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opt.max_iters; ++it) {
    double inertia = 0;
    std::vector<double> worst(static_cast<std::size_t>(opt.K), -1.0);
    std::vector<index_t> worst_idx(static_cast<std::size_t>(opt.K), 0);
    for (index_t i = 0; i < N; ++i) {
      const index_t k = nearest_centroid(x, i, c.centers);
      assign_idx[static_cast<std::size_t>(i)] = k;
      const double d = internal::sqdist(x, i, c.centers, k);
      inertia += d;
      if (d > worst[static_cast<std::size_t>(k)]) {
        worst[static_cast<std::size_t>(k)] = d;
        worst_idx[static_cast<std::size_t>(k)] = i;
      }
    }
    DMENC_CHECK(inertia <= prev_inertia * (1.0 + 1e-12) + 1e-12,
                "inertia increased: " << prev_inertia << " -> " << inertia);
    c.inertia = inertia;
    c.iterations = it + 1;
    if (prev_inertia < std::numeric_limits<double>::infinity()) {
      const double rel = (prev_inertia - inertia) / std::max(prev_inertia, 1e-30);
      if (rel < opt.rel_tol) break;
    }
    prev_inertia = inertia;

    Mat<double> sums = Mat<double>::Zero(opt.K, x.cols());
    std::vector<int64_t> counts(static_cast<std::size_t>(opt.K), 0);
    for (index_t i = 0; i < N; ++i) {
      const index_t k = assign_idx[static_cast<std::size_t>(i)];
      sums.row(k) += x.row(i).cast<double>();
      ++counts[static_cast<std::size_t>(k)];
    }
    for (index_t k = 0; k < opt.K; ++k) {
      if (counts[static_cast<std::size_t>(k)] > 0) {
        c.centers.row(k) =
            (sums.row(k) / static_cast<double>(counts[static_cast<std::size_t>(k)]))
                .cast<float>();
      } else {
        // Re-seed from the globally farthest point, consuming it so a second
        // empty cluster picks the next-farthest.
        double best = -1.0;
        index_t best_k = 0;
        for (index_t kk = 0; kk < opt.K; ++kk) {
          if (worst[static_cast<std::size_t>(kk)] > best) {
            best = worst[static_cast<std::size_t>(kk)];
            best_k = kk;
          }
        }
        c.centers.row(k) = x.row(worst_idx[static_cast<std::size_t>(best_k)]);
        worst[static_cast<std::size_t>(best_k)] = -1.0;
      }
    }
  }
  return c;
}

inline Centroids kmeans_fit(const EmbeddingStore& store, const KmeansOptions& opt) {
  return kmeans_fit(store.flatten(), opt);
}

inline PseudoLabelStore assign(const EmbeddingStore& store, const Centroids& c) {
  DMENC_CHECK(!store.embeddings.empty(), "empty embedding store");
  DMENC_CHECK(store.dim() == c.centers.cols(),
              "embedding dim " << store.dim() << " != centroid dim "
                               << c.centers.cols());
  PseudoLabelStore labels;
  for (const auto& [id, m] : store.embeddings) {
    VecI v(m.rows());
    for (index_t i = 0; i < m.rows(); ++i) v(i) = nearest_centroid(m, i, c.centers);
    labels.codes.emplace_back(id, std::move(v));
  }
  return labels;
}

// ---- persistence ----

inline void EmbeddingStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["checkpoint_id"] = checkpoint_id;
  index["block_index"] = block_index;
  index["utts"] = nlohmann::json::array();
  for (const auto& [id, m] : embeddings) {
    const std::string f = internal::safe_name(id) + ".bin";
    write_tensor(dir / f, m);
    index["utts"].push_back({{"utt_id", id}, {"file", f}, {"frames", m.rows()}});
  }
  std::ofstream os(dir / "index.json");
  os << index.dump(2) << "\n";
}

inline EmbeddingStore EmbeddingStore::load(const std::filesystem::path& dir) {
  std::ifstream is(dir / "index.json");
  DMENC_CHECK(is.good(), "cannot open " << (dir / "index.json"));
  nlohmann::json index = nlohmann::json::parse(is);
  EmbeddingStore store;
  store.checkpoint_id = index.value("checkpoint_id", "");
  store.block_index = index.value("block_index", -1);
  for (const auto& u : index.at("utts")) {
    MatF m = read_tensor<float>(dir / u.at("file").get<std::string>());
    store.embeddings.emplace_back(u.at("utt_id").get<std::string>(), std::move(m));
  }
  return store;
}

inline void Centroids::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_tensor(dir / "centroids.bin", centers);
  nlohmann::json meta;
  meta["iterations"] = iterations;
  meta["inertia"] = inertia;
  meta["seed"] = seed;
  meta["K"] = centers.rows();
  meta["dim"] = centers.cols();
  std::ofstream os(dir / "centroids.json");
  os << meta.dump(2) << "\n";
}

inline Centroids Centroids::load(const std::filesystem::path& dir) {
  Centroids c;
  c.centers = read_tensor<float>(dir / "centroids.bin");
  std::ifstream is(dir / "centroids.json");
  DMENC_CHECK(is.good(), "cannot open " << (dir / "centroids.json"));
  nlohmann::json meta = nlohmann::json::parse(is);
  c.iterations = meta.value("iterations", 0);
  c.inertia = meta.value("inertia", 0.0);
  c.seed = meta.value("seed", uint64_t{0});
  return c;
}

inline void PseudoLabelStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["checkpoint_id"] = checkpoint_id;
  index["utts"] = nlohmann::json::array();
  for (const auto& [id, v] : codes) {
    const std::string f = internal::safe_name(id) + ".codes.bin";
    write_codes(dir / f, v);
    index["utts"].push_back({{"utt_id", id}, {"file", f}, {"frames", v.size()}});
  }
  std::ofstream os(dir / "index.json");
  os << index.dump(2) << "\n";
}

inline PseudoLabelStore PseudoLabelStore::load(const std::filesystem::path& dir) {
  std::ifstream is(dir / "index.json");
  DMENC_CHECK(is.good(), "cannot open " << (dir / "index.json"));
  nlohmann::json index = nlohmann::json::parse(is);
  PseudoLabelStore store;
  store.checkpoint_id = index.value("checkpoint_id", "");
  for (const auto& u : index.at("utts")) {
    VecI v = read_codes(dir / u.at("file").get<std::string>());
    store.codes.emplace_back(u.at("utt_id").get<std::string>(), std::move(v));
  }
  return store;
}

}  // namespace dmenc

#endif  // DMENC_KMEANS_HPP_
