// tests/test_support.hpp

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

#ifndef DMENC_TESTS_TEST_SUPPORT_HPP_
#define DMENC_TESTS_TEST_SUPPORT_HPP_

#include <doctest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dmenc/rng.hpp"
#include "dmenc/tape.hpp"

namespace dmenc_test {

// Unique scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("dmenc_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline dmenc::Mat<double> random_mat(dmenc::index_t rows, dmenc::index_t cols,
                                     dmenc::Rng& rng, double scale = 1.0) {
  dmenc::Mat<double> m(rows, cols);
  for (dmenc::index_t j = 0; j < cols; ++j)
    for (dmenc::index_t i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

inline dmenc::MatF random_matf(dmenc::index_t rows, dmenc::index_t cols,
                               dmenc::Rng& rng, double scale = 1.0) {
  dmenc::MatF m(rows, cols);
  for (dmenc::index_t j = 0; j < cols; ++j)
    for (dmenc::index_t i = 0; i < rows; ++i)
      m(i, j) = static_cast<float>(scale * rng.normal());
  return m;
}

// Central finite-difference check of every listed parameter against the
// analytic gradient produced by one backward pass. `make_loss` must rebuild
// the whole graph from the parameters' current values.
inline void gradcheck(
    const std::vector<dmenc::tape::Var<double>*>& params,
    const std::function<dmenc::tape::Var<double>()>& make_loss,
    double eps = 1e-5, double tol = 1e-4) {
  for (auto* p : params) p->reset_grad();
  auto loss = make_loss();
  REQUIRE(loss.rows() == 1);
  REQUIRE(loss.cols() == 1);
  dmenc::tape::backward(loss);
  std::vector<dmenc::Mat<double>> grads;
  grads.reserve(params.size());
  for (auto* p : params) grads.push_back(p->grad_or_zero());

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto* p = params[pi];
    for (dmenc::index_t j = 0; j < p->cols(); ++j) {
      for (dmenc::index_t i = 0; i < p->rows(); ++i) {
        const double orig = p->mutable_value()(i, j);
        p->mutable_value()(i, j) = orig + eps;
        const double lp = make_loss().value()(0, 0);
        p->mutable_value()(i, j) = orig - eps;
        const double lm = make_loss().value()(0, 0);
        p->mutable_value()(i, j) = orig;
        const double fd = (lp - lm) / (2.0 * eps);
        const double an = grads[pi](i, j);
        const double err = std::abs(an - fd) / (1.0 + std::abs(fd));
        if (err >= tol) {
          CAPTURE(pi);
          CAPTURE(i);
          CAPTURE(j);
          CAPTURE(an);
          CAPTURE(fd);
        }
        REQUIRE(err < tol);
      }
    }
  }
}

}  // namespace dmenc_test

#endif  // DMENC_TESTS_TEST_SUPPORT_HPP_
