// dmenc/tape.hpp

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

// Reverse-mode autodiff over dense Eigen matrices. Every value is a matrix
// node in a dynamically built DAG; ops are free functions that compute the
// value eagerly and register a pullback closure. backward() runs the
// pullbacks in reverse topological order. Scalars are 1x1 matrices.

#ifndef DMENC_TAPE_HPP_
#define DMENC_TAPE_HPP_

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dmenc/common.hpp"

namespace dmenc {
namespace tape {

template <typename S>
struct Node {
  Mat<S> value;
  Mat<S> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<void(Node<S>&)> pullback;

  void accumulate(const Mat<S>& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) grad = Mat<S>::Zero(value.rows(), value.cols());
    grad += g;
  }
};

template <typename S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Var constant(Mat<S> v) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(v);
    return Var(n);
  }

  static Var parameter(Mat<S> v) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(v);
    n->requires_grad = true;
    return Var(n);
  }

  bool valid() const { return node_ != nullptr; }
  const Mat<S>& value() const { return node_->value; }
  Mat<S>& mutable_value() { return node_->value; }
  const Mat<S>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void reset_grad() { node_->grad.resize(0, 0); }
  std::shared_ptr<Node<S>> node() const { return node_; }

  index_t rows() const { return node_->value.rows(); }
  index_t cols() const { return node_->value.cols(); }

  // Gradient as a zero matrix when the node never received one.
  Mat<S> grad_or_zero() const {
    if (node_->grad.size() == 0) return Mat<S>::Zero(rows(), cols());
    return node_->grad;
  }

 private:
  std::shared_ptr<Node<S>> node_;
};

namespace internal {

template <typename S>
Var<S> make_op(Mat<S> value, std::vector<std::shared_ptr<Node<S>>> parents,
               std::function<void(Node<S>&)> pullback) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->pullback = std::move(pullback);
  }
  return Var<S>(n);
}

}  // namespace internal

// ---- structural ops ----

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  DMENC_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
  return internal::make_op<S>(
      a.value() + b.value(), {a.node(), b.node()}, [](Node<S>& n) {
        n.parents[0]->accumulate(n.grad);
        n.parents[1]->accumulate(n.grad);
      });
}

template <typename S>
Var<S> add_rowvec(const Var<S>& a, const Var<S>& rv) {
  DMENC_CHECK(rv.rows() == 1 && rv.cols() == a.cols(), "add_rowvec shape mismatch");
  Mat<S> v = a.value();
  v.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(
      rv.value().data(), rv.cols());
  return internal::make_op<S>(std::move(v), {a.node(), rv.node()}, [](Node<S>& n) {
    n.parents[0]->accumulate(n.grad);
    n.parents[1]->accumulate(n.grad.colwise().sum());
  });
}

template <typename S>
Var<S> scale(const Var<S>& a, S c) {
  return internal::make_op<S>(a.value() * c, {a.node()}, [c](Node<S>& n) {
    n.parents[0]->accumulate(n.grad * c);
  });
}

// a scaled by a 1x1 tape scalar.
template <typename S>
Var<S> scale_by(const Var<S>& a, const Var<S>& s) {
  DMENC_CHECK(s.rows() == 1 && s.cols() == 1, "scale_by needs a 1x1 scalar");
  return internal::make_op<S>(
      a.value() * s.value()(0, 0), {a.node(), s.node()}, [](Node<S>& n) {
        n.parents[0]->accumulate(n.grad * n.parents[1]->value(0, 0));
        Mat<S> gs(1, 1);
        gs(0, 0) = n.grad.cwiseProduct(n.parents[0]->value).sum();
        n.parents[1]->accumulate(gs);
      });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  DMENC_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), "mul shape mismatch");
  return internal::make_op<S>(
      a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](Node<S>& n) {
        n.parents[0]->accumulate(n.grad.cwiseProduct(n.parents[1]->value));
        n.parents[1]->accumulate(n.grad.cwiseProduct(n.parents[0]->value));
      });
}

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  DMENC_CHECK(a.cols() == b.rows(), "matmul inner dims " << a.cols() << " vs " << b.rows());
  return internal::make_op<S>(a.value() * b.value(), {a.node(), b.node()}, [](Node<S>& n) {
    n.parents[0]->accumulate(n.grad * n.parents[1]->value.transpose());
    n.parents[1]->accumulate(n.parents[0]->value.transpose() * n.grad);
  });
}

// a * b^T
template <typename S>
Var<S> matmul_nt(const Var<S>& a, const Var<S>& b) {
  DMENC_CHECK(a.cols() == b.cols(), "matmul_nt inner dims");
  return internal::make_op<S>(a.value() * b.value().transpose(), {a.node(), b.node()},
                              [](Node<S>& n) {
                                n.parents[0]->accumulate(n.grad * n.parents[1]->value);
                                n.parents[1]->accumulate(n.grad.transpose() *
                                                         n.parents[0]->value);
                              });
}

template <typename S>
Var<S> slice_cols(const Var<S>& a, index_t j0, index_t ncols) {
  DMENC_CHECK(j0 >= 0 && j0 + ncols <= a.cols(), "slice_cols out of range");
  return internal::make_op<S>(
      a.value().middleCols(j0, ncols), {a.node()}, [j0, ncols](Node<S>& n) {
        Mat<S> g = Mat<S>::Zero(n.parents[0]->value.rows(), n.parents[0]->value.cols());
        g.middleCols(j0, ncols) = n.grad;
        n.parents[0]->accumulate(g);
      });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  DMENC_CHECK(!parts.empty(), "concat_cols of nothing");
  index_t rows = parts[0].rows(), cols = 0;
  for (const auto& p : parts) {
    DMENC_CHECK(p.rows() == rows, "concat_cols row mismatch");
    cols += p.cols();
  }
  Mat<S> v(rows, cols);
  std::vector<std::shared_ptr<Node<S>>> parents;
  index_t at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    parents.push_back(p.node());
    at += p.cols();
  }
  return internal::make_op<S>(std::move(v), std::move(parents), [](Node<S>& n) {
    index_t at = 0;
    for (auto& p : n.parents) {
      p->accumulate(n.grad.middleCols(at, p->value.cols()));
      at += p->value.cols();
    }
  });
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  DMENC_CHECK(!parts.empty(), "concat_rows of nothing");
  index_t cols = parts[0].cols(), rows = 0;
  for (const auto& p : parts) {
    DMENC_CHECK(p.cols() == cols, "concat_rows column mismatch");
    rows += p.rows();
  }
  Mat<S> v(rows, cols);
  std::vector<std::shared_ptr<Node<S>>> parents;
  index_t at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    parents.push_back(p.node());
    at += p.rows();
  }
  return internal::make_op<S>(std::move(v), std::move(parents), [](Node<S>& n) {
    index_t at = 0;
    for (auto& p : n.parents) {
      p->accumulate(n.grad.middleRows(at, p->value.rows()));
      at += p->value.rows();
    }
  });
}

// Each row repeated m times consecutively: row i -> rows [i*m, (i+1)*m).
template <typename S>
Var<S> repeat_rows_each(const Var<S>& a, index_t m) {
  Mat<S> v(a.rows() * m, a.cols());
  for (index_t i = 0; i < a.rows(); ++i)
    v.middleRows(i * m, m).rowwise() = a.value().row(i);
  return internal::make_op<S>(std::move(v), {a.node()}, [m](Node<S>& n) {
    const auto& p = n.parents[0];
    Mat<S> g(p->value.rows(), p->value.cols());
    for (index_t i = 0; i < p->value.rows(); ++i)
      g.row(i) = n.grad.middleRows(i * m, m).colwise().sum();
    p->accumulate(g);
  });
}

// Whole matrix stacked m times.
template <typename S>
Var<S> tile_rows(const Var<S>& a, index_t m) {
  Mat<S> v(a.rows() * m, a.cols());
  for (index_t i = 0; i < m; ++i) v.middleRows(i * a.rows(), a.rows()) = a.value();
  return internal::make_op<S>(std::move(v), {a.node()}, [m](Node<S>& n) {
    const auto& p = n.parents[0];
    Mat<S> g = Mat<S>::Zero(p->value.rows(), p->value.cols());
    for (index_t i = 0; i < m; ++i) g += n.grad.middleRows(i * p->value.rows(), p->value.rows());
    p->accumulate(g);
  });
}

template <typename S>
Var<S> mean_rows(const Var<S>& a) {
  Mat<S> v = a.value().colwise().mean();
  return internal::make_op<S>(std::move(v), {a.node()}, [](Node<S>& n) {
    const auto& p = n.parents[0];
    const S inv = S(1) / static_cast<S>(p->value.rows());
    Mat<S> g(p->value.rows(), p->value.cols());
    g.rowwise() = Eigen::Matrix<S, 1, Eigen::Dynamic>(n.grad.row(0)) * inv;
    p->accumulate(g);
  });
}

// ---- pointwise nonlinearities ----

template <typename S>
Var<S> sigmoid(const Var<S>& a) {
  Mat<S> v = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  return internal::make_op<S>(v, {a.node()}, [v](Node<S>& n) {
    n.parents[0]->accumulate(
        (n.grad.array() * v.array() * (S(1) - v.array())).matrix());
  });
}

template <typename S>
Var<S> tanh_(const Var<S>& a) {
  Mat<S> v = a.value().array().tanh().matrix();
  return internal::make_op<S>(v, {a.node()}, [v](Node<S>& n) {
    n.parents[0]->accumulate((n.grad.array() * (S(1) - v.array().square())).matrix());
  });
}

template <typename S>
Var<S> swish(const Var<S>& a) {
  Mat<S> sig = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  Mat<S> v = a.value().cwiseProduct(sig);
  return internal::make_op<S>(v, {a.node()}, [sig](Node<S>& n) {
    const auto& x = n.parents[0]->value;
    n.parents[0]->accumulate(
        (n.grad.array() * sig.array() * (S(1) + x.array() * (S(1) - sig.array())))
            .matrix());
  });
}

// Gated linear unit over column halves: y = a1 .* sigmoid(a2).
template <typename S>
Var<S> glu(const Var<S>& a) {
  DMENC_CHECK(a.cols() % 2 == 0, "glu needs an even column count");
  const index_t d = a.cols() / 2;
  Mat<S> lin = a.value().leftCols(d);
  Mat<S> gate = (S(1) / (S(1) + (-a.value().rightCols(d).array()).exp())).matrix();
  Mat<S> v = lin.cwiseProduct(gate);
  return internal::make_op<S>(v, {a.node()}, [d, gate](Node<S>& n) {
    const auto& x = n.parents[0]->value;
    Mat<S> g = Mat<S>::Zero(x.rows(), x.cols());
    g.leftCols(d) = n.grad.cwiseProduct(gate);
    g.rightCols(d) = (n.grad.array() * x.leftCols(d).array() * gate.array() *
                      (S(1) - gate.array()))
                         .matrix();
    n.parents[0]->accumulate(g);
  });
}

// ---- normalization / attention ----

template <typename S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                  S eps = S(1e-5)) {
  DMENC_CHECK(gamma.rows() == 1 && gamma.cols() == x.cols(), "layer_norm gamma shape");
  DMENC_CHECK(beta.rows() == 1 && beta.cols() == x.cols(), "layer_norm beta shape");
  const index_t d = x.cols();
  Vec<S> inv_std(x.rows());
  Mat<S> xhat(x.rows(), d);
  for (index_t t = 0; t < x.rows(); ++t) {
    const S mu = x.value().row(t).mean();
    auto c = (x.value().row(t).array() - mu).eval();
    const S var = c.square().mean();
    inv_std(t) = S(1) / std::sqrt(var + eps);
    xhat.row(t) = (c * inv_std(t)).matrix();
  }
  Mat<S> v = (xhat.array().rowwise() *
              Eigen::Array<S, 1, Eigen::Dynamic>(gamma.value().row(0).array()))
                 .matrix();
  v.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(beta.value().row(0));
  return internal::make_op<S>(
      std::move(v), {x.node(), gamma.node(), beta.node()},
      [xhat, inv_std](Node<S>& n) {
        const auto& gamma_v = n.parents[1]->value;
        const index_t d = xhat.cols();
        Mat<S> d1 = (n.grad.array().rowwise() *
                     Eigen::Array<S, 1, Eigen::Dynamic>(gamma_v.row(0).array()))
                        .matrix();
        Mat<S> gx(xhat.rows(), d);
        for (index_t t = 0; t < xhat.rows(); ++t) {
          const S m1 = d1.row(t).mean();
          const S m2 = d1.row(t).cwiseProduct(xhat.row(t)).mean();
          gx.row(t) =
              ((d1.row(t).array() - m1 - xhat.row(t).array() * m2) * inv_std(t))
                  .matrix();
        }
        n.parents[0]->accumulate(gx);
        n.parents[1]->accumulate(n.grad.cwiseProduct(xhat).colwise().sum());
        n.parents[2]->accumulate(n.grad.colwise().sum());
      });
}

// Row-wise softmax of (x + bias); bias is an additive constant (0 or -inf).
// Entries with -inf bias get exactly zero probability and zero gradient.
template <typename S>
Var<S> softmax_rows_biased(const Var<S>& x, const Mat<S>& bias) {
  DMENC_CHECK(bias.rows() == x.rows() && bias.cols() == x.cols(), "bias shape mismatch");
  Mat<S> v(x.rows(), x.cols());
  for (index_t t = 0; t < x.rows(); ++t) {
    auto row = (x.value().row(t) + bias.row(t)).eval();
    const S m = row.maxCoeff();
    DMENC_CHECK(m > -std::numeric_limits<S>::infinity(),
                "softmax row " << t << " fully masked");
    auto e = (row.array() - m).exp().eval();
    v.row(t) = (e / e.sum()).matrix();
  }
  return internal::make_op<S>(v, {x.node()}, [v](Node<S>& n) {
    Mat<S> g(v.rows(), v.cols());
    for (index_t t = 0; t < v.rows(); ++t) {
      const S dot = n.grad.row(t).cwiseProduct(v.row(t)).sum();
      g.row(t) = ((n.grad.row(t).array() - dot) * v.row(t).array()).matrix();
    }
    n.parents[0]->accumulate(g);
  });
}

// ---- causal convolutions ----

// Depthwise: y[t,c] = b[c] + sum_k w[k,c] * x[t-(K-1)+k, c], zero left pad.
template <typename S>
Var<S> causal_depthwise_conv(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  const index_t K = w.rows();
  const index_t d = x.cols();
  DMENC_CHECK(w.cols() == d && b.rows() == 1 && b.cols() == d, "depthwise conv shapes");
  const index_t T = x.rows();
  Mat<S> v(T, d);
  v.rowwise() = Eigen::Matrix<S, 1, Eigen::Dynamic>(b.value().row(0));
  for (index_t t = 0; t < T; ++t) {
    for (index_t k = 0; k < K; ++k) {
      const index_t src = t - (K - 1) + k;
      if (src < 0) continue;
      v.row(t).array() += w.value().row(k).array() * x.value().row(src).array();
    }
  }
  return internal::make_op<S>(
      std::move(v), {x.node(), w.node(), b.node()}, [K](Node<S>& n) {
        const auto& xv = n.parents[0]->value;
        const auto& wv = n.parents[1]->value;
        const index_t T = xv.rows(), d = xv.cols();
        Mat<S> gx = Mat<S>::Zero(T, d);
        Mat<S> gw = Mat<S>::Zero(K, d);
        for (index_t t = 0; t < T; ++t) {
          for (index_t k = 0; k < K; ++k) {
            const index_t src = t - (K - 1) + k;
            if (src < 0) continue;
            gx.row(src).array() += n.grad.row(t).array() * wv.row(k).array();
            gw.row(k).array() += n.grad.row(t).array() * xv.row(src).array();
          }
        }
        n.parents[0]->accumulate(gx);
        n.parents[1]->accumulate(gw);
        n.parents[2]->accumulate(n.grad.colwise().sum());
      });
}

// Full causal convolution as an unrolled matmul: W is [(K*din) x dout] with
// tap k occupying rows [k*din, (k+1)*din); tap K-1 is the current frame.
template <typename S>
Mat<S> causal_unroll(const Mat<S>& x, index_t K) {
  const index_t T = x.rows(), din = x.cols();
  Mat<S> u = Mat<S>::Zero(T, K * din);
  for (index_t k = 0; k < K; ++k) {
    const index_t shift = K - 1 - k;  // tap k reads frame t - shift
    if (shift >= T) continue;
    u.block(shift, k * din, T - shift, din) = x.topRows(T - shift);
  }
  return u;
}

template <typename S>
Var<S> causal_conv_proj(const Var<S>& x, const Var<S>& w, const Var<S>& b, index_t K) {
  const index_t din = x.cols();
  DMENC_CHECK(w.rows() == K * din, "causal_conv_proj weight rows");
  DMENC_CHECK(b.rows() == 1 && b.cols() == w.cols(), "causal_conv_proj bias shape");
  Mat<S> u = causal_unroll(x.value(), K);
  Mat<S> v = u * w.value();
  v.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b.value().row(0));
  return internal::make_op<S>(
      std::move(v), {x.node(), w.node(), b.node()}, [u, K, din](Node<S>& n) {
        const index_t T = n.parents[0]->value.rows();
        n.parents[1]->accumulate(u.transpose() * n.grad);
        n.parents[2]->accumulate(n.grad.colwise().sum());
        if (n.parents[0]->requires_grad) {
          Mat<S> gu = n.grad * n.parents[1]->value.transpose();
          Mat<S> gx = Mat<S>::Zero(T, din);
          for (index_t k = 0; k < K; ++k) {
            const index_t shift = K - 1 - k;
            if (shift >= T) continue;
            gx.topRows(T - shift) += gu.block(shift, k * din, T - shift, din);
          }
          n.parents[0]->accumulate(gx);
        }
      });
}

// ---- losses ----

// Weighted mean cross entropy over rows; weights must sum to a positive
// value. Returns a 1x1 scalar.
template <typename S>
Var<S> cross_entropy_rows(const Var<S>& logits, const std::vector<int>& targets,
                          const Vec<S>& weights) {
  const index_t N = logits.rows();
  DMENC_CHECK(static_cast<index_t>(targets.size()) == N, "target count mismatch");
  DMENC_CHECK(weights.size() == N, "weight count mismatch");
  const S wsum = weights.sum();
  DMENC_CHECK(wsum > S(0), "cross entropy needs positive total weight");
  Mat<S> probs(N, logits.cols());
  S loss = 0;
  for (index_t i = 0; i < N; ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    DMENC_CHECK(y >= 0 && y < logits.cols(), "target " << y << " out of range");
    auto row = logits.value().row(i);
    const S m = row.maxCoeff();
    auto e = (row.array() - m).exp().eval();
    const S z = e.sum();
    probs.row(i) = (e / z).matrix();
    loss -= weights(i) * (row(y) - m - std::log(z));
  }
  loss /= wsum;
  Mat<S> out(1, 1);
  out(0, 0) = loss;
  return internal::make_op<S>(
      std::move(out), {logits.node()}, [probs, targets, weights, wsum](Node<S>& n) {
        const S g = n.grad(0, 0);
        Mat<S> gl = probs;
        for (index_t i = 0; i < gl.rows(); ++i) {
          gl(i, targets[static_cast<std::size_t>(i)]) -= S(1);
          gl.row(i) *= g * weights(i) / wsum;
        }
        n.parents[0]->accumulate(gl);
      });
}

template <typename S>
Var<S> mse_loss(const Var<S>& pred, const Mat<S>& target) {
  DMENC_CHECK(pred.rows() == target.rows() && pred.cols() == target.cols(),
              "mse shape mismatch");
  Mat<S> diff = pred.value() - target;
  Mat<S> out(1, 1);
  out(0, 0) = diff.array().square().mean();
  return internal::make_op<S>(std::move(out), {pred.node()}, [diff](Node<S>& n) {
    const S scale = n.grad(0, 0) * S(2) / static_cast<S>(diff.size());
    n.parents[0]->accumulate(diff * scale);
  });
}

// A scalar loss whose gradient w.r.t. its single parent was computed outside
// the tape (lattice losses with analytic gradients).
template <typename S>
Var<S> external_scalar(S loss, Mat<S> grad_wrt_parent, const Var<S>& parent) {
  DMENC_CHECK(grad_wrt_parent.rows() == parent.rows() &&
                  grad_wrt_parent.cols() == parent.cols(),
              "external gradient shape mismatch");
  Mat<S> out(1, 1);
  out(0, 0) = loss;
  return internal::make_op<S>(std::move(out), {parent.node()},
                              [g = std::move(grad_wrt_parent)](Node<S>& n) {
                                n.parents[0]->accumulate(g * n.grad(0, 0));
                              });
}

// ---- backward ----

template <typename S>
void backward(const Var<S>& loss) {
  DMENC_CHECK(loss.rows() == 1 && loss.cols() == 1, "backward needs a scalar loss");
  DMENC_CHECK(loss.requires_grad(), "loss does not depend on any parameter");

  // Iterative DFS post-order.
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> visited;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad = Mat<S>::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->pullback && n->grad.size() != 0) n->pullback(*n);
  }
}

}  // namespace tape
}  // namespace dmenc

#endif  // DMENC_TAPE_HPP_
