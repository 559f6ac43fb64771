#pragma once
#include <algorithm>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "biosent/tensor.hpp"

// Reverse-mode differentiation over the ops in tensor.hpp. A Graph owns a tape
// of nodes in creation order (which is a valid topological order, since every
// op's parents exist before it); backward walks the tape once in reverse.
// Tensors are cheap handles into the tape and stay valid while the Graph does.

namespace biosent {

template <typename S>
struct Node {
  Mat<S> value;
  Mat<S> grad;  // allocated (zeroed) only when requires_grad
  bool requires_grad = false;
  std::function<void()> back;  // pushes this->grad into the parents' grads
};

template <typename S>
class Graph;

template <typename S>
class Tensor {
public:
  Tensor() = default;
  Tensor(Node<S>* node, Graph<S>* graph) : node_(node), graph_(graph) {}

  const Mat<S>& value() const { return node_->value; }
  const Mat<S>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }

  Node<S>* node() const { return node_; }
  Graph<S>* graph() const { return graph_; }

private:
  Node<S>* node_ = nullptr;
  Graph<S>* graph_ = nullptr;
};

template <typename S>
class Graph {
public:
  // Leaf with gradient storage: parameters and anything else to differentiate.
  Tensor<S> parameter(Mat<S> value) { return Tensor<S>(emplace(std::move(value), true), this); }
  // Leaf without gradient: inputs, masks, lookup constants.
  Tensor<S> constant(Mat<S> value) { return Tensor<S>(emplace(std::move(value), false), this); }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  // requires_grad node. Grads are zeroed first, so repeated calls do not
  // accumulate across backward passes.
  void backward(const Tensor<S>& loss) {
    if (loss.rows() != 1 || loss.cols() != 1)
      throw Error(ErrorCode::ShapeError, "backward: loss must be a 1x1 scalar");
    if (!loss.requires_grad()) return;  // no differentiable leaves upstream
    for (auto& n : tape_)
      if (n->requires_grad) n->grad.setZero();
    loss.node()->grad(0, 0) = S(1);
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it)
      if ((*it)->back) (*it)->back();
  }

  std::size_t size() const { return tape_.size(); }

  Node<S>* emplace(Mat<S> value, bool requires_grad) {
    auto node = std::make_unique<Node<S>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad = Mat<S>::Zero(node->value.rows(), node->value.cols());
    tape_.push_back(std::move(node));
    return tape_.back().get();
  }

private:
  std::vector<std::unique_ptr<Node<S>>> tape_;
};

namespace detail {

template <typename S>
Graph<S>& same_graph(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.graph() != b.graph())
    throw Error(ErrorCode::ShapeError, "operands belong to different graphs");
  return *a.graph();
}

template <typename S>
Tensor<S> make(Graph<S>& g, Mat<S> value, bool requires_grad) {
  return Tensor<S>(g.emplace(std::move(value), requires_grad), &g);
}

}  // namespace detail

// Each op computes its value with the tensor.hpp forward and, when any input
// requires a gradient, records a closure holding raw Node pointers (the tape
// outlives every closure, so no ownership cycles).

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  Graph<S>& g = detail::same_graph(a, b);
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor<S> out = detail::make(g, matmul(a.value(), b.value()), rg);
  if (rg) {
    Node<S>*o = out.node(), *na = a.node(), *nb = b.node();
    o->back = [o, na, nb] {
      if (na->requires_grad) na->grad.noalias() += o->grad * nb->value.transpose();
      if (nb->requires_grad) nb->grad.noalias() += na->value.transpose() * o->grad;
    };
  }
  return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  Graph<S>& g = detail::same_graph(a, b);
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor<S> out = detail::make(g, add(a.value(), b.value()), rg);
  if (rg) {
    Node<S>*o = out.node(), *na = a.node(), *nb = b.node();
    o->back = [o, na, nb] {
      if (na->requires_grad) na->grad += o->grad;
      if (nb->requires_grad) nb->grad += o->grad;
    };
  }
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  Graph<S>& g = detail::same_graph(a, b);
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor<S> out = detail::make(g, sub(a.value(), b.value()), rg);
  if (rg) {
    Node<S>*o = out.node(), *na = a.node(), *nb = b.node();
    o->back = [o, na, nb] {
      if (na->requires_grad) na->grad += o->grad;
      if (nb->requires_grad) nb->grad -= o->grad;
    };
  }
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  Graph<S>& g = detail::same_graph(a, b);
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor<S> out = detail::make(g, mul(a.value(), b.value()), rg);
  if (rg) {
    Node<S>*o = out.node(), *na = a.node(), *nb = b.node();
    o->back = [o, na, nb] {
      if (na->requires_grad) na->grad.array() += o->grad.array() * nb->value.array();
      if (nb->requires_grad) nb->grad.array() += o->grad.array() * na->value.array();
    };
  }
  return out;
}

template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& a, const Tensor<S>& b) {
  Graph<S>& g = detail::same_graph(a, b);
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor<S> out = detail::make(g, add_rowvec(a.value(), b.value()), rg);
  if (rg) {
    Node<S>*o = out.node(), *na = a.node(), *nb = b.node();
    o->back = [o, na, nb] {
      if (na->requires_grad) na->grad += o->grad;
      if (nb->requires_grad) nb->grad.row(0) += o->grad.colwise().sum();
    };
  }
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, double c) {
  Tensor<S> out = detail::make(*a.graph(), scale(a.value(), c), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    S cs = static_cast<S>(c);
    o->back = [o, na, cs] { na->grad += o->grad * cs; };
  }
  return out;
}

template <typename S>
Tensor<S> add_const(const Tensor<S>& a, double c) {
  Tensor<S> out = detail::make(*a.graph(), add_const(a.value(), c), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    o->back = [o, na] { na->grad += o->grad; };
  }
  return out;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  Tensor<S> out = detail::make(*a.graph(), transpose(a.value()), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    o->back = [o, na] { na->grad += o->grad.transpose(); };
  }
  return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  Tensor<S> out = detail::make(*a.graph(), relu(a.value()), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    o->back = [o, na] {
      na->grad.array() +=
          o->grad.array() * (na->value.array() > S(0)).template cast<S>();
    };
  }
  return out;
}

template <typename S>
Tensor<S> elu(const Tensor<S>& a) {
  Tensor<S> out = detail::make(*a.graph(), elu(a.value()), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    // d/dx = 1 for x >= 0, exp(x) otherwise; min(exp(x), 1) covers both
    o->back = [o, na] {
      na->grad.array() += o->grad.array() * na->value.array().exp().min(S(1));
    };
  }
  return out;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  Tensor<S> out = detail::make(*a.graph(), sigmoid(a.value()), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    o->back = [o, na] {
      na->grad.array() += o->grad.array() * o->value.array() * (S(1) - o->value.array());
    };
  }
  return out;
}

template <typename S>
Tensor<S> softplus(const Tensor<S>& a) {
  Tensor<S> out = detail::make(*a.graph(), softplus(a.value()), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    o->back = [o, na] {
      na->grad.array() += o->grad.array() * sigmoid(na->value).array();
    };
  }
  return out;
}

template <typename S>
Tensor<S> exp_elem(const Tensor<S>& a) {
  Tensor<S> out = detail::make(*a.graph(), exp_elem(a.value()), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    o->back = [o, na] { na->grad.array() += o->grad.array() * o->value.array(); };
  }
  return out;
}

template <typename S>
Tensor<S> log_elem(const Tensor<S>& a) {
  Tensor<S> out = detail::make(*a.graph(), log_elem(a.value()), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    o->back = [o, na] { na->grad.array() += o->grad.array() / na->value.array(); };
  }
  return out;
}

template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& a) {
  Tensor<S> out = detail::make(*a.graph(), softmax_rows(a.value()), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    // dx = y * (dy - rowsum(dy * y))
    o->back = [o, na] {
      auto y = o->value.array();
      auto dy = o->grad.array();
      auto dot = (dy * y).rowwise().sum();
      na->grad.array() += y * (dy.colwise() - dot);
    };
  }
  return out;
}

template <typename S>
Tensor<S> log_softmax_rows(const Tensor<S>& a) {
  Tensor<S> out = detail::make(*a.graph(), log_softmax_rows(a.value()), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    // dx = dy - softmax(x) * rowsum(dy), softmax recovered as exp(value)
    o->back = [o, na] {
      auto dy = o->grad.array();
      auto sums = dy.rowwise().sum();
      na->grad.array() += dy - o->value.array().exp().colwise() * sums;
    };
  }
  return out;
}

template <typename S>
Tensor<S> layer_norm_rows(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                          double eps_in = 1e-5) {
  Graph<S>& g = detail::same_graph(x, gamma);
  detail::same_graph(gamma, beta);
  bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  Tensor<S> out =
      detail::make(g, layer_norm_rows(x.value(), gamma.value(), beta.value(), eps_in), rg);
  if (rg) {
    Node<S>*o = out.node(), *nx = x.node(), *ng = gamma.node(), *nb = beta.node();
    S eps = static_cast<S>(eps_in);
    o->back = [o, nx, ng, nb, eps] {
      using Arr = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
      const auto xv = nx->value.array();
      Eigen::Array<S, Eigen::Dynamic, 1> mean = xv.rowwise().mean();
      Arr centered = xv.colwise() - mean;
      Eigen::Array<S, Eigen::Dynamic, 1> inv =
          (centered.square().rowwise().mean() + eps).rsqrt();
      Arr xhat = centered.colwise() * inv;
      const auto dy = o->grad.array();
      if (nb->requires_grad) nb->grad.array().row(0) += dy.colwise().sum();
      if (ng->requires_grad) ng->grad.array().row(0) += (dy * xhat).colwise().sum();
      if (nx->requires_grad) {
        Arr dxhat = dy.rowwise() * ng->value.array().row(0);
        Eigen::Array<S, Eigen::Dynamic, 1> m1 = dxhat.rowwise().mean();
        Eigen::Array<S, Eigen::Dynamic, 1> m2 = (dxhat * xhat).rowwise().mean();
        nx->grad.array() +=
            ((dxhat.colwise() - m1) - xhat.colwise() * m2).colwise() * inv;
      }
    };
  }
  return out;
}

template <typename S>
Tensor<S> mean_rows(const Tensor<S>& a) {
  Tensor<S> out = detail::make(*a.graph(), mean_rows(a.value()), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    o->back = [o, na] {
      S inv = S(1) / static_cast<S>(na->value.rows());
      na->grad += (o->grad * inv).replicate(na->value.rows(), 1);
    };
  }
  return out;
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& a) {
  Tensor<S> out = detail::make(*a.graph(), mean_all(a.value()), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    o->back = [o, na] {
      na->grad.array() += o->grad(0, 0) / static_cast<S>(na->value.size());
    };
  }
  return out;
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& a) {
  Tensor<S> out = detail::make(*a.graph(), sum_all(a.value()), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    o->back = [o, na] { na->grad.array() += o->grad(0, 0); };
  }
  return out;
}

template <typename S>
Tensor<S> l2_normalize_rows(const Tensor<S>& a, double eps_in = 1e-12) {
  Tensor<S> out =
      detail::make(*a.graph(), l2_normalize_rows(a.value(), eps_in), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    S eps = static_cast<S>(eps_in);
    o->back = [o, na, eps] {
      for (Eigen::Index i = 0; i < na->value.rows(); ++i) {
        S n = na->value.row(i).norm();
        if (n > eps) {
          // d(x/|x|) = (dy - y (y . dy)) / |x|
          S dot = o->value.row(i).dot(o->grad.row(i));
          na->grad.row(i) += (o->grad.row(i) - o->value.row(i) * dot) / n;
        } else {
          na->grad.row(i) += o->grad.row(i) / eps;
        }
      }
    };
  }
  return out;
}

// Inverted-scaling dropout: at train time keeps each entry with probability
// 1 - rate and divides by the keep probability, so eval needs no rescaling.
// Identity when not training or when rate is 0.
template <typename S>
Tensor<S> dropout(const Tensor<S>& a, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw Error(ErrorCode::BadConfig, "dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return a;
  S keep = S(1) - static_cast<S>(rate);
  Mat<S> mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      mask(i, j) = uniform01(rng) < rate ? S(0) : S(1) / keep;
  Tensor<S> out = detail::make(*a.graph(), mul(a.value(), mask), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    o->back = [o, na, mask = std::move(mask)] {
      na->grad.array() += o->grad.array() * mask.array();
    };
  }
  return out;
}

template <typename S>
Tensor<S> col_slice(const Tensor<S>& a, Eigen::Index j0, Eigen::Index width) {
  Tensor<S> out = detail::make(*a.graph(), col_slice(a.value(), j0, width), a.requires_grad());
  if (a.requires_grad()) {
    Node<S>*o = out.node(), *na = a.node();
    o->back = [o, na, j0, width] {
      na->grad.block(0, j0, na->value.rows(), width) += o->grad;
    };
  }
  return out;
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  require_shape(!parts.empty(), "concat_cols: no parts");
  Graph<S>& g = *parts[0].graph();
  std::vector<Mat<S>> values;
  bool rg = false;
  for (const auto& p : parts) {
    detail::same_graph(parts[0], p);
    values.push_back(p.value());
    rg = rg || p.requires_grad();
  }
  Tensor<S> out = detail::make(g, concat_cols(values), rg);
  if (rg) {
    std::vector<Node<S>*> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    Node<S>* o = out.node();
    o->back = [o, nodes = std::move(nodes)] {
      Eigen::Index j = 0;
      for (Node<S>* n : nodes) {
        if (n->requires_grad)
          n->grad += o->grad.block(0, j, n->value.rows(), n->value.cols());
        j += n->value.cols();
      }
    };
  }
  return out;
}

template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  require_shape(!parts.empty(), "concat_rows: no parts");
  Graph<S>& g = *parts[0].graph();
  std::vector<Mat<S>> values;
  bool rg = false;
  for (const auto& p : parts) {
    detail::same_graph(parts[0], p);
    values.push_back(p.value());
    rg = rg || p.requires_grad();
  }
  Tensor<S> out = detail::make(g, concat_rows(values), rg);
  if (rg) {
    std::vector<Node<S>*> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    Node<S>* o = out.node();
    o->back = [o, nodes = std::move(nodes)] {
      Eigen::Index i = 0;
      for (Node<S>* n : nodes) {
        if (n->requires_grad)
          n->grad += o->grad.block(i, 0, n->value.rows(), n->value.cols());
        i += n->value.rows();
      }
    };
  }
  return out;
}

template <typename S>
Tensor<S> embedding_lookup(const Tensor<S>& table, const std::vector<int>& indices) {
  Tensor<S> out =
      detail::make(*table.graph(), embedding_lookup(table.value(), indices), table.requires_grad());
  if (table.requires_grad()) {
    Node<S>*o = out.node(), *nt = table.node();
    o->back = [o, nt, indices] {
      for (std::size_t i = 0; i < indices.size(); ++i)
        nt->grad.row(indices[i]) += o->grad.row(static_cast<Eigen::Index>(i));
    };
  }
  return out;
}

// Gradient stop: forwards the value, never propagates into the input.
template <typename S>
Tensor<S> detach(const Tensor<S>& a) {
  return a.graph()->constant(a.value());
}

// Execution contexts for forward code written once over both value kinds.
// PlainBuilder runs on bare matrices (no tape, no closures — the eval path);
// GraphBuilder records every op for backward. `lift` turns an input matrix
// into the context's value type; `dropout` is the only stateful op.

template <typename S>
struct PlainBuilder {
  using Scalar = S;
  using Value = Mat<S>;
  static constexpr bool training = false;
  const Mat<S>& lift(const Mat<S>& m) const { return m; }
  const Mat<S>& dropout(const Mat<S>& x, double) const { return x; }
};

template <typename S>
struct GraphBuilder {
  using Scalar = S;
  using Value = Tensor<S>;
  Graph<S>* g = nullptr;
  Rng* rng = nullptr;
  bool training = false;

  Tensor<S> lift(const Mat<S>& m) const { return g->constant(m); }
  Tensor<S> dropout(const Tensor<S>& x, double rate) const {
    return biosent::dropout(x, rate, training, *rng);
  }
};

// Central-difference gradient verification. `build` reconstructs the scalar
// loss from leaves made of `params` on a fresh graph, and must be
// deterministic (no dropout, fixed rng). Returns the max over all parameter
// entries of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <typename Build>
double grad_check(Build&& build, std::vector<Mat<double>> params, double h = 1e-5) {
  auto run = [&](bool want_grads, std::vector<Mat<double>>* grads) {
    Graph<double> g;
    std::vector<Tensor<double>> leaves;
    leaves.reserve(params.size());
    for (auto& p : params) leaves.push_back(want_grads ? g.parameter(p) : g.constant(p));
    Tensor<double> loss = build(g, leaves);
    if (loss.rows() != 1 || loss.cols() != 1)
      throw Error(ErrorCode::ShapeError, "grad_check: loss must be scalar");
    if (want_grads) {
      g.backward(loss);
      grads->clear();
      for (auto& t : leaves) grads->push_back(t.grad());
    }
    return loss.value()(0, 0);
  };

  std::vector<Mat<double>> analytic;
  run(true, &analytic);

  double max_rel = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (Eigen::Index i = 0; i < params[p].rows(); ++i) {
      for (Eigen::Index j = 0; j < params[p].cols(); ++j) {
        double saved = params[p](i, j);
        params[p](i, j) = saved + h;
        double up = run(false, nullptr);
        params[p](i, j) = saved - h;
        double down = run(false, nullptr);
        params[p](i, j) = saved;
        double numeric = (up - down) / (2.0 * h);
        double a = analytic[p](i, j);
        double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  return max_rel;
}

}  // namespace biosent
