#pragma once
#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "biosent/error.hpp"
#include "biosent/rng.hpp"

// Dense 2-D tensors and their forward-only (no gradient tape) operations.
// Everything is a row-major matrix: token batches are N x l, row vectors are
// 1 x n. The same functions compute the forward values for the recorded graph
// in graph.hpp, so eval mode pays no tape or closure overhead.

namespace biosent {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void require_shape(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::ShapeError, what);
}

// ---- random parameter init (explicit rng for cross-platform determinism) ----

template <typename S>
Mat<S> uniform_init(Rng& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = static_cast<S>(uniform(rng, -bound, bound));
  return m;
}

template <typename S>
Mat<S> normal_init(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(normal(rng, 0.0, stddev));
  return m;
}

// ---- elementwise and linear ops ----

template <typename S>
Mat<S> matmul(const Mat<S>& a, const Mat<S>& b) {
  require_shape(a.cols() == b.rows(), "matmul: inner dimensions differ");
  return a * b;
}

template <typename S>
Mat<S> add(const Mat<S>& a, const Mat<S>& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return a + b;
}

template <typename S>
Mat<S> sub(const Mat<S>& a, const Mat<S>& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  return a - b;
}

template <typename S>
Mat<S> mul(const Mat<S>& a, const Mat<S>& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  return (a.array() * b.array()).matrix();
}

// a + b broadcast over rows; b is 1 x cols (a bias row).
template <typename S>
Mat<S> add_rowvec(const Mat<S>& a, const Mat<S>& b) {
  require_shape(b.rows() == 1 && b.cols() == a.cols(), "add_rowvec: need a 1 x cols bias");
  return a.rowwise() + b.row(0);
}

template <typename S>
Mat<S> scale(const Mat<S>& a, double c) {
  return a * static_cast<S>(c);
}

template <typename S>
Mat<S> add_const(const Mat<S>& a, double c) {
  return (a.array() + static_cast<S>(c)).matrix();
}

template <typename S>
Mat<S> transpose(const Mat<S>& a) {
  return a.transpose();
}

template <typename S>
Mat<S> relu(const Mat<S>& a) {
  return a.array().max(S(0)).matrix();
}

template <typename S>
Mat<S> elu(const Mat<S>& a) {
  return (a.array() >= S(0)).select(a.array(), a.array().exp() - S(1)).matrix();
}

template <typename S>
Mat<S> sigmoid(const Mat<S>& a) {
  // evaluated via softplus pieces to stay finite for large |x|
  auto x = a.array();
  return (x >= S(0))
      .select(S(1) / (S(1) + (-x).exp()), x.exp() / (S(1) + x.exp()))
      .matrix();
}

template <typename S>
Mat<S> softplus(const Mat<S>& a) {
  auto x = a.array();
  return (x.max(S(0)) + (-x.abs()).exp().log1p()).matrix();
}

template <typename S>
Mat<S> exp_elem(const Mat<S>& a) {
  return a.array().exp().matrix();
}

template <typename S>
Mat<S> log_elem(const Mat<S>& a) {
  return a.array().log().matrix();
}

// ---- row-wise normalizations and reductions ----

template <typename S>
Mat<S> softmax_rows(const Mat<S>& a) {
  require_shape(a.cols() >= 1 && a.rows() >= 1, "softmax: empty axis");
  Mat<S> shifted = a.colwise() - a.rowwise().maxCoeff();
  Mat<S> e = shifted.array().exp().matrix();
  return (e.array().colwise() / e.array().rowwise().sum()).matrix();
}

template <typename S>
Mat<S> log_softmax_rows(const Mat<S>& a) {
  require_shape(a.cols() >= 1 && a.rows() >= 1, "log_softmax: empty axis");
  Mat<S> shifted = a.colwise() - a.rowwise().maxCoeff();
  auto lse = shifted.array().exp().rowwise().sum().log();
  return (shifted.array().colwise() - lse).matrix();
}

// Per-row layer norm with learnable gamma/beta (both 1 x cols).
template <typename S>
Mat<S> layer_norm_rows(const Mat<S>& x, const Mat<S>& gamma, const Mat<S>& beta,
                       double eps_in = 1e-5) {
  S eps = static_cast<S>(eps_in);
  require_shape(gamma.rows() == 1 && gamma.cols() == x.cols(), "layer_norm: bad gamma shape");
  require_shape(beta.rows() == 1 && beta.cols() == x.cols(), "layer_norm: bad beta shape");
  auto mean = x.array().rowwise().mean();
  Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> centered =
      x.array().colwise() - mean;
  auto var = centered.square().rowwise().mean();
  auto inv = (var + eps).rsqrt();
  Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> xhat =
      centered.colwise() * inv;
  return ((xhat.rowwise() * gamma.row(0).array()).rowwise() + beta.row(0).array()).matrix();
}

// Mean over rows (axis 0): N x m -> 1 x m. The mean-pooling reduction.
template <typename S>
Mat<S> mean_rows(const Mat<S>& a) {
  require_shape(a.rows() >= 1, "mean_rows: empty input");
  Mat<S> out(1, a.cols());
  out.row(0) = a.colwise().mean();
  return out;
}

template <typename S>
Mat<S> mean_all(const Mat<S>& a) {
  require_shape(a.size() >= 1, "mean_all: empty input");
  Mat<S> out(1, 1);
  out(0, 0) = a.mean();
  return out;
}

template <typename S>
Mat<S> sum_all(const Mat<S>& a) {
  Mat<S> out(1, 1);
  out(0, 0) = a.sum();
  return out;
}

// Rows rescaled to unit L2 norm; rows with norm below eps are divided by eps
// instead (degenerate-row guard).
template <typename S>
Mat<S> l2_normalize_rows(const Mat<S>& a, double eps_in = 1e-12) {
  S eps = static_cast<S>(eps_in);
  Mat<S> out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    S n = a.row(i).norm();
    out.row(i) = a.row(i) / std::max(n, eps);
  }
  return out;
}

// ---- structural ops ----

template <typename S>
Mat<S> col_slice(const Mat<S>& a, Eigen::Index j0, Eigen::Index width) {
  require_shape(j0 >= 0 && width >= 1 && j0 + width <= a.cols(), "col_slice: out of range");
  return a.block(0, j0, a.rows(), width);
}

template <typename S>
Mat<S> concat_cols(const std::vector<Mat<S>>& parts) {
  require_shape(!parts.empty(), "concat_cols: no parts");
  Eigen::Index rows = parts[0].rows(), cols = 0;
  for (const auto& p : parts) {
    require_shape(p.rows() == rows, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Mat<S> out(rows, cols);
  Eigen::Index j = 0;
  for (const auto& p : parts) {
    out.block(0, j, rows, p.cols()) = p;
    j += p.cols();
  }
  return out;
}

template <typename S>
Mat<S> concat_rows(const std::vector<Mat<S>>& parts) {
  require_shape(!parts.empty(), "concat_rows: no parts");
  Eigen::Index cols = parts[0].cols(), rows = 0;
  for (const auto& p : parts) {
    require_shape(p.cols() == cols, "concat_rows: column counts differ");
    rows += p.rows();
  }
  Mat<S> out(rows, cols);
  Eigen::Index i = 0;
  for (const auto& p : parts) {
    out.block(i, 0, p.rows(), cols) = p;
    i += p.rows();
  }
  return out;
}

// Gather rows of an embedding table: out.row(i) = table.row(indices[i]).
template <typename S>
Mat<S> embedding_lookup(const Mat<S>& table, const std::vector<int>& indices) {
  Mat<S> out(static_cast<Eigen::Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    int idx = indices[i];
    require_shape(idx >= 0 && idx < table.rows(), "embedding_lookup: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = table.row(idx);
  }
  return out;
}

// Forward-only alias of the graph-mode gradient stop; a plain value has no
// gradient to stop.
template <typename S>
Mat<S> detach(const Mat<S>& a) {
  return a;
}

}  // namespace biosent
