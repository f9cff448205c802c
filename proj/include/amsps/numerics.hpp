#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amsps/error.hpp"

namespace amsps {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Training and gradient checking run in double; files store float.
using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using MatrixF = MatrixX<float>;

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

template <typename DerivedA, typename DerivedB>
void require_same_shape(const Eigen::EigenBase<DerivedA>& a, const Eigen::EigenBase<DerivedB>& b,
                        const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCategory::Shape, std::string(what) + ": shape mismatch " + shape_string(a) +
                                          " vs " + shape_string(b));
  }
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

template <typename Derived>
void ensure_finite(const Eigen::DenseBase<Derived>& m, const std::string& what) {
  if (!all_finite(m)) throw Error(ErrorCategory::Numeric, what + ": non-finite entry");
}

/// Matrix product with a shape check that names both operands on failure.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> matmul(const Eigen::MatrixBase<DerivedA>& a,
                                          const Eigen::MatrixBase<DerivedB>& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCategory::Shape,
                "matmul: inner dimensions differ (" + shape_string(a) + " x " + shape_string(b) + ")");
  }
  return a * b;
}

/// Gradients of C = A·B given dC: dA = dC·Bᵀ, dB = Aᵀ·dC.
template <typename Scalar>
struct MatmulGrad {
  MatrixX<Scalar> da;
  MatrixX<Scalar> db;
};

template <typename DerivedA, typename DerivedB, typename DerivedC>
MatmulGrad<typename DerivedA::Scalar> matmul_backward(const Eigen::MatrixBase<DerivedA>& a,
                                                      const Eigen::MatrixBase<DerivedB>& b,
                                                      const Eigen::MatrixBase<DerivedC>& dc) {
  if (dc.rows() != a.rows() || dc.cols() != b.cols()) {
    throw Error(ErrorCategory::Shape, "matmul_backward: upstream gradient " + shape_string(dc) +
                                          " does not match product of " + shape_string(a) + " and " +
                                          shape_string(b));
  }
  return {dc * b.transpose(), a.transpose() * dc};
}

/// softmax(lambda * scores), evaluated with max subtraction.
template <typename Derived>
VectorX<typename Derived::Scalar> softmax_scaled(const Eigen::MatrixBase<Derived>& scores,
                                                 typename Derived::Scalar lambda) {
  using Scalar = typename Derived::Scalar;
  if (scores.size() == 0) throw Error(ErrorCategory::Shape, "softmax_scaled: empty input");
  if (!(lambda > Scalar(0))) throw Error(ErrorCategory::Data, "softmax_scaled: lambda must be positive");
  VectorX<Scalar> z = lambda * scores.derived().reshaped();
  z.array() -= z.maxCoeff();
  z = z.array().exp();
  z /= z.sum();
  return z;
}

/// Vector-Jacobian product of softmax_scaled: d scores = lambda * y ⊙ (dy − y·dy).
template <typename DerivedY, typename DerivedG>
VectorX<typename DerivedY::Scalar> softmax_scaled_backward(const Eigen::MatrixBase<DerivedY>& y,
                                                           const Eigen::MatrixBase<DerivedG>& dy,
                                                           typename DerivedY::Scalar lambda) {
  const auto inner = y.dot(dy);
  return lambda * (y.array() * (dy.array() - inner)).matrix();
}

template <typename Derived>
VectorX<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& v) {
  const auto norm = v.norm();
  if (!(norm > 0) || !std::isfinite(norm)) {
    throw Error(ErrorCategory::Numeric, "l2_normalize: vector has zero or non-finite norm");
  }
  return v.derived().reshaped() / norm;
}

/// Backward of y = x/‖x‖: dx = (I − y yᵀ) dy / ‖x‖.
template <typename DerivedY, typename DerivedG>
VectorX<typename DerivedY::Scalar> l2_normalize_backward(const Eigen::MatrixBase<DerivedY>& y,
                                                         typename DerivedY::Scalar input_norm,
                                                         const Eigen::MatrixBase<DerivedG>& dy) {
  return (dy - y * y.dot(dy)) / input_norm;
}

/// Normalizes every row; a zero row is an error.
template <typename Derived>
MatrixX<typename Derived::Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& m) {
  MatrixX<typename Derived::Scalar> out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto norm = m.row(i).norm();
    if (!(norm > 0) || !std::isfinite(norm)) {
      throw Error(ErrorCategory::Numeric,
                  "normalize_rows: row " + std::to_string(i) + " has zero or non-finite norm");
    }
    out.row(i) = m.row(i) / norm;
  }
  return out;
}

/// Inner product of two unit vectors (cosine similarity).
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_sim(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCategory::Shape, "cosine_sim: dimension mismatch " + std::to_string(u.size()) + " vs " +
                                          std::to_string(v.size()));
  }
  return u.derived().reshaped().dot(v.derived().reshaped());
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct GradCheckEntry {
  Eigen::Index index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckReport {
  std::string op_name;
  double max_rel_error = 0;
  std::vector<GradCheckEntry> per_parameter_errors;
};

/// |a − n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central-difference check of `analytic_grad` against f at `params`.
/// eps must lie in [1e-6, 1e-4]. Throws if f is non-finite at a perturbed point.
GradCheckReport finite_diff_check(const std::string& op_name, const std::function<double(const Matrix&)>& f,
                                  const Matrix& params, const Matrix& analytic_grad, double eps = 1e-5);

}  // namespace amsps
