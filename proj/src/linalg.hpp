#pragma once

#include <Eigen/Dense>
#include <functional>

#include "errors.hpp"

namespace condgeo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// gap_tol = kGapTolFactor * sigma_1: below this relative gap the smallest
/// singular value may be multiple and its derivative formulas are refused.
inline constexpr double kGapTolFactor = 1e-8;

/// Default central-difference steps (scaled by max(1, |x|) at the call site).
inline constexpr double kFdStepFirst = 1e-5;
inline constexpr double kFdStepSecond = 1e-4;

Vector flatten(const Matrix& a);
Matrix unflatten(const Vector& x, Eigen::Index rows, Eigen::Index cols);

/// A point of R^{n x m}, n <= m, with its full SVD cached:
/// entries = left * [diag(sigma) 0] * right^T.
class MatrixPoint {
public:
    explicit MatrixPoint(Matrix entries);

    const Matrix& entries() const { return entries_; }
    Eigen::Index rows() const { return entries_.rows(); }
    Eigen::Index cols() const { return entries_.cols(); }

    const Matrix& left() const { return left_; }    // n x n orthogonal
    const Matrix& right() const { return right_; }  // m x m orthogonal
    const Vector& singular_values() const { return sigma_; }

    double sigma_min() const { return sigma_(sigma_.size() - 1); }
    /// sigma_{n-1} - sigma_n; +infinity when n == 1 (no smaller stratum).
    double gap() const;

    /// n-th left/right singular vectors with the canonical sign convention:
    /// the largest-magnitude entry of u_n is positive.
    Vector left_vector() const;
    Vector right_vector() const;

    /// Frame alignment: U~ = P^T U Q, an isometry of the Frobenius norm.
    Matrix align(const Matrix& u) const;

    bool in_gl_gt(double gap_tol_factor = kGapTolFactor) const;
    void require_gl_gt(double gap_tol_factor = kGapTolFactor) const;

private:
    Matrix entries_;
    Matrix left_;
    Matrix right_;
    Vector sigma_;
};

/// A direction expressed in the SVD-aligned frame of a base point.
struct AlignedPerturbation {
    Matrix entries;  // P^T U Q
};

AlignedPerturbation aligned_perturbation(const MatrixPoint& a, const Matrix& u);

/// sigma_n(A); equals the Frobenius distance from A to the rank-deficient set.
double smallest_singular(const MatrixPoint& a);

/// D sigma_n(A) U = u_n^T U v_n. Requires a simple smallest singular value.
double d_sigma_n(const MatrixPoint& a, const Matrix& u,
                 double gap_tol_factor = kGapTolFactor);

/// D sigma_n^2(A) U = 2 sigma_n u_n^T U v_n.
double d_sigma_n_sq(const MatrixPoint& a, const Matrix& u,
                    double gap_tol_factor = kGapTolFactor);

/// Second derivative of sigma_n^2 along U, evaluated in the aligned frame:
///   2 sum_j u~_{nj}^2 - 2 sum_{k<n} (u~_{kn} s_n + u~_{nk} s_k)^2 / (s_k^2 - s_n^2).
double d2_sigma_n_sq(const MatrixPoint& a, const Matrix& u,
                     double gap_tol_factor = kGapTolFactor);

/// Derivative of the smallest left singular vector along U, via the
/// Moore-Penrose solve of the perturbed eigenproblem of A A^T.
/// Satisfies u_n^T du = 0.
Vector singular_vector_derivative(const MatrixPoint& a, const Matrix& u,
                                  double gap_tol_factor = kGapTolFactor);

struct SphereDerivatives {
    double d_rho;      // D rho(A) U
    double d2_rho_sq;  // D^2 rho^2(A)(U,U), covariant on the sphere |X| = |A|
};

/// Derivatives of rho(A) = sigma_n(A)/|A|_F restricted to the sphere through A.
/// Requires <A,U>_F = 0.
SphereDerivatives rho_sphere_derivatives(const MatrixPoint& a, const Matrix& u,
                                         double gap_tol_factor = kGapTolFactor);

/// Central finite differences: order 1 gives (f(x+hu)-f(x-hu))/2h,
/// order 2 gives (f(x+hu)-2f(x)+f(x-hu))/h^2. The caller owns the step.
double fd_oracle(const std::function<double(const Vector&)>& f, const Vector& x,
                 const Vector& u, int order, double h);

}  // namespace condgeo
