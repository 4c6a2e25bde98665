#include "linalg.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>

namespace condgeo {

const char* error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid_argument";
        case ErrorCode::Dimension: return "dimension";
        case ErrorCode::SingularGap: return "singular_gap";
        case ErrorCode::Domain: return "domain";
        case ErrorCode::Orthogonality: return "orthogonality";
        case ErrorCode::StepFailure: return "step_failure";
        case ErrorCode::ConstraintDrift: return "constraint_drift";
        case ErrorCode::Rank: return "rank";
        case ErrorCode::Convergence: return "convergence";
        case ErrorCode::Multiplicity: return "multiplicity";
        case ErrorCode::SingularJacobian: return "singular_jacobian";
        case ErrorCode::NotCritical: return "not_critical";
        case ErrorCode::NoConvergence: return "no_convergence";
        case ErrorCode::Config: return "config";
        case ErrorCode::Io: return "io";
    }
    return "unknown";
}

Vector flatten(const Matrix& a) {
    return Eigen::Map<const Vector>(a.data(), a.size());
}

Matrix unflatten(const Vector& x, Eigen::Index rows, Eigen::Index cols) {
    if (x.size() != rows * cols)
        throw DimensionError("unflatten: size mismatch");
    return Eigen::Map<const Matrix>(x.data(), rows, cols);
}

MatrixPoint::MatrixPoint(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() > entries_.cols())
        throw DimensionError("MatrixPoint requires n <= m");
    if (entries_.rows() < 1)
        throw DimensionError("MatrixPoint requires n >= 1");
    Eigen::JacobiSVD<Matrix> svd(entries_, Eigen::ComputeFullU | Eigen::ComputeFullV);
    left_ = svd.matrixU();
    right_ = svd.matrixV();
    sigma_ = svd.singularValues();
}

double MatrixPoint::gap() const {
    const Eigen::Index n = sigma_.size();
    if (n < 2) return std::numeric_limits<double>::infinity();
    return sigma_(n - 2) - sigma_(n - 1);
}

Vector MatrixPoint::left_vector() const {
    Vector u = left_.col(rows() - 1);
    Eigen::Index imax = 0;
    u.cwiseAbs().maxCoeff(&imax);
    return u(imax) < 0.0 ? Vector(-u) : u;
}

Vector MatrixPoint::right_vector() const {
    Vector u = left_.col(rows() - 1);
    Vector v = right_.col(rows() - 1);
    Eigen::Index imax = 0;
    u.cwiseAbs().maxCoeff(&imax);
    // v flips together with u so that sigma_n * u v^T stays a summand of A.
    return u(imax) < 0.0 ? Vector(-v) : v;
}

Matrix MatrixPoint::align(const Matrix& u) const {
    if (u.rows() != rows() || u.cols() != cols())
        throw DimensionError("align: direction shape mismatch");
    return left_.transpose() * u * right_;
}

bool MatrixPoint::in_gl_gt(double gap_tol_factor) const {
    return sigma_min() > 0.0 && gap() > gap_tol_factor * sigma_(0);
}

void MatrixPoint::require_gl_gt(double gap_tol_factor) const {
    if (sigma_min() <= 0.0)
        throw DomainError("matrix is rank deficient (sigma_n = 0)");
    if (!(gap() > gap_tol_factor * sigma_(0)))
        throw SingularGapError("singular value gap below tolerance; sigma_n may be multiple");
}

AlignedPerturbation aligned_perturbation(const MatrixPoint& a, const Matrix& u) {
    return AlignedPerturbation{a.align(u)};
}

double smallest_singular(const MatrixPoint& a) { return a.sigma_min(); }

double d_sigma_n(const MatrixPoint& a, const Matrix& u, double gap_tol_factor) {
    a.require_gl_gt(gap_tol_factor);
    return a.left_vector().dot(u * a.right_vector());
}

double d_sigma_n_sq(const MatrixPoint& a, const Matrix& u, double gap_tol_factor) {
    return 2.0 * a.sigma_min() * d_sigma_n(a, u, gap_tol_factor);
}

double d2_sigma_n_sq(const MatrixPoint& a, const Matrix& u, double gap_tol_factor) {
    a.require_gl_gt(gap_tol_factor);
    const Eigen::Index n = a.rows();
    const Matrix ut = a.align(u);
    const Vector& s = a.singular_values();
    const double sn = s(n - 1);

    double value = 2.0 * ut.row(n - 1).squaredNorm();
    for (Eigen::Index k = 0; k < n - 1; ++k) {
        const double num = ut(k, n - 1) * sn + ut(n - 1, k) * s(k);
        value -= 2.0 * num * num / (s(k) * s(k) - sn * sn);
    }
    return value;
}

Vector singular_vector_derivative(const MatrixPoint& a, const Matrix& u, double gap_tol_factor) {
    a.require_gl_gt(gap_tol_factor);
    const Eigen::Index n = a.rows();
    const Matrix& A = a.entries();
    const Vector un = a.left_vector();
    const Vector& s = a.singular_values();
    const double sn2 = s(n - 1) * s(n - 1);

    const Matrix sym = u * A.transpose() + A * u.transpose();
    const double dsig2 = un.dot(sym * un);  // D sigma_n^2 (A) U
    Vector rhs = sym * un - dsig2 * un;

    // Pseudo-inverse of (sigma_n^2 I - A A^T) in the left singular basis:
    // eigenvalues sigma_n^2 - sigma_k^2, kernel along u_n.
    Vector coeffs = a.left().transpose() * rhs;
    for (Eigen::Index k = 0; k < n; ++k) {
        if (k == n - 1)
            coeffs(k) = 0.0;
        else
            coeffs(k) /= sn2 - s(k) * s(k);
    }
    return a.left() * coeffs;
}

SphereDerivatives rho_sphere_derivatives(const MatrixPoint& a, const Matrix& u,
                                         double gap_tol_factor) {
    const double anorm = a.entries().norm();
    const double inner = (a.entries().array() * u.array()).sum();
    if (std::abs(inner) > 1e-10 * std::max(1.0, anorm * u.norm()))
        throw OrthogonalityError("rho_sphere_derivatives requires <A,U>_F = 0");
    a.require_gl_gt(gap_tol_factor);

    const double sn = a.sigma_min();
    const double d_rho = d_sigma_n(a, u, gap_tol_factor) / anorm;
    const double d2s2 = d2_sigma_n_sq(a, u, gap_tol_factor);
    const double a2 = anorm * anorm;
    const double d2_rho_sq = (d2s2 - 2.0 * u.squaredNorm() * sn * sn / a2) / a2;
    return SphereDerivatives{d_rho, d2_rho_sq};
}

double fd_oracle(const std::function<double(const Vector&)>& f, const Vector& x,
                 const Vector& u, int order, double h) {
    if (h <= 0.0) throw InvalidArgumentError("fd_oracle requires h > 0");
    const double fp = f(x + h * u);
    const double fm = f(x - h * u);
    if (order == 1) return (fp - fm) / (2.0 * h);
    if (order == 2) return (fp - 2.0 * f(x) + fm) / (h * h);
    throw InvalidArgumentError("fd_oracle order must be 1 or 2");
}

}  // namespace condgeo
