#include "instances.hpp"

#include <Eigen/QR>
#include <cmath>

namespace condgeo {

ConformalMetric gl_metric(int n, int m, double gap_tol_factor) {
    if (n < 1 || n > m) throw DimensionError("gl_metric requires 1 <= n <= m");
    ConformalMetric metric;
    metric.dim = n * m;
    metric.name = "gl-condition";
    metric.alpha = [n, m](const Vector& x) {
        const double sn = MatrixPoint(unflatten(x, n, m)).sigma_min();
        if (!(sn > 0.0)) throw DomainError("gl_metric: sigma_n = 0");
        return 1.0 / (sn * sn);
    };
    metric.grad_alpha = [n, m, gap_tol_factor](const Vector& x) {
        const MatrixPoint a(unflatten(x, n, m));
        a.require_gl_gt(gap_tol_factor);
        const double sn = a.sigma_min();
        return flatten((-2.0 / (sn * sn * sn)) * a.left_vector() * a.right_vector().transpose());
    };
    metric.hess_alpha = [n, m, gap_tol_factor](const Vector& x, const Vector& u) {
        const MatrixPoint a(unflatten(x, n, m));
        const Matrix dir = unflatten(u, n, m);
        const double s2 = a.sigma_min() * a.sigma_min();
        const double ds2 = d_sigma_n_sq(a, dir, gap_tol_factor);
        const double d2s2 = d2_sigma_n_sq(a, dir, gap_tol_factor);
        // alpha = (sigma_n^2)^{-1}.
        return 2.0 * ds2 * ds2 / (s2 * s2 * s2) - d2s2 / (s2 * s2);
    };
    return metric;
}

RhoBundle gl_rho_bundle(int n, int m, double gap_tol_factor) {
    RhoBundle bundle;
    bundle.dim = n * m;
    bundle.rho = [n, m](const Vector& x) { return MatrixPoint(unflatten(x, n, m)).sigma_min(); };
    bundle.grad_rho = [n, m, gap_tol_factor](const Vector& x) {
        const MatrixPoint a(unflatten(x, n, m));
        a.require_gl_gt(gap_tol_factor);
        return flatten(Matrix(a.left_vector() * a.right_vector().transpose()));
    };
    bundle.d2_rho_sq = [n, m, gap_tol_factor](const Vector& x, const Vector& u) {
        return d2_sigma_n_sq(MatrixPoint(unflatten(x, n, m)), unflatten(u, n, m), gap_tol_factor);
    };
    return bundle;
}

ConstrainedMetric sphere_instance(double r, ConformalMetric base) {
    if (!(r > 0.0)) throw InvalidArgumentError("sphere radius must be positive");
    const int d = base.dim;
    ConstraintSet sphere;
    sphere.dim = d;
    sphere.codim = 1;
    sphere.residual = [r](const Vector& x) {
        Vector c(1);
        c(0) = x.squaredNorm() - r * r;
        return c;
    };
    sphere.jacobian = [](const Vector& x) {
        Matrix j(1, x.size());
        j.row(0) = 2.0 * x.transpose();
        return j;
    };
    sphere.hess = [](const Vector&, const Vector& v) {
        Vector h(1);
        h(0) = 2.0 * v.squaredNorm();
        return h;
    };
    return ConstrainedMetric{std::move(base), std::move(sphere)};
}

double projective_alpha2(const Matrix& a) {
    const MatrixPoint point(a);
    point.require_gl_gt();
    const double sn = point.sigma_min();
    return a.squaredNorm() / (sn * sn);
}

ProjectivePoint ProjectivePoint::from_representative(const Vector& v) {
    const double norm = v.norm();
    if (!(norm > 0.0)) throw InvalidArgumentError("projective representative must be nonzero");
    ProjectivePoint p;
    p.z = v / norm;
    const Eigen::Index d = v.size();
    // Complete z to an orthonormal basis; drop the z column.
    Eigen::HouseholderQR<Matrix> qr(Matrix(p.z));
    p.horizontal_basis = Matrix(qr.householderQ()).rightCols(d - 1);
    return p;
}

Vector SolutionVarietyPoint::pack() const {
    const Eigen::Index nm = m.size();
    Vector x(nm + zeta.size());
    x.head(nm) = flatten(m);
    x.tail(zeta.size()) = zeta;
    return x;
}

SolutionVarietyPoint SolutionVarietyPoint::unpack(const Vector& x, int n) {
    const int nm = n * (n + 1);
    if (x.size() != nm + n + 1) throw DimensionError("solution variety state size mismatch");
    SolutionVarietyPoint w;
    w.m = unflatten(x.head(nm), n, n + 1);
    w.zeta = x.tail(n + 1);
    return w;
}

ConstrainedMetric solution_variety_instance(int n, double gap_tol_factor) {
    if (n < 1) throw DimensionError("solution_variety_instance requires n >= 1");
    const int nm = n * (n + 1);
    const int dim = nm + n + 1;

    ConformalMetric metric;
    metric.dim = dim;
    metric.name = "solution-variety-condition";
    metric.alpha = [n, nm](const Vector& x) {
        const double sn = MatrixPoint(unflatten(x.head(nm), n, n + 1)).sigma_min();
        if (!(sn > 0.0)) throw DomainError("solution variety: sigma_n(M) = 0");
        return 1.0 / (sn * sn);
    };
    metric.grad_alpha = [n, nm, dim, gap_tol_factor](const Vector& x) {
        const MatrixPoint a(unflatten(x.head(nm), n, n + 1));
        a.require_gl_gt(gap_tol_factor);
        const double sn = a.sigma_min();
        Vector g = Vector::Zero(dim);
        g.head(nm) =
            flatten((-2.0 / (sn * sn * sn)) * a.left_vector() * a.right_vector().transpose());
        return g;
    };
    metric.hess_alpha = [n, nm, gap_tol_factor](const Vector& x, const Vector& u) {
        const MatrixPoint a(unflatten(x.head(nm), n, n + 1));
        const Matrix dir = unflatten(u.head(nm), n, n + 1);
        const double s2 = a.sigma_min() * a.sigma_min();
        const double ds2 = d_sigma_n_sq(a, dir, gap_tol_factor);
        const double d2s2 = d2_sigma_n_sq(a, dir, gap_tol_factor);
        return 2.0 * ds2 * ds2 / (s2 * s2 * s2) - d2s2 / (s2 * s2);
    };

    ConstraintSet constraints;
    constraints.dim = dim;
    constraints.codim = 2 + n;
    constraints.residual = [n, nm](const Vector& x) {
        const auto w = SolutionVarietyPoint::unpack(x, n);
        Vector c(2 + n);
        c(0) = w.m.squaredNorm() - 1.0;
        c(1) = w.zeta.squaredNorm() - 1.0;
        c.tail(n) = w.m * w.zeta;
        return c;
    };
    constraints.jacobian = [n, nm, dim](const Vector& x) {
        const auto w = SolutionVarietyPoint::unpack(x, n);
        Matrix j = Matrix::Zero(2 + n, dim);
        j.row(0).head(nm) = 2.0 * flatten(w.m).transpose();
        j.row(1).tail(n + 1) = 2.0 * w.zeta.transpose();
        for (int i = 0; i < n; ++i) {
            // d(M zeta)_i / dM = e_i zeta^T, column-major over M entries.
            for (int col = 0; col < n + 1; ++col) j(2 + i, col * n + i) = w.zeta(col);
            j.row(2 + i).tail(n + 1) = w.m.row(i);
        }
        return j;
    };
    constraints.hess = [n, nm](const Vector&, const Vector& u) {
        const auto du = SolutionVarietyPoint::unpack(u, n);
        Vector h(2 + n);
        h(0) = 2.0 * du.m.squaredNorm();
        h(1) = 2.0 * du.zeta.squaredNorm();
        h.tail(n) = 2.0 * du.m * du.zeta;
        return h;
    };

    return ConstrainedMetric{std::move(metric), std::move(constraints)};
}

ConformalMetric hyperbolic_instance(int dim) {
    if (dim < 2) throw DimensionError("hyperbolic_instance requires dim >= 2");
    ConformalMetric metric;
    metric.dim = dim;
    metric.name = "hyperbolic-half-space";
    const int last = dim - 1;
    metric.alpha = [last](const Vector& x) {
        if (!(x(last) > 0.0)) throw DomainError("hyperbolic half-space requires x_n > 0");
        return 1.0 / (x(last) * x(last));
    };
    metric.grad_alpha = [last, dim](const Vector& x) {
        if (!(x(last) > 0.0)) throw DomainError("hyperbolic half-space requires x_n > 0");
        Vector g = Vector::Zero(dim);
        g(last) = -2.0 / std::pow(x(last), 3);
        return g;
    };
    metric.hess_alpha = [last](const Vector& x, const Vector& u) {
        if (!(x(last) > 0.0)) throw DomainError("hyperbolic half-space requires x_n > 0");
        return 6.0 * u(last) * u(last) / std::pow(x(last), 4);
    };
    return metric;
}

ConformalMetric frobenius_alpha(int n) {
    if (n < 1) throw DimensionError("frobenius_alpha requires n >= 1");
    ConformalMetric metric;
    metric.dim = n * n;
    metric.name = "frobenius-inverse-norm";
    auto inverse = [n](const Vector& x) {
        const Matrix a = unflatten(x, n, n);
        Eigen::FullPivLU<Matrix> lu(a);
        if (!lu.isInvertible()) throw DomainError("frobenius_alpha: matrix is singular");
        return Matrix(lu.inverse());
    };
    metric.alpha = [inverse](const Vector& x) { return inverse(x).squaredNorm(); };
    metric.grad_alpha = [inverse](const Vector& x) {
        const Matrix inv = inverse(x);
        return flatten(Matrix(-2.0 * inv.transpose() * inv * inv.transpose()));
    };
    metric.hess_alpha = [inverse, n](const Vector& x, const Vector& u) {
        const Matrix inv = inverse(x);
        const Matrix du = unflatten(u, n, n);
        const Matrix m = inv * du * inv;
        return 2.0 * m.squaredNorm() + 4.0 * (inv.array() * (m * du * inv).array()).sum();
    };
    return metric;
}

Matrix random_direction(int n, int m, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix u(n, m);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < n; ++i) u(i, j) = gauss(rng);
    return u / u.norm();
}

Matrix random_gl_point(int n, int m, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int attempt = 0; attempt < 10000; ++attempt) {
        Matrix a(n, m);
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < n; ++i) a(i, j) = gauss(rng);
        const MatrixPoint point(a);
        const auto& s = point.singular_values();
        if (point.sigma_min() > 1e-3 && point.gap() > 0.05 * s(0))
            return a / point.sigma_min();
    }
    throw NoConvergenceError("random_gl_point: rejection sampling failed");
}

SolutionVarietyPoint random_solution_variety_point(int n, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int attempt = 0; attempt < 10000; ++attempt) {
        Matrix m(n, n + 1);
        for (int j = 0; j < n + 1; ++j)
            for (int i = 0; i < n; ++i) m(i, j) = gauss(rng);
        m /= m.norm();
        const MatrixPoint point(m);
        const auto& s = point.singular_values();
        if (!(point.sigma_min() > 0.02 && point.gap() > 0.05 * s(0))) continue;
        // Kernel vector of the widest right factor column.
        Vector zeta = point.right().col(n);
        SolutionVarietyPoint w{m, zeta};
        if (w.residual() < 1e-12) return w;
    }
    throw NoConvergenceError("random_solution_variety_point: rejection sampling failed");
}

}  // namespace condgeo
