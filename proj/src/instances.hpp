#pragma once

#include <random>

#include "convexity.hpp"
#include "metric.hpp"

namespace condgeo {

using Rng = std::mt19937_64;

/// Condition metric on full-rank n x m matrices: alpha(A) = sigma_n(A)^{-2}
/// over the flattened ambient space R^{nm}, with exact gradient and Hessian.
/// The domain is the set of matrices with a simple smallest singular value.
ConformalMetric gl_metric(int n, int m, double gap_tol_factor = kGapTolFactor);

/// rho = sigma_n bundle over flattened matrices, for the rho-form criteria.
RhoBundle gl_rho_bundle(int n, int m, double gap_tol_factor = kGapTolFactor);

/// The sphere |x|_F = r inside the metric's ambient space, paired with the
/// restriction of the given metric.
ConstrainedMetric sphere_instance(double r, ConformalMetric base);

/// alpha_2(A) = |A|_F^2 sigma_n(A)^{-2}; invariant under nonzero scaling.
double projective_alpha2(const Matrix& a);

/// A point of real projective space as a unit sphere representative plus an
/// orthonormal basis of its horizontal space {u : <u,z> = 0}.
struct ProjectivePoint {
    Vector z;
    Matrix horizontal_basis;  // dim x (dim-1), orthonormal, orthogonal to z

    static ProjectivePoint from_representative(const Vector& v);
};

/// A point of the solution variety: |M|_F = |zeta| = 1, M zeta = 0.
struct SolutionVarietyPoint {
    Matrix m;     // n x (n+1)
    Vector zeta;  // n+1

    double residual() const { return (m * zeta).norm(); }
    Vector pack() const;
    static SolutionVarietyPoint unpack(const Vector& x, int n);
};

/// Constraints {|M|^2 = 1, |zeta|^2 = 1, M zeta = 0} over R^{n(n+1)+(n+1)}
/// with the condition metric alpha(M, zeta) = sigma_n(M)^{-2}.
ConstrainedMetric solution_variety_instance(int n, double gap_tol_factor = kGapTolFactor);

/// alpha(x) = x_dim^{-2} on the half space x_dim > 0 (hyperbolic model).
ConformalMetric hyperbolic_instance(int dim);

/// alpha(A) = |A^{-1}|_F^2 on invertible n x n matrices.
ConformalMetric frobenius_alpha(int n);

/// Gaussian sample of GL^>, rejected until gap > 0.05 sigma_1 and
/// sigma_n > 1e-3, then rescaled so that sigma_n = 1 (scaling is an isometry
/// of the condition metric, so this is a normalization, not a restriction).
Matrix random_gl_point(int n, int m, Rng& rng);

/// Random tangent direction with unit Frobenius norm.
Matrix random_direction(int n, int m, Rng& rng);

/// Random solution-variety point: normalized Gaussian M, zeta the unit kernel
/// vector; rejected while gap(M) <= 0.05 sigma_1 or sigma_n(M) <= 0.02.
SolutionVarietyPoint random_solution_variety_point(int n, Rng& rng);

}  // namespace condgeo
