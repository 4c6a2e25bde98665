#pragma once

#include <optional>

#include "geodesic.hpp"
#include "metric.hpp"

namespace condgeo {

inline constexpr double kConvTol = 1e-6;
inline constexpr int kDefaultGridSize = 201;

struct FormResult {
    Matrix form;            // symmetric, in an orthonormal (tangent) basis
    double min_eigenvalue;
    double max_eigenvalue;
};

/// Pointwise self-convexity criterion as a quadratic form on directions:
///   Q(u,u) = 2 alpha D^2 alpha(u,u) + |grad alpha|^2 |u|^2 - 4 (grad alpha . u)^2.
/// alpha is self-convex at x iff Q is positive semidefinite.
FormResult selfconvex_form(const ConformalMetric& metric, const Vector& x,
                           const ConstraintSet* constraints = nullptr);

/// Same with coefficient -2: plain convexity of alpha in the conditioned metric.
FormResult convex_form(const ConformalMetric& metric, const Vector& x,
                       const ConstraintSet* constraints = nullptr);

/// Quadratic form values along a single direction (no eigendecomposition).
double selfconvex_form_value(const ConformalMetric& metric, const Vector& x, const Vector& u);
double convex_form_value(const ConformalMetric& metric, const Vector& x, const Vector& u);

/// Derivative bundle of a distance-like function rho with alpha = 1/rho^2.
struct RhoBundle {
    int dim = 0;
    std::function<double(const Vector&)> rho;
    std::function<Vector(const Vector&)> grad_rho;
    std::function<double(const Vector&, const Vector&)> d2_rho_sq;  // quadratic form
};

/// 2 |u|^2 |D rho|^2 - D^2 rho^2(u,u); nonnegativity for all u is equivalent
/// to self-convexity of alpha = 1/rho^2 at x.
double rho_form(const RhoBundle& bundle, const Vector& x, const Vector& u);

struct SufficientChecks {
    bool hess_rho_nonpositive;   // D^2 rho(x) <= 0
    double max_eig_d2_rho;
    bool d2_rho_sq_bounded;      // |D^2 rho^2(x)| <= 2 |D rho(x)|^2
    double opnorm_d2_rho_sq;
    double bound_two_grad_sq;    // 2 |D rho(x)|^2
};

/// The two sufficient conditions for self-convexity of alpha = 1/rho^2.
SufficientChecks sufficient_checks(const RhoBundle& bundle, const Vector& x);

struct ConvexitySample {
    double t;
    double log_alpha;
    double second_difference;  // 0 at the two boundary samples
};

struct ConvexityReport {
    std::vector<ConvexitySample> samples;
    double min_second_difference = 0.0;
    std::optional<double> min_form_eigenvalue;
    bool pass = false;
    double conv_tol = kConvTol;
    double scale = 1.0;  // max(1, range of log alpha)

    std::string to_json() const;
};

/// Samples log alpha(path(t)) on a uniform grid and checks the centered
/// second differences. Pass iff all >= -conv_tol * scale.
ConvexityReport log_convexity_along_path(const GeodesicPath& path,
                                         const std::function<double(const Vector&)>& alpha,
                                         int grid_size = kDefaultGridSize,
                                         double conv_tol = kConvTol);

enum class CriticalVerdict { Consistent, Violation, Inconclusive };

struct CriticalPointReport {
    double grad_norm;
    Vector hess_eigenvalues;
    int n_negative = 0;
    int n_positive = 0;
    int n_zero = 0;
    CriticalVerdict verdict = CriticalVerdict::Inconclusive;
};

/// Eigenvalue signature of D^2 alpha at a near-critical point. A negative
/// eigenvalue there rules out self-convexity near x.
CriticalPointReport critical_point_diagnostic(const ConformalMetric& metric, const Vector& x,
                                              double crit_tol = 1e-6);

}  // namespace condgeo
