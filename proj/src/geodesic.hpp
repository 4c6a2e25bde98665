#pragma once

#include <optional>

#include "metric.hpp"

namespace condgeo {

/// Flat-coordinate geodesic acceleration of the conformal metric alpha <.,.>:
///   -(D alpha . v / alpha) v + (|v|^2 / (2 alpha)) grad alpha.
Vector geodesic_force(const ConformalMetric& metric, const Vector& x, const Vector& v);

struct IntegrateOptions {
    double abs_tol = 1e-10;
    double rel_tol = 1e-9;
    double alpha_cap = 1e12;         // DomainExit when alpha(x) exceeds this
    double initial_step = 0.0;       // 0 = automatic
    double max_step = 0.0;           // 0 = horizon
    long max_steps = 2000000;
    double projection_tol = 1e-12;   // constrained: per-step Newton target on c
    double drift_tol = 1e-10;        // constrained: accepted residual bound
};

/// Adaptive Dormand-Prince 5(4) integration of x'' = geodesic_force(x, x').
/// Stops early with a partial path when alpha exceeds alpha_cap (DomainExit)
/// or when the metric callables report a collapsing singular-value gap.
GeodesicPath integrate_geodesic(const ConformalMetric& metric, const Vector& x0,
                                const Vector& v0, double horizon,
                                const IntegrateOptions& opts = {});

/// Geodesics of the induced conformal metric on c(x) = 0: the flat conformal
/// force plus J^T lambda with lambda solved from the differentiated constraint,
/// followed by a per-step projection of (x, v) back onto the constraint set.
GeodesicPath integrate_constrained_geodesic(const ConformalMetric& metric,
                                            const ConstraintSet& constraints, const Vector& x0,
                                            const Vector& v0, double horizon,
                                            const IntegrateOptions& opts = {});

struct ShootOptions {
    double time = 1.0;        // parameter horizon of the connecting geodesic
    double pos_tol = 1e-9;    // endpoint residual target
    int max_iter = 60;
    int restarts = 8;         // random restarts beyond the chord guess
    unsigned seed = 911;
    IntegrateOptions integrate;
};

struct ShootResult {
    GeodesicPath path;
    Vector initial_velocity;
    double residual = 0.0;
    int restarts_used = 0;
};

/// Newton shooting on the initial velocity so that x(time) = x_b. Returns a
/// connecting geodesic (a critical point of length; minimality not certified).
ShootResult shoot_geodesic(const ConformalMetric& metric, const ConstraintSet* constraints,
                           const Vector& x_a, const Vector& x_b, const ShootOptions& opts = {});

/// Condition length integral sqrt(alpha(x(t))) |x'(t)| dt by adaptive
/// quadrature over the dense output.
double condition_length(const ConformalMetric& metric, const GeodesicPath& path,
                        double quad_tol = 1e-10);

/// Same integral for an analytically given curve on [a, b].
double condition_length(const ConformalMetric& metric,
                        const std::function<Vector(double)>& position,
                        const std::function<Vector(double)>& velocity, double a, double b,
                        double quad_tol = 1e-10);

/// sqrt(alpha(x)) |v|.
double metric_speed(const ConformalMetric& metric, const Vector& x, const Vector& v);

}  // namespace condgeo
