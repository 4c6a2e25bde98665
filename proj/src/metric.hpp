#pragma once

#include <functional>
#include <string>
#include <vector>

#include "linalg.hpp"

namespace condgeo {

/// A conformal metric alpha(x) <.,.> over a flat ambient space, bundled with
/// exact first and second derivative callables. hess_alpha is the quadratic
/// form value D^2 alpha(x)(u,u); cross terms come from polarization.
struct ConformalMetric {
    int dim = 0;
    std::function<double(const Vector&)> alpha;
    std::function<Vector(const Vector&)> grad_alpha;
    std::function<double(const Vector&, const Vector&)> hess_alpha;
    std::string name;
};

/// (Q(u+v) - Q(u-v)) / 4 for a quadratic form Q = hess_alpha(x, .).
double hess_alpha_polarized(const ConformalMetric& metric, const Vector& x,
                            const Vector& u, const Vector& v);

/// alpha(x) == 1 everywhere; geodesics are straight lines.
ConformalMetric uniform_metric(int dim, double value = 1.0);

/// Implicit submanifold c(x) = 0 with derivative access. hess returns the
/// vector of second-derivative values c_i''(x)(v,v).
struct ConstraintSet {
    int dim = 0;
    int codim = 0;
    std::function<Vector(const Vector&)> residual;
    std::function<Matrix(const Vector&)> jacobian;
    std::function<Vector(const Vector&, const Vector&)> hess;
};

/// Orthonormal basis of ker J(x) (columns): the tangent space at x.
/// Throws RankError when J loses row rank.
Matrix tangent_basis(const ConstraintSet& constraints, const Vector& x,
                     double rank_tol = 1e-8);

/// Constraint Hessian of component i as a dim x dim matrix, by polarization.
Matrix constraint_hessian_matrix(const ConstraintSet& constraints, const Vector& x, int i);

/// Orthogonal projection of u onto ker J(x).
Vector tangent_project(const ConstraintSet& constraints, const Vector& x, const Vector& u);

/// A metric together with the constraint set carving out its domain.
struct ConstrainedMetric {
    ConformalMetric metric;
    ConstraintSet constraints;
};

enum class StopReason { Completed, DomainExit, SingularGap };

const char* stop_reason_name(StopReason reason) noexcept;

/// Time-sampled trajectory (t, x, v) with cubic Hermite dense output.
/// Nodes also cache accelerations so velocities interpolate at the same order.
class GeodesicPath {
public:
    struct Node {
        double t;
        Vector x;
        Vector v;
        Vector a;
    };

    GeodesicPath() = default;
    explicit GeodesicPath(std::vector<Node> nodes, StopReason reason = StopReason::Completed);

    /// Build a path from samples; accelerations are estimated by divided
    /// differences of the velocities (used for CSV round trips).
    static GeodesicPath from_samples(const std::vector<double>& times,
                                     const std::vector<Vector>& positions,
                                     const std::vector<Vector>& velocities);

    bool empty() const { return nodes_.empty(); }
    int dim() const { return nodes_.empty() ? 0 : static_cast<int>(nodes_.front().x.size()); }
    double t0() const;
    double t1() const;

    Vector position(double t) const;
    Vector velocity(double t) const;
    void state(double t, Vector& x, Vector& v) const;

    const std::vector<Node>& nodes() const { return nodes_; }
    StopReason stop_reason() const { return stop_reason_; }

    long steps_accepted = 0;
    long steps_rejected = 0;

    /// Writes columns t, x[0..dim), v[0..dim), alpha, metric_speed with
    /// metric_speed = sqrt(alpha(x)) |v|.
    void write_csv(const std::string& filename, const ConformalMetric& metric) const;
    static GeodesicPath read_csv(const std::string& filename);

private:
    std::size_t segment_index(double t) const;

    std::vector<Node> nodes_;
    StopReason stop_reason_ = StopReason::Completed;
};

}  // namespace condgeo
