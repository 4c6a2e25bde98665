#pragma once

#include <optional>
#include <vector>

#include "convexity.hpp"
#include "metric.hpp"

namespace condgeo {

struct NearestOptions {
    int multistart = 32;          // seeds for parametric / implicit descriptors
    double newton_tol = 1e-12;    // stationarity target of the polish step
    int max_iter = 60;
    double tie_tol_factor = 1e-6;  // tie_tol = factor * (1 + rho)
    double focal_cond_max = 1e10;  // dK refuses beyond this condition number
    unsigned seed = 424242;        // implicit-descriptor seed perturbations
};

struct NearestPointResult {
    Vector foot;            // K(x)
    double rho = 0.0;       // |x - K(x)|
    bool multiplicity = false;
    double newton_residual = 0.0;
};

enum class DescriptorKind { PointSet, Parametric, Implicit, Projection, Analytic };

/// A C^2 submanifold without boundary, described parametrically, implicitly,
/// as a finite point set, by an exact nearest-point map, or analytically.
class SubmanifoldDescriptor {
public:
    static SubmanifoldDescriptor circle(double radius, Vector center);
    static SubmanifoldDescriptor circle(double radius = 1.0);  // centered, in R^2
    static SubmanifoldDescriptor ellipse(double a, double b);
    static SubmanifoldDescriptor point_set(std::vector<Vector> points);
    static SubmanifoldDescriptor hyperplane(Vector normal, double offset);
    static SubmanifoldDescriptor implicit(ConstraintSet constraints,
                                          std::vector<Vector> seeds = {});
    /// chart: R^p -> R^j immersion; dchart its j x p Jacobian; d2chart the
    /// component-wise second derivative along a parameter direction (optional,
    /// finite differences of dchart otherwise); seeds for the multistart.
    static SubmanifoldDescriptor parametric(
        int ambient_dim, std::function<Vector(const Vector&)> chart,
        std::function<Matrix(const Vector&)> dchart, std::vector<Vector> seeds,
        std::function<Vector(const Vector&, const Vector&)> d2chart = nullptr);
    /// Closed-form nearest-point map (e.g. best low-rank approximation).
    static SubmanifoldDescriptor projection(int ambient_dim,
                                            std::function<Vector(const Vector&)> nearest);

    /// Declarative form: {"type": "circle"|"ellipse"|"point_set"|"hyperplane"|
    /// "implicit_polynomial", ...}.
    static SubmanifoldDescriptor from_json_string(const std::string& text);

    DescriptorKind kind() const { return kind_; }
    int ambient_dim() const { return ambient_dim_; }

private:
    friend struct NearestDetail;

    DescriptorKind kind_ = DescriptorKind::PointSet;
    int ambient_dim_ = 0;
    int param_dim_ = 0;

    std::function<Vector(const Vector&)> chart_;
    std::function<Matrix(const Vector&)> dchart_;
    std::function<Vector(const Vector&, const Vector&)> d2chart_;
    std::vector<Vector> seeds_;

    std::optional<ConstraintSet> constraints_;
    std::vector<Vector> points_;

    std::function<Vector(const Vector&)> exact_nearest_;
    std::function<Vector(const Vector&, const Vector&)> exact_dk_;
    std::function<bool(const Vector&, double, double)> tie_rule_;  // (x, rho, tie_tol)
};

/// Multistart local minimization with Newton polish of the orthogonality
/// conditions; multiplicity_flag set when two distinct foot points tie.
NearestPointResult nearest_point(const SubmanifoldDescriptor& descriptor, const Vector& x,
                                 const NearestOptions& opts = {});

/// Directional derivative of the nearest-point map, from the linearized
/// optimality system. Requires a unique nearest point away from focal points.
Vector dK(const SubmanifoldDescriptor& descriptor, const Vector& x, const Vector& xdot,
          const NearestOptions& opts = {});

struct RhoIdentities {
    double d_rho_sq;   // D rho^2(x) xdot = 2 <x - K(x), xdot>
    double d2_rho_sq;  // D^2 rho^2(x)(xdot,xdot) = 2|xdot|^2 - 2 <DK xdot, xdot>
    double dk_inner;   // <DK(x) xdot, xdot>
};

RhoIdentities rho_identities(const SubmanifoldDescriptor& descriptor, const Vector& x,
                             const Vector& xdot, const NearestOptions& opts = {});

/// alpha = 1/rho^2 with derivatives assembled from the rho identities.
/// At equidistant points, point-set descriptors average the tied branches
/// (needed to traverse their symmetry locus); other kinds refuse.
ConformalMetric distance_metric(const SubmanifoldDescriptor& descriptor,
                                const NearestOptions& opts = {});

/// rho bundle of the descriptor for the rho-form criteria.
RhoBundle rho_bundle(const SubmanifoldDescriptor& descriptor, const NearestOptions& opts = {});

/// d_P(x, N) = min over N of sin(angle between the lines spanned by x and y).
/// The descriptor holds unit representatives; the value is antipodal-invariant.
double projective_distance(const SubmanifoldDescriptor& descriptor, const Vector& x,
                           const NearestOptions& opts = {});

}  // namespace condgeo
