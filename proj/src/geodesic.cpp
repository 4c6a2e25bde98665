#include "geodesic.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <random>

namespace condgeo {

Vector geodesic_force(const ConformalMetric& metric, const Vector& x, const Vector& v) {
    const double alpha = metric.alpha(x);
    if (!(alpha > 0.0)) throw DomainError("geodesic_force: alpha(x) <= 0");
    const Vector grad = metric.grad_alpha(x);
    const double dav = grad.dot(v);
    return (-dav / alpha) * v + (v.squaredNorm() / (2.0 * alpha)) * grad;
}

double metric_speed(const ConformalMetric& metric, const Vector& x, const Vector& v) {
    return std::sqrt(metric.alpha(x)) * v.norm();
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

struct DomainStop {
    StopReason reason;
    std::string message;
};

class Integrator {
public:
    using Force = std::function<Vector(const Vector&, const Vector&)>;
    using Project = std::function<void(Vector&, Vector&)>;

    Integrator(const ConformalMetric& metric, Force force, Project project,
               const IntegrateOptions& opts)
        : metric_(metric), force_(std::move(force)), project_(std::move(project)), opts_(opts) {}

    GeodesicPath run(const Vector& x0, const Vector& v0, double horizon) {
        if (!(horizon > 0.0)) throw InvalidArgumentError("integration horizon must be positive");
        if (v0.norm() == 0.0) throw InvalidArgumentError("initial velocity must be nonzero");

        std::vector<GeodesicPath::Node> nodes;
        StopReason reason = StopReason::Completed;
        long accepted = 0, rejected = 0;

        Vector x = x0, v = v0;
        if (project_) project_(x, v);
        check_alpha(x);

        Vector k1x = v, k1v;
        try {
            k1v = force_(x, v);
        } catch (const DomainError& e) {
            throw DomainError(std::string("integrate_geodesic: initial state invalid: ") + e.what());
        }
        nodes.push_back({0.0, x, v, k1v});

        double t = 0.0;
        double h = opts_.initial_step > 0.0 ? opts_.initial_step : initial_step(x, v, k1v, horizon);
        const double max_step = opts_.max_step > 0.0 ? opts_.max_step : horizon;
        const double h_min = 1e-14 * std::max(1.0, horizon);

        std::optional<DomainStop> stop;
        while (t < horizon) {
            if (accepted + rejected > opts_.max_steps)
                throw StepFailureError("integrate_geodesic: step budget exhausted");
            h = std::min({h, max_step, horizon - t});

            Vector x2, v2, x3, v3, x4, v4, x5, v5, x6, v6, xn, vn;
            Vector k2x, k2v, k3x, k3v, k4x, k4v, k5x, k5v, k6x, k6v, k7x, k7v;
            bool stage_ok = true;
            try {
                x2 = x + h * a21 * k1x;                 v2 = v + h * a21 * k1v;
                k2x = v2;                               k2v = force_(x2, v2);
                x3 = x + h * (a31 * k1x + a32 * k2x);   v3 = v + h * (a31 * k1v + a32 * k2v);
                k3x = v3;                               k3v = force_(x3, v3);
                x4 = x + h * (a41 * k1x + a42 * k2x + a43 * k3x);
                v4 = v + h * (a41 * k1v + a42 * k2v + a43 * k3v);
                k4x = v4;                               k4v = force_(x4, v4);
                x5 = x + h * (a51 * k1x + a52 * k2x + a53 * k3x + a54 * k4x);
                v5 = v + h * (a51 * k1v + a52 * k2v + a53 * k3v + a54 * k4v);
                k5x = v5;                               k5v = force_(x5, v5);
                x6 = x + h * (a61 * k1x + a62 * k2x + a63 * k3x + a64 * k4x + a65 * k5x);
                v6 = v + h * (a61 * k1v + a62 * k2v + a63 * k3v + a64 * k4v + a65 * k5v);
                k6x = v6;                               k6v = force_(x6, v6);
                xn = x + h * (b1 * k1x + b3 * k3x + b4 * k4x + b5 * k5x + b6 * k6x);
                vn = v + h * (b1 * k1v + b3 * k3v + b4 * k4v + b5 * k5v + b6 * k6v);
                k7x = vn;                               k7v = force_(xn, vn);
            } catch (const SingularGapError& e) {
                stage_ok = false;
                if (h <= 4.0 * h_min) { stop = DomainStop{StopReason::SingularGap, e.what()}; break; }
            } catch (const DomainError& e) {
                stage_ok = false;
                if (h <= 4.0 * h_min) { stop = DomainStop{StopReason::DomainExit, e.what()}; break; }
            }
            if (!stage_ok) {
                ++rejected;
                h *= 0.25;
                continue;
            }

            const Vector ex = h * (e1 * k1x + e3 * k3x + e4 * k4x + e5 * k5x + e6 * k6x + e7 * k7x);
            const Vector ev = h * (e1 * k1v + e3 * k3v + e4 * k4v + e5 * k5v + e6 * k6v + e7 * k7v);
            const double err = error_norm(x, xn, ex, v, vn, ev);

            if (err <= 1.0) {
                t += h;
                if (project_) {
                    project_(xn, vn);
                    k7v = force_(xn, vn);
                }
                x = xn;
                v = vn;
                k1x = v;
                k1v = k7v;  // FSAL
                nodes.push_back({t, x, v, k1v});
                ++accepted;
                if (metric_.alpha(x) > opts_.alpha_cap) {
                    stop = DomainStop{StopReason::DomainExit, "alpha exceeded alpha_cap"};
                    break;
                }
                h *= std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 1.0, 5.0);
            } else {
                ++rejected;
                if (h <= h_min)
                    throw StepFailureError("integrate_geodesic: error control failed at minimum step");
                h *= std::clamp(0.9 * std::pow(err, -0.2), 0.2, 0.9);
            }
        }

        if (stop) reason = stop->reason;
        GeodesicPath path(std::move(nodes), reason);
        path.steps_accepted = accepted;
        path.steps_rejected = rejected;
        return path;
    }

private:
    void check_alpha(const Vector& x) const {
        const double alpha = metric_.alpha(x);
        if (!(alpha > 0.0)) throw DomainError("alpha(x) <= 0 at initial state");
        if (alpha > opts_.alpha_cap) throw DomainError("alpha(x0) already beyond alpha_cap");
    }

    double error_norm(const Vector& x, const Vector& xn, const Vector& ex, const Vector& v,
                      const Vector& vn, const Vector& ev) const {
        double acc = 0.0;
        const Eigen::Index d = x.size();
        for (Eigen::Index i = 0; i < d; ++i) {
            const double sx = opts_.abs_tol + opts_.rel_tol * std::max(std::abs(x(i)), std::abs(xn(i)));
            const double sv = opts_.abs_tol + opts_.rel_tol * std::max(std::abs(v(i)), std::abs(vn(i)));
            acc += (ex(i) / sx) * (ex(i) / sx) + (ev(i) / sv) * (ev(i) / sv);
        }
        return std::sqrt(acc / (2.0 * static_cast<double>(d)));
    }

    double initial_step(const Vector& x, const Vector& v, const Vector& f, double horizon) const {
        const double scale = std::max(1.0, std::max(x.norm(), v.norm()));
        const double rate = std::max(v.norm(), f.norm());
        double h = rate > 0.0 ? 0.01 * scale / rate : horizon / 100.0;
        return std::clamp(h, 1e-10 * horizon, horizon / 10.0);
    }

    const ConformalMetric& metric_;
    Force force_;
    Project project_;
    const IntegrateOptions& opts_;
};

}  // namespace

GeodesicPath integrate_geodesic(const ConformalMetric& metric, const Vector& x0, const Vector& v0,
                                double horizon, const IntegrateOptions& opts) {
    if (x0.size() != metric.dim || v0.size() != metric.dim)
        throw DimensionError("integrate_geodesic: state dimension mismatch");
    Integrator integrator(
        metric, [&](const Vector& x, const Vector& v) { return geodesic_force(metric, x, v); },
        nullptr, opts);
    return integrator.run(x0, v0, horizon);
}

namespace {

Eigen::LLT<Matrix> gram_llt(const Matrix& j) {
    Eigen::LLT<Matrix> llt(Matrix(j * j.transpose()));
    if (llt.info() != Eigen::Success)
        throw RankError("constraint Jacobian lost row rank");
    return llt;
}

void project_to_constraints(const ConstraintSet& constraints, Vector& x, Vector& v,
                            const IntegrateOptions& opts) {
    for (int iter = 0; iter < 25; ++iter) {
        const Vector c = constraints.residual(x);
        if (c.lpNorm<Eigen::Infinity>() <= opts.projection_tol) break;
        const Matrix j = constraints.jacobian(x);
        x -= j.transpose() * gram_llt(j).solve(c);
    }
    if (constraints.residual(x).lpNorm<Eigen::Infinity>() > opts.drift_tol)
        throw ConstraintDriftError("post-step projection failed to restore c(x) = 0");
    const Matrix j = constraints.jacobian(x);
    v -= j.transpose() * gram_llt(j).solve(Vector(j * v));
}

}  // namespace

GeodesicPath integrate_constrained_geodesic(const ConformalMetric& metric,
                                            const ConstraintSet& constraints, const Vector& x0,
                                            const Vector& v0, double horizon,
                                            const IntegrateOptions& opts) {
    if (x0.size() != metric.dim || v0.size() != metric.dim)
        throw DimensionError("integrate_constrained_geodesic: state dimension mismatch");
    if (constraints.residual(x0).lpNorm<Eigen::Infinity>() > 1e-8)
        throw InvalidArgumentError("x0 does not satisfy the constraints");
    if ((constraints.jacobian(x0) * v0).lpNorm<Eigen::Infinity>() >
        1e-8 * std::max(1.0, v0.norm()))
        throw InvalidArgumentError("v0 is not tangent to the constraint set");

    auto force = [&](const Vector& x, const Vector& v) {
        const Vector f = geodesic_force(metric, x, v);
        const Matrix j = constraints.jacobian(x);
        const Vector h = constraints.hess(x, v);
        const Vector lambda = gram_llt(j).solve(Vector(-(h + j * f)));
        return Vector(f + j.transpose() * lambda);
    };
    auto project = [&](Vector& x, Vector& v) { project_to_constraints(constraints, x, v, opts); };

    Integrator integrator(metric, force, project, opts);
    return integrator.run(x0, v0, horizon);
}

namespace {

double adaptive_simpson(const std::function<double(double)>& f, double a, double fa, double m,
                        double fm, double b, double fb, double whole, double tol, int depth) {
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1);
}

double integrate_interval(const std::function<double(double)>& f, double a, double b, double tol) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, fa, m, fm, b, fb, whole, tol, 48);
}

}  // namespace

double condition_length(const ConformalMetric& metric,
                        const std::function<Vector(double)>& position,
                        const std::function<Vector(double)>& velocity, double a, double b,
                        double quad_tol) {
    auto integrand = [&](double t) {
        const Vector x = position(t);
        const double alpha = metric.alpha(x);
        if (!(alpha > 0.0)) throw DomainError("condition_length: sample left the domain");
        return std::sqrt(alpha) * velocity(t).norm();
    };
    return integrate_interval(integrand, a, b, quad_tol * std::max(1.0, std::abs(b - a)));
}

double condition_length(const ConformalMetric& metric, const GeodesicPath& path, double quad_tol) {
    auto integrand = [&](double t) {
        Vector x, v;
        path.state(t, x, v);
        const double alpha = metric.alpha(x);
        if (!(alpha > 0.0)) throw DomainError("condition_length: sample left the domain");
        return std::sqrt(alpha) * v.norm();
    };
    const auto& nodes = path.nodes();
    if (nodes.size() < 2) return 0.0;
    const double span = path.t1() - path.t0();
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        const double tol = quad_tol * std::max(1.0, span) * (nodes[i + 1].t - nodes[i].t) / span;
        total += integrate_interval(integrand, nodes[i].t, nodes[i + 1].t, tol);
    }
    return total;
}

ShootResult shoot_geodesic(const ConformalMetric& metric, const ConstraintSet* constraints,
                           const Vector& x_a, const Vector& x_b, const ShootOptions& opts) {
    const int d = metric.dim;
    if (x_a.size() != d || x_b.size() != d)
        throw DimensionError("shoot_geodesic: endpoint dimension mismatch");
    const double T = opts.time;

    // Velocities are parametrized in an orthonormal tangent basis at x_a so
    // that constrained shooting searches only admissible directions.
    Matrix basis = constraints ? tangent_basis(*constraints, x_a) : Matrix(Matrix::Identity(d, d));
    const int k = static_cast<int>(basis.cols());

    auto integrate = [&](const Vector& w, GeodesicPath* out) -> Vector {
        const Vector v0 = basis * w;
        if (v0.norm() == 0.0) return Vector(Vector::Constant(d, 1e6));
        GeodesicPath path =
            constraints
                ? integrate_constrained_geodesic(metric, *constraints, x_a, v0, T, opts.integrate)
                : integrate_geodesic(metric, x_a, v0, T, opts.integrate);
        Vector r = path.position(path.t1()) - x_b;
        if (path.stop_reason() != StopReason::Completed) {
            // Penalize early exits so the search is steered back into the domain.
            r.array() += (T - path.t1()) * 1e3;
        }
        if (out) *out = std::move(path);
        return r;
    };

    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const Vector chord = basis.transpose() * (x_b - x_a) / T;
    double best_residual = std::numeric_limits<double>::infinity();

    for (int attempt = 0; attempt <= opts.restarts; ++attempt) {
        Vector w = chord;
        if (attempt > 0) {
            Vector noise(k);
            for (int i = 0; i < k; ++i) noise(i) = gauss(rng);
            w += (0.25 * attempt / opts.restarts) * std::max(1.0, chord.norm()) * noise;
        }
        try {
            Vector r = integrate(w, nullptr);
            for (int iter = 0; iter < opts.max_iter; ++iter) {
                const double rnorm = r.norm();
                if (rnorm <= opts.pos_tol) {
                    GeodesicPath path;
                    integrate(w, &path);
                    return ShootResult{std::move(path), Vector(basis * w), rnorm, attempt};
                }
                // Forward-difference Jacobian of the endpoint map.
                Matrix jac(d, k);
                const double fd = 1e-7 * std::max(1.0, w.norm());
                for (int i = 0; i < k; ++i) {
                    Vector wp = w;
                    wp(i) += fd;
                    jac.col(i) = (integrate(wp, nullptr) - r) / fd;
                }
                const Vector step = jac.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV)
                                        .solve(Vector(-r));
                double damp = 1.0;
                bool improved = false;
                for (int ls = 0; ls < 12; ++ls) {
                    const Vector trial = w + damp * step;
                    Vector rt;
                    try {
                        rt = integrate(trial, nullptr);
                    } catch (const Error&) {
                        damp *= 0.5;
                        continue;
                    }
                    if (rt.norm() < rnorm) {
                        w = trial;
                        r = rt;
                        improved = true;
                        break;
                    }
                    damp *= 0.5;
                }
                if (!improved) break;
            }
            best_residual = std::min(best_residual, r.norm());
        } catch (const Error&) {
            continue;  // restart from a different guess
        }
    }
    throw ConvergenceError("shoot_geodesic failed; best endpoint residual " +
                           std::to_string(best_residual));
}

}  // namespace condgeo
