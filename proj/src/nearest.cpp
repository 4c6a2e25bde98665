#include "nearest.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

namespace condgeo {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Candidate {
    Vector foot;
    double dist;
    double residual;
};

struct Polynomial {
    struct Term {
        double coeff;
        std::vector<int> powers;
    };
    std::vector<Term> terms;

    static double power(double base, int exp) {
        double value = 1.0;
        for (int i = 0; i < exp; ++i) value *= base;
        return value;
    }

    double eval(const Vector& x) const {
        double total = 0.0;
        for (const Term& term : terms) {
            double value = term.coeff;
            for (std::size_t i = 0; i < term.powers.size(); ++i)
                value *= power(x(static_cast<Eigen::Index>(i)), term.powers[i]);
            total += value;
        }
        return total;
    }

    Vector grad(const Vector& x) const {
        Vector g = Vector::Zero(x.size());
        for (const Term& term : terms) {
            for (std::size_t k = 0; k < term.powers.size(); ++k) {
                if (term.powers[k] == 0) continue;
                double value = term.coeff * term.powers[k];
                for (std::size_t i = 0; i < term.powers.size(); ++i) {
                    const int p = term.powers[i] - (i == k ? 1 : 0);
                    value *= power(x(static_cast<Eigen::Index>(i)), p);
                }
                g(static_cast<Eigen::Index>(k)) += value;
            }
        }
        return g;
    }

    double hess_form(const Vector& x, const Vector& u) const {
        double total = 0.0;
        for (const Term& term : terms) {
            const std::size_t d = term.powers.size();
            for (std::size_t k = 0; k < d; ++k) {
                for (std::size_t l = 0; l < d; ++l) {
                    const int pk = term.powers[k];
                    const int pl = term.powers[l];
                    double factor;
                    if (k == l) {
                        if (pk < 2) continue;
                        factor = static_cast<double>(pk) * (pk - 1);
                    } else {
                        if (pk < 1 || pl < 1) continue;
                        factor = static_cast<double>(pk) * pl;
                    }
                    double value = term.coeff * factor;
                    for (std::size_t i = 0; i < d; ++i) {
                        int p = term.powers[i];
                        if (i == k) --p;
                        if (i == l) --p;
                        value *= power(x(static_cast<Eigen::Index>(i)), p);
                    }
                    total += value * u(static_cast<Eigen::Index>(k)) *
                             u(static_cast<Eigen::Index>(l));
                }
            }
        }
        return total;
    }
};

Vector parse_vector(const nlohmann::json& j) {
    Vector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

}  // namespace

struct NearestDetail {
    static std::vector<Candidate> candidates(const SubmanifoldDescriptor& d, const Vector& x,
                                             const NearestOptions& opts);
    static std::vector<Candidate> parametric_candidates(const SubmanifoldDescriptor& d,
                                                        const Vector& x,
                                                        const NearestOptions& opts,
                                                        std::vector<Vector>* params);
    static std::vector<Candidate> implicit_candidates(const SubmanifoldDescriptor& d,
                                                      const Vector& x, const NearestOptions& opts);
    static Vector chart_curvature_polarized(const SubmanifoldDescriptor& d, const Vector& s,
                                            const Vector& du, const Vector& dv);
    static Vector chart_d2(const SubmanifoldDescriptor& d, const Vector& s, const Vector& ds);
    static std::vector<Vector> tied_feet(const SubmanifoldDescriptor& d, const Vector& x,
                                         const NearestOptions& opts, double* rho);

    static const SubmanifoldDescriptor& access(const SubmanifoldDescriptor& d) { return d; }

    // Direct member access helpers for the operations in this translation unit.
    static DescriptorKind kind(const SubmanifoldDescriptor& d) { return d.kind_; }
    static const std::vector<Vector>& points(const SubmanifoldDescriptor& d) { return d.points_; }
    static const std::optional<ConstraintSet>& constraints(const SubmanifoldDescriptor& d) {
        return d.constraints_;
    }
    static const std::function<Vector(const Vector&)>& chart(const SubmanifoldDescriptor& d) {
        return d.chart_;
    }
    static const std::function<Matrix(const Vector&)>& dchart(const SubmanifoldDescriptor& d) {
        return d.dchart_;
    }
    static const std::vector<Vector>& seeds(const SubmanifoldDescriptor& d) { return d.seeds_; }
    static const std::function<Vector(const Vector&)>& exact_nearest(
        const SubmanifoldDescriptor& d) {
        return d.exact_nearest_;
    }
    static const std::function<Vector(const Vector&, const Vector&)>& exact_dk(
        const SubmanifoldDescriptor& d) {
        return d.exact_dk_;
    }
    static const std::function<bool(const Vector&, double, double)>& tie_rule(
        const SubmanifoldDescriptor& d) {
        return d.tie_rule_;
    }
    static int param_dim(const SubmanifoldDescriptor& d) { return d.param_dim_; }

    static SubmanifoldDescriptor make(DescriptorKind kind, int ambient) {
        SubmanifoldDescriptor d;
        d.kind_ = kind;
        d.ambient_dim_ = ambient;
        return d;
    }
    static SubmanifoldDescriptor& mut(SubmanifoldDescriptor& d) { return d; }
    friend class SubmanifoldDescriptor;

    static void set_parametric(SubmanifoldDescriptor& d, int param_dim,
                               std::function<Vector(const Vector&)> chart,
                               std::function<Matrix(const Vector&)> dchart,
                               std::function<Vector(const Vector&, const Vector&)> d2chart,
                               std::vector<Vector> seeds) {
        d.param_dim_ = param_dim;
        d.chart_ = std::move(chart);
        d.dchart_ = std::move(dchart);
        d.d2chart_ = std::move(d2chart);
        d.seeds_ = std::move(seeds);
    }
    static void set_points(SubmanifoldDescriptor& d, std::vector<Vector> points) {
        d.points_ = std::move(points);
    }
    static void set_constraints(SubmanifoldDescriptor& d, ConstraintSet constraints,
                                std::vector<Vector> seeds) {
        d.constraints_ = std::move(constraints);
        d.seeds_ = std::move(seeds);
    }
    static void set_exact(SubmanifoldDescriptor& d, std::function<Vector(const Vector&)> nearest,
                          std::function<Vector(const Vector&, const Vector&)> dk,
                          std::function<bool(const Vector&, double, double)> ties) {
        d.exact_nearest_ = std::move(nearest);
        d.exact_dk_ = std::move(dk);
        d.tie_rule_ = std::move(ties);
    }
};

SubmanifoldDescriptor SubmanifoldDescriptor::circle(double radius, Vector center) {
    if (!(radius > 0.0)) throw InvalidArgumentError("circle radius must be positive");
    const int dim = static_cast<int>(center.size());
    if (dim != 2) throw DimensionError("circle descriptor lives in R^2");
    auto d = NearestDetail::make(DescriptorKind::Analytic, dim);
    NearestDetail::set_exact(
        d,
        [radius, center](const Vector& x) -> Vector {
            const Vector w = x - center;
            const double norm = w.norm();
            if (norm < 1e-300) return Vector(center + radius * Vector::Unit(2, 0));
            return center + (radius / norm) * w;
        },
        [radius, center](const Vector& x, const Vector& xdot) -> Vector {
            const Vector w = x - center;
            const double norm = w.norm();
            if (norm < 1e-300)
                throw MultiplicityError("dK undefined at the circle center");
            const Vector wh = w / norm;
            return (radius / norm) * (xdot - wh * wh.dot(xdot));
        },
        [center](const Vector& x, double, double tie_tol) {
            return (x - center).norm() <= 0.5 * tie_tol;
        });
    return d;
}

SubmanifoldDescriptor SubmanifoldDescriptor::circle(double radius) {
    return circle(radius, Vector::Zero(2));
}

SubmanifoldDescriptor SubmanifoldDescriptor::ellipse(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgumentError("ellipse semi-axes must be positive");
    std::vector<Vector> seeds;
    for (int i = 0; i < 32; ++i) {
        Vector s(1);
        s(0) = 2.0 * kPi * i / 32.0;
        seeds.push_back(s);
    }
    return parametric(
        2,
        [a, b](const Vector& s) {
            Vector p(2);
            p << a * std::cos(s(0)), b * std::sin(s(0));
            return p;
        },
        [a, b](const Vector& s) {
            Matrix j(2, 1);
            j << -a * std::sin(s(0)), b * std::cos(s(0));
            return j;
        },
        std::move(seeds),
        [a, b](const Vector& s, const Vector& ds) {
            Vector p(2);
            p << -a * std::cos(s(0)), -b * std::sin(s(0));
            return Vector(ds(0) * ds(0) * p);
        });
}

SubmanifoldDescriptor SubmanifoldDescriptor::point_set(std::vector<Vector> points) {
    if (points.empty()) throw InvalidArgumentError("point_set requires at least one point");
    auto d = NearestDetail::make(DescriptorKind::PointSet, static_cast<int>(points[0].size()));
    NearestDetail::set_points(d, std::move(points));
    return d;
}

SubmanifoldDescriptor SubmanifoldDescriptor::hyperplane(Vector normal, double offset) {
    const double norm = normal.norm();
    if (!(norm > 0.0)) throw InvalidArgumentError("hyperplane normal must be nonzero");
    const Vector n = normal / norm;
    const double b = offset / norm;
    auto d = NearestDetail::make(DescriptorKind::Analytic, static_cast<int>(normal.size()));
    NearestDetail::set_exact(
        d, [n, b](const Vector& x) -> Vector { return x - (n.dot(x) - b) * n; },
        [n](const Vector&, const Vector& xdot) -> Vector { return xdot - n * n.dot(xdot); },
        nullptr);
    return d;
}

SubmanifoldDescriptor SubmanifoldDescriptor::implicit(ConstraintSet constraints,
                                                      std::vector<Vector> seeds) {
    auto d = NearestDetail::make(DescriptorKind::Implicit, constraints.dim);
    NearestDetail::set_constraints(d, std::move(constraints), std::move(seeds));
    return d;
}

SubmanifoldDescriptor SubmanifoldDescriptor::parametric(
    int ambient_dim, std::function<Vector(const Vector&)> chart,
    std::function<Matrix(const Vector&)> dchart, std::vector<Vector> seeds,
    std::function<Vector(const Vector&, const Vector&)> d2chart) {
    if (seeds.empty()) throw InvalidArgumentError("parametric descriptor requires seeds");
    auto d = NearestDetail::make(DescriptorKind::Parametric, ambient_dim);
    NearestDetail::set_parametric(d, static_cast<int>(seeds[0].size()), std::move(chart),
                                  std::move(dchart), std::move(d2chart), std::move(seeds));
    return d;
}

SubmanifoldDescriptor SubmanifoldDescriptor::projection(
    int ambient_dim, std::function<Vector(const Vector&)> nearest) {
    auto d = NearestDetail::make(DescriptorKind::Projection, ambient_dim);
    NearestDetail::set_exact(d, std::move(nearest), nullptr, nullptr);
    return d;
}

SubmanifoldDescriptor SubmanifoldDescriptor::from_json_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("descriptor JSON parse failure: ") + e.what());
    }
    const std::string type = j.value("type", "");
    try {
        if (type == "circle") {
            const double radius = j.value("radius", 1.0);
            if (j.contains("center")) return circle(radius, parse_vector(j["center"]));
            return circle(radius);
        }
        if (type == "ellipse") return ellipse(j.at("a").get<double>(), j.at("b").get<double>());
        if (type == "point_set") {
            std::vector<Vector> points;
            for (const auto& p : j.at("points")) points.push_back(parse_vector(p));
            return point_set(std::move(points));
        }
        if (type == "hyperplane")
            return hyperplane(parse_vector(j.at("normal")), j.value("offset", 0.0));
        if (type == "implicit_polynomial") {
            const int dim = j.at("ambient_dim").get<int>();
            std::vector<Polynomial> polys;
            for (const auto& pj : j.at("polynomials")) {
                Polynomial poly;
                for (const auto& tj : pj.at("terms")) {
                    Polynomial::Term term;
                    term.coeff = tj.at("coeff").get<double>();
                    for (const auto& p : tj.at("powers")) term.powers.push_back(p.get<int>());
                    if (static_cast<int>(term.powers.size()) != dim)
                        throw ConfigError("polynomial powers length must equal ambient_dim");
                    poly.terms.push_back(std::move(term));
                }
                polys.push_back(std::move(poly));
            }
            ConstraintSet constraints;
            constraints.dim = dim;
            constraints.codim = static_cast<int>(polys.size());
            constraints.residual = [polys](const Vector& x) {
                Vector c(polys.size());
                for (std::size_t i = 0; i < polys.size(); ++i)
                    c(static_cast<Eigen::Index>(i)) = polys[i].eval(x);
                return c;
            };
            constraints.jacobian = [polys, dim](const Vector& x) {
                Matrix jac(polys.size(), dim);
                for (std::size_t i = 0; i < polys.size(); ++i)
                    jac.row(static_cast<Eigen::Index>(i)) = polys[i].grad(x).transpose();
                return jac;
            };
            constraints.hess = [polys](const Vector& x, const Vector& u) {
                Vector h(polys.size());
                for (std::size_t i = 0; i < polys.size(); ++i)
                    h(static_cast<Eigen::Index>(i)) = polys[i].hess_form(x, u);
                return h;
            };
            std::vector<Vector> seeds;
            if (j.contains("seeds"))
                for (const auto& s : j["seeds"]) seeds.push_back(parse_vector(s));
            return implicit(std::move(constraints), std::move(seeds));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("descriptor JSON field error: ") + e.what());
    }
    throw ConfigError("unknown descriptor type '" + type + "'");
}

Vector NearestDetail::chart_d2(const SubmanifoldDescriptor& d, const Vector& s,
                               const Vector& ds) {
    if (d.d2chart_) return d.d2chart_(s, ds);
    const double h = 1e-6 * std::max(1.0, s.norm());
    const Matrix jp = d.dchart_(s + h * ds);
    const Matrix jm = d.dchart_(s - h * ds);
    return ((jp - jm) / (2.0 * h)) * ds;
}

std::vector<Candidate> NearestDetail::parametric_candidates(const SubmanifoldDescriptor& d,
                                                            const Vector& x,
                                                            const NearestOptions& opts,
                                                            std::vector<Vector>* params) {
    std::vector<Candidate> out;
    const int p = d.param_dim_;
    for (const Vector& seed : d.seeds_) {
        Vector s = seed;
        bool ok = false;
        for (int iter = 0; iter < opts.max_iter; ++iter) {
            const Vector psi = d.chart_(s);
            const Vector diff = x - psi;
            const Matrix jac = d.dchart_(s);
            const Vector r = jac.transpose() * diff;  // stationarity residual
            const double scale = 1.0 + diff.norm();
            if (r.norm() <= opts.newton_tol * scale) {
                ok = true;
                break;
            }
            // Newton matrix of the stationarity system; Gauss-Newton fallback.
            Matrix m = jac.transpose() * jac;
            Vector diag(p);
            for (int i = 0; i < p; ++i)
                diag(i) = diff.dot(chart_d2(d, s, Vector::Unit(p, i)));
            Matrix curv(p, p);
            for (int i = 0; i < p; ++i) {
                curv(i, i) = diag(i);
                for (int k = i + 1; k < p; ++k) {
                    const double q =
                        diff.dot(chart_d2(d, s, Vector::Unit(p, i) + Vector::Unit(p, k)));
                    curv(i, k) = curv(k, i) = (q - diag(i) - diag(k)) / 2.0;
                }
            }
            const Matrix newton = m - curv;
            Vector step;
            const auto lu = newton.fullPivLu();
            if (lu.isInvertible())
                step = lu.solve(r);
            else
                step = m.ldlt().solve(r);
            double damp = 1.0;
            const double f0 = diff.squaredNorm();
            bool moved = false;
            for (int ls = 0; ls < 20; ++ls) {
                const Vector trial = s + damp * step;
                const Vector dt = x - d.chart_(trial);
                const Vector rt = d.dchart_(trial).transpose() * dt;
                if (dt.squaredNorm() <= f0 + 1e-14 || rt.norm() < r.norm()) {
                    s = trial;
                    moved = true;
                    break;
                }
                damp *= 0.5;
            }
            if (!moved) break;
        }
        if (!ok) continue;
        const Vector foot = d.chart_(s);
        const Vector diff = x - foot;
        const double residual = (d.dchart_(s).transpose() * diff).norm();
        out.push_back({foot, diff.norm(), residual});
        if (params) params->push_back(s);
    }
    return out;
}

std::vector<Candidate> NearestDetail::implicit_candidates(const SubmanifoldDescriptor& d,
                                                          const Vector& x,
                                                          const NearestOptions& opts) {
    const ConstraintSet& cs = *d.constraints_;
    const int dim = cs.dim;
    const int codim = cs.codim;

    std::vector<Vector> seeds = d.seeds_;
    if (seeds.empty()) {
        seeds.push_back(x);
        std::mt19937_64 rng(opts.seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double base = 1.0 + x.norm();
        while (static_cast<int>(seeds.size()) < opts.multistart) {
            Vector u(dim);
            for (int i = 0; i < dim; ++i) u(i) = gauss(rng);
            u.normalize();
            const double radius = base * (0.05 + 2.0 * (seeds.size() % 8) / 8.0);
            seeds.push_back(x + radius * u);
        }
    }

    auto project_to_manifold = [&](Vector y) -> std::optional<Vector> {
        for (int iter = 0; iter < 50; ++iter) {
            const Vector c = cs.residual(y);
            if (c.lpNorm<Eigen::Infinity>() <= 1e-12) return y;
            const Matrix j = cs.jacobian(y);
            Eigen::LLT<Matrix> llt(Matrix(j * j.transpose()));
            if (llt.info() != Eigen::Success) return std::nullopt;
            y -= j.transpose() * llt.solve(c);
        }
        return std::nullopt;
    };

    std::vector<Candidate> out;
    for (const Vector& seed : seeds) {
        auto projected = project_to_manifold(seed);
        if (!projected) continue;
        Vector y = *projected;

        // Newton on the optimality system {x - y = J^T mu, c(y) = 0}.
        auto multipliers = [&](const Vector& yy) {
            const Matrix j = cs.jacobian(yy);
            return Vector(Eigen::LLT<Matrix>(Matrix(j * j.transpose())).solve(j * (x - yy)));
        };
        Vector mu = multipliers(y);
        auto residual = [&](const Vector& yy, const Vector& mm) {
            const Matrix j = cs.jacobian(yy);
            Vector g(dim + codim);
            g.head(dim) = x - yy - j.transpose() * mm;
            g.tail(codim) = cs.residual(yy);
            return g;
        };
        Vector g = residual(y, mu);
        bool ok = g.norm() <= opts.newton_tol * (1.0 + (x - y).norm());
        for (int iter = 0; iter < opts.max_iter && !ok; ++iter) {
            const Matrix j = cs.jacobian(y);
            Matrix hsum = Matrix::Zero(dim, dim);
            for (int i = 0; i < codim; ++i)
                hsum += mu(i) * constraint_hessian_matrix(cs, y, i);
            Matrix sys = Matrix::Zero(dim + codim, dim + codim);
            sys.topLeftCorner(dim, dim) = -Matrix::Identity(dim, dim) - hsum;
            sys.topRightCorner(dim, codim) = -j.transpose();
            sys.bottomLeftCorner(codim, dim) = j;
            const Vector step = sys.fullPivLu().solve(Vector(-g));
            double damp = 1.0;
            bool moved = false;
            for (int ls = 0; ls < 20; ++ls) {
                const Vector yt = y + damp * step.head(dim);
                const Vector mt = mu + damp * step.tail(codim);
                const Vector gt = residual(yt, mt);
                if (gt.norm() < g.norm()) {
                    y = yt;
                    mu = mt;
                    g = gt;
                    moved = true;
                    break;
                }
                damp *= 0.5;
            }
            if (!moved) break;
            ok = g.norm() <= opts.newton_tol * (1.0 + (x - y).norm());
        }
        if (!ok) continue;
        out.push_back({y, (x - y).norm(), g.norm()});
    }
    return out;
}

std::vector<Candidate> NearestDetail::candidates(const SubmanifoldDescriptor& d, const Vector& x,
                                                 const NearestOptions& opts) {
    switch (d.kind_) {
        case DescriptorKind::PointSet: {
            std::vector<Candidate> out;
            for (const Vector& p : d.points_) out.push_back({p, (x - p).norm(), 0.0});
            return out;
        }
        case DescriptorKind::Analytic:
        case DescriptorKind::Projection: {
            const Vector foot = d.exact_nearest_(x);
            return {{foot, (x - foot).norm(), 0.0}};
        }
        case DescriptorKind::Parametric:
            return parametric_candidates(d, x, opts, nullptr);
        case DescriptorKind::Implicit:
            return implicit_candidates(d, x, opts);
    }
    return {};
}

std::vector<Vector> NearestDetail::tied_feet(const SubmanifoldDescriptor& d, const Vector& x,
                                             const NearestOptions& opts, double* rho) {
    auto cands = candidates(d, x, opts);
    if (cands.empty()) throw NoConvergenceError("nearest_point: no start converged");
    std::sort(cands.begin(), cands.end(),
              [](const Candidate& a, const Candidate& b) { return a.dist < b.dist; });
    const double best = cands.front().dist;
    if (rho) *rho = best;
    const double tie_tol = opts.tie_tol_factor * (1.0 + best);
    std::vector<Vector> feet;
    for (const Candidate& c : cands) {
        if (c.dist > best + tie_tol) break;
        bool duplicate = false;
        for (const Vector& f : feet)
            if ((f - c.foot).norm() <= 1e4 * opts.newton_tol * (1.0 + f.norm())) {
                duplicate = true;
                break;
            }
        if (!duplicate) feet.push_back(c.foot);
    }
    return feet;
}

NearestPointResult nearest_point(const SubmanifoldDescriptor& descriptor, const Vector& x,
                                 const NearestOptions& opts) {
    if (x.size() != descriptor.ambient_dim())
        throw DimensionError("nearest_point: point dimension mismatch");
    auto cands = NearestDetail::candidates(descriptor, x, opts);
    if (cands.empty()) throw NoConvergenceError("nearest_point: no start converged");
    std::sort(cands.begin(), cands.end(),
              [](const Candidate& a, const Candidate& b) { return a.dist < b.dist; });

    NearestPointResult result;
    result.foot = cands.front().foot;
    result.rho = cands.front().dist;
    result.newton_residual = cands.front().residual;

    const double tie_tol = opts.tie_tol_factor * (1.0 + result.rho);
    for (std::size_t i = 1; i < cands.size(); ++i) {
        if (cands[i].dist > result.rho + tie_tol) break;
        if ((cands[i].foot - result.foot).norm() >
            1e4 * opts.newton_tol * (1.0 + result.foot.norm())) {
            result.multiplicity = true;
            break;
        }
    }
    const auto& tie_rule = NearestDetail::tie_rule(descriptor);
    if (tie_rule && tie_rule(x, result.rho, tie_tol)) result.multiplicity = true;
    return result;
}

Vector dK(const SubmanifoldDescriptor& descriptor, const Vector& x, const Vector& xdot,
          const NearestOptions& opts) {
    const auto result = nearest_point(descriptor, x, opts);
    if (result.multiplicity)
        throw MultiplicityError("dK requires a unique nearest point");
    if (!(result.rho > 0.0))
        throw DomainError("dK requires rho(x) > 0");

    switch (NearestDetail::kind(descriptor)) {
        case DescriptorKind::PointSet:
            return Vector::Zero(x.size());  // K piecewise constant off the tie locus
        case DescriptorKind::Analytic:
            return NearestDetail::exact_dk(descriptor)(x, xdot);
        case DescriptorKind::Projection:
            throw InvalidArgumentError("dK is not available for projection descriptors");
        case DescriptorKind::Parametric: {
            std::vector<Vector> params;
            auto cands = NearestDetail::parametric_candidates(descriptor, x, opts, &params);
            std::size_t best = 0;
            for (std::size_t i = 1; i < cands.size(); ++i)
                if (cands[i].dist < cands[best].dist) best = i;
            const Vector& s = params[best];
            const Vector diff = x - cands[best].foot;
            const Matrix jac = NearestDetail::dchart(descriptor)(s);
            const int p = NearestDetail::param_dim(descriptor);

            Vector diag(p);
            for (int i = 0; i < p; ++i)
                diag(i) = diff.dot(NearestDetail::chart_d2(descriptor, s, Vector::Unit(p, i)));
            Matrix curv(p, p);
            for (int i = 0; i < p; ++i) {
                curv(i, i) = diag(i);
                for (int k = i + 1; k < p; ++k) {
                    const double q = diff.dot(NearestDetail::chart_d2(
                        descriptor, s, Vector::Unit(p, i) + Vector::Unit(p, k)));
                    curv(i, k) = curv(k, i) = (q - diag(i) - diag(k)) / 2.0;
                }
            }
            const Matrix m = jac.transpose() * jac - curv;
            Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
            const auto& sv = svd.singularValues();
            if (sv(sv.size() - 1) <= 0.0 || sv(0) / sv(sv.size() - 1) > opts.focal_cond_max)
                throw SingularJacobianError("dK: focal point (ill-conditioned chart system)");
            const Vector sdot = svd.solve(Vector(jac.transpose() * xdot));
            return jac * sdot;
        }
        case DescriptorKind::Implicit: {
            const ConstraintSet& cs = *NearestDetail::constraints(descriptor);
            const int dim = cs.dim;
            const int codim = cs.codim;
            const Vector& y = result.foot;
            const Matrix j = cs.jacobian(y);
            const Vector mu =
                Eigen::LLT<Matrix>(Matrix(j * j.transpose())).solve(j * (x - y));
            Matrix hsum = Matrix::Zero(dim, dim);
            for (int i = 0; i < codim; ++i)
                hsum += mu(i) * constraint_hessian_matrix(cs, y, i);
            Matrix sys = Matrix::Zero(dim + codim, dim + codim);
            sys.topLeftCorner(dim, dim) = Matrix::Identity(dim, dim) + hsum;
            sys.topRightCorner(dim, codim) = j.transpose();
            sys.bottomLeftCorner(codim, dim) = j;
            Eigen::JacobiSVD<Matrix> svd(sys, Eigen::ComputeFullU | Eigen::ComputeFullV);
            const auto& sv = svd.singularValues();
            if (sv(sv.size() - 1) <= 0.0 || sv(0) / sv(sv.size() - 1) > opts.focal_cond_max)
                throw SingularJacobianError("dK: focal point (ill-conditioned KKT system)");
            Vector rhs = Vector::Zero(dim + codim);
            rhs.head(dim) = xdot;
            return svd.solve(rhs).head(dim);
        }
    }
    throw InvalidArgumentError("dK: unknown descriptor kind");
}

RhoIdentities rho_identities(const SubmanifoldDescriptor& descriptor, const Vector& x,
                             const Vector& xdot, const NearestOptions& opts) {
    const auto result = nearest_point(descriptor, x, opts);
    if (result.multiplicity)
        throw MultiplicityError("rho_identities requires a unique nearest point");
    if (!(result.rho > 0.0)) throw DomainError("rho_identities requires x outside the manifold");
    const Vector dk = dK(descriptor, x, xdot, opts);
    RhoIdentities identities;
    identities.d_rho_sq = 2.0 * (x - result.foot).dot(xdot);
    identities.dk_inner = dk.dot(xdot);
    identities.d2_rho_sq = 2.0 * xdot.squaredNorm() - 2.0 * identities.dk_inner;
    return identities;
}

namespace {

// Branch data at x: per tied foot, the gradient of rho^2 (DK = 0 branch-wise
// for point sets; unique-foot descriptors have exactly one branch).
struct DistanceEval {
    double rho;
    std::vector<Vector> feet;
    bool tied;
};

DistanceEval distance_eval(const SubmanifoldDescriptor& descriptor, const Vector& x,
                           const NearestOptions& opts) {
    DistanceEval eval;
    eval.feet = NearestDetail::tied_feet(descriptor, x, opts, &eval.rho);
    const auto& tie_rule = NearestDetail::tie_rule(descriptor);
    eval.tied = eval.feet.size() > 1 ||
                (tie_rule && tie_rule(x, eval.rho, opts.tie_tol_factor * (1.0 + eval.rho)));
    return eval;
}

}  // namespace

ConformalMetric distance_metric(const SubmanifoldDescriptor& descriptor,
                                const NearestOptions& opts) {
    ConformalMetric metric;
    metric.dim = descriptor.ambient_dim();
    metric.name = "distance";
    const bool averaging = descriptor.kind() == DescriptorKind::PointSet;

    metric.alpha = [descriptor, opts](const Vector& x) {
        const double rho = nearest_point(descriptor, x, opts).rho;
        if (!(rho > 0.0)) throw DomainError("distance_metric: rho(x) = 0");
        return 1.0 / (rho * rho);
    };
    metric.grad_alpha = [descriptor, opts, averaging](const Vector& x) {
        const auto eval = distance_eval(descriptor, x, opts);
        if (!(eval.rho > 0.0)) throw DomainError("distance_metric: rho(x) = 0");
        if (eval.tied && !averaging)
            throw MultiplicityError("distance_metric gradient at an equidistant point");
        const double r4 = std::pow(eval.rho, 4);
        Vector g = Vector::Zero(x.size());
        for (const Vector& foot : eval.feet) g += (-2.0 / r4) * (x - foot);
        return Vector(g / static_cast<double>(eval.feet.size()));
    };
    metric.hess_alpha = [descriptor, opts, averaging](const Vector& x, const Vector& u) {
        const auto eval = distance_eval(descriptor, x, opts);
        if (!(eval.rho > 0.0)) throw DomainError("distance_metric: rho(x) = 0");
        const double r4 = std::pow(eval.rho, 4);
        const double r6 = std::pow(eval.rho, 6);
        if (eval.tied || averaging) {
            if (!averaging)
                throw MultiplicityError("distance_metric hessian at an equidistant point");
            double total = 0.0;
            for (const Vector& foot : eval.feet) {
                const double drho2 = 2.0 * (x - foot).dot(u);
                total += 2.0 * drho2 * drho2 / r6 - 2.0 * u.squaredNorm() / r4;
            }
            return total / static_cast<double>(eval.feet.size());
        }
        const auto identities = rho_identities(descriptor, x, u, opts);
        return 2.0 * identities.d_rho_sq * identities.d_rho_sq / r6 - identities.d2_rho_sq / r4;
    };
    return metric;
}

RhoBundle rho_bundle(const SubmanifoldDescriptor& descriptor, const NearestOptions& opts) {
    RhoBundle bundle;
    bundle.dim = descriptor.ambient_dim();
    bundle.rho = [descriptor, opts](const Vector& x) {
        return nearest_point(descriptor, x, opts).rho;
    };
    bundle.grad_rho = [descriptor, opts](const Vector& x) {
        const auto result = nearest_point(descriptor, x, opts);
        if (result.multiplicity) throw MultiplicityError("grad rho at an equidistant point");
        if (!(result.rho > 0.0)) throw DomainError("grad rho on the manifold");
        return Vector((x - result.foot) / result.rho);
    };
    bundle.d2_rho_sq = [descriptor, opts](const Vector& x, const Vector& u) {
        return rho_identities(descriptor, x, u, opts).d2_rho_sq;
    };
    return bundle;
}

double projective_distance(const SubmanifoldDescriptor& descriptor, const Vector& x,
                           const NearestOptions& opts) {
    const double norm = x.norm();
    if (!(norm > 0.0)) throw InvalidArgumentError("projective_distance: zero representative");
    const Vector xh = x / norm;

    auto sine = [&](const Vector& y) {
        const double ynorm = y.norm();
        if (!(ynorm > 0.0)) throw DomainError("projective_distance: zero point on the manifold");
        const double c = xh.dot(y) / ynorm;
        return std::sqrt(std::max(0.0, 1.0 - c * c));
    };

    switch (NearestDetail::kind(descriptor)) {
        case DescriptorKind::PointSet: {
            double best = std::numeric_limits<double>::infinity();
            for (const Vector& p : NearestDetail::points(descriptor))
                best = std::min(best, sine(p));
            return best;
        }
        case DescriptorKind::Parametric: {
            const auto& chart = NearestDetail::chart(descriptor);
            const auto& seeds = NearestDetail::seeds(descriptor);
            double best = std::numeric_limits<double>::infinity();
            Vector best_s = seeds.front();
            for (const Vector& s : seeds) {
                const double value = sine(chart(s));
                if (value < best) {
                    best = value;
                    best_s = s;
                }
            }
            // Coordinate-wise golden-section polish around the best seed.
            const int p = static_cast<int>(best_s.size());
            Vector s = best_s;
            double width = 0.5;
            for (int round = 0; round < 60; ++round) {
                bool improved = false;
                for (int i = 0; i < p; ++i) {
                    for (double delta : {width, -width}) {
                        Vector trial = s;
                        trial(i) += delta;
                        const double value = sine(chart(trial));
                        if (value < best) {
                            best = value;
                            s = trial;
                            improved = true;
                        }
                    }
                }
                if (!improved) width *= 0.5;
                if (width < 1e-12) break;
            }
            return best;
        }
        default:
            throw InvalidArgumentError(
                "projective_distance supports point-set and parametric descriptors");
    }
}

}  // namespace condgeo
