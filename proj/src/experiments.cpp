#include "experiments.hpp"

#include <Eigen/Cholesky>
#include <atomic>
#include <cstring>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "convexity.hpp"
#include "geodesic.hpp"
#include "instances.hpp"
#include "nearest.hpp"

namespace condgeo {

namespace {

using nlohmann::json;

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

Rng trial_rng(uint64_t seed, int index) {
    return Rng(splitmix64(seed ^ splitmix64(static_cast<uint64_t>(index) + 1)));
}

struct Digest {
    uint64_t h = 1469598103934665603ull;
    void feed(double value) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &value, sizeof(double));
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 1099511628211ull;
        }
    }
    void feed(const Vector& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) feed(v(i));
    }
    void feed(const Matrix& m) { feed(Vector(flatten(m))); }
    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

void parallel_for(int count, const std::function<void(int)>& body) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (count <= 1 || hw == 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    const unsigned workers = std::min<unsigned>(hw, static_cast<unsigned>(count));
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int i; (i = next.fetch_add(1)) < count;) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct TrialOutcome {
    json margins = json::object();
    std::string verdict = "pass";  // pass | fail | error | skipped
    std::string digest;
    std::string error;
};

json normalize_config(const json& input, const json& defaults) {
    if (!input.is_object()) throw ConfigError("config must be a JSON object");
    json config = defaults;
    for (const auto& [key, value] : input.items()) {
        if (!defaults.contains(key)) throw ConfigError("unknown config key '" + key + "'");
        config[key] = value;
    }
    return config;
}

// Margins are signed distances to the claim thresholds; >= 0 means the trial
// sits on the asserted side.
void finish_trial(TrialOutcome& trial) {
    for (const auto& [key, value] : trial.margins.items()) {
        (void)key;
        if (value.get<double>() < 0.0) {
            trial.verdict = "fail";
            return;
        }
    }
    trial.verdict = "pass";
}

ExperimentResult assemble(const std::string& name, const std::string& claim,
                          const std::string& direction, const json& config,
                          std::vector<TrialOutcome> outcomes) {
    double min_margin = std::numeric_limits<double>::infinity();
    bool any_margin = false;
    bool pass = true;
    json trials = json::array();
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const TrialOutcome& trial = outcomes[i];
        json record;
        record["inputs_digest"] = trial.digest.empty() ? "0000000000000000" : trial.digest;
        record["margins"] = trial.margins;
        record["verdict"] = trial.verdict;
        if (!trial.error.empty()) record["error"] = trial.error;
        trials.push_back(std::move(record));
        if (trial.verdict == "error") pass = false;
        if (trial.verdict == "fail") pass = false;
        for (const auto& [key, value] : trial.margins.items()) {
            (void)key;
            min_margin = std::min(min_margin, value.get<double>());
            any_margin = true;
        }
    }
    if (!any_margin) min_margin = 0.0;
    if (outcomes.empty()) pass = false;

    ExperimentResult result;
    result.pass = pass;
    result.report["version"] = kReportSchemaVersion;
    result.report["experiment"] = name;
    result.report["claim"] = claim;
    result.report["direction"] = direction;
    result.report["config"] = config;
    result.report["trials"] = std::move(trials);
    result.report["summary"] = {{"min_margin", min_margin}, {"pass", pass}};

    const std::string out = config.value("out", "");
    if (!out.empty()) {
        std::ofstream file(std::filesystem::path(out) / "report.json");
        if (!file) throw IoError("cannot write report under '" + out + "'");
        file << result.report_string();
    }
    return result;
}

std::string trial_csv_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "trial_%03d.csv", index);
    return buf;
}

void maybe_write_path(const json& config, int index, const GeodesicPath& path,
                      const ConformalMetric& metric) {
    const std::string out = config.value("out", "");
    if (out.empty() || !config.value("write_paths", true)) return;
    path.write_csv((std::filesystem::path(out) / trial_csv_name(index)).string(), metric);
}

void prepare_out_dir(const json& config) {
    const std::string out = config.value("out", "");
    if (!out.empty()) std::filesystem::create_directories(out);
}

IntegrateOptions experiment_integrate_options() {
    // Tighter than the library defaults: the convexity margins in the
    // reports sit two orders below the second-difference tolerance.
    IntegrateOptions opts;
    opts.abs_tol = 1e-12;
    opts.rel_tol = 1e-11;
    return opts;
}

std::pair<int, int> trial_dims(const json& config, Rng& rng) {
    if (config.value("mixed_dims", false)) {
        std::uniform_int_distribution<int> dn(2, 6);
        const int n = dn(rng);
        std::uniform_int_distribution<int> dm(n, 6);
        return {n, dm(rng)};
    }
    return {config.value("n", 3), config.value("m", 4)};
}

double max_constraint_drift(const GeodesicPath& path, const ConstraintSet& cs) {
    double drift = 0.0;
    for (const auto& node : path.nodes())
        drift = std::max(drift, cs.residual(node.x).lpNorm<Eigen::Infinity>());
    return drift;
}

double max_tangency_residual(const GeodesicPath& path, const ConstraintSet& cs) {
    double residual = 0.0;
    for (const auto& node : path.nodes())
        residual = std::max(residual, (cs.jacobian(node.x) * node.v).lpNorm<Eigen::Infinity>());
    return residual;
}

bool usable_span(const GeodesicPath& path, double horizon) {
    return path.nodes().size() >= 5 && path.t1() - path.t0() >= 0.2 * horizon;
}

// ---------------------------------------------------------------------------
// verify-gl

ExperimentResult run_verify_gl(const json& config) {
    const int trials = config.value("trials", 200);
    const uint64_t seed = config.value("seed", uint64_t{1});
    const double tol = config.value("tol", 1e-6);
    const double form_tol = config.value("form_tol", 1e-8);
    const int grid = config.value("grid_size", kDefaultGridSize);
    const double horizon_max = config.value("horizon", 2.0);
    prepare_out_dir(config);

    std::vector<TrialOutcome> outcomes(trials);
    parallel_for(trials, [&](int i) {
        TrialOutcome& trial = outcomes[i];
        try {
            Rng rng = trial_rng(seed, i);
            const auto [n, m] = trial_dims(config, rng);
            const Matrix a = random_gl_point(n, m, rng);
            Matrix v = random_direction(n, m, rng);
            // sigma_n(a) = 1 after normalization, so |V|_F = 1 is metric speed 1.
            std::uniform_real_distribution<double> uh(0.5, horizon_max);
            const double horizon = uh(rng);

            Digest digest;
            digest.feed(a);
            digest.feed(v);
            digest.feed(horizon);
            trial.digest = digest.hex();

            const ConformalMetric metric = gl_metric(n, m);
            const GeodesicPath path = integrate_geodesic(metric, flatten(a), flatten(v), horizon,
                                                         experiment_integrate_options());
            if (!usable_span(path, horizon)) {
                trial.verdict = "skipped";
                trial.error = std::string("path too short (") + stop_reason_name(path.stop_reason()) + ")";
                return;
            }
            const auto report = log_convexity_along_path(path, metric.alpha, grid, tol);
            const auto form = selfconvex_form(metric, flatten(a));
            trial.margins["second_difference"] = report.min_second_difference + tol;
            trial.margins["form_eigenvalue"] = form.min_eigenvalue + form_tol;
            finish_trial(trial);
            maybe_write_path(config, i, path, metric);
        } catch (const Error& e) {
            trial.verdict = "error";
            trial.error = e.what();
        }
    });
    return assemble("verify-gl",
                    "log(sigma_n^-2) is convex along condition-metric geodesics in GL^> and the "
                    "pointwise self-convexity form is positive semidefinite",
                    "second differences >= -tol; form eigenvalues >= -form_tol", config,
                    std::move(outcomes));
}

// ---------------------------------------------------------------------------
// verify-sphere / verify-projective

ExperimentResult run_verify_sphere_like(const json& config, bool projective) {
    const int trials = config.value("trials", 100);
    const uint64_t seed = config.value("seed", projective ? uint64_t{3} : uint64_t{2});
    const double tol = config.value("tol", 1e-6);
    const double drift_tol = config.value("drift_tol", 1e-8);
    const int grid = config.value("grid_size", kDefaultGridSize);
    const double horizon_max = config.value("horizon", 2.0);
    const double radius = config.value("radius", 1.0);
    prepare_out_dir(config);

    std::vector<TrialOutcome> outcomes(trials);
    parallel_for(trials, [&](int i) {
        TrialOutcome& trial = outcomes[i];
        try {
            Rng rng = trial_rng(seed, i);
            const auto [n, m] = trial_dims(config, rng);
            Matrix a = random_gl_point(n, m, rng);
            a *= radius / a.norm();

            const ConstrainedMetric instance = sphere_instance(radius, gl_metric(n, m));
            const Vector x0 = flatten(a);

            // Horizontal tangent draw: random combination of the horizontal
            // basis at the representative, scaled to metric speed 1.
            const ProjectivePoint rep = ProjectivePoint::from_representative(x0);
            std::normal_distribution<double> gauss(0.0, 1.0);
            Vector w(rep.horizontal_basis.cols());
            for (Eigen::Index k = 0; k < w.size(); ++k) w(k) = gauss(rng);
            Vector v0 = rep.horizontal_basis * w;
            v0 *= MatrixPoint(a).sigma_min() / v0.norm();

            std::uniform_real_distribution<double> uh(0.5, horizon_max);
            const double horizon = uh(rng);

            Digest digest;
            digest.feed(x0);
            digest.feed(v0);
            digest.feed(horizon);
            trial.digest = digest.hex();

            const GeodesicPath path = integrate_constrained_geodesic(
                instance.metric, instance.constraints, x0, v0, horizon,
                experiment_integrate_options());
            if (!usable_span(path, horizon)) {
                trial.verdict = "skipped";
                trial.error = std::string("path too short (") + stop_reason_name(path.stop_reason()) + ")";
                return;
            }

            std::function<double(const Vector&)> value;
            if (projective)
                value = [n, m](const Vector& x) { return projective_alpha2(unflatten(x, n, m)); };
            else
                value = instance.metric.alpha;
            const auto report = log_convexity_along_path(path, value, grid, tol);
            trial.margins["second_difference"] = report.min_second_difference + tol;
            trial.margins["constraint_drift"] =
                drift_tol - max_constraint_drift(path, instance.constraints);
            trial.margins["tangency"] = drift_tol - max_tangency_residual(path, instance.constraints);
            if (projective) {
                const double alpha2 = projective_alpha2(a);
                trial.margins["scale_invariance"] =
                    1e-12 - std::abs(projective_alpha2(Matrix(3.0 * a)) / alpha2 - 1.0);
                trial.margins["antipodal"] =
                    1e-12 - std::abs(projective_alpha2(Matrix(-a)) / alpha2 - 1.0);
            }
            finish_trial(trial);
            maybe_write_path(config, i, path, instance.metric);
        } catch (const Error& e) {
            trial.verdict = "error";
            trial.error = e.what();
        }
    });
    if (projective)
        return assemble("verify-projective",
                        "alpha_2(A) = |A|_F^2 sigma_n(A)^-2 is self-convex on real projective "
                        "space, checked along horizontal lifts on the unit sphere",
                        "second differences of log alpha_2 >= -tol along horizontal geodesics",
                        config, std::move(outcomes));
    return assemble("verify-sphere",
                    "sigma_n^-2 restricted to the Frobenius sphere is self-convex",
                    "second differences >= -tol; constraint drift and tangency <= drift_tol",
                    config, std::move(outcomes));
}

// ---------------------------------------------------------------------------
// verify-solution-variety

ExperimentResult run_verify_solution_variety(const json& config) {
    const int trials = config.value("trials", 200);
    const uint64_t seed = config.value("seed", uint64_t{4});
    const double tol = config.value("tol", 1e-6);
    const double drift_tol = config.value("drift_tol", 1e-8);
    const double lemma_tol = config.value("lemma_tol", 1e-10);
    const int grid = config.value("grid_size", kDefaultGridSize);
    const double horizon_max = config.value("horizon", 1.5);
    const int n = config.value("n", 2);
    prepare_out_dir(config);

    const ConstrainedMetric instance = solution_variety_instance(n);
    const int dim = instance.metric.dim;
    const int nm = n * (n + 1);

    std::vector<TrialOutcome> outcomes(trials);
    parallel_for(trials, [&](int i) {
        TrialOutcome& trial = outcomes[i];
        try {
            Rng rng = trial_rng(seed, i);
            const SolutionVarietyPoint w = random_solution_variety_point(n, rng);
            const Vector x0 = w.pack();

            std::normal_distribution<double> gauss(0.0, 1.0);
            Vector u(dim);
            for (int k = 0; k < dim; ++k) u(k) = gauss(rng);
            u = tangent_project(instance.constraints, x0, u);
            u.normalize();

            Digest digest;
            digest.feed(x0);
            digest.feed(u);
            trial.digest = digest.hex();

            // Acceleration of the induced flat-metric geodesic at t = 0 is
            // purely normal: J^T lambda with J lambda solved from c'' = 0.
            const Matrix j = instance.constraints.jacobian(x0);
            const Vector h = instance.constraints.hess(x0, u);
            const Vector lambda = Eigen::LLT<Matrix>(Matrix(j * j.transpose())).solve(Vector(-h));
            const Vector acc = j.transpose() * lambda;
            const MatrixPoint mp(w.m);
            const Matrix mdd = unflatten(acc.head(nm), n, n + 1);
            const double lemma_value = mp.left_vector().dot(mdd * mp.right_vector());
            const double expected = -unflatten(u.head(nm), n, n + 1).squaredNorm() * mp.sigma_min();
            trial.margins["lemma_sign"] = -lemma_value - lemma_tol;
            trial.margins["lemma_identity"] = 1e-10 - std::abs(lemma_value - expected);

            // Condition-metric geodesic and the log-convexity bound.
            std::uniform_real_distribution<double> uh(0.5, horizon_max);
            const double horizon = uh(rng);
            const Vector v0 = mp.sigma_min() * u;
            const GeodesicPath path = integrate_constrained_geodesic(
                instance.metric, instance.constraints, x0, v0, horizon,
                experiment_integrate_options());
            if (!usable_span(path, horizon)) {
                trial.verdict = "skipped";
                trial.error = std::string("path too short (") + stop_reason_name(path.stop_reason()) + ")";
                return;
            }
            const auto report = log_convexity_along_path(path, instance.metric.alpha, grid, tol);
            trial.margins["second_difference"] = report.min_second_difference + tol;
            trial.margins["constraint_drift"] =
                drift_tol - max_constraint_drift(path, instance.constraints);
            trial.margins["tangency"] =
                drift_tol - max_tangency_residual(path, instance.constraints);
            finish_trial(trial);
            maybe_write_path(config, i, path, instance.metric);
        } catch (const Error& e) {
            trial.verdict = "error";
            trial.error = e.what();
        }
    });
    return assemble("verify-solution-variety",
                    "on the solution variety {|M|=|zeta|=1, M zeta = 0} the map sigma_n(M)^-2 is "
                    "self-convex and the first-projection acceleration strictly decreases sigma_n",
                    "lemma value <= -lemma_tol; second differences >= -tol", config,
                    std::move(outcomes));
}

// ---------------------------------------------------------------------------
// counterexample-frobenius

ExperimentResult run_counterexample_frobenius(const json& config) {
    prepare_out_dir(config);
    TrialOutcome trial;
    try {
        Matrix a(3, 3);
        a << 1, 0, 0, 0, 1, 0, 0, 0, 2;
        Matrix adot(3, 3);
        adot << 0, 1, 0, -1, 0, 0, 0, 0, 0;
        Digest digest;
        digest.feed(a);
        digest.feed(adot);
        trial.digest = digest.hex();

        const ConformalMetric metric = frobenius_alpha(3);
        const double convex_value = convex_form_value(metric, flatten(a), flatten(adot));
        const double selfconvex_value = selfconvex_form_value(metric, flatten(a), flatten(adot));
        const double expected = -15.0 / 8.0;
        trial.margins["value_matches"] = 1e-9 - std::abs(convex_value - expected);
        trial.margins["negative"] = -convex_value;
        trial.margins["selfconvex_value_negative"] = -selfconvex_value;
        finish_trial(trial);
        if (trial.verdict == "pass") trial.verdict = "negative-as-expected";
    } catch (const Error& e) {
        trial.verdict = "error";
        trial.error = e.what();
    }
    std::vector<TrialOutcome> outcomes{std::move(trial)};
    return assemble("counterexample-frobenius",
                    "alpha(A) = |A^-1|_F^2 fails the convexity inequality at A = diag(1,1,2), "
                    "Adot = E12 - E21, with form value -15/8",
                    "form value equals -15/8 within 1e-9 and is negative", config,
                    std::move(outcomes));
}

// ---------------------------------------------------------------------------
// example-hyperbolic

ExperimentResult run_example_hyperbolic(const json& config) {
    const int dim = config.value("dim", 2);
    const int samples = config.value("trials", 100);
    const uint64_t seed = config.value("seed", uint64_t{6});
    const double horizon = config.value("horizon", 3.0);
    prepare_out_dir(config);

    const ConformalMetric metric = hyperbolic_instance(dim);
    std::vector<TrialOutcome> outcomes(3);

    // Closed-form trajectory check (dim 2 embedding of the planar geodesic).
    try {
        TrialOutcome& trial = outcomes[0];
        Vector x0 = Vector::Zero(dim);
        x0(dim - 1) = 1.0;
        Vector v0 = Vector::Zero(dim);
        v0(0) = 1.0;
        Digest digest;
        digest.feed(x0);
        digest.feed(v0);
        trial.digest = digest.hex();
        const GeodesicPath path =
            integrate_geodesic(metric, x0, v0, horizon, experiment_integrate_options());
        double max_err = 0.0;
        for (int k = 0; k <= 300; ++k) {
            const double t = horizon * k / 300.0;
            const Vector x = path.position(t);
            max_err = std::max(max_err, std::abs(x(0) - std::tanh(t)));
            max_err = std::max(max_err, std::abs(x(dim - 1) - 1.0 / std::cosh(t)));
        }
        trial.margins["trajectory"] = 1e-8 - max_err;
        finish_trial(trial);
        maybe_write_path(config, 0, path, metric);
    } catch (const Error& e) {
        outcomes[0].verdict = "error";
        outcomes[0].error = e.what();
    }

    // The self-convexity form has an exactly zero smallest eigenvalue.
    try {
        TrialOutcome& trial = outcomes[1];
        Rng rng = trial_rng(seed, 1);
        std::uniform_real_distribution<double> spread(-3.0, 3.0);
        std::uniform_real_distribution<double> height(std::log(0.2), std::log(5.0));
        double worst = 0.0;
        Digest digest;
        for (int k = 0; k < samples; ++k) {
            Vector x(dim);
            for (int i = 0; i + 1 < dim; ++i) x(i) = spread(rng);
            x(dim - 1) = std::exp(height(rng));
            digest.feed(x);
            worst = std::max(worst, std::abs(selfconvex_form(metric, x).min_eigenvalue));
        }
        trial.digest = digest.hex();
        trial.margins["form_zero"] = 1e-9 - worst;
        finish_trial(trial);
    } catch (const Error& e) {
        outcomes[1].verdict = "error";
        outcomes[1].error = e.what();
    }

    // Vertical geodesic: log alpha is affine (-2t), second differences vanish.
    try {
        TrialOutcome& trial = outcomes[2];
        Vector x0 = Vector::Zero(dim);
        x0(dim - 1) = 1.0;
        Vector v0 = Vector::Zero(dim);
        v0(dim - 1) = 1.0;
        Digest digest;
        digest.feed(x0);
        digest.feed(v0);
        trial.digest = digest.hex();
        const GeodesicPath path =
            integrate_geodesic(metric, x0, v0, 2.0, experiment_integrate_options());
        const auto report = log_convexity_along_path(path, metric.alpha, 101, 1e-9);
        double max_abs_d2 = 0.0;
        for (const auto& s : report.samples)
            max_abs_d2 = std::max(max_abs_d2, std::abs(s.second_difference));
        trial.margins["affine"] = 1e-9 - max_abs_d2;
        finish_trial(trial);
    } catch (const Error& e) {
        outcomes[2].verdict = "error";
        outcomes[2].error = e.what();
    }

    return assemble("example-hyperbolic",
                    "alpha(x) = x_n^-2 on the half space is self-convex; condition geodesics "
                    "follow the half-space model closed forms",
                    "trajectory error <= 1e-8; form eigenvalue magnitude <= 1e-9", config,
                    std::move(outcomes));
}

// ---------------------------------------------------------------------------
// example-circle

ExperimentResult run_example_circle(const json& config) {
    const uint64_t seed = config.value("seed", uint64_t{7});
    const double half_span = config.value("horizon", 1.0);
    const double tol = config.value("tol", 1e-6);
    const int grid = config.value("grid_size", kDefaultGridSize);
    prepare_out_dir(config);

    TrialOutcome trial;
    GeodesicPath path;
    const auto descriptor = SubmanifoldDescriptor::circle(1.0);
    const ConformalMetric metric = distance_metric(descriptor);
    try {
        Rng rng = trial_rng(seed, 0);
        std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
        const double theta = angle(rng);
        Vector d(2);
        d << std::cos(theta), std::sin(theta);

        // Diameter ray through the center: x(t) = (-1 + e^t) d for t <= 0,
        // shifted so integration starts at t = -half_span.
        const Vector x0 = (std::exp(-half_span) - 1.0) * d;
        const Vector v0 = std::exp(-half_span) * d;
        Digest digest;
        digest.feed(x0);
        digest.feed(v0);
        trial.digest = digest.hex();

        path = integrate_geodesic(metric, x0, v0, 2.0 * half_span,
                                  experiment_integrate_options());
        double max_dev = 0.0;
        for (int k = 0; k <= 400; ++k) {
            const double s = 2.0 * half_span * k / 400.0;
            const double expected = 2.0 * std::abs(s - half_span);
            max_dev = std::max(max_dev, std::abs(std::log(metric.alpha(path.position(s))) - expected));
        }
        const auto report = log_convexity_along_path(path, metric.alpha, grid, tol);
        trial.margins["profile"] = tol - max_dev;
        trial.margins["second_difference"] = report.min_second_difference + tol;
        finish_trial(trial);
        maybe_write_path(config, 0, path, metric);
    } catch (const Error& e) {
        trial.verdict = "error";
        trial.error = e.what();
    }
    std::vector<TrialOutcome> outcomes{std::move(trial)};
    return assemble("example-circle",
                    "for the unit-circle distance metric, log alpha along the diameter ray "
                    "through the center equals 2|t|",
                    "profile deviation <= tol; second differences >= -tol", config,
                    std::move(outcomes));
}

// ---------------------------------------------------------------------------
// example-two-points

ExperimentResult run_example_two_points(const json& config) {
    const double a = config.value("a", 0.1);
    const int grid = config.value("grid_size", 7);
    const double residual_tol = config.value("residual_tol", 1e-8);
    const double nonconvex_tol = config.value("nonconvex_tol", 1e-3);
    prepare_out_dir(config);

    TrialOutcome trial;
    std::vector<Vector> nodes(2, Vector(2));
    nodes[0] << -1.0, 0.0;
    nodes[1] << 1.0, 0.0;
    const auto descriptor = SubmanifoldDescriptor::point_set(nodes);
    const ConformalMetric metric = distance_metric(descriptor);
    try {
        Vector xa(2), xb(2);
        xa << 0.0, -a;
        xb << 0.0, a;
        Digest digest;
        digest.feed(xa);
        digest.feed(xb);
        trial.digest = digest.hex();

        const auto shot = shoot_geodesic(metric, nullptr, xa, xb);
        const auto report = log_convexity_along_path(shot.path, metric.alpha, grid, kConvTol);
        trial.margins["endpoint_residual"] = residual_tol - shot.residual;
        // The claim is a counterexample: convexity must fail decisively.
        trial.margins["nonconvexity"] = -report.min_second_difference - nonconvex_tol;
        finish_trial(trial);
        maybe_write_path(config, 0, shot.path, metric);
    } catch (const Error& e) {
        trial.verdict = "error";
        trial.error = e.what();
    }
    std::vector<TrialOutcome> outcomes{std::move(trial)};
    return assemble("example-two-points",
                    "the distance metric of the two-point set {(-1,0),(1,0)} is not self-convex: "
                    "log alpha has a strict maximum along the connecting segment",
                    "endpoint residual <= residual_tol; min second difference < -nonconvex_tol",
                    config, std::move(outcomes));
}

// ---------------------------------------------------------------------------
// verify-distance

ExperimentResult run_verify_distance(const json& config) {
    const int samples = config.value("trials", 500);
    const int geodesics = config.value("geodesics", 10);
    const uint64_t seed = config.value("seed", uint64_t{9});
    const double tol = config.value("tol", 1e-6);
    prepare_out_dir(config);

    const json descriptor_spec = config.value("descriptor", json{{"type", "circle"}, {"radius", 1.0}});
    const auto descriptor = SubmanifoldDescriptor::from_json_string(descriptor_spec.dump());
    const int dim = descriptor.ambient_dim();
    const ConformalMetric metric = distance_metric(descriptor);
    const RhoBundle bundle = rho_bundle(descriptor);

    auto sample_point = [&](Rng& rng) -> std::optional<Vector> {
        std::uniform_real_distribution<double> box(-2.0, 2.0);
        for (int attempt = 0; attempt < 200; ++attempt) {
            Vector x(dim);
            for (int i = 0; i < dim; ++i) x(i) = box(rng);
            try {
                const auto res = nearest_point(descriptor, x);
                if (res.multiplicity || res.rho < 5e-2) continue;
                dK(descriptor, x, Vector::Unit(dim, 0));  // focal guard
                return x;
            } catch (const Error&) {
                continue;
            }
        }
        return std::nullopt;
    };

    std::vector<TrialOutcome> outcomes(2);

    // Pointwise battery over random samples.
    try {
        TrialOutcome& trial = outcomes[0];
        Rng rng = trial_rng(seed, 0);
        std::normal_distribution<double> gauss(0.0, 1.0);
        double lipschitz = std::numeric_limits<double>::infinity();
        double orth = 0.0;
        double monotone = std::numeric_limits<double>::infinity();
        double rho_form_min = std::numeric_limits<double>::infinity();
        double fd_rel = 0.0;
        Digest digest;
        int accepted = 0;
        while (accepted < samples) {
            auto maybe_x = sample_point(rng);
            if (!maybe_x) throw NoConvergenceError("verify-distance: sampling stalled");
            const Vector x = *maybe_x;
            digest.feed(x);
            const auto res = nearest_point(descriptor, x);
            Vector u(dim);
            for (int i = 0; i < dim; ++i) u(i) = gauss(rng);
            u.normalize();

            // 1-Lipschitz on pairs with a nearby second sample.
            Vector y = x + 0.5 * u;
            const double rho_y = nearest_point(descriptor, y).rho;
            lipschitz = std::min(lipschitz, (y - x).norm() - std::abs(rho_y - res.rho));

            // Orthogonality of x - K(x) against the tangent image of dK.
            for (int i = 0; i < dim; ++i) {
                const Vector tangent = dK(descriptor, x, Vector::Unit(dim, i));
                const double tnorm = tangent.norm();
                if (tnorm > 1e-10)
                    orth = std::max(orth,
                                    std::abs((x - res.foot).dot(tangent)) / (tnorm * (1.0 + res.rho)));
            }

            const auto ids = rho_identities(descriptor, x, u);
            monotone = std::min(monotone, ids.dk_inner);
            rho_form_min = std::min(rho_form_min, rho_form(bundle, x, u));

            // Finite-difference consistency of the displayed identities.
            auto rho_sq = [&](const Vector& p) {
                const double r = nearest_point(descriptor, p).rho;
                return r * r;
            };
            const double fd1 = fd_oracle(rho_sq, x, u, 1, 1e-5);
            const double fd2 = fd_oracle(rho_sq, x, u, 2, 1e-4);
            fd_rel = std::max(fd_rel, std::abs(fd1 - ids.d_rho_sq) / std::max(1.0, std::abs(fd1)));
            fd_rel = std::max(fd_rel, std::abs(fd2 - ids.d2_rho_sq) / std::max(1.0, std::abs(fd2)));
            ++accepted;
        }
        trial.digest = digest.hex();
        trial.margins["lipschitz"] = lipschitz + 1e-9;
        trial.margins["orthogonality"] = 1e-9 - orth;
        trial.margins["dk_monotonicity"] = monotone + 1e-9;
        trial.margins["rho_form"] = rho_form_min + 1e-8;
        trial.margins["fd_consistency"] = 1e-5 - fd_rel;
        finish_trial(trial);
    } catch (const Error& e) {
        outcomes[0].verdict = "error";
        outcomes[0].error = e.what();
    }

    // Short geodesics stay log-convex.
    try {
        TrialOutcome& trial = outcomes[1];
        Rng rng = trial_rng(seed, 1);
        std::normal_distribution<double> gauss(0.0, 1.0);
        double min_d2 = std::numeric_limits<double>::infinity();
        Digest digest;
        int done = 0;
        while (done < geodesics) {
            auto maybe_x = sample_point(rng);
            if (!maybe_x) throw NoConvergenceError("verify-distance: sampling stalled");
            const Vector x = *maybe_x;
            const double rho = nearest_point(descriptor, x).rho;
            Vector v(dim);
            for (int i = 0; i < dim; ++i) v(i) = gauss(rng);
            v *= rho / v.norm();  // metric speed 1
            digest.feed(x);
            digest.feed(v);
            try {
                const GeodesicPath path =
                    integrate_geodesic(metric, x, v, 0.4, experiment_integrate_options());
                if (!usable_span(path, 0.4)) continue;
                const auto report = log_convexity_along_path(path, metric.alpha, 101, tol);
                min_d2 = std::min(min_d2, report.min_second_difference);
                maybe_write_path(config, done, path, metric);
                ++done;
            } catch (const Error&) {
                continue;  // wandered into the focal set; resample
            }
        }
        trial.digest = digest.hex();
        trial.margins["second_difference"] = min_d2 + tol;
        finish_trial(trial);
    } catch (const Error& e) {
        outcomes[1].verdict = "error";
        outcomes[1].error = e.what();
    }

    return assemble("verify-distance",
                    "alpha = 1/d(x,N)^2 is self-convex on the open set of unique nearest points",
                    "identities hold; dK monotone; rho form and second differences nonnegative",
                    config, std::move(outcomes));
}

// ---------------------------------------------------------------------------
// geodesic / length

Vector parse_point(const json& j, const char* name) {
    if (!j.is_array() || j.empty()) throw ConfigError(std::string("missing vector '") + name + "'");
    Vector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

ExperimentResult run_geodesic(const json& config) {
    prepare_out_dir(config);
    TrialOutcome trial;
    const json metric_spec = config.value("metric", json{{"type", "hyperbolic"}, {"dim", 2}});
    MetricBundle bundle = metric_from_json(metric_spec);
    const double horizon = config.value("T", 1.0);

    GeodesicPath path;
    try {
        if (config["xa"].is_array() && config["xb"].is_array()) {
            const Vector xa = parse_point(config["xa"], "xa");
            const Vector xb = parse_point(config["xb"], "xb");
            Digest digest;
            digest.feed(xa);
            digest.feed(xb);
            trial.digest = digest.hex();
            ShootOptions opts;
            opts.time = horizon;
            opts.seed = static_cast<unsigned>(config.value("seed", uint64_t{10}));
            const auto shot = shoot_geodesic(
                bundle.metric, bundle.constraints ? &*bundle.constraints : nullptr, xa, xb, opts);
            path = shot.path;
            trial.margins["endpoint_residual"] = 1e-8 - shot.residual;
        } else {
            const Vector x0 = parse_point(config.value("x0", json::array()), "x0");
            const Vector v0 = parse_point(config.value("v0", json::array()), "v0");
            Digest digest;
            digest.feed(x0);
            digest.feed(v0);
            trial.digest = digest.hex();
            path = bundle.constraints
                       ? integrate_constrained_geodesic(bundle.metric, *bundle.constraints, x0, v0,
                                                        horizon, experiment_integrate_options())
                       : integrate_geodesic(bundle.metric, x0, v0, horizon,
                                            experiment_integrate_options());
            trial.margins["completed"] = path.stop_reason() == StopReason::Completed ? 1.0 : -1.0;
        }
        const double speed0 = metric_speed(bundle.metric, path.nodes().front().x,
                                           path.nodes().front().v);
        double drift = 0.0;
        for (const auto& node : path.nodes())
            drift = std::max(drift,
                             std::abs(metric_speed(bundle.metric, node.x, node.v) - speed0) /
                                 std::max(1e-300, speed0));
        trial.margins["speed_drift"] = 1e-6 - drift;
        finish_trial(trial);
        maybe_write_path(config, 0, path, bundle.metric);
    } catch (const Error& e) {
        trial.verdict = "error";
        trial.error = e.what();
    }
    std::vector<TrialOutcome> outcomes{std::move(trial)};
    auto result = assemble("geodesic", "ad-hoc geodesic integration or two-point shooting",
                           "integration completes with constant metric speed", config,
                           std::move(outcomes));
    if (!path.empty()) {
        result.report["t_end"] = path.t1();
        result.report["length"] = condition_length(bundle.metric, path);
    }
    const std::string out = config.value("out", "");
    if (!out.empty()) {
        // report.json was already written by assemble; refresh it with the extras
        std::ofstream file(std::filesystem::path(out) / "report.json");
        file << result.report_string();
    }
    return result;
}

ExperimentResult run_length(const json& config) {
    prepare_out_dir(config);
    TrialOutcome trial;
    const json metric_spec = config.value("metric", json{{"type", "hyperbolic"}, {"dim", 2}});
    MetricBundle bundle = metric_from_json(metric_spec);
    const std::string csv = config.value("csv", "");
    double length = 0.0;
    try {
        if (csv.empty()) throw ConfigError("length experiment requires 'csv'");
        const GeodesicPath path = GeodesicPath::read_csv(csv);
        if (path.dim() != bundle.metric.dim)
            throw DimensionError("CSV path dimension does not match the metric");
        length = condition_length(bundle.metric, path);
        Digest digest;
        for (const auto& node : path.nodes()) digest.feed(node.x);
        trial.digest = digest.hex();
        trial.margins["computed"] = 1.0;
        finish_trial(trial);
    } catch (const Error& e) {
        trial.verdict = "error";
        trial.error = e.what();
    }
    std::vector<TrialOutcome> outcomes{std::move(trial)};
    auto result = assemble("length", "condition length of a supplied path",
                           "quadrature of sqrt(alpha)|v| over the sampled curve", config,
                           std::move(outcomes));
    result.report["length"] = length;
    const std::string out = config.value("out", "");
    if (!out.empty()) {
        std::ofstream file(std::filesystem::path(out) / "report.json");
        file << result.report_string();
    }
    return result;
}

json experiment_defaults(const std::string& name) {
    if (name == "verify-gl")
        return {{"n", 3},      {"m", 4},           {"trials", 200},    {"seed", 1},
                {"tol", 1e-6}, {"form_tol", 1e-8}, {"grid_size", 201}, {"horizon", 2.0},
                {"out", ""},   {"write_paths", false}, {"mixed_dims", false}};
    if (name == "verify-sphere")
        return {{"n", 3},          {"m", 4},       {"trials", 100},    {"seed", 2},
                {"tol", 1e-6},     {"drift_tol", 1e-8}, {"grid_size", 201}, {"horizon", 2.0},
                {"radius", 1.0},   {"out", ""},    {"write_paths", false}, {"mixed_dims", false}};
    if (name == "verify-projective")
        return {{"n", 3},          {"m", 4},       {"trials", 100},    {"seed", 3},
                {"tol", 1e-6},     {"drift_tol", 1e-8}, {"grid_size", 201}, {"horizon", 2.0},
                {"radius", 1.0},   {"out", ""},    {"write_paths", false}, {"mixed_dims", false}};
    if (name == "verify-solution-variety")
        return {{"n", 2},      {"trials", 200},     {"seed", 4},        {"tol", 1e-6},
                {"drift_tol", 1e-8}, {"lemma_tol", 1e-10}, {"grid_size", 201}, {"horizon", 1.5},
                {"out", ""},   {"write_paths", false}};
    if (name == "counterexample-frobenius") return {{"seed", 5}, {"out", ""}};
    if (name == "example-hyperbolic")
        return {{"dim", 2}, {"trials", 100}, {"seed", 6}, {"horizon", 3.0},
                {"out", ""}, {"write_paths", false}};
    if (name == "example-circle")
        return {{"seed", 7}, {"horizon", 1.0}, {"tol", 1e-6}, {"grid_size", 201},
                {"out", ""}, {"write_paths", false}};
    if (name == "example-two-points")
        return {{"seed", 8},        {"a", 0.1},
                {"grid_size", 7},   {"residual_tol", 1e-8},
                {"nonconvex_tol", 1e-3}, {"out", ""},
                {"write_paths", false}};
    if (name == "verify-distance")
        return {{"trials", 500}, {"geodesics", 10}, {"seed", 9}, {"tol", 1e-6},
                {"descriptor", json{{"type", "circle"}, {"radius", 1.0}}}, {"out", ""},
                {"write_paths", false}};
    if (name == "geodesic")
        return {{"metric", json{{"type", "hyperbolic"}, {"dim", 2}}},
                {"x0", json::array()}, {"v0", json::array()}, {"xa", nullptr}, {"xb", nullptr},
                {"T", 1.0}, {"seed", 10}, {"out", ""}, {"write_paths", true}};
    if (name == "length")
        return {{"metric", json{{"type", "hyperbolic"}, {"dim", 2}}}, {"csv", ""}, {"out", ""}};
    throw ConfigError("unknown experiment '" + name + "'");
}

}  // namespace

MetricBundle metric_from_json(const json& spec) {
    if (!spec.is_object()) throw ConfigError("metric config must be a JSON object");
    const std::string type = spec.value("type", "");
    MetricBundle bundle;
    if (type == "gl") {
        bundle.metric = gl_metric(spec.value("n", 2), spec.value("m", 2));
    } else if (type == "sphere-gl") {
        auto instance = sphere_instance(spec.value("radius", 1.0),
                                        gl_metric(spec.value("n", 2), spec.value("m", 2)));
        bundle.metric = std::move(instance.metric);
        bundle.constraints = std::move(instance.constraints);
    } else if (type == "hyperbolic") {
        bundle.metric = hyperbolic_instance(spec.value("dim", 2));
    } else if (type == "frobenius") {
        bundle.metric = frobenius_alpha(spec.value("n", 3));
    } else if (type == "solution-variety") {
        auto instance = solution_variety_instance(spec.value("n", 2));
        bundle.metric = std::move(instance.metric);
        bundle.constraints = std::move(instance.constraints);
    } else if (type == "distance") {
        if (!spec.contains("descriptor")) throw ConfigError("distance metric needs 'descriptor'");
        bundle.metric =
            distance_metric(SubmanifoldDescriptor::from_json_string(spec["descriptor"].dump()));
    } else if (type == "uniform") {
        bundle.metric = uniform_metric(spec.value("dim", 2));
    } else {
        throw ConfigError("unknown metric type '" + type + "'");
    }
    return bundle;
}

std::vector<std::string> experiment_names() {
    return {"verify-gl",      "verify-sphere",          "verify-projective",
            "verify-solution-variety", "counterexample-frobenius", "example-hyperbolic",
            "example-circle", "example-two-points",     "verify-distance",
            "geodesic",       "length"};
}

ExperimentResult run_experiment(const std::string& name, const std::string& config_json) {
    json input;
    if (config_json.empty()) {
        input = json::object();
    } else {
        try {
            input = json::parse(config_json);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config parse failure: ") + e.what());
        }
    }
    const json config = normalize_config(input, experiment_defaults(name));

    if (name == "verify-gl") return run_verify_gl(config);
    if (name == "verify-sphere") return run_verify_sphere_like(config, false);
    if (name == "verify-projective") return run_verify_sphere_like(config, true);
    if (name == "verify-solution-variety") return run_verify_solution_variety(config);
    if (name == "counterexample-frobenius") return run_counterexample_frobenius(config);
    if (name == "example-hyperbolic") return run_example_hyperbolic(config);
    if (name == "example-circle") return run_example_circle(config);
    if (name == "example-two-points") return run_example_two_points(config);
    if (name == "verify-distance") return run_verify_distance(config);
    if (name == "geodesic") return run_geodesic(config);
    if (name == "length") return run_length(config);
    throw ConfigError("unknown experiment '" + name + "'");
}

}  // namespace condgeo
