#include "convexity.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include <nlohmann/json.hpp>

namespace condgeo {

namespace {

double form_value(const ConformalMetric& metric, const Vector& x, const Vector& u,
                  double coefficient) {
    const double alpha = metric.alpha(x);
    if (!(alpha > 0.0)) throw DomainError("form evaluation: alpha(x) <= 0");
    const Vector grad = metric.grad_alpha(x);
    const double dau = grad.dot(u);
    return 2.0 * alpha * metric.hess_alpha(x, u) + grad.squaredNorm() * u.squaredNorm() -
           coefficient * dau * dau;
}

FormResult assemble_form(const ConformalMetric& metric, const Vector& x,
                         const ConstraintSet* constraints, double coefficient) {
    Matrix basis = constraints ? tangent_basis(*constraints, x)
                               : Matrix(Matrix::Identity(metric.dim, metric.dim));
    const int k = static_cast<int>(basis.cols());

    Vector diag(k);
    for (int i = 0; i < k; ++i) diag(i) = form_value(metric, x, basis.col(i), coefficient);

    Matrix q(k, k);
    for (int i = 0; i < k; ++i) {
        q(i, i) = diag(i);
        for (int j = i + 1; j < k; ++j) {
            const double s = form_value(metric, x, basis.col(i) + basis.col(j), coefficient);
            q(i, j) = q(j, i) = (s - diag(i) - diag(j)) / 2.0;
        }
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eigen(q);
    return FormResult{std::move(q), eigen.eigenvalues().minCoeff(), eigen.eigenvalues().maxCoeff()};
}

}  // namespace

FormResult selfconvex_form(const ConformalMetric& metric, const Vector& x,
                           const ConstraintSet* constraints) {
    return assemble_form(metric, x, constraints, 4.0);
}

FormResult convex_form(const ConformalMetric& metric, const Vector& x,
                       const ConstraintSet* constraints) {
    return assemble_form(metric, x, constraints, 2.0);
}

double selfconvex_form_value(const ConformalMetric& metric, const Vector& x, const Vector& u) {
    return form_value(metric, x, u, 4.0);
}

double convex_form_value(const ConformalMetric& metric, const Vector& x, const Vector& u) {
    return form_value(metric, x, u, 2.0);
}

double rho_form(const RhoBundle& bundle, const Vector& x, const Vector& u) {
    if (!(bundle.rho(x) > 0.0)) throw DomainError("rho_form: rho(x) = 0");
    return 2.0 * u.squaredNorm() * bundle.grad_rho(x).squaredNorm() - bundle.d2_rho_sq(x, u);
}

SufficientChecks sufficient_checks(const RhoBundle& bundle, const Vector& x) {
    const double rho = bundle.rho(x);
    if (!(rho > 0.0)) throw DomainError("sufficient_checks: rho(x) = 0");
    const Vector g = bundle.grad_rho(x);
    const int d = bundle.dim;

    Matrix d2rho2(d, d);
    Vector diag(d);
    for (int i = 0; i < d; ++i) diag(i) = bundle.d2_rho_sq(x, Vector::Unit(d, i));
    for (int i = 0; i < d; ++i) {
        d2rho2(i, i) = diag(i);
        for (int j = i + 1; j < d; ++j) {
            const double s = bundle.d2_rho_sq(x, Vector::Unit(d, i) + Vector::Unit(d, j));
            d2rho2(i, j) = d2rho2(j, i) = (s - diag(i) - diag(j)) / 2.0;
        }
    }
    // D^2 rho^2 = 2 rho D^2 rho + 2 D rho (x) D rho.
    const Matrix d2rho = (d2rho2 - 2.0 * g * g.transpose()) / (2.0 * rho);

    Eigen::SelfAdjointEigenSolver<Matrix> eig_rho(d2rho);
    Eigen::SelfAdjointEigenSolver<Matrix> eig_sq(d2rho2);
    const double max_eig = eig_rho.eigenvalues().maxCoeff();
    const double opnorm = eig_sq.eigenvalues().cwiseAbs().maxCoeff();
    const double bound = 2.0 * g.squaredNorm();

    SufficientChecks checks;
    checks.max_eig_d2_rho = max_eig;
    checks.hess_rho_nonpositive = max_eig <= 1e-9 * std::max(1.0, opnorm);
    checks.opnorm_d2_rho_sq = opnorm;
    checks.bound_two_grad_sq = bound;
    checks.d2_rho_sq_bounded = opnorm <= bound + 1e-9 * std::max(1.0, bound);
    return checks;
}

ConvexityReport log_convexity_along_path(const GeodesicPath& path,
                                         const std::function<double(const Vector&)>& alpha,
                                         int grid_size, double conv_tol) {
    if (grid_size < 3) throw InvalidArgumentError("log_convexity grid_size must be >= 3");
    const double a = path.t0();
    const double b = path.t1();
    if (!(b > a)) throw InvalidArgumentError("log_convexity requires a nondegenerate time span");
    const double h = (b - a) / (grid_size - 1);

    ConvexityReport report;
    report.conv_tol = conv_tol;
    report.samples.resize(grid_size);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int i = 0; i < grid_size; ++i) {
        const double t = a + h * i;
        const double value = alpha(path.position(t));
        if (!(value > 0.0)) throw DomainError("log_convexity: alpha not evaluable along the path");
        const double la = std::log(value);
        report.samples[i] = {t, la, 0.0};
        lo = std::min(lo, la);
        hi = std::max(hi, la);
    }
    report.scale = std::max(1.0, hi - lo);

    double min_d2 = std::numeric_limits<double>::infinity();
    for (int i = 1; i + 1 < grid_size; ++i) {
        const double d2 = report.samples[i + 1].log_alpha - 2.0 * report.samples[i].log_alpha +
                          report.samples[i - 1].log_alpha;
        report.samples[i].second_difference = d2;
        min_d2 = std::min(min_d2, d2);
    }
    report.min_second_difference = min_d2;
    report.pass = min_d2 >= -conv_tol * report.scale;
    return report;
}

std::string ConvexityReport::to_json() const {
    nlohmann::json j;
    auto rows = nlohmann::json::array();
    for (const auto& s : samples)
        rows.push_back({s.t, s.log_alpha, s.second_difference});
    j["samples"] = std::move(rows);
    j["min_d2"] = min_second_difference;
    if (min_form_eigenvalue) j["min_eig"] = *min_form_eigenvalue;
    j["verdict"] = pass ? "pass" : "fail";
    j["tolerances"] = {{"conv_tol", conv_tol}, {"scale", scale}};
    return j.dump();
}

CriticalPointReport critical_point_diagnostic(const ConformalMetric& metric, const Vector& x,
                                              double crit_tol) {
    CriticalPointReport report;
    report.grad_norm = metric.grad_alpha(x).norm();
    if (report.grad_norm > crit_tol)
        throw NotCriticalError("gradient norm " + std::to_string(report.grad_norm) +
                               " exceeds crit_tol");

    const int d = metric.dim;
    Matrix h(d, d);
    Vector diag(d);
    for (int i = 0; i < d; ++i) diag(i) = metric.hess_alpha(x, Vector::Unit(d, i));
    for (int i = 0; i < d; ++i) {
        h(i, i) = diag(i);
        for (int j = i + 1; j < d; ++j) {
            const double s = metric.hess_alpha(x, Vector::Unit(d, i) + Vector::Unit(d, j));
            h(i, j) = h(j, i) = (s - diag(i) - diag(j)) / 2.0;
        }
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eigen(h);
    report.hess_eigenvalues = eigen.eigenvalues();
    const double scale = std::max(1.0, report.hess_eigenvalues.cwiseAbs().maxCoeff());
    const double tol = 1e-8 * scale;
    for (int i = 0; i < d; ++i) {
        const double ev = report.hess_eigenvalues(i);
        if (ev < -tol) ++report.n_negative;
        else if (ev > tol) ++report.n_positive;
        else ++report.n_zero;
    }
    if (report.n_negative > 0)
        report.verdict = CriticalVerdict::Violation;
    else if (report.n_positive > 0)
        report.verdict = CriticalVerdict::Consistent;
    else
        report.verdict = CriticalVerdict::Inconclusive;
    return report;
}

}  // namespace condgeo
