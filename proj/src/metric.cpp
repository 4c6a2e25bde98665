#include "metric.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace condgeo {

double hess_alpha_polarized(const ConformalMetric& metric, const Vector& x,
                            const Vector& u, const Vector& v) {
    return (metric.hess_alpha(x, u + v) - metric.hess_alpha(x, u - v)) / 4.0;
}

ConformalMetric uniform_metric(int dim, double value) {
    ConformalMetric metric;
    metric.dim = dim;
    metric.name = "uniform";
    metric.alpha = [value](const Vector&) { return value; };
    metric.grad_alpha = [dim](const Vector&) { return Vector::Zero(dim); };
    metric.hess_alpha = [](const Vector&, const Vector&) { return 0.0; };
    return metric;
}

Matrix tangent_basis(const ConstraintSet& constraints, const Vector& x, double rank_tol) {
    const Matrix j = constraints.jacobian(x);
    Eigen::JacobiSVD<Matrix> svd(j, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(s.size() - 1) <= rank_tol)
        throw RankError("constraint Jacobian lost row rank");
    return svd.matrixV().rightCols(constraints.dim - constraints.codim);
}

Matrix constraint_hessian_matrix(const ConstraintSet& constraints, const Vector& x, int i) {
    const int d = constraints.dim;
    Matrix h(d, d);
    Vector diag(d);
    for (int k = 0; k < d; ++k)
        diag(k) = constraints.hess(x, Vector::Unit(d, k))(i);
    for (int k = 0; k < d; ++k) {
        h(k, k) = diag(k);
        for (int l = k + 1; l < d; ++l) {
            const double q = constraints.hess(x, Vector::Unit(d, k) + Vector::Unit(d, l))(i);
            h(k, l) = h(l, k) = (q - diag(k) - diag(l)) / 2.0;
        }
    }
    return h;
}

Vector tangent_project(const ConstraintSet& constraints, const Vector& x, const Vector& u) {
    const Matrix j = constraints.jacobian(x);
    Eigen::LLT<Matrix> llt(Matrix(j * j.transpose()));
    if (llt.info() != Eigen::Success) throw RankError("constraint Jacobian lost row rank");
    return u - j.transpose() * llt.solve(Vector(j * u));
}

const char* stop_reason_name(StopReason reason) noexcept {
    switch (reason) {
        case StopReason::Completed: return "completed";
        case StopReason::DomainExit: return "domain_exit";
        case StopReason::SingularGap: return "singular_gap";
    }
    return "unknown";
}

GeodesicPath::GeodesicPath(std::vector<Node> nodes, StopReason reason)
    : nodes_(std::move(nodes)), stop_reason_(reason) {
    if (nodes_.empty()) throw InvalidArgumentError("GeodesicPath requires at least one node");
}

GeodesicPath GeodesicPath::from_samples(const std::vector<double>& times,
                                        const std::vector<Vector>& positions,
                                        const std::vector<Vector>& velocities) {
    if (times.size() != positions.size() || times.size() != velocities.size())
        throw InvalidArgumentError("from_samples: size mismatch");
    if (times.empty()) throw InvalidArgumentError("from_samples: empty sample set");
    std::vector<Node> nodes(times.size());
    const std::size_t n = times.size();
    for (std::size_t i = 0; i < n; ++i) {
        nodes[i].t = times[i];
        nodes[i].x = positions[i];
        nodes[i].v = velocities[i];
        if (i > 0 && !(times[i] > times[i - 1]))
            throw InvalidArgumentError("from_samples: times must increase");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (n == 1) {
            nodes[i].a = Vector::Zero(positions[0].size());
        } else if (i == 0) {
            nodes[i].a = (velocities[1] - velocities[0]) / (times[1] - times[0]);
        } else if (i + 1 == n) {
            nodes[i].a = (velocities[i] - velocities[i - 1]) / (times[i] - times[i - 1]);
        } else {
            nodes[i].a = (velocities[i + 1] - velocities[i - 1]) / (times[i + 1] - times[i - 1]);
        }
    }
    return GeodesicPath(std::move(nodes));
}

double GeodesicPath::t0() const {
    if (nodes_.empty()) throw InvalidArgumentError("empty path");
    return nodes_.front().t;
}

double GeodesicPath::t1() const {
    if (nodes_.empty()) throw InvalidArgumentError("empty path");
    return nodes_.back().t;
}

std::size_t GeodesicPath::segment_index(double t) const {
    if (nodes_.size() < 2) return 0;
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t,
                               [](double value, const Node& node) { return value < node.t; });
    std::size_t i = static_cast<std::size_t>(it - nodes_.begin());
    if (i == 0) return 0;
    if (i >= nodes_.size()) return nodes_.size() - 2;
    return i - 1;
}

namespace {

// Cubic Hermite on [0,1]: value endpoints p0, p1 with scaled slopes m0, m1.
Vector hermite(const Vector& p0, const Vector& m0, const Vector& p1, const Vector& m1, double s) {
    const double s2 = s * s;
    const double s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * p1 +
           (s3 - s2) * m1;
}

}  // namespace

void GeodesicPath::state(double t, Vector& x, Vector& v) const {
    if (nodes_.empty()) throw InvalidArgumentError("empty path");
    if (nodes_.size() == 1) {
        x = nodes_[0].x;
        v = nodes_[0].v;
        return;
    }
    const std::size_t i = segment_index(t);
    const Node& a = nodes_[i];
    const Node& b = nodes_[i + 1];
    const double h = b.t - a.t;
    const double s = (t - a.t) / h;
    x = hermite(a.x, h * a.v, b.x, h * b.v, s);
    v = hermite(a.v, h * a.a, b.v, h * b.a, s);
}

Vector GeodesicPath::position(double t) const {
    Vector x, v;
    state(t, x, v);
    return x;
}

Vector GeodesicPath::velocity(double t) const {
    Vector x, v;
    state(t, x, v);
    return v;
}

void GeodesicPath::write_csv(const std::string& filename, const ConformalMetric& metric) const {
    std::ofstream out(filename);
    if (!out) throw IoError("cannot open " + filename + " for writing");
    const int d = dim();
    out << "t";
    for (int i = 0; i < d; ++i) out << ",x" << i;
    for (int i = 0; i < d; ++i) out << ",v" << i;
    out << ",alpha,metric_speed\n";
    char buf[32];
    auto put = [&](double value) {
        std::snprintf(buf, sizeof buf, "%.17g", value);
        out << buf;
    };
    for (const Node& node : nodes_) {
        const double alpha = metric.alpha(node.x);
        put(node.t);
        for (int i = 0; i < d; ++i) { out << ','; put(node.x(i)); }
        for (int i = 0; i < d; ++i) { out << ','; put(node.v(i)); }
        out << ',';
        put(alpha);
        out << ',';
        put(std::sqrt(alpha) * node.v.norm());
        out << '\n';
    }
}

GeodesicPath GeodesicPath::read_csv(const std::string& filename) {
    std::ifstream in(filename);
    if (!in) throw IoError("cannot open " + filename);
    std::string header;
    if (!std::getline(in, header)) throw IoError("empty CSV " + filename);
    int columns = 1;
    for (char c : header) columns += (c == ',');
    // t, dim x, dim v, alpha, metric_speed
    const int d = (columns - 3) / 2;
    if (d < 1 || columns != 2 * d + 3) throw IoError("unrecognized path CSV header");

    std::vector<double> times;
    std::vector<Vector> xs, vs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (static_cast<int>(row.size()) != columns) throw IoError("ragged path CSV row");
        times.push_back(row[0]);
        Vector x(d), v(d);
        for (int i = 0; i < d; ++i) x(i) = row[1 + i];
        for (int i = 0; i < d; ++i) v(i) = row[1 + d + i];
        xs.push_back(std::move(x));
        vs.push_back(std::move(v));
    }
    return from_samples(times, xs, vs);
}

}  // namespace condgeo
