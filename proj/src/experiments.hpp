#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "metric.hpp"

namespace condgeo {

inline constexpr const char* kReportSchemaVersion = "1";

/// A metric together with its optional constraint set, as selected by a
/// declarative config: {"type": "gl"|"sphere-gl"|"projective-gl"|"hyperbolic"|
/// "frobenius"|"solution-variety"|"distance", ...}.
struct MetricBundle {
    ConformalMetric metric;
    std::optional<ConstraintSet> constraints;
};

MetricBundle metric_from_json(const nlohmann::json& spec);

struct ExperimentResult {
    nlohmann::json report;
    bool pass = false;

    std::string report_string() const { return report.dump(2) + "\n"; }
};

/// Runs one named experiment with a JSON config (unknown keys rejected,
/// defaults filled in and echoed back in the report). When the config sets
/// "out", report.json and per-path CSVs are written under that directory.
ExperimentResult run_experiment(const std::string& name, const std::string& config_json);

std::vector<std::string> experiment_names();

}  // namespace condgeo
