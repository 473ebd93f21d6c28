#pragma once

#include <string>
#include <vector>

#include "config.hpp"
#include "metrics.hpp"

namespace slimfl::runner {

// Writes metrics.csv and summary.json under out_dir; returns the paths.
std::vector<std::string> emit_metrics(const MetricsSeries& series, const ExperimentConfig& cfg,
                                      const std::string& out_dir);

// run: executes the configured experiment, writes metrics.csv, summary.json
// and the final global model checkpoint (model.slnn).
std::vector<std::string> command_run(const ExperimentConfig& cfg, const std::string& out_dir);

// sweep-lambda: (lambda, D, final accuracies) over the feasible grid; each row
// re-runs the configured experiment at that lambda (rounds = 0 keeps it to the
// closed-form D column).
std::vector<std::string> command_sweep_lambda(const ExperimentConfig& cfg,
                                              const std::string& out_dir);

// bound: (t, eta_t, bound) curve from the configured bound parameters.
std::vector<std::string> command_bound(const ExperimentConfig& cfg, const std::string& out_dir);

// counterexample: (E, eta, gap, lower_bound, fixed_point_residual) rows for
// the distributed linear-regression instance.
std::vector<std::string> command_counterexample(const ExperimentConfig& cfg,
                                                const std::string& out_dir);

// partition-report: per-device class histogram of the configured partition.
std::vector<std::string> command_partition_report(const ExperimentConfig& cfg,
                                                  const std::string& out_dir);

}  // namespace slimfl::runner
