#include "commands.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include <json.hpp>

#include "analysis.hpp"
#include "data.hpp"
#include "fed.hpp"
#include "fedavg_oracle.hpp"

namespace slimfl::runner {

namespace {

using nlohmann::json;

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create output directory: " + dir);
    if (!std::filesystem::is_directory(dir)) throw io_error("not a directory: " + dir);
}

json json_optional(const std::optional<std::uint64_t>& v) {
    return v ? json(*v) : json(nullptr);
}

json json_finite(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string format_csv_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

std::vector<std::string> emit_metrics(const MetricsSeries& series, const ExperimentConfig& cfg,
                                      const std::string& out_dir) {
    ensure_dir(out_dir);
    const std::string csv_path = join_path(out_dir, "metrics.csv");
    write_file(csv_path, format_metrics_csv(series));

    const ResolvedChannel rc = resolve_channel(cfg);
    const analysis::EnergyReport energy = analysis::energy_report(series);
    const analysis::BitsReport bits = analysis::bits_report(series);

    json summary;
    summary["artifact_version"] = "0.1.0";
    summary["config"] = json(cfg.echo());
    summary["resolved"] = {
        {"power_mw", rc.power_mw}, {"sigma2_mw", rc.sigma2_mw},   {"c", rc.c},
        {"u_prime", rc.u_prime},   {"code_rate_bps", rc.code_rate_bps},
        {"lambda", rc.lambda},     {"p1_mw", rc.split.p1_mw},     {"p2_mw", rc.split.p2_mw},
        {"tau1", rc.profile.tau1}, {"tau2", json_finite(rc.profile.tau2)},
        {"p1", rc.profile.p1},     {"p2", rc.profile.p2},
    };
    if (series.rows.empty()) {
        summary["final"] = json(nullptr);
    } else {
        const MetricsRow& last = series.rows.back();
        summary["final"] = {
            {"round", last.round},
            {"loss_0.5x", json_finite(last.loss_half)},
            {"loss_1.0x", json_finite(last.loss_full)},
            {"top1_0.5x", json_finite(last.top1_half)},
            {"top1_1.0x", json_finite(last.top1_full)},
        };
    }
    summary["convergence_round"] = json_optional(energy.convergence_round);
    summary["energy"] = {
        {"comm_mw_per_round", energy.comm_mw_per_round},
        {"flops_per_epoch", energy.flops_per_epoch},
        {"total_comm_mw", energy.total_comm_mw ? json(*energy.total_comm_mw) : json(nullptr)},
        {"total_flops", energy.total_flops ? json(*energy.total_flops) : json(nullptr)},
    };
    summary["bits"] = {
        {"decoded_half_mb", bits.decoded_half_mb},
        {"decoded_full_mb", bits.decoded_full_mb},
        {"dropped_mb", bits.dropped_mb},
    };
    summary["skipped_device_rounds"] = series.skipped_device_rounds;

    const std::string json_path = join_path(out_dir, "summary.json");
    write_file(json_path, summary.dump(2) + "\n");
    return {csv_path, json_path};
}

std::vector<std::string> command_run(const ExperimentConfig& cfg, const std::string& out_dir) {
    fed::RunOutput out = fed::run_experiment_full(cfg);
    std::vector<std::string> paths = emit_metrics(out.series, cfg, out_dir);
    for (const auto& [stem, model] : out.models) {
        const std::string path = join_path(out_dir, stem + ".slnn");
        nn::save_checkpoint(model, path);
        paths.push_back(path);
    }
    return paths;
}

std::vector<std::string> command_sweep_lambda(const ExperimentConfig& cfg,
                                              const std::string& out_dir) {
    ensure_dir(out_dir);
    const ResolvedChannel rc = resolve_channel(cfg);
    const double lo = link::feasible_lambda_lower(rc.u_prime);

    std::string csv = "lambda,D,final_top1_0.5x,final_top1_1.0x\n";
    for (int i = 51; i <= 99; ++i) {
        const double lambda = i / 100.0;
        if (lambda <= lo) continue;
        const double d = link::diversity_cost_at(lambda, rc.power_mw, rc.u_prime, rc.c);
        double acc_half = std::nan(""), acc_full = std::nan("");
        if (cfg.rounds > 0) {
            ExperimentConfig point = cfg;
            point.lambda_auto = false;
            point.lambda = lambda;
            MetricsSeries series = fed::run_experiment(point);
            acc_half = series.rows.back().top1_half;
            acc_full = series.rows.back().top1_full;
        }
        csv += format_csv_double(lambda) + "," + format_csv_double(d) + "," +
               format_csv_double(acc_half) + "," + format_csv_double(acc_full) + "\n";
    }
    const std::string path = join_path(out_dir, "lambda_sweep.csv");
    write_file(path, csv);
    return {path};
}

std::vector<std::string> command_bound(const ExperimentConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    const ResolvedChannel rc = resolve_channel(cfg);
    analysis::BoundParams params;
    params.smoothness_L = cfg.bound_smoothness;
    params.strong_convexity_mu = cfg.bound_strong_convexity;
    params.delta = cfg.bound_delta;
    params.delta1 = cfg.bound_delta1;
    params.p1 = rc.profile.p1;
    params.p2 = rc.profile.p2;
    params.w1 = cfg.trainer.w1;
    params.w2 = cfg.trainer.w2;

    std::string csv = "t,eta_t,bound\n";
    for (std::uint64_t t = 1; t <= cfg.bound_t_max; ++t) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%" PRIu64 ",%.9g,%.9g\n", t,
                      analysis::eta_schedule(t, params.smoothness_L, params.strong_convexity_mu),
                      analysis::convergence_bound(t, params));
        csv += buf;
    }
    const std::string path = join_path(out_dir, "bound.csv");
    write_file(path, csv);
    return {path};
}

std::vector<std::string> command_counterexample(const ExperimentConfig& cfg,
                                                const std::string& out_dir) {
    ensure_dir(out_dir);
    (void)cfg;
    const fedavg::QuadraticExample ex = fedavg::build_quadratic_example(5, 4, 0.0);
    const fedavg::Vector w_star = fedavg::optimal_point(ex);

    std::string csv = "E,eta,gap,lower_bound,fixed_point_residual\n";
    for (int local_steps : {1, 2, 4, 8}) {
        for (double eta : {1e-2, 1e-3}) {
            const fedavg::Vector w_tilde = fedavg::fixed_point(ex, local_steps, eta);
            const double gap = (w_tilde - w_star).norm();
            const double bound = fedavg::gap_lower_bound(ex, local_steps, eta);
            const double residual =
                (fedavg::round_map_apply(ex, local_steps, eta, w_tilde) - w_tilde).norm();
            char buf[160];
            std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g\n", local_steps, eta, gap,
                          bound, residual);
            csv += buf;
        }
    }
    const std::string path = join_path(out_dir, "counterexample.csv");
    write_file(path, csv);
    return {path};
}

std::vector<std::string> command_partition_report(const ExperimentConfig& cfg,
                                                  const std::string& out_dir) {
    ensure_dir(out_dir);
    data::Dataset ds = cfg.dataset_kind == DatasetKind::Synthetic
                           ? data::synthetic_classification(cfg.dataset_n, 10, cfg.seed)
                           : data::load_idx(cfg.idx_images, cfg.idx_labels);
    data::Partition part = data::dirichlet_partition(ds.labels, cfg.devices, cfg.alpha, cfg.seed);

    int classes = 0;
    for (int l : ds.labels) classes = std::max(classes, l + 1);

    std::string csv = "device,class,count\n";
    for (std::size_t k = 0; k < part.devices(); ++k) {
        std::vector<std::size_t> hist(std::size_t(classes), 0);
        for (std::uint32_t idx : part.device_indices[k]) ++hist[std::size_t(ds.labels[idx])];
        for (int c = 0; c < classes; ++c) {
            csv += std::to_string(k) + "," + std::to_string(c) + "," + std::to_string(hist[std::size_t(c)]) + "\n";
        }
    }
    const std::string path = join_path(out_dir, "partition.csv");
    write_file(path, csv);
    return {path};
}

}  // namespace slimfl::runner
