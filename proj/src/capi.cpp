#include "slimfl/slimfl.h"

#include <cstring>
#include <string>

#include "analysis.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "fed.hpp"
#include "link.hpp"
#include "metrics.hpp"

namespace {

thread_local std::string g_last_error = "";

slimfl_status set_error(slimfl_status code, const char* what) {
    g_last_error = what;
    return code;
}

// Runs fn, mapping the library's exception types onto status codes.
template <typename Fn>
slimfl_status guarded(Fn&& fn) {
    try {
        fn();
        return SLIMFL_OK;
    } catch (const slimfl::config_error& e) {
        return set_error(SLIMFL_ERR_CONFIG, e.what());
    } catch (const slimfl::invalid_parameter& e) {
        return set_error(SLIMFL_ERR_INVALID_ARGUMENT, e.what());
    } catch (const slimfl::io_error& e) {
        return set_error(SLIMFL_ERR_IO, e.what());
    } catch (const std::exception& e) {
        return set_error(SLIMFL_ERR_RUNTIME, e.what());
    } catch (...) {
        return set_error(SLIMFL_ERR_RUNTIME, "unknown failure");
    }
}

slimfl_status require(bool ok, const char* msg) {
    return ok ? SLIMFL_OK : set_error(SLIMFL_ERR_INVALID_ARGUMENT, msg);
}

}  // namespace

struct slimfl_config {
    slimfl::runner::ExperimentConfig cfg;
};

struct slimfl_metrics {
    slimfl::runner::MetricsSeries series;
};

extern "C" {

const char* slimfl_last_error(void) { return g_last_error.c_str(); }

slimfl_status slimfl_config_load(const char* path, slimfl_config** out) {
    if (require(path && out, "null argument") != SLIMFL_OK) return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded([&] { *out = new slimfl_config{slimfl::runner::parse_config(path)}; });
}

slimfl_status slimfl_config_parse(const char* text, slimfl_config** out) {
    if (require(text && out, "null argument") != SLIMFL_OK) return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded(
        [&] { *out = new slimfl_config{slimfl::runner::parse_config_text(text, "<string>")}; });
}

slimfl_status slimfl_config_set(slimfl_config* cfg, const char* key, const char* value) {
    if (require(cfg && key && value, "null argument") != SLIMFL_OK)
        return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded([&] {
        // Re-parse the effective config with the assignment applied; keeps
        // every validation rule in one place. The two noise keys displace
        // each other instead of tripping their mutual-exclusion check.
        auto echo = cfg->cfg.echo();
        const std::string k = key;
        if (k == "channel.sigma2_dbm") echo.erase("channel.n0_db_hz");
        if (k == "channel.n0_db_hz") echo.erase("channel.sigma2_dbm");
        echo[k] = value;
        std::string text;
        for (const auto& [ek, ev] : echo) text += ek + " = " + ev + "\n";
        cfg->cfg = slimfl::runner::parse_config_text(text, "<override>");
    });
}

void slimfl_config_free(slimfl_config* cfg) { delete cfg; }

slimfl_status slimfl_run(const slimfl_config* cfg, slimfl_metrics** out) {
    if (require(cfg && out, "null argument") != SLIMFL_OK) return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded([&] { *out = new slimfl_metrics{slimfl::fed::run_experiment(cfg->cfg)}; });
}

size_t slimfl_metrics_rows(const slimfl_metrics* metrics) {
    return metrics ? metrics->series.rows.size() : 0;
}

slimfl_status slimfl_metrics_cell(const slimfl_metrics* metrics, size_t row,
                                  slimfl_metrics_column column, double* out) {
    if (require(metrics && out, "null argument") != SLIMFL_OK) return SLIMFL_ERR_INVALID_ARGUMENT;
    if (row >= metrics->series.rows.size())
        return set_error(SLIMFL_ERR_INVALID_ARGUMENT, "row out of range");
    const auto& r = metrics->series.rows[row];
    switch (column) {
        case SLIMFL_COL_ROUND: *out = double(r.round); return SLIMFL_OK;
        case SLIMFL_COL_LOSS_HALF: *out = r.loss_half; return SLIMFL_OK;
        case SLIMFL_COL_LOSS_FULL: *out = r.loss_full; return SLIMFL_OK;
        case SLIMFL_COL_TOP1_HALF: *out = r.top1_half; return SLIMFL_OK;
        case SLIMFL_COL_TOP1_FULL: *out = r.top1_full; return SLIMFL_OK;
        case SLIMFL_COL_N_LEFT: *out = double(r.n_left); return SLIMFL_OK;
        case SLIMFL_COL_N_RIGHT: *out = double(r.n_right); return SLIMFL_OK;
        case SLIMFL_COL_DECODED_BITS_HALF: *out = double(r.decoded_bits_half); return SLIMFL_OK;
        case SLIMFL_COL_DECODED_BITS_FULL: *out = double(r.decoded_bits_full); return SLIMFL_OK;
        case SLIMFL_COL_DROPPED_BITS: *out = double(r.dropped_bits); return SLIMFL_OK;
        case SLIMFL_COL_COMM_MW: *out = r.comm_mw; return SLIMFL_OK;
        case SLIMFL_COL_FLOPS: *out = r.flops; return SLIMFL_OK;
    }
    return set_error(SLIMFL_ERR_INVALID_ARGUMENT, "unknown column");
}

void slimfl_metrics_free(slimfl_metrics* metrics) { delete metrics; }

slimfl_status slimfl_execute(const slimfl_config* cfg, const char* subcommand,
                             const char* out_dir) {
    if (require(cfg && subcommand && out_dir, "null argument") != SLIMFL_OK)
        return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded([&] {
        const std::string cmd = subcommand;
        if (cmd == "run") slimfl::runner::command_run(cfg->cfg, out_dir);
        else if (cmd == "sweep-lambda") slimfl::runner::command_sweep_lambda(cfg->cfg, out_dir);
        else if (cmd == "bound") slimfl::runner::command_bound(cfg->cfg, out_dir);
        else if (cmd == "counterexample") slimfl::runner::command_counterexample(cfg->cfg, out_dir);
        else if (cmd == "partition-report")
            slimfl::runner::command_partition_report(cfg->cfg, out_dir);
        else
            throw slimfl::config_error("unknown subcommand: " + cmd);
    });
}

slimfl_status slimfl_dbm_to_milliwatts(double dbm, double* out) {
    if (require(out != nullptr, "null argument") != SLIMFL_OK) return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded([&] { *out = slimfl::link::dbm_to_milliwatts(dbm); });
}

slimfl_status slimfl_effective_code_rate(double u_bps, double bandwidth_hz, double* out) {
    if (require(out != nullptr, "null argument") != SLIMFL_OK) return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded([&] { *out = slimfl::link::effective_code_rate(u_bps, bandwidth_hz); });
}

slimfl_status slimfl_link_constant(double sigma2_mw, double distance_m, double beta, double* out) {
    if (require(out != nullptr, "null argument") != SLIMFL_OK) return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded([&] { *out = slimfl::link::link_constant(sigma2_mw, distance_m, beta); });
}

slimfl_status slimfl_split_power(double total_power_mw, double lambda, double* p1_mw,
                                 double* p2_mw) {
    if (require(p1_mw && p2_mw, "null argument") != SLIMFL_OK) return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded([&] {
        auto split = slimfl::link::split_power(total_power_mw, lambda);
        *p1_mw = split.p1_mw;
        *p2_mw = split.p2_mw;
    });
}

slimfl_status slimfl_decode_profile(double p1_mw, double p2_mw, double u_prime, double c,
                                    double out[4]) {
    if (require(out != nullptr, "null argument") != SLIMFL_OK) return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded([&] {
        slimfl::link::PowerSplit split;
        split.p1_mw = p1_mw;
        split.p2_mw = p2_mw;
        split.lambda = p1_mw + p2_mw > 0 ? p1_mw / (p1_mw + p2_mw) : 0.0;
        auto prof = slimfl::link::decode_profile(split, u_prime, c);
        out[0] = prof.tau1;
        out[1] = prof.tau2;
        out[2] = prof.p1;
        out[3] = prof.p2;
    });
}

slimfl_status slimfl_diversity_cost(double lambda, double total_power_mw, double u_prime,
                                    double c, double* out) {
    if (require(out != nullptr, "null argument") != SLIMFL_OK) return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded(
        [&] { *out = slimfl::link::diversity_cost_at(lambda, total_power_mw, u_prime, c); });
}

slimfl_status slimfl_optimize_lambda(double total_power_mw, double u_prime, double c,
                                     slimfl_optimize_method method, double* out) {
    if (require(out != nullptr, "null argument") != SLIMFL_OK) return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded([&] {
        slimfl::link::OptimizeMethod m = method == SLIMFL_OPTIMIZE_GRID
                                             ? slimfl::link::OptimizeMethod::Grid
                                         : method == SLIMFL_OPTIMIZE_GOLDEN
                                             ? slimfl::link::OptimizeMethod::Golden
                                             : slimfl::link::OptimizeMethod::Taylor;
        *out = slimfl::link::optimize_lambda(total_power_mw, u_prime, c, m);
    });
}

slimfl_status slimfl_calibrated_u_prime(double total_power_mw, double c, double target_lambda,
                                        double* out) {
    if (require(out != nullptr, "null argument") != SLIMFL_OK) return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded(
        [&] { *out = slimfl::link::calibrated_u_prime(total_power_mw, c, target_lambda); });
}

slimfl_status slimfl_gradient_variance_bound(double delta, double p1, double p2, double w1,
                                             double w2, double* out) {
    if (require(out != nullptr, "null argument") != SLIMFL_OK) return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded(
        [&] { *out = slimfl::analysis::gradient_variance_bound(delta, p1, p2, w1, w2); });
}

slimfl_status slimfl_convergence_bound(uint64_t t, double smoothness_L, double strong_convexity_mu,
                                       double delta, double p1, double p2, double w1, double w2,
                                       double delta1, double* out) {
    if (require(out != nullptr, "null argument") != SLIMFL_OK) return SLIMFL_ERR_INVALID_ARGUMENT;
    return guarded([&] {
        slimfl::analysis::BoundParams params;
        params.smoothness_L = smoothness_L;
        params.strong_convexity_mu = strong_convexity_mu;
        params.delta = delta;
        params.p1 = p1;
        params.p2 = p2;
        params.w1 = w1;
        params.w2 = w2;
        params.delta1 = delta1;
        *out = slimfl::analysis::convergence_bound(t, params);
    });
}

}  // extern "C"
