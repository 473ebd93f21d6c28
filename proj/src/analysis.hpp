#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "data.hpp"
#include "metrics.hpp"
#include "nn_model.hpp"
#include "rng.hpp"

// Convergence-rate arithmetic, non-IIDness estimation, bit/energy accounting
// and the convergence detector.
namespace slimfl::analysis {

struct BoundParams {
    double smoothness_L = 0.0;
    double strong_convexity_mu = 0.0;
    double delta = 0.0;  // mean local gradient variance
    double p1 = 0.0;
    double p2 = 0.0;
    double w1 = 0.5;
    double w2 = 0.5;
    double delta1 = 0.0;  // E||theta_1 - theta*||^2

    void validate() const;
};

// B = 4 * delta * (1/p1 + 1/p2) * (w1^2 + w2^2).
double gradient_variance_bound(double delta, double p1, double p2, double w1, double w2);

// eta_t = 2 / (mu t + 2L - mu); eta_1 = 1/L.
double eta_schedule(std::uint64_t t, double smoothness_L, double strong_convexity_mu);

// Upper bound on E[F(theta_t)] - F*: (L/mu) * (mu L Delta_1 + 2B) / (mu t + 2L - mu).
double convergence_bound(std::uint64_t t, const BoundParams& params);

// Empirical mean over trials of ||grad(theta, batch) - grad(theta, shard)||^2
// with batch_size samples drawn uniformly without replacement per trial.
// Full-width task gradient.
double estimate_local_variance(const nn::SlimmableModel& model, const data::Dataset& dataset,
                               const std::vector<std::uint32_t>& shard, std::size_t batch_size,
                               std::size_t trials, rng::Stream& stream);

// delta: the per-device variances averaged over the fleet.
double estimate_noniidness(const nn::SlimmableModel& model, const data::Dataset& dataset,
                           const data::Partition& partition, std::size_t batch_size,
                           std::size_t trials, std::uint64_t seed);

// Earliest round t whose window [t-window+1, t] has mean accuracy > mu_ref
// and population std < sigma_ref; accuracies are fractions in [0, 1].
std::optional<std::uint64_t> detect_convergence(const std::vector<double>& top1_series,
                                                double mu_ref = 0.80, double sigma_ref = 0.072,
                                                std::size_t window = 100);

struct EnergyReport {
    double comm_mw_per_round = 0.0;
    double flops_per_epoch = 0.0;
    std::optional<std::uint64_t> convergence_round;
    std::optional<double> total_comm_mw;
    std::optional<double> total_flops;
};

EnergyReport energy_report(const runner::MetricsSeries& series);

struct BitsReport {
    double decoded_half_mb = 0.0;
    double decoded_full_mb = 0.0;
    double dropped_mb = 0.0;
};

// Megabytes are 10^6 bytes.
BitsReport bits_report(const runner::MetricsSeries& series);

}  // namespace slimfl::analysis
