#pragma once

#include <cstdint>
#include <vector>

#include "config.hpp"
#include "data.hpp"
#include "link.hpp"
#include "metrics.hpp"
#include "nn_model.hpp"
#include "trainer.hpp"

// One communication round: local training on every device, a superposition-
// coded uplink draw per device, successive-decoding aggregation on the server
// and an always-successful downlink broadcast.
namespace slimfl::fed {

struct DeviceState {
    nn::SlimmableModel model;
    nn::OptimizerState optimizer;
    std::vector<std::uint32_t> shard;  // indices into the training dataset
    std::uint64_t device_id = 0;
    std::uint64_t epochs_consumed = 0;
};

struct FleetState {
    std::vector<DeviceState> devices;
    nn::SlimmableModel global;
    std::uint64_t round = 0;
};

struct RoundOutcome {
    std::vector<int> half_only;  // devices whose weaker message was lost
    std::vector<int> full;       // devices decoded completely
    std::vector<double> gains;   // per-device fading realization
    std::uint64_t decoded_bits_half = 0;
    std::uint64_t decoded_bits_full = 0;
    std::uint64_t dropped_bits = 0;

    int n_left() const { return int(half_only.size() + full.size()); }
    int n_right() const { return int(full.size()); }
};

// Runs the configured trainer over the device's shard: a full epoch by
// default, cfg.local_steps batches otherwise. Empty shards are a no-op;
// returns the number of optimizer steps taken.
std::uint64_t local_round(DeviceState& device, const data::Dataset& dataset,
                          const runner::ExperimentConfig& cfg);

// One block-fading draw per device, classified against the decode thresholds.
RoundOutcome uplink(std::size_t num_devices, const link::DecodeProfile& profile,
                    std::uint64_t bits_full, std::uint64_t bits_half, std::uint64_t seed,
                    std::uint64_t round);

// Case 1 (both sets nonempty): left half averaged over all decodes, right half
// over full decodes. Case 2 (no full decode): left half averaged, right half
// retained from the previous global model. Case 3: previous model unchanged.
void aggregate(nn::SlimmableModel& global, const std::vector<DeviceState>& devices,
               const RoundOutcome& outcome, const nn::WidthMask& half_mask);

struct EvalResult {
    double loss = 0.0;
    double top1 = 0.0;
};

EvalResult evaluate(const nn::SlimmableModel& model, const nn::WidthMask& mask,
                    const data::Dataset& dataset, const std::vector<std::uint32_t>& indices);

runner::MetricsSeries slimfl_run(const runner::ExperimentConfig& cfg,
                                 nn::SlimmableModel* final_global = nullptr);
runner::MetricsSeries vanilla_run(const runner::ExperimentConfig& cfg, int width_index,
                                  nn::SlimmableModel* final_global = nullptr);

// Dispatch on cfg.algorithm; vanilla_1.5x is the 0.5x and 1.0x pair with
// doubled resource accounting merged into one series.
runner::MetricsSeries run_experiment(const runner::ExperimentConfig& cfg);

struct RunOutput {
    runner::MetricsSeries series;
    // Checkpoint name stem -> final global model ("model", or one per width
    // for the 1.5x baseline pair).
    std::vector<std::pair<std::string, nn::SlimmableModel>> models;
};

RunOutput run_experiment_full(const runner::ExperimentConfig& cfg);

}  // namespace slimfl::fed
