#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "errors.hpp"
#include "link.hpp"
#include "trainer.hpp"

namespace slimfl::runner {

enum class Algorithm { SlimFL, Vanilla05, Vanilla10, Vanilla15 };
enum class Mode { Simulation, Theory };
enum class DatasetKind { Synthetic, Idx };
enum class NoiseSource { SpectralDensity, Sigma2Dbm };

struct ExperimentConfig {
    std::uint64_t seed = 0;
    Algorithm algorithm = Algorithm::SlimFL;
    std::uint64_t rounds = 0;
    int devices = 10;
    double alpha = 1.0;
    Mode mode = Mode::Simulation;

    bool lambda_auto = true;
    double lambda = 0.0;

    bool local_steps_epoch = true;
    std::uint64_t local_steps = 0;

    // Channel (dBm / dB-per-Hz on the wire, milliwatts inside).
    double distance_m = 100.0;
    double pathloss_beta = 2.5;
    double bandwidth_hz = 75e6;
    double carrier_hz = 5.9e9;
    double power_dbm = 23.0;
    NoiseSource noise_source = NoiseSource::SpectralDensity;
    double n0_db_hz = -169.0;
    double sigma2_dbm = 0.0;
    bool code_rate_auto = true;
    double code_rate_bps = 0.0;

    nn::TrainerConfig trainer;
    std::size_t batch_size = 32;

    DatasetKind dataset_kind = DatasetKind::Synthetic;
    std::size_t dataset_n = 1000;
    std::string idx_images;
    std::string idx_labels;
    double bits_per_param = 0.0;  // 0: per-width payload constants

    // `bound` subcommand inputs.
    double bound_smoothness = 4.0;
    double bound_strong_convexity = 0.25;
    double bound_delta = 1.0;
    double bound_delta1 = 1.0;
    std::uint64_t bound_t_max = 1000;

    // Effective key/value view, sufficient to reproduce the run.
    std::map<std::string, std::string> echo() const;
};

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);
ExperimentConfig parse_config(const std::string& path);

struct ResolvedChannel {
    double power_mw = 0.0;
    double sigma2_mw = 0.0;
    double c = 0.0;
    double u_prime = 0.0;
    double code_rate_bps = 0.0;
    double lambda = 0.0;
    link::PowerSplit split;
    link::DecodeProfile profile;
};

// Converts units, calibrates the code rate when it is on auto, optimizes
// lambda when it is on auto, and derives the decode profile.
ResolvedChannel resolve_channel(const ExperimentConfig& cfg);

const char* algorithm_name(Algorithm a);

}  // namespace slimfl::runner
