#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "metrics.hpp"

namespace slimfl::runner {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void fail(const std::string& origin, std::size_t line, const std::string& msg) {
    throw config_error(origin + ":" + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& origin, std::size_t line, const std::string& key,
                    const std::string& value) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        fail(origin, line, "invalid number for '" + key + "': " + value);
    }
}

std::uint64_t parse_u64(const std::string& origin, std::size_t line, const std::string& key,
                        const std::string& value) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || p != value.data() + value.size())
        fail(origin, line, "invalid integer for '" + key + "': " + value);
    return v;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    bool seed_set = false, sigma2_set = false, n0_set = false;
    bool optimizer_set = false, distill_set = false;

    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) fail(origin, lineno, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(origin, lineno, "missing key");
        if (value.empty()) fail(origin, lineno, "missing value for '" + key + "'");

        if (key == "seed") {
            cfg.seed = parse_u64(origin, lineno, key, value);
            seed_set = true;
        } else if (key == "algorithm") {
            if (value == "slimfl") cfg.algorithm = Algorithm::SlimFL;
            else if (value == "vanilla_0.5x") cfg.algorithm = Algorithm::Vanilla05;
            else if (value == "vanilla_1.0x") cfg.algorithm = Algorithm::Vanilla10;
            else if (value == "vanilla_1.5x") cfg.algorithm = Algorithm::Vanilla15;
            else fail(origin, lineno, "unknown algorithm: " + value);
        } else if (key == "rounds") {
            cfg.rounds = parse_u64(origin, lineno, key, value);
        } else if (key == "devices") {
            cfg.devices = int(parse_u64(origin, lineno, key, value));
            if (cfg.devices < 1) fail(origin, lineno, "devices must be >= 1");
        } else if (key == "alpha") {
            cfg.alpha = parse_double(origin, lineno, key, value);
            if (!(cfg.alpha > 0.0)) fail(origin, lineno, "alpha must be > 0");
        } else if (key == "lambda") {
            if (value == "auto") {
                cfg.lambda_auto = true;
            } else {
                cfg.lambda = parse_double(origin, lineno, key, value);
                cfg.lambda_auto = false;
                if (!(cfg.lambda > 0.5 && cfg.lambda <= 1.0))
                    fail(origin, lineno, "lambda must lie in (0.5, 1]");
            }
        } else if (key == "mode") {
            if (value == "simulation") cfg.mode = Mode::Simulation;
            else if (value == "theory") cfg.mode = Mode::Theory;
            else fail(origin, lineno, "unknown mode: " + value);
        } else if (key == "local_steps") {
            if (value == "epoch") {
                cfg.local_steps_epoch = true;
            } else {
                cfg.local_steps = parse_u64(origin, lineno, key, value);
                cfg.local_steps_epoch = false;
            }
        } else if (key == "channel.distance_m") {
            cfg.distance_m = parse_double(origin, lineno, key, value);
            if (!(cfg.distance_m > 0)) fail(origin, lineno, "distance must be > 0");
        } else if (key == "channel.pathloss_beta") {
            cfg.pathloss_beta = parse_double(origin, lineno, key, value);
            if (cfg.pathloss_beta < 2.0) fail(origin, lineno, "path loss exponent must be >= 2");
        } else if (key == "channel.bandwidth_hz") {
            cfg.bandwidth_hz = parse_double(origin, lineno, key, value);
            if (!(cfg.bandwidth_hz > 0)) fail(origin, lineno, "bandwidth must be > 0");
        } else if (key == "channel.carrier_hz") {
            cfg.carrier_hz = parse_double(origin, lineno, key, value);
        } else if (key == "channel.power_dbm") {
            cfg.power_dbm = parse_double(origin, lineno, key, value);
        } else if (key == "channel.sigma2_dbm") {
            cfg.sigma2_dbm = parse_double(origin, lineno, key, value);
            sigma2_set = true;
        } else if (key == "channel.n0_db_hz") {
            cfg.n0_db_hz = parse_double(origin, lineno, key, value);
            n0_set = true;
        } else if (key == "channel.code_rate_bps") {
            if (value == "auto") {
                cfg.code_rate_auto = true;
            } else {
                cfg.code_rate_bps = parse_double(origin, lineno, key, value);
                cfg.code_rate_auto = false;
                if (cfg.code_rate_bps < 0) fail(origin, lineno, "code rate must be >= 0");
            }
        } else if (key == "trainer.algorithm") {
            if (value == "sustrain") cfg.trainer.algorithm = nn::TrainAlgorithm::SusTrain;
            else if (value == "slimtrain") cfg.trainer.algorithm = nn::TrainAlgorithm::SlimTrain;
            else if (value == "ustrain") cfg.trainer.algorithm = nn::TrainAlgorithm::UsTrain;
            else fail(origin, lineno, "unknown trainer algorithm: " + value);
        } else if (key == "trainer.optimizer") {
            if (value == "sgd") cfg.trainer.optimizer = nn::OptimizerKind::Sgd;
            else if (value == "adam") cfg.trainer.optimizer = nn::OptimizerKind::Adam;
            else fail(origin, lineno, "unknown optimizer: " + value);
            optimizer_set = true;
        } else if (key == "trainer.learning_rate") {
            cfg.trainer.learning_rate = parse_double(origin, lineno, key, value);
            if (!(cfg.trainer.learning_rate > 0)) fail(origin, lineno, "learning rate must be > 0");
        } else if (key == "trainer.w1") {
            cfg.trainer.w1 = parse_double(origin, lineno, key, value);
        } else if (key == "trainer.w2") {
            cfg.trainer.w2 = parse_double(origin, lineno, key, value);
        } else if (key == "trainer.distill") {
            if (value == "soft_ipkd") cfg.trainer.distill = nn::DistillMode::SoftIpkd;
            else if (value == "hard_target") cfg.trainer.distill = nn::DistillMode::HardTarget;
            else fail(origin, lineno, "unknown distill mode: " + value);
            distill_set = true;
        } else if (key == "trainer.batch_size") {
            cfg.batch_size = parse_u64(origin, lineno, key, value);
            if (cfg.batch_size < 1) fail(origin, lineno, "batch size must be >= 1");
        } else if (key == "dataset.kind") {
            if (value == "synthetic") cfg.dataset_kind = DatasetKind::Synthetic;
            else if (value == "idx") cfg.dataset_kind = DatasetKind::Idx;
            else fail(origin, lineno, "unknown dataset kind: " + value);
        } else if (key == "dataset.n") {
            cfg.dataset_n = parse_u64(origin, lineno, key, value);
        } else if (key == "dataset.images") {
            cfg.idx_images = value;
        } else if (key == "dataset.labels") {
            cfg.idx_labels = value;
        } else if (key == "dataset.bits_per_param") {
            cfg.bits_per_param = parse_double(origin, lineno, key, value);
            if (!(cfg.bits_per_param > 0)) fail(origin, lineno, "bits per parameter must be > 0");
        } else if (key == "bound.smoothness_L") {
            cfg.bound_smoothness = parse_double(origin, lineno, key, value);
        } else if (key == "bound.strong_convexity_mu") {
            cfg.bound_strong_convexity = parse_double(origin, lineno, key, value);
        } else if (key == "bound.delta") {
            cfg.bound_delta = parse_double(origin, lineno, key, value);
        } else if (key == "bound.delta1") {
            cfg.bound_delta1 = parse_double(origin, lineno, key, value);
        } else if (key == "bound.t_max") {
            cfg.bound_t_max = parse_u64(origin, lineno, key, value);
        } else {
            fail(origin, lineno, "unknown key: " + key);
        }
    }

    if (!seed_set) throw config_error(origin + ": missing required key: seed");
    if (sigma2_set && n0_set)
        throw config_error(origin +
                           ": channel.sigma2_dbm and channel.n0_db_hz are mutually exclusive");
    if (sigma2_set) cfg.noise_source = NoiseSource::Sigma2Dbm;

    if (cfg.mode == Mode::Theory) {
        if (optimizer_set && cfg.trainer.optimizer == nn::OptimizerKind::Adam)
            throw config_error(origin + ": trainer.optimizer must be sgd in theory mode");
        cfg.trainer.optimizer = nn::OptimizerKind::Sgd;
        if (!distill_set) cfg.trainer.distill = nn::DistillMode::HardTarget;
        cfg.local_steps_epoch = false;
        cfg.local_steps = 1;
    }

    if (cfg.dataset_kind == DatasetKind::Idx) {
        if (cfg.idx_images.empty() || cfg.idx_labels.empty())
            throw config_error(origin + ": dataset.images and dataset.labels are required");
        for (const std::string& p : {cfg.idx_images, cfg.idx_labels})
            if (!std::filesystem::exists(p))
                throw config_error(origin + ": referenced file does not exist: " + p);
    }

    try {
        cfg.trainer.validate_production();
    } catch (const std::exception& e) {
        throw config_error(origin + ": " + e.what());
    }
    return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

std::map<std::string, std::string> ExperimentConfig::echo() const {
    std::map<std::string, std::string> kv;
    kv["seed"] = std::to_string(seed);
    kv["algorithm"] = algorithm_name(algorithm);
    kv["rounds"] = std::to_string(rounds);
    kv["devices"] = std::to_string(devices);
    kv["alpha"] = format_double(alpha);
    kv["lambda"] = lambda_auto ? "auto" : format_double(lambda);
    kv["mode"] = mode == Mode::Theory ? "theory" : "simulation";
    kv["local_steps"] = local_steps_epoch ? "epoch" : std::to_string(local_steps);
    kv["channel.distance_m"] = format_double(distance_m);
    kv["channel.pathloss_beta"] = format_double(pathloss_beta);
    kv["channel.bandwidth_hz"] = format_double(bandwidth_hz);
    kv["channel.carrier_hz"] = format_double(carrier_hz);
    kv["channel.power_dbm"] = format_double(power_dbm);
    if (noise_source == NoiseSource::Sigma2Dbm)
        kv["channel.sigma2_dbm"] = format_double(sigma2_dbm);
    else
        kv["channel.n0_db_hz"] = format_double(n0_db_hz);
    kv["channel.code_rate_bps"] = code_rate_auto ? "auto" : format_double(code_rate_bps);
    kv["trainer.algorithm"] = trainer.algorithm == nn::TrainAlgorithm::SusTrain   ? "sustrain"
                              : trainer.algorithm == nn::TrainAlgorithm::SlimTrain ? "slimtrain"
                                                                                   : "ustrain";
    kv["trainer.optimizer"] = trainer.optimizer == nn::OptimizerKind::Adam ? "adam" : "sgd";
    kv["trainer.learning_rate"] = format_double(trainer.learning_rate);
    kv["trainer.w1"] = format_double(trainer.w1);
    kv["trainer.w2"] = format_double(trainer.w2);
    kv["trainer.distill"] =
        trainer.distill == nn::DistillMode::SoftIpkd ? "soft_ipkd" : "hard_target";
    kv["trainer.batch_size"] = std::to_string(batch_size);
    kv["dataset.kind"] = dataset_kind == DatasetKind::Synthetic ? "synthetic" : "idx";
    if (dataset_kind == DatasetKind::Synthetic) {
        kv["dataset.n"] = std::to_string(dataset_n);
    } else {
        kv["dataset.images"] = idx_images;
        kv["dataset.labels"] = idx_labels;
    }
    if (bits_per_param > 0) kv["dataset.bits_per_param"] = format_double(bits_per_param);
    return kv;
}

ResolvedChannel resolve_channel(const ExperimentConfig& cfg) {
    ResolvedChannel rc;
    rc.power_mw = link::dbm_to_milliwatts(cfg.power_dbm);
    rc.sigma2_mw = cfg.noise_source == NoiseSource::Sigma2Dbm
                       ? link::dbm_to_milliwatts(cfg.sigma2_dbm)
                       : link::dbm_to_milliwatts(cfg.n0_db_hz) * cfg.bandwidth_hz;
    rc.c = link::link_constant(rc.sigma2_mw, cfg.distance_m, cfg.pathloss_beta);
    if (cfg.code_rate_auto) {
        rc.u_prime = link::calibrated_u_prime(rc.power_mw, rc.c);
        rc.code_rate_bps = cfg.bandwidth_hz * std::log2(1.0 + rc.u_prime);
    } else {
        rc.code_rate_bps = cfg.code_rate_bps;
        rc.u_prime = link::effective_code_rate(cfg.code_rate_bps, cfg.bandwidth_hz);
    }
    rc.lambda = cfg.lambda_auto
                    ? link::optimize_lambda(rc.power_mw, rc.u_prime, rc.c, link::OptimizeMethod::Golden)
                    : cfg.lambda;
    rc.split = link::split_power(rc.power_mw, rc.lambda);
    rc.profile = link::decode_profile(rc.split, rc.u_prime, rc.c);
    return rc;
}

const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::SlimFL: return "slimfl";
        case Algorithm::Vanilla05: return "vanilla_0.5x";
        case Algorithm::Vanilla10: return "vanilla_1.0x";
        case Algorithm::Vanilla15: return "vanilla_1.5x";
    }
    return "unknown";
}

}  // namespace slimfl::runner
