#include "fed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "threads.hpp"

namespace slimfl::fed {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

nn::Batch gather_batch(const data::Dataset& dataset, const std::vector<std::uint32_t>& indices) {
    nn::Batch batch;
    batch.count = int(indices.size());
    batch.channels = 1;
    batch.height = dataset.height;
    batch.width = dataset.width;
    const std::size_t plane = std::size_t(dataset.height) * dataset.width;
    batch.images.resize(indices.size() * plane);
    batch.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = dataset.image(indices[i]);
        std::copy(src, src + plane, batch.images.begin() + i * plane);
        batch.labels[i] = dataset.labels[indices[i]];
    }
    return batch;
}

struct SplitData {
    data::Dataset dataset;
    std::vector<std::uint32_t> train_indices;
    std::vector<std::uint32_t> eval_indices;
};

SplitData load_and_split(const runner::ExperimentConfig& cfg) {
    SplitData sd;
    sd.dataset = cfg.dataset_kind == runner::DatasetKind::Synthetic
                     ? data::synthetic_classification(cfg.dataset_n, 10, cfg.seed)
                     : data::load_idx(cfg.idx_images, cfg.idx_labels);
    std::vector<std::uint32_t> order(sd.dataset.size());
    std::iota(order.begin(), order.end(), 0);
    auto st = rng::stream(cfg.seed, "holdout");
    st.shuffle(order);
    std::size_t eval_n = std::max<std::size_t>(1, order.size() / 10);
    sd.eval_indices.assign(order.begin(), order.begin() + std::ptrdiff_t(eval_n));
    sd.train_indices.assign(order.begin() + std::ptrdiff_t(eval_n), order.end());
    return sd;
}

// Dirichlet split over the training subset, mapped back to dataset indices.
std::vector<std::vector<std::uint32_t>> shard_devices(const SplitData& sd, int devices,
                                                      double alpha, std::uint64_t seed) {
    std::vector<int> labels(sd.train_indices.size());
    for (std::size_t i = 0; i < sd.train_indices.size(); ++i)
        labels[i] = sd.dataset.labels[sd.train_indices[i]];
    data::Partition part = data::dirichlet_partition(labels, devices, alpha, seed);
    std::vector<std::vector<std::uint32_t>> shards(part.devices());
    for (std::size_t k = 0; k < part.devices(); ++k) {
        shards[k].reserve(part.device_indices[k].size());
        for (std::uint32_t local : part.device_indices[k])
            shards[k].push_back(sd.train_indices[local]);
    }
    return shards;
}

}  // namespace

namespace {

// Shared local-training loop: one epoch by default, cfg.local_steps batches
// otherwise (spilling into freshly shuffled epochs when the shard is small).
std::uint64_t run_local_steps(DeviceState& device, const data::Dataset& dataset,
                              const runner::ExperimentConfig& cfg, int fixed_width) {
    if (device.shard.empty()) return 0;
    const std::uint64_t want = cfg.local_steps_epoch ? 0 : cfg.local_steps;
    if (!cfg.local_steps_epoch && want == 0) return 0;

    std::uint64_t steps = 0;
    for (;;) {
        auto st = rng::stream(cfg.seed, "batch", device.device_id, device.epochs_consumed);
        auto batches = data::minibatches(device.shard, cfg.batch_size, st);
        ++device.epochs_consumed;
        for (const auto& idx : batches) {
            nn::Batch batch = gather_batch(dataset, idx);
            double loss =
                fixed_width > 0
                    ? nn::fixed_width_step(device.model, device.optimizer, batch, cfg.trainer,
                                           fixed_width)
                    : nn::train_step(device.model, device.optimizer, batch, cfg.trainer);
            if (!std::isfinite(loss))
                throw std::runtime_error("non-finite training loss on device " +
                                         std::to_string(device.device_id));
            ++steps;
            if (!cfg.local_steps_epoch && steps == want) return steps;
        }
        if (cfg.local_steps_epoch) return steps;
    }
}

}  // namespace

std::uint64_t local_round(DeviceState& device, const data::Dataset& dataset,
                          const runner::ExperimentConfig& cfg) {
    return run_local_steps(device, dataset, cfg, 0);
}

RoundOutcome uplink(std::size_t num_devices, const link::DecodeProfile& profile,
                    std::uint64_t bits_full, std::uint64_t bits_half, std::uint64_t seed,
                    std::uint64_t round) {
    RoundOutcome out;
    out.gains.resize(num_devices);
    for (std::size_t k = 0; k < num_devices; ++k) {
        auto st = rng::stream(seed, "uplink", round, k);
        const double g = st.next_exponential();
        out.gains[k] = g;
        switch (link::sample_outcome(profile, g)) {
            case link::DecodeOutcome::Full:
                out.full.push_back(int(k));
                out.decoded_bits_full += bits_full;
                break;
            case link::DecodeOutcome::HalfOnly:
                out.half_only.push_back(int(k));
                out.decoded_bits_half += bits_half;
                out.dropped_bits += bits_full - bits_half;
                break;
            case link::DecodeOutcome::Drop:
                out.dropped_bits += bits_full;
                break;
        }
    }
    return out;
}

void aggregate(nn::SlimmableModel& global, const std::vector<DeviceState>& devices,
               const RoundOutcome& outcome, const nn::WidthMask& half_mask) {
    const int n_left = outcome.n_left();
    const int n_right = outcome.n_right();
    if (n_left == 0) return;  // Case 3

    const std::size_t dim = global.theta.size();
    std::vector<double> left_sum(dim, 0.0);
    for (int k : outcome.half_only)
        for (std::size_t j = 0; j < dim; ++j) left_sum[j] += devices[std::size_t(k)].model.theta[j];
    std::vector<double> right_sum(dim, 0.0);
    for (int k : outcome.full)
        for (std::size_t j = 0; j < dim; ++j) right_sum[j] += devices[std::size_t(k)].model.theta[j];

    for (std::size_t j = 0; j < dim; ++j) {
        if (half_mask[j]) {
            global.theta[j] = (left_sum[j] + right_sum[j]) / double(n_left);
        } else if (n_right > 0) {
            global.theta[j] = right_sum[j] / double(n_right);
        }
        // Case 2 keeps the previous right-half segment.
    }
}

EvalResult evaluate(const nn::SlimmableModel& model, const nn::WidthMask& mask,
                    const data::Dataset& dataset, const std::vector<std::uint32_t>& indices) {
    EvalResult res;
    if (indices.empty()) return res;
    const int classes = nn::plan_classes(model.plan);
    std::size_t correct = 0;
    double loss = 0.0;
    const std::size_t chunk = 256;
    for (std::size_t begin = 0; begin < indices.size(); begin += chunk) {
        std::vector<std::uint32_t> part(
            indices.begin() + std::ptrdiff_t(begin),
            indices.begin() + std::ptrdiff_t(std::min(indices.size(), begin + chunk)));
        nn::Batch batch = gather_batch(dataset, part);
        std::vector<double> logits = nn::forward(model, mask, batch);
        nn::LossResult lr = nn::task_loss(logits, batch.labels, classes);
        loss += lr.value * double(part.size());
        for (std::size_t b = 0; b < part.size(); ++b) {
            const double* row = logits.data() + b * std::size_t(classes);
            int best = 0;
            for (int c = 1; c < classes; ++c)
                if (row[c] > row[best]) best = c;
            if (best == batch.labels[b]) ++correct;
        }
    }
    res.loss = loss / double(indices.size());
    res.top1 = double(correct) / double(indices.size());
    return res;
}

runner::MetricsSeries slimfl_run(const runner::ExperimentConfig& cfg,
                                 nn::SlimmableModel* final_global) {
    const runner::ResolvedChannel rc = runner::resolve_channel(cfg);
    SplitData sd = load_and_split(cfg);
    auto shards = shard_devices(sd, cfg.devices, cfg.alpha, cfg.seed);

    FleetState fleet;
    fleet.global = nn::build_ul_mobilenet(cfg.seed);
    fleet.devices.resize(std::size_t(cfg.devices));
    for (int k = 0; k < cfg.devices; ++k) {
        fleet.devices[std::size_t(k)].model = fleet.global;
        fleet.devices[std::size_t(k)].shard = shards[std::size_t(k)];
        fleet.devices[std::size_t(k)].device_id = std::uint64_t(k);
    }

    const nn::WidthMask half_mask = nn::width_mask(fleet.global, 1);
    const nn::WidthMask full_mask = nn::width_mask(fleet.global, nn::kWidthCount);
    const nn::ModelStats stats_full =
        nn::model_stats(fleet.global, nn::kWidthCount, sd.dataset.height, sd.dataset.width,
                        cfg.bits_per_param);
    const nn::ModelStats stats_half = nn::model_stats(fleet.global, 1, sd.dataset.height,
                                                      sd.dataset.width, cfg.bits_per_param);

    runner::MetricsSeries series;
    for (std::uint64_t t = 1; t <= cfg.rounds; ++t) {
        std::vector<std::uint64_t> steps(std::size_t(cfg.devices), 0);
        parallel_for(std::size_t(cfg.devices), [&](std::size_t k) {
            steps[k] = local_round(fleet.devices[k], sd.dataset, cfg);
        });
        for (std::uint64_t s : steps)
            if (s == 0) ++series.skipped_device_rounds;

        RoundOutcome outcome = uplink(std::size_t(cfg.devices), rc.profile,
                                      stats_full.payload_bits, stats_half.payload_bits, cfg.seed, t);
        aggregate(fleet.global, fleet.devices, outcome, half_mask);
        for (auto& dev : fleet.devices) dev.model.theta = fleet.global.theta;  // downlink

        EvalResult ev_half = evaluate(fleet.global, half_mask, sd.dataset, sd.eval_indices);
        EvalResult ev_full = evaluate(fleet.global, full_mask, sd.dataset, sd.eval_indices);

        runner::MetricsRow row;
        row.round = t;
        row.loss_half = ev_half.loss;
        row.loss_full = ev_full.loss;
        row.top1_half = ev_half.top1;
        row.top1_full = ev_full.top1;
        row.n_left = std::uint32_t(outcome.n_left());
        row.n_right = std::uint32_t(outcome.n_right());
        row.decoded_bits_half = outcome.decoded_bits_half;
        row.decoded_bits_full = outcome.decoded_bits_full;
        row.dropped_bits = outcome.dropped_bits;
        row.comm_mw = rc.power_mw;
        row.flops = stats_full.flops + stats_half.flops;
        series.rows.push_back(row);
    }
    if (final_global) *final_global = fleet.global;
    return series;
}

runner::MetricsSeries vanilla_run(const runner::ExperimentConfig& cfg, int width_index,
                                  nn::SlimmableModel* final_global) {
    const runner::ResolvedChannel rc = runner::resolve_channel(cfg);
    SplitData sd = load_and_split(cfg);
    auto shards = shard_devices(sd, cfg.devices, cfg.alpha, cfg.seed);

    FleetState fleet;
    fleet.global = nn::build_ul_mobilenet(cfg.seed);
    fleet.devices.resize(std::size_t(cfg.devices));
    for (int k = 0; k < cfg.devices; ++k) {
        fleet.devices[std::size_t(k)].model = fleet.global;
        fleet.devices[std::size_t(k)].shard = shards[std::size_t(k)];
        fleet.devices[std::size_t(k)].device_id = std::uint64_t(k);
    }

    const nn::WidthMask mask = nn::width_mask(fleet.global, width_index);
    const nn::ModelStats stats = nn::model_stats(fleet.global, width_index, sd.dataset.height,
                                                 sd.dataset.width, cfg.bits_per_param);
    const nn::ModelStats stats_full = nn::model_stats(fleet.global, nn::kWidthCount,
                                                      sd.dataset.height, sd.dataset.width,
                                                      cfg.bits_per_param);
    const double payload_ratio = double(stats.payload_bits) / double(stats_full.payload_bits);
    const double u_prime_w = link::single_message_u_prime(rc.u_prime, payload_ratio);
    const double threshold = link::single_message_success_threshold(u_prime_w, rc.c, rc.power_mw);
    const char* uplink_tag = width_index == nn::kWidthCount ? "uplink-1.0x" : "uplink-0.5x";

    runner::MetricsSeries series;
    for (std::uint64_t t = 1; t <= cfg.rounds; ++t) {
        std::vector<std::uint64_t> steps(std::size_t(cfg.devices), 0);
        parallel_for(std::size_t(cfg.devices), [&](std::size_t k) {
            steps[k] = run_local_steps(fleet.devices[k], sd.dataset, cfg, width_index);
        });
        for (std::uint64_t s : steps)
            if (s == 0) ++series.skipped_device_rounds;

        std::vector<int> decoded;
        std::uint64_t decoded_bits = 0, dropped_bits = 0;
        for (int k = 0; k < cfg.devices; ++k) {
            auto st = rng::stream(cfg.seed, uplink_tag, t, std::uint64_t(k));
            if (st.next_exponential() >= threshold) {
                decoded.push_back(k);
                decoded_bits += stats.payload_bits;
            } else {
                dropped_bits += stats.payload_bits;
            }
        }
        if (!decoded.empty()) {
            std::vector<double> sum(fleet.global.theta.size(), 0.0);
            for (int k : decoded)
                for (std::size_t j = 0; j < sum.size(); ++j)
                    sum[j] += fleet.devices[std::size_t(k)].model.theta[j];
            for (std::size_t j = 0; j < sum.size(); ++j)
                fleet.global.theta[j] = sum[j] / double(decoded.size());
        }
        for (auto& dev : fleet.devices) dev.model.theta = fleet.global.theta;

        EvalResult ev = evaluate(fleet.global, mask, sd.dataset, sd.eval_indices);

        runner::MetricsRow row;
        row.round = t;
        const bool full_width = width_index == nn::kWidthCount;
        row.loss_half = full_width ? kNan : ev.loss;
        row.loss_full = full_width ? ev.loss : kNan;
        row.top1_half = full_width ? kNan : ev.top1;
        row.top1_full = full_width ? ev.top1 : kNan;
        row.n_left = std::uint32_t(decoded.size());
        row.n_right = full_width ? std::uint32_t(decoded.size()) : 0;
        row.decoded_bits_half = full_width ? 0 : decoded_bits;
        row.decoded_bits_full = full_width ? decoded_bits : 0;
        row.dropped_bits = dropped_bits;
        row.comm_mw = rc.power_mw;
        row.flops = stats.flops;
        series.rows.push_back(row);
    }
    if (final_global) *final_global = fleet.global;
    return series;
}

runner::MetricsSeries run_experiment(const runner::ExperimentConfig& cfg) {
    return run_experiment_full(cfg).series;
}

RunOutput run_experiment_full(const runner::ExperimentConfig& cfg) {
    RunOutput out;
    nn::SlimmableModel model;
    switch (cfg.algorithm) {
        case runner::Algorithm::SlimFL:
            out.series = slimfl_run(cfg, &model);
            out.models.emplace_back("model", std::move(model));
            return out;
        case runner::Algorithm::Vanilla05:
            out.series = vanilla_run(cfg, 1, &model);
            out.models.emplace_back("model", std::move(model));
            return out;
        case runner::Algorithm::Vanilla10:
            out.series = vanilla_run(cfg, nn::kWidthCount, &model);
            out.models.emplace_back("model", std::move(model));
            return out;
        case runner::Algorithm::Vanilla15: {
            nn::SlimmableModel model_full;
            runner::MetricsSeries half = vanilla_run(cfg, 1, &model);
            runner::MetricsSeries full = vanilla_run(cfg, nn::kWidthCount, &model_full);
            runner::MetricsSeries merged;
            merged.skipped_device_rounds = half.skipped_device_rounds + full.skipped_device_rounds;
            for (std::size_t i = 0; i < half.rows.size(); ++i) {
                runner::MetricsRow row = full.rows[i];
                row.loss_half = half.rows[i].loss_half;
                row.top1_half = half.rows[i].top1_half;
                row.n_left = half.rows[i].n_left;
                row.decoded_bits_half = half.rows[i].decoded_bits_half;
                row.dropped_bits += half.rows[i].dropped_bits;
                row.comm_mw += half.rows[i].comm_mw;
                row.flops += half.rows[i].flops;
                merged.rows.push_back(row);
            }
            out.series = std::move(merged);
            out.models.emplace_back("model_0.5x", std::move(model));
            out.models.emplace_back("model_1.0x", std::move(model_full));
            return out;
        }
    }
    throw invalid_parameter("unknown algorithm");
}

}  // namespace slimfl::fed
