#include "analysis.hpp"

#include <cmath>

namespace slimfl::analysis {

void BoundParams::validate() const {
    if (!(strong_convexity_mu > 0.0) || smoothness_L < strong_convexity_mu)
        throw invalid_parameter("need L >= mu > 0");
    if (delta < 0.0) throw invalid_parameter("delta must be >= 0");
    if (!(p1 > 0.0 && p2 > 0.0 && p2 <= p1 && p1 <= 1.0))
        throw invalid_parameter("need 0 < p2 <= p1 <= 1");
    if (delta1 < 0.0) throw invalid_parameter("delta1 must be >= 0");
}

double gradient_variance_bound(double delta, double p1, double p2, double w1, double w2) {
    if (delta < 0.0) throw invalid_parameter("delta must be >= 0");
    if (!(p1 > 0.0) || !(p2 > 0.0))
        throw degenerate_link("zero decoding probability in variance bound");
    return 4.0 * delta * (1.0 / p1 + 1.0 / p2) * (w1 * w1 + w2 * w2);
}

double eta_schedule(std::uint64_t t, double smoothness_L, double strong_convexity_mu) {
    return 2.0 / (strong_convexity_mu * double(t) + 2.0 * smoothness_L - strong_convexity_mu);
}

double convergence_bound(std::uint64_t t, const BoundParams& p) {
    p.validate();
    if (t < 1) throw invalid_parameter("round index starts at 1");
    const double b = gradient_variance_bound(p.delta, p.p1, p.p2, p.w1, p.w2);
    const double kappa = p.smoothness_L / p.strong_convexity_mu;
    return kappa * (p.strong_convexity_mu * p.smoothness_L * p.delta1 + 2.0 * b) /
           (p.strong_convexity_mu * double(t) + 2.0 * p.smoothness_L - p.strong_convexity_mu);
}

namespace {

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

}  // namespace

double estimate_local_variance(const nn::SlimmableModel& model, const data::Dataset& dataset,
                               const std::vector<std::uint32_t>& shard, std::size_t batch_size,
                               std::size_t trials, rng::Stream& stream) {
    if (shard.empty()) throw invalid_parameter("shard must not be empty");
    if (batch_size < 1) throw invalid_parameter("batch size must be >= 1");
    batch_size = std::min(batch_size, shard.size());

    const nn::WidthMask full = nn::width_mask(model, nn::kWidthCount);
    const std::vector<double> mean_grad =
        nn::grad(model, full, gather_batch(dataset, shard), nn::LossKind::Task);

    double acc = 0.0;
    std::vector<std::uint32_t> pool = shard;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        for (std::size_t j = 0; j < batch_size; ++j) {
            std::size_t k = j + std::size_t(stream.next_below(pool.size() - j));
            std::swap(pool[j], pool[k]);
        }
        std::vector<std::uint32_t> batch_idx(pool.begin(), pool.begin() + std::ptrdiff_t(batch_size));
        std::vector<double> g =
            nn::grad(model, full, gather_batch(dataset, batch_idx), nn::LossKind::Task);
        double d2 = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) {
            const double d = g[j] - mean_grad[j];
            d2 += d * d;
        }
        acc += d2;
    }
    return acc / double(trials);
}

double estimate_noniidness(const nn::SlimmableModel& model, const data::Dataset& dataset,
                           const data::Partition& partition, std::size_t batch_size,
                           std::size_t trials, std::uint64_t seed) {
    double acc = 0.0;
    std::size_t counted = 0;
    for (std::size_t k = 0; k < partition.devices(); ++k) {
        const auto& shard = partition.device_indices[k];
        if (shard.empty()) continue;
        auto st = rng::stream(seed, "variance-estimate", k);
        acc += estimate_local_variance(model, dataset, shard, batch_size, trials, st);
        ++counted;
    }
    if (counted == 0) throw invalid_parameter("all shards are empty");
    return acc / double(counted);
}

std::optional<std::uint64_t> detect_convergence(const std::vector<double>& top1_series,
                                                double mu_ref, double sigma_ref,
                                                std::size_t window) {
    if (window < 1) throw invalid_parameter("window must be >= 1");
    if (top1_series.size() < window) return std::nullopt;
    for (std::size_t end = window; end <= top1_series.size(); ++end) {
        double mean = 0.0;
        for (std::size_t i = end - window; i < end; ++i) mean += top1_series[i];
        mean /= double(window);
        double var = 0.0;
        for (std::size_t i = end - window; i < end; ++i) {
            const double d = top1_series[i] - mean;
            var += d * d;
        }
        var /= double(window);  // population variance
        if (mean > mu_ref && std::sqrt(var) < sigma_ref) return std::uint64_t(end);
    }
    return std::nullopt;
}

EnergyReport energy_report(const runner::MetricsSeries& series) {
    EnergyReport rep;
    if (series.rows.empty()) return rep;
    rep.comm_mw_per_round = series.rows.front().comm_mw;
    rep.flops_per_epoch = series.rows.front().flops;
    rep.convergence_round = detect_convergence(series.top1_full_series());
    if (rep.convergence_round) {
        rep.total_comm_mw = rep.comm_mw_per_round * double(*rep.convergence_round);
        rep.total_flops = rep.flops_per_epoch * double(*rep.convergence_round);
    }
    return rep;
}

BitsReport bits_report(const runner::MetricsSeries& series) {
    BitsReport rep;
    double half = 0.0, full = 0.0, dropped = 0.0;
    for (const auto& r : series.rows) {
        half += double(r.decoded_bits_half);
        full += double(r.decoded_bits_full);
        dropped += double(r.dropped_bits);
    }
    rep.decoded_half_mb = half / 8e6;
    rep.decoded_full_mb = full / 8e6;
    rep.dropped_mb = dropped / 8e6;
    return rep;
}

}  // namespace slimfl::analysis
