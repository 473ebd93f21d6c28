#pragma once

// Strongly convex masked two-width quadratic fleet with injected gradient
// noise of exactly known variance. Every device k owns
// F^k(x) = 1/2 (x - a_k)' diag(q) (x - a_k); the superposed local gradient at
// the shared iterate is
//   g^k = w1 * mask_lh(grad F^k(theta .* mask_lh)) + w2 * grad F^k(theta) + noise
// and the server applies the idealized decode-probability weights, so the
// effective objective is the quadratic with diagonal [q_lh, w2 * q_rh],
// minimized at the mean of the a_k. Smoothness, strong convexity, the initial
// distance and the noise level are therefore all known in closed form.

#include <cmath>
#include <cstdint>
#include <vector>

#include "rng.hpp"

namespace testutil {

struct FleetSpec {
    int devices = 10;
    int dim = 8;  // first half of the coordinates is the 0.5x segment
    double w1 = 0.5;
    double w2 = 0.5;
    double p1 = 0.8;
    double p2 = 0.6;
    double noise_std = 1.0;       // per-coordinate gradient noise scale base
    double heterogeneity = 0.3;   // spread of the device minimizers
    std::vector<double> q = {4.0, 2.0, 1.0, 0.5, 4.0, 2.0, 1.0, 0.5};
};

class ConvexFleet {
  public:
    ConvexFleet(const FleetSpec& spec, std::uint64_t seed) : spec_(spec) {
        const int n = spec.dim;
        const int k = spec.devices;
        auto st = slimfl::rng::stream(seed, "fleet-build");
        centers_.assign(std::size_t(k), std::vector<double>(std::size_t(n), 0.0));
        center_mean_.assign(std::size_t(n), 0.0);
        for (int d = 0; d < k; ++d) {
            for (int j = 0; j < n; ++j) {
                centers_[std::size_t(d)][std::size_t(j)] = spec.heterogeneity * st.next_normal();
                center_mean_[std::size_t(j)] += centers_[std::size_t(d)][std::size_t(j)] / k;
            }
        }
        // Mild per-device variation around the base noise level.
        sigma_sq_.resize(std::size_t(k));
        double mean = 0.0;
        for (int d = 0; d < k; ++d) {
            const double s = spec.noise_std * (0.8 + 0.4 * st.next_unit());
            sigma_sq_[std::size_t(d)] = s * s * n;  // E||noise||^2 per gradient
            mean += sigma_sq_[std::size_t(d)];
        }
        delta_ = mean / k;

        hessian_.resize(std::size_t(n));
        for (int j = 0; j < n; ++j)
            hessian_[std::size_t(j)] = (j < n / 2 ? 1.0 : spec.w2) * spec.q[std::size_t(j)];
    }

    double smoothness() const {
        double v = hessian_[0];
        for (double h : hessian_) v = std::max(v, h);
        return v;
    }
    double strong_convexity() const {
        double v = hessian_[0];
        for (double h : hessian_) v = std::min(v, h);
        return v;
    }
    double delta() const { return delta_; }
    const std::vector<double>& optimum() const { return center_mean_; }

    double objective_gap(const std::vector<double>& theta) const {
        double gap = 0.0;
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double d = theta[j] - center_mean_[j];
            gap += 0.5 * hessian_[j] * d * d;
        }
        return gap;
    }

    double squared_distance(const std::vector<double>& theta) const {
        double d2 = 0.0;
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double d = theta[j] - center_mean_[j];
            d2 += d * d;
        }
        return d2;
    }

    // One aggregation round under idealized 1/(K p_i) weights with nested
    // per-device decode draws (full implies half). The same noise realization
    // feeds both width evaluations, matching a shared batch.
    void round(std::vector<double>& theta, double eta, std::uint64_t seed, std::uint64_t trial,
               std::uint64_t t) const {
        const int n = spec_.dim;
        const int k = spec_.devices;
        const int lh = n / 2;
        std::vector<double> f(std::size_t(n), 0.0);
        for (int d = 0; d < k; ++d) {
            auto st = slimfl::rng::stream(seed, "fleet-round", trial, t, std::uint64_t(d));
            const double u = st.next_unit();
            const bool got_half = u < spec_.p1;
            const bool got_full = u < spec_.p2;
            const double noise_scale = std::sqrt(sigma_sq_[std::size_t(d)] / n);
            for (int j = 0; j < n; ++j) {
                const double eps = noise_scale * st.next_normal();
                const double raw = spec_.q[std::size_t(j)] *
                                   (theta[std::size_t(j)] - centers_[std::size_t(d)][std::size_t(j)]);
                if (j < lh) {
                    // w1 * masked evaluation + w2 * full evaluation, shared noise.
                    const double g = (spec_.w1 + spec_.w2) * (raw + eps);
                    if (got_half) f[std::size_t(j)] += g / (k * spec_.p1);
                } else {
                    const double g = spec_.w2 * (raw + eps);
                    if (got_full) f[std::size_t(j)] += g / (k * spec_.p2);
                }
            }
        }
        for (int j = 0; j < n; ++j) theta[std::size_t(j)] -= eta * f[std::size_t(j)];
    }

    const FleetSpec& spec() const { return spec_; }

  private:
    FleetSpec spec_;
    std::vector<std::vector<double>> centers_;
    std::vector<double> center_mean_;
    std::vector<double> hessian_;
    std::vector<double> sigma_sq_;
    double delta_ = 0.0;
};

}  // namespace testutil
