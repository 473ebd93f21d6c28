#include "link.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace slimfl::link {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double dbm_to_milliwatts(double dbm) { return std::pow(10.0, dbm / 10.0); }

double milliwatts_to_dbm(double mw) { return 10.0 * std::log10(mw); }

void ChannelParams::validate() const {
    if (pathloss_beta < 2.0) throw invalid_parameter("pathloss_beta must be >= 2");
    if (distance_m <= 0.0) throw invalid_parameter("distance_m must be > 0");
    if (bandwidth_hz <= 0.0) throw invalid_parameter("bandwidth_hz must be > 0");
    if (total_power_mw <= 0.0) throw invalid_parameter("total power must be > 0");
    if (noise_sigma2_mw < 0.0) throw invalid_parameter("noise power must be >= 0");
    if (code_rate_bps < 0.0) throw invalid_parameter("code rate must be >= 0");
}

double effective_code_rate(double u_bps, double bandwidth_hz) {
    if (bandwidth_hz <= 0.0) throw invalid_parameter("bandwidth must be > 0");
    if (u_bps < 0.0) throw invalid_parameter("code rate must be >= 0");
    return std::exp2(u_bps / bandwidth_hz) - 1.0;
}

double link_constant(double sigma2_mw, double distance_m, double beta) {
    if (sigma2_mw < 0.0) throw invalid_parameter("noise power must be >= 0");
    if (distance_m <= 0.0) throw invalid_parameter("distance must be > 0");
    if (beta < 2.0) throw invalid_parameter("path loss exponent must be >= 2");
    return sigma2_mw * std::pow(distance_m, beta);
}

PowerSplit split_power(double total_power_mw, double lambda) {
    if (total_power_mw <= 0.0) throw invalid_parameter("total power must be > 0");
    if (!(lambda > 0.5 && lambda <= 1.0))
        throw invalid_parameter("power allocation ratio must lie in (0.5, 1], got " +
                                std::to_string(lambda));
    PowerSplit s;
    s.lambda = lambda;
    s.p1_mw = lambda * total_power_mw;
    s.p2_mw = (1.0 - lambda) * total_power_mw;
    return s;
}

DecodeProfile decode_profile(const PowerSplit& split, double u_prime, double c) {
    if (u_prime < 0.0) throw invalid_parameter("u' must be >= 0");
    if (c < 0.0) throw invalid_parameter("link constant must be >= 0");

    DecodeProfile prof;
    prof.u_prime = u_prime;
    prof.c = c;

    const double margin = split.p1_mw / u_prime - split.p2_mw;  // +inf when u' = 0
    if (!(margin > 0.0))
        throw undecodable_configuration(
            "stronger message undecodable at any gain: P1/u' - P2 = " + std::to_string(margin),
            margin);

    prof.tau1 = std::isinf(margin) ? 0.0 : c / margin;
    if (split.p2_mw == 0.0) {
        prof.tau2 = kInf;
        prof.p2 = 0.0;
    } else {
        prof.tau2 = std::max(prof.tau1, c * u_prime / split.p2_mw);
        prof.p2 = std::exp(-prof.tau2);
    }
    prof.p1 = std::exp(-prof.tau1);
    return prof;
}

DecodeOutcome sample_outcome(const DecodeProfile& profile, double gain) {
    if (gain < 0.0) throw invalid_parameter("fading gain must be >= 0");
    if (gain < profile.tau1) return DecodeOutcome::Drop;
    if (gain < profile.tau2) return DecodeOutcome::HalfOnly;
    return DecodeOutcome::Full;
}

double diversity_cost(const DecodeProfile& profile) {
    if (profile.p1 <= 0.0) throw degenerate_link("p1 = 0: no message ever decodes");
    if (profile.p2 == 0.0) return kInf;
    return 1.0 / profile.p1 + 1.0 / profile.p2;
}

double diversity_cost_at(double lambda, double total_power_mw, double u_prime, double c) {
    return diversity_cost(decode_profile(split_power(total_power_mw, lambda), u_prime, c));
}

double feasible_lambda_lower(double u_prime) {
    return std::max(0.5, u_prime / (1.0 + u_prime));
}

namespace {

// Golden-section search on a unimodal f over (lo, hi), open at both ends.
double golden_minimize(double lo, double hi, double tol, const auto& f) {
    constexpr double kInvPhi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - kInvPhi * (b - a);
    double x2 = a + kInvPhi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kInvPhi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kInvPhi * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

double taylor_cost(double lambda, double total_power_mw, double u_prime, double c) {
    const double lh = lambda * total_power_mw / u_prime - (1.0 - lambda) * total_power_mw;
    const double rh = (1.0 - lambda) * total_power_mw / u_prime;
    return 2.0 + c / lh + c / rh;
}

// D in the exp(tau) form: overflows to +inf near the interval ends where the
// probabilities underflow, keeping the minimizers well-posed.
double exact_cost(double lambda, double total_power_mw, double u_prime, double c) {
    const auto prof = decode_profile(split_power(total_power_mw, lambda), u_prime, c);
    if (prof.p2 == 0.0) return kInf;
    return std::exp(prof.tau1) + std::exp(prof.tau2);
}

}  // namespace

double optimize_lambda(double total_power_mw, double u_prime, double c, OptimizeMethod method) {
    if (total_power_mw <= 0.0) throw invalid_parameter("total power must be > 0");
    if (u_prime <= 0.0) throw invalid_parameter("u' must be > 0 for power allocation");

    const double lo = feasible_lambda_lower(u_prime);
    if (lo >= 1.0)
        throw undecodable_configuration("no feasible lambda in (0.5, 1)", lo - 1.0);

    // Stay strictly inside: D diverges at both ends.
    const double eps = 1e-9;
    const double a = lo + eps, b = 1.0 - eps;

    switch (method) {
        case OptimizeMethod::Grid: {
            const double step = 1e-4;
            double best_l = a, best_d = exact_cost(a, total_power_mw, u_prime, c);
            for (double l = lo + step; l < 1.0; l += step) {
                double d = exact_cost(l, total_power_mw, u_prime, c);
                if (d < best_d) {
                    best_d = d;
                    best_l = l;
                }
            }
            return best_l;
        }
        case OptimizeMethod::Golden:
            return golden_minimize(a, b, 1e-6, [&](double l) {
                return exact_cost(l, total_power_mw, u_prime, c);
            });
        case OptimizeMethod::Taylor:
            return golden_minimize(a, b, 1e-6, [&](double l) {
                return taylor_cost(l, total_power_mw, u_prime, c);
            });
    }
    throw invalid_parameter("unknown optimize method");
}

double calibrated_u_prime(double total_power_mw, double c, double target_lambda) {
    // The exact-D optimum is increasing in u'; bisect on it.
    auto opt = [&](double up) {
        return optimize_lambda(total_power_mw, up, c, OptimizeMethod::Golden);
    };
    double lo = 1e-4, hi = 1.0;
    while (opt(hi) < target_lambda) {
        hi *= 2.0;
        if (hi > 1e6) throw invalid_parameter("calibration target unreachable");
    }
    for (int it = 0; it < 60 && hi - lo > 1e-10; ++it) {
        double mid = 0.5 * (lo + hi);
        (opt(mid) < target_lambda ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double single_message_u_prime(double u_prime_full, double payload_ratio) {
    if (payload_ratio <= 0.0) throw invalid_parameter("payload ratio must be > 0");
    return std::pow(1.0 + u_prime_full, payload_ratio) - 1.0;
}

double single_message_success_threshold(double u_prime_w, double c, double total_power_mw) {
    if (total_power_mw <= 0.0) throw invalid_parameter("total power must be > 0");
    return c * u_prime_w / total_power_mw;
}

}  // namespace slimfl::link
