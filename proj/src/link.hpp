#pragma once

#include <cstdint>
#include <optional>

#include "errors.hpp"
#include "rng.hpp"

// Superposition-coded uplink model: two messages (the two halves of a local
// model) share one transmission with unequal power, the receiver decodes the
// stronger one first and then, after cancelling it, the weaker one. All
// powers are in milliwatts internally; configs carry dBm and are converted on
// parse.
namespace slimfl::link {

double dbm_to_milliwatts(double dbm);
double milliwatts_to_dbm(double mw);

struct ChannelParams {
    double distance_m = 100.0;
    double pathloss_beta = 2.5;
    double bandwidth_hz = 75e6;
    double code_rate_bps = 0.0;  // u; 0 means "derive from u_prime elsewhere"
    double noise_sigma2_mw = 0.0;
    double total_power_mw = 0.0;
    double carrier_hz = 5.9e9;  // bookkeeping only

    void validate() const;
};

struct PowerSplit {
    double lambda = 0.0;
    double p1_mw = 0.0;  // stronger message (left half)
    double p2_mw = 0.0;  // weaker message (right half)
};

struct DecodeProfile {
    double u_prime = 0.0;  // 2^(u/W) - 1
    double c = 0.0;        // sigma^2 * d^beta
    double tau1 = 0.0;     // fading-gain threshold for the stronger message
    double tau2 = 0.0;     // threshold for decoding both messages
    double p1 = 0.0;       // Pr(g >= tau1)
    double p2 = 0.0;       // Pr(g >= tau2)
};

enum class DecodeOutcome { Drop, HalfOnly, Full };

// u' = 2^(u/W) - 1.
double effective_code_rate(double u_bps, double bandwidth_hz);

// c = sigma^2 * d^beta.
double link_constant(double sigma2_mw, double distance_m, double beta);

// P1 = lambda*P, P2 = (1-lambda)*P with lambda in (0.5, 1].
PowerSplit split_power(double total_power_mw, double lambda);

// Thresholds and decoding probabilities under unit-mean exponential fading.
// Requires P1/u' > P2; P2 = 0 degenerates to the single-message case.
DecodeProfile decode_profile(const PowerSplit& split, double u_prime, double c);

// Classifies one fading-gain draw against the profile thresholds.
DecodeOutcome sample_outcome(const DecodeProfile& profile, double gain);

// D = 1/p1 + 1/p2; +inf when p2 = 0.
double diversity_cost(const DecodeProfile& profile);

// Same D as a function of lambda for a fixed (P, u', c) instance.
double diversity_cost_at(double lambda, double total_power_mw, double u_prime, double c);

enum class OptimizeMethod { Grid, Golden, Taylor };

// Smallest lambda (exclusive) with a decodable stronger message:
// P1/u' > P2  <=>  lambda*(1+u') > u'.
double feasible_lambda_lower(double u_prime);

// Minimizes D(lambda) over the feasible part of (0.5, 1). Grid and Golden
// work on the exact D; Taylor minimizes the first-order expansion
// 2 + c/(lambda*P/u' - (1-lambda)*P) + c*u'/((1-lambda)*P) numerically on the
// same interval. Absolute tolerance 1e-4.
double optimize_lambda(double total_power_mw, double u_prime, double c, OptimizeMethod method);

// Inverts the numeric optimizer: the u' for which the exact-D optimum equals
// target_lambda on the given (P, c) instance. Used when the config leaves the
// code rate on "auto".
double calibrated_u_prime(double total_power_mw, double c, double target_lambda = 0.662);

// Decode rule for a single full-power message carrying a scaled payload:
// success iff g >= c*u'_w/P, with u'_w = (1+u')^(bits_w/bits_full) - 1 (same
// airtime and bandwidth, code rate scaled by the payload ratio).
double single_message_u_prime(double u_prime_full, double payload_ratio);
double single_message_success_threshold(double u_prime_w, double c, double total_power_mw);

}  // namespace slimfl::link
