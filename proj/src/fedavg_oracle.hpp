#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

// Desk-scale verification of FedAvg behaviour: a distributed linear-regression
// quadratic on which FedAvg with more than one local step settles at a
// sub-optimal fixed point, plus the two unbiased device-sampling schemes.
namespace slimfl::fedavg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct QuadraticExample {
    int num_devices = 0;   // N
    int block_size = 0;    // p
    double mu_reg = 0.0;   // L2 coefficient
    Matrix a;              // (Np+1)^2 tridiagonal, 2 on the diagonal, -1 off
    std::vector<Matrix> a_k;
    std::vector<Matrix> b_k;
    Vector b;              // e_1
    std::vector<Vector> b_vec_k;  // b_1 = e_1, the rest zero

    int dim() const { return num_devices * block_size + 1; }
};

// Builds A, the per-device blocks B_k, and A_1 = B_1 + E11,
// A_N = B_N + E_{dim,dim}, interior A_k = B_k. Aborts if the blocks do not
// sum back to A exactly.
QuadraticExample build_quadratic_example(int num_devices, int block_size, double mu_reg);

// Global minimizer. For mu_reg = 0 this is the closed form w*_i = 1 - i/(Np+2)
// (validated against the A w* = b residual); otherwise a dense solve of
// (A/N + mu I) w = b/N.
Vector optimal_point(const QuadraticExample& ex);

struct FedAvgTrace {
    Vector final_point;
    std::vector<double> increments;  // ||w_{t+1} - w_t|| per round
    bool diverged = false;
    double contraction_estimate = 0.0;
};

// Deterministic FedAvg (exact gradients): each round every device runs E
// gradient steps from the shared iterate and the server averages. Requires
// eta < 1/(4 + mu_reg).
FedAvgTrace fedavg_deterministic(const QuadraticExample& ex, int local_steps, double eta,
                                 std::uint64_t rounds);

// The round map's fixed point by direct linear solve.
Vector fixed_point(const QuadraticExample& ex, int local_steps, double eta);

// Precomputed one-round affine map w -> R w + v.
struct RoundOperator {
    Matrix r;
    Vector v;

    Vector apply(const Vector& w) const { return r * w + v; }
};

RoundOperator make_round_operator(const QuadraticExample& ex, int local_steps, double eta);

// One application of the round map (fixed-point residual checks).
Vector round_map_apply(const QuadraticExample& ex, int local_steps, double eta, const Vector& w);

// (E-1) * eta / 16 * ||A_1 A_2 w*||; requires mu_reg = 0.
double gap_lower_bound(const QuadraticExample& ex, int local_steps, double eta);

// Spectral norm of the averaged per-round operator (power iteration).
double round_operator_norm(const QuadraticExample& ex, int local_steps, double eta);

enum class SamplingScheme { WithReplacement, WithoutReplacement };

struct SamplingSpec {
    SamplingScheme scheme = SamplingScheme::WithReplacement;
    int population = 0;  // N
    int draws = 0;       // K
    std::vector<double> weights;  // p_k, sum to 1; uniform required for scheme II

    void validate() const;
};

// Scheme I: K independent categorical draws (repeats allowed).
// Scheme II: uniform K-subset without replacement.
std::vector<int> sample_scheme(const SamplingSpec& spec, rng::Stream& stream);

// Scheme I: (1/K) sum of selected vectors. Scheme II: sum of p_k * (N/K) * v_k.
Vector scheme_aggregate(const SamplingSpec& spec, const std::vector<Vector>& local_vectors,
                        const std::vector<int>& selected);

}  // namespace slimfl::fedavg
