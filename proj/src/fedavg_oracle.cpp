#include "fedavg_oracle.hpp"

#include <cmath>
#include <numeric>

namespace slimfl::fedavg {

QuadraticExample build_quadratic_example(int num_devices, int block_size, double mu_reg) {
    if (num_devices <= 1) throw invalid_parameter("need more than one device");
    if (block_size < 1) throw invalid_parameter("block size must be >= 1");
    if (mu_reg < 0.0) throw invalid_parameter("regularizer must be >= 0");

    QuadraticExample ex;
    ex.num_devices = num_devices;
    ex.block_size = block_size;
    ex.mu_reg = mu_reg;
    const int n = ex.dim();

    ex.a = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        ex.a(i, i) = 2.0;
        if (i + 1 < n) {
            ex.a(i, i + 1) = -1.0;
            ex.a(i + 1, i) = -1.0;
        }
    }

    ex.b = Vector::Zero(n);
    ex.b(0) = 1.0;

    ex.b_k.reserve(num_devices);
    for (int k = 1; k <= num_devices; ++k) {
        Matrix bk = Matrix::Zero(n, n);
        const int lo = (k - 1) * block_size;      // zero-based (k-1)p+1
        const int hi = k * block_size;            // zero-based kp+1
        for (int i = lo; i <= hi; ++i) bk(i, i) = (i == lo || i == hi) ? 1.0 : 2.0;
        for (int i = lo; i < hi; ++i) {
            bk(i, i + 1) = -1.0;
            bk(i + 1, i) = -1.0;
        }
        ex.b_k.push_back(std::move(bk));
    }

    ex.a_k = ex.b_k;
    ex.a_k.front()(0, 0) += 1.0;
    ex.a_k.back()(n - 1, n - 1) += 1.0;

    Matrix sum = Matrix::Zero(n, n);
    for (const auto& ak : ex.a_k) sum += ak;
    if (sum != ex.a) throw invalid_parameter("block decomposition does not sum to A");

    ex.b_vec_k.assign(std::size_t(num_devices), Vector::Zero(n));
    ex.b_vec_k[0] = ex.b;
    return ex;
}

Vector optimal_point(const QuadraticExample& ex) {
    const int n = ex.dim();
    if (ex.mu_reg == 0.0) {
        Vector w(n);
        for (int i = 0; i < n; ++i) w(i) = 1.0 - double(i + 1) / double(n + 1);
        const double residual = (ex.a * w - ex.b).norm();
        if (residual > 1e-10) throw invalid_parameter("closed-form optimum residual too large");
        return w;
    }
    Matrix m = ex.a / double(ex.num_devices) + ex.mu_reg * Matrix::Identity(n, n);
    return m.ldlt().solve(ex.b / double(ex.num_devices));
}

namespace {

double contraction_limit(const QuadraticExample& ex) { return 1.0 / (4.0 + ex.mu_reg); }

// R = (1/N) sum_k (I - eta M_k)^E  and  v = (eta/N) sum_{l<E} (I - eta M_1)^l b
// with M_k = A_k + mu I. One round is w -> R w + v.
void round_operator(const QuadraticExample& ex, int local_steps, double eta, Matrix& r, Vector& v) {
    const int n = ex.dim();
    const Matrix eye = Matrix::Identity(n, n);
    r = Matrix::Zero(n, n);
    Matrix step1;
    for (int k = 0; k < ex.num_devices; ++k) {
        Matrix step = eye - eta * (ex.a_k[k] + ex.mu_reg * eye);
        Matrix pow = eye;
        for (int e = 0; e < local_steps; ++e) pow = pow * step;
        r += pow;
        if (k == 0) step1 = step;
    }
    r /= double(ex.num_devices);

    v = Vector::Zero(n);
    Vector term = ex.b;
    for (int l = 0; l < local_steps; ++l) {
        v += term;
        term = step1 * term;
    }
    v *= eta / double(ex.num_devices);
}

}  // namespace

RoundOperator make_round_operator(const QuadraticExample& ex, int local_steps, double eta) {
    RoundOperator op;
    round_operator(ex, local_steps, eta, op.r, op.v);
    return op;
}

Vector round_map_apply(const QuadraticExample& ex, int local_steps, double eta, const Vector& w) {
    return make_round_operator(ex, local_steps, eta).apply(w);
}

FedAvgTrace fedavg_deterministic(const QuadraticExample& ex, int local_steps, double eta,
                                 std::uint64_t rounds) {
    if (local_steps < 1) throw invalid_parameter("local step count must be >= 1");
    if (!(eta > 0.0 && eta < contraction_limit(ex)))
        throw invalid_parameter("learning rate must lie in (0, 1/(4+mu))");

    Matrix r;
    Vector v;
    round_operator(ex, local_steps, eta, r, v);

    FedAvgTrace trace;
    Vector w = Vector::Zero(ex.dim());
    double prev_inc = 0.0;
    double ratio_max = 0.0;
    for (std::uint64_t t = 0; t < rounds; ++t) {
        Vector next = r * w + v;
        double inc = (next - w).norm();
        trace.increments.push_back(inc);
        if (prev_inc > 0.0) ratio_max = std::max(ratio_max, inc / prev_inc);
        // Growth well above rounding noise; unreachable under the eta
        // precondition but reported with the operator norm if it ever fires.
        const double noise_floor = 1e-12 * (1.0 + w.norm());
        if (t > 8 && prev_inc > noise_floor && inc > 2.0 * prev_inc) {
            trace.diverged = true;
            trace.contraction_estimate = round_operator_norm(ex, local_steps, eta);
            trace.final_point = next;
            return trace;
        }
        prev_inc = inc;
        w = std::move(next);
    }
    trace.final_point = w;
    trace.contraction_estimate = ratio_max;
    return trace;
}

Vector fixed_point(const QuadraticExample& ex, int local_steps, double eta) {
    if (local_steps < 1) throw invalid_parameter("local step count must be >= 1");
    if (!(eta > 0.0 && eta < contraction_limit(ex)))
        throw invalid_parameter("learning rate must lie in (0, 1/(4+mu))");
    Matrix r;
    Vector v;
    round_operator(ex, local_steps, eta, r, v);
    const int n = ex.dim();
    Matrix g = Matrix::Identity(n, n) - r;
    return g.fullPivLu().solve(v);
}

double gap_lower_bound(const QuadraticExample& ex, int local_steps, double eta) {
    if (ex.mu_reg != 0.0) throw invalid_parameter("gap bound is defined for mu = 0");
    Vector w_star = optimal_point(ex);
    Vector prod = ex.a_k[0] * (ex.a_k[1] * w_star);
    return double(local_steps - 1) * eta / 16.0 * prod.norm();
}

double round_operator_norm(const QuadraticExample& ex, int local_steps, double eta) {
    Matrix r;
    Vector v;
    round_operator(ex, local_steps, eta, r, v);
    // Symmetric operator: power iteration gives the spectral norm.
    Vector x = Vector::Ones(ex.dim()).normalized();
    double norm = 0.0;
    for (int it = 0; it < 500; ++it) {
        Vector y = r * x;
        double n2 = y.norm();
        if (n2 == 0.0) return 0.0;
        x = y / n2;
        norm = n2;
    }
    return norm;
}

void SamplingSpec::validate() const {
    if (population < 1) throw invalid_parameter("population must be >= 1");
    if (draws < 1) throw invalid_parameter("draw count must be >= 1");
    if (int(weights.size()) != population) throw invalid_parameter("weight count mismatch");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw invalid_parameter("weights must be >= 0");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw invalid_parameter("weights must sum to 1");
    if (scheme == SamplingScheme::WithoutReplacement) {
        if (draws > population)
            throw invalid_parameter("cannot draw more than the population without replacement");
        for (double w : weights)
            if (std::abs(w - 1.0 / population) > 1e-9)
                throw invalid_parameter("scheme II requires uniform weights");
    }
}

std::vector<int> sample_scheme(const SamplingSpec& spec, rng::Stream& stream) {
    spec.validate();
    std::vector<int> selected;
    selected.reserve(std::size_t(spec.draws));
    if (spec.scheme == SamplingScheme::WithReplacement) {
        std::vector<double> cdf(spec.weights.size());
        std::partial_sum(spec.weights.begin(), spec.weights.end(), cdf.begin());
        for (int d = 0; d < spec.draws; ++d) {
            double u = stream.next_unit() * cdf.back();
            auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
            selected.push_back(int(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                            std::ptrdiff_t(cdf.size()) - 1)));
        }
    } else {
        std::vector<int> pool(std::size_t(spec.population));
        std::iota(pool.begin(), pool.end(), 0);
        for (int d = 0; d < spec.draws; ++d) {
            std::size_t j = d + std::size_t(stream.next_below(std::uint64_t(spec.population - d)));
            std::swap(pool[d], pool[j]);
            selected.push_back(pool[d]);
        }
    }
    return selected;
}

Vector scheme_aggregate(const SamplingSpec& spec, const std::vector<Vector>& local_vectors,
                        const std::vector<int>& selected) {
    if (int(selected.size()) != spec.draws) throw invalid_parameter("selection size mismatch");
    if (int(local_vectors.size()) != spec.population)
        throw invalid_parameter("local vector count mismatch");
    Vector acc = Vector::Zero(local_vectors.front().size());
    if (spec.scheme == SamplingScheme::WithReplacement) {
        for (int k : selected) acc += local_vectors[std::size_t(k)];
        acc /= double(spec.draws);
    } else {
        const double scale = double(spec.population) / double(spec.draws);
        for (int k : selected) acc += spec.weights[std::size_t(k)] * scale * local_vectors[std::size_t(k)];
    }
    return acc;
}

}  // namespace slimfl::fedavg
