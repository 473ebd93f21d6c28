#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "analysis.hpp"
#include "convex_fleet.hpp"
#include "fedavg_oracle.hpp"
#include "rng.hpp"

using namespace slimfl;
using doctest::Approx;
using fedavg::Matrix;
using fedavg::Vector;

TEST_CASE("smallest instance matches the hand construction") {
    auto ex = fedavg::build_quadratic_example(2, 1, 0.0);
    REQUIRE(ex.dim() == 3);

    Matrix a(3, 3);
    a << 2, -1, 0, -1, 2, -1, 0, -1, 2;
    CHECK(ex.a == a);

    Matrix a1(3, 3);
    a1 << 2, -1, 0, -1, 1, 0, 0, 0, 0;
    CHECK(ex.a_k[0] == a1);

    Matrix a2(3, 3);
    a2 << 0, 0, 0, 0, 1, -1, 0, -1, 2;
    CHECK(ex.a_k[1] == a2);

    CHECK(ex.b_vec_k[0] == ex.b);
    CHECK(ex.b_vec_k[1].isZero());
}

TEST_CASE("blocks are PSD with norm at most four and sum to A") {
    for (auto [n, p] : {std::pair{2, 1}, {3, 2}, {5, 4}}) {
        auto ex = fedavg::build_quadratic_example(n, p, 0.0);
        Matrix sum = Matrix::Zero(ex.dim(), ex.dim());
        auto st = rng::stream(5, "psd", std::uint64_t(n), std::uint64_t(p));
        for (const auto& ak : ex.a_k) {
            sum += ak;
            for (int trial = 0; trial < 20; ++trial) {
                Vector x(ex.dim());
                for (int j = 0; j < ex.dim(); ++j) x(j) = st.next_normal();
                const double quad = x.dot(ak * x);
                CHECK(quad >= -1e-12);
                CHECK(quad <= 4.0 * x.squaredNorm() + 1e-9);
            }
        }
        CHECK(sum == ex.a);

        // Quadratic-form identity for A itself: x'Ax <= 4 ||x||^2.
        for (int trial = 0; trial < 20; ++trial) {
            Vector x(ex.dim());
            for (int j = 0; j < ex.dim(); ++j) x(j) = st.next_normal();
            const double quad = x.dot(ex.a * x);
            double identity = x(0) * x(0) + x(ex.dim() - 1) * x(ex.dim() - 1);
            for (int j = 0; j + 1 < ex.dim(); ++j)
                identity += (x(j) - x(j + 1)) * (x(j) - x(j + 1));
            CHECK(quad == Approx(identity).epsilon(1e-10));
            CHECK(quad <= 4.0 * x.squaredNorm() + 1e-9);
            CHECK(quad > 0.0);
        }
    }
}

TEST_CASE("block ranks: p+1 at the ends, p inside") {
    for (auto [n, p] : {std::pair{3, 2}, {5, 4}}) {
        auto ex = fedavg::build_quadratic_example(n, p, 0.0);
        for (int k = 0; k < n; ++k) {
            Eigen::FullPivLU<Matrix> lu(ex.a_k[std::size_t(k)]);
            lu.setThreshold(1e-9);
            const int expected = (k == 0 || k == n - 1) ? p + 1 : p;
            CHECK(lu.rank() == expected);
        }
    }
}

TEST_CASE("construction rejects bad arguments") {
    CHECK_THROWS_AS(fedavg::build_quadratic_example(1, 4, 0.0), invalid_parameter);
    CHECK_THROWS_AS(fedavg::build_quadratic_example(5, 0, 0.0), invalid_parameter);
    CHECK_THROWS_AS(fedavg::build_quadratic_example(5, 4, -1.0), invalid_parameter);
}

TEST_CASE("optimal point closed form") {
    auto ex = fedavg::build_quadratic_example(2, 1, 0.0);
    Vector w = fedavg::optimal_point(ex);
    CHECK(w(0) == Approx(0.75));
    CHECK(w(1) == Approx(0.5));
    CHECK(w(2) == Approx(0.25));
    Vector aw = ex.a * w;
    CHECK(aw(0) == Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(aw(1)) < 1e-12);
    CHECK(std::abs(aw(2)) < 1e-12);

    auto big = fedavg::build_quadratic_example(5, 4, 0.0);
    Vector wb = fedavg::optimal_point(big);
    CHECK(wb.size() == 21);
    for (int j = 0; j + 1 < wb.size(); ++j) {
        CHECK(wb(j) > wb(j + 1));  // strictly decreasing
        CHECK(wb(j) != 0.0);       // dense
    }
    CHECK((big.a * wb - big.b).norm() < 1e-10);

    // Regularized solve: gradient of the global objective vanishes.
    auto reg = fedavg::build_quadratic_example(5, 4, 2e-4);
    Vector wr = fedavg::optimal_point(reg);
    Vector grad = reg.a * wr / 5.0 - reg.b / 5.0 + 2e-4 * wr;
    CHECK(grad.norm() < 1e-12);
}

TEST_CASE("single-local-step averaging converges to the optimum") {
    auto ex = fedavg::build_quadratic_example(5, 4, 0.0);
    Vector w_star = fedavg::optimal_point(ex);
    auto trace = fedavg::fedavg_deterministic(ex, 1, 0.01, 1200000);
    CHECK_FALSE(trace.diverged);
    CHECK((trace.final_point - w_star).norm() < 1e-8);
}

TEST_CASE("increments contract geometrically") {
    auto ex = fedavg::build_quadratic_example(3, 2, 0.0);
    auto trace = fedavg::fedavg_deterministic(ex, 4, 0.02, 400);
    const double rho = fedavg::round_operator_norm(ex, 4, 0.02);
    CHECK(rho < 1.0);
    for (std::size_t t = 1; t < trace.increments.size(); ++t)
        CHECK(trace.increments[t] <= rho * trace.increments[t - 1] + 1e-15);
}

TEST_CASE("fixed point: closed form against the iteration") {
    auto ex = fedavg::build_quadratic_example(5, 4, 0.0);

    // One local step: the fixed point is the optimum itself.
    Vector w1 = fedavg::fixed_point(ex, 1, 0.01);
    CHECK((w1 - fedavg::optimal_point(ex)).norm() < 1e-10);

    Vector wt = fedavg::fixed_point(ex, 4, 0.01);
    auto trace = fedavg::fedavg_deterministic(ex, 4, 0.01, 300000);
    CHECK((wt - trace.final_point).norm() < 1e-8);

    // Plugging the fixed point into one round reproduces it.
    CHECK((fedavg::round_map_apply(ex, 4, 0.01, wt) - wt).norm() < 1e-10);

    CHECK_THROWS_AS(fedavg::fixed_point(ex, 4, 0.3), invalid_parameter);
}

TEST_CASE("gap lower bound on the smallest instance") {
    auto ex = fedavg::build_quadratic_example(2, 1, 0.0);
    Vector w_star = fedavg::optimal_point(ex);
    Vector prod = ex.a_k[0] * (ex.a_k[1] * w_star);
    CHECK(prod(0) == Approx(-0.25));
    CHECK(prod(1) == Approx(0.25));
    CHECK(std::abs(prod(2)) < 1e-15);
    CHECK(fedavg::gap_lower_bound(ex, 4, 0.01) == Approx(3.0 * 0.01 / 16.0 * std::sqrt(0.125)));
    CHECK(fedavg::gap_lower_bound(ex, 1, 0.01) == 0.0);
}

TEST_CASE("multi-step averaging parks above the gap bound") {
    auto ex = fedavg::build_quadratic_example(5, 4, 0.0);
    Vector w_star = fedavg::optimal_point(ex);
    for (int steps : {2, 4, 8}) {
        for (double eta : {1e-2, 1e-3}) {
            const double gap = (fedavg::fixed_point(ex, steps, eta) - w_star).norm();
            const double bound = fedavg::gap_lower_bound(ex, steps, eta);
            CHECK(gap >= bound);
            CHECK(gap > 0.0);
        }
    }
}

TEST_CASE("round operator is a contraction across the tested grid") {
    for (auto [n, p] : {std::pair{3, 2}, {5, 4}}) {
        auto ex = fedavg::build_quadratic_example(n, p, 0.0);
        for (double eta : {0.01, 0.2}) {
            for (int steps : {1, 2, 4, 16}) {
                CHECK(fedavg::round_operator_norm(ex, steps, eta) < 1.0);
            }
        }
    }
}

TEST_CASE("sampling schemes: degenerate draws") {
    fedavg::SamplingSpec s2;
    s2.scheme = fedavg::SamplingScheme::WithoutReplacement;
    s2.population = 6;
    s2.draws = 6;
    s2.weights.assign(6, 1.0 / 6.0);
    auto st = rng::stream(3, "scheme2");
    auto sel = fedavg::sample_scheme(s2, st);
    std::sort(sel.begin(), sel.end());
    CHECK(sel == std::vector<int>{0, 1, 2, 3, 4, 5});

    fedavg::SamplingSpec s1;
    s1.scheme = fedavg::SamplingScheme::WithReplacement;
    s1.population = 4;
    s1.draws = 5;
    s1.weights = {1.0, 0.0, 0.0, 0.0};
    auto st1 = rng::stream(4, "scheme1");
    auto sel1 = fedavg::sample_scheme(s1, st1);
    for (int k : sel1) CHECK(k == 0);

    fedavg::SamplingSpec bad = s2;
    bad.draws = 7;
    auto stb = rng::stream(5, "bad");
    CHECK_THROWS_AS(fedavg::sample_scheme(bad, stb), invalid_parameter);

    fedavg::SamplingSpec nonuniform = s2;
    nonuniform.weights = {0.5, 0.1, 0.1, 0.1, 0.1, 0.1};
    CHECK_THROWS_AS(fedavg::sample_scheme(nonuniform, stb), invalid_parameter);
}

TEST_CASE("with-replacement frequencies follow the weights") {
    fedavg::SamplingSpec spec;
    spec.scheme = fedavg::SamplingScheme::WithReplacement;
    spec.population = 5;
    spec.draws = 4;
    spec.weights = {0.4, 0.3, 0.15, 0.1, 0.05};
    auto st = rng::stream(6, "freq");
    const int samples = 100000;
    std::vector<long> count(5, 0);
    for (int s = 0; s < samples; ++s)
        for (int k : fedavg::sample_scheme(spec, st)) ++count[std::size_t(k)];
    const double total = double(samples) * spec.draws;
    for (int k = 0; k < 5; ++k) {
        const double expect = total * spec.weights[std::size_t(k)];
        const double sigma =
            std::sqrt(total * spec.weights[std::size_t(k)] * (1 - spec.weights[std::size_t(k)]));
        CHECK(std::abs(count[std::size_t(k)] - expect) <= 4.0 * sigma);
    }
}

TEST_CASE("aggregation is unbiased for both schemes") {
    const int n = 6, dim = 4;
    std::vector<Vector> vecs;
    auto st = rng::stream(7, "vectors");
    for (int k = 0; k < n; ++k) {
        Vector v(dim);
        for (int j = 0; j < dim; ++j) v(j) = 2.0 * st.next_unit() - 1.0;
        vecs.push_back(v);
    }

    for (int which = 0; which < 2; ++which) {
        fedavg::SamplingSpec spec;
        spec.population = n;
        spec.draws = 3;
        if (which == 0) {
            spec.scheme = fedavg::SamplingScheme::WithReplacement;
            spec.weights = {0.3, 0.25, 0.2, 0.1, 0.1, 0.05};
        } else {
            spec.scheme = fedavg::SamplingScheme::WithoutReplacement;
            spec.weights.assign(n, 1.0 / n);
        }
        Vector target = Vector::Zero(dim);
        for (int k = 0; k < n; ++k) target += spec.weights[std::size_t(k)] * vecs[std::size_t(k)];

        const int samples = 30000;
        Vector mean = Vector::Zero(dim);
        Vector m2 = Vector::Zero(dim);
        auto draw_stream = rng::stream(8, "agg", std::uint64_t(which));
        for (int s = 0; s < samples; ++s) {
            auto sel = fedavg::sample_scheme(spec, draw_stream);
            Vector agg = fedavg::scheme_aggregate(spec, vecs, sel);
            mean += agg;
            m2 += agg.cwiseProduct(agg);
        }
        mean /= double(samples);
        for (int j = 0; j < dim; ++j) {
            const double var = m2(j) / samples - mean(j) * mean(j);
            const double se = std::sqrt(std::max(var, 0.0) / samples);
            CHECK(std::abs(mean(j) - target(j)) <= 4.0 * se + 1e-12);
        }
    }
}

TEST_CASE("uniform exhaustive draw has exactly zero variance") {
    const int n = 5, dim = 3;
    std::vector<Vector> vecs;
    auto st = rng::stream(9, "zero-var");
    for (int k = 0; k < n; ++k) {
        Vector v(dim);
        for (int j = 0; j < dim; ++j) v(j) = st.next_normal();
        vecs.push_back(v);
    }
    fedavg::SamplingSpec spec;
    spec.scheme = fedavg::SamplingScheme::WithoutReplacement;
    spec.population = n;
    spec.draws = n;
    spec.weights.assign(n, 1.0 / n);
    Vector mean = Vector::Zero(dim);
    for (const auto& v : vecs) mean += v / double(n);
    for (int s = 0; s < 50; ++s) {
        auto sel = fedavg::sample_scheme(spec, st);
        Vector agg = fedavg::scheme_aggregate(spec, vecs, sel);
        CHECK((agg - mean).norm() < 1e-14);
    }
}

TEST_CASE("local iterate divergence obeys the clipped-gradient bound") {
    // K devices walk E steps from a shared start with gradients clipped to G;
    // the mean squared distance to their average stays under 4 eta^2 (E-1)^2 G^2
    // measured at the last pre-averaging step.
    const int devices = 8, dim = 5;
    const double eta = 0.05, clip = 2.0;
    auto st = rng::stream(10, "divergence");
    for (int local_steps : {1, 2, 4, 8}) {
        std::vector<Vector> w(devices, Vector::Zero(dim));
        for (int e = 0; e + 1 < local_steps; ++e) {
            for (int k = 0; k < devices; ++k) {
                Vector g(dim);
                for (int j = 0; j < dim; ++j) g(j) = 3.0 * st.next_normal();
                if (g.norm() > clip) g *= clip / g.norm();
                w[std::size_t(k)] -= eta * g;
            }
        }
        Vector avg = Vector::Zero(dim);
        for (const auto& x : w) avg += x / devices;
        double spread = 0.0;
        for (const auto& x : w) spread += (x - avg).squaredNorm() / devices;
        const double bound = 4.0 * eta * eta * double(local_steps - 1) * double(local_steps - 1) *
                             clip * clip;
        if (local_steps == 1) CHECK(spread == 0.0);
        CHECK(spread <= bound + 1e-15);
    }
}

TEST_CASE("per-round contraction recursion holds for the mean squared distance") {
    // Monte-Carlo form of the one-round progress bound on the convex fleet:
    // Delta_{t+1} <= (1 - eta_t mu) Delta_t + eta_t^2 B at the trial mean, for
    // at least 99% of the steps.
    testutil::FleetSpec spec;
    testutil::ConvexFleet fleet(spec, 77);
    const double big_l = fleet.smoothness();
    const double mu = fleet.strong_convexity();
    const double b = analysis::gradient_variance_bound(fleet.delta(), spec.p1, spec.p2, spec.w1,
                                                       spec.w2);

    const int trials = 1000, steps = 200;
    std::vector<std::vector<double>> dist{std::size_t(trials)};
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<double> theta(std::size_t(spec.dim), 0.0);
        for (int j = 0; j < spec.dim; ++j)
            theta[std::size_t(j)] = fleet.optimum()[std::size_t(j)] +
                                    1.0 / std::sqrt(double(spec.dim));
        dist[std::size_t(trial)].push_back(fleet.squared_distance(theta));
        for (int t = 1; t <= steps; ++t) {
            fleet.round(theta, analysis::eta_schedule(std::uint64_t(t), big_l, mu), 123,
                        std::uint64_t(trial), std::uint64_t(t));
            dist[std::size_t(trial)].push_back(fleet.squared_distance(theta));
        }
    }
    int ok = 0;
    for (int t = 0; t < steps; ++t) {
        double before = 0.0, after = 0.0;
        for (int trial = 0; trial < trials; ++trial) {
            before += dist[std::size_t(trial)][std::size_t(t)] / trials;
            after += dist[std::size_t(trial)][std::size_t(t) + 1] / trials;
        }
        const double eta = analysis::eta_schedule(std::uint64_t(t + 1), big_l, mu);
        if (after <= (1.0 - eta * mu) * before + eta * eta * b) ++ok;
    }
    CHECK(double(ok) / steps >= 0.99);
}
