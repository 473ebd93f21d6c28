#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "nn_model.hpp"
#include "rng.hpp"
#include "testutil.hpp"

using namespace slimfl;
using doctest::Approx;

namespace {

nn::LayerPlan tiny_plan() {
    nn::LayerPlan plan;
    plan.push_back({nn::LayerKind::Conv, 1, 4, 3, nn::Activation::ReLU6, false});
    plan.push_back({nn::LayerKind::DepthwiseConv, 4, 4, 3, nn::Activation::ReLU6, false});
    plan.push_back({nn::LayerKind::PointwiseConv, 4, 6, 1, nn::Activation::ReLU6, false});
    plan.push_back({nn::LayerKind::GlobalAvgPool, 6, 6, 0, nn::Activation::None, false});
    plan.push_back({nn::LayerKind::Linear, 6, 4, 0, nn::Activation::None, true});
    return plan;
}

}  // namespace

TEST_CASE("production plan parameter counts") {
    auto model = nn::build_ul_mobilenet(3);
    CHECK(model.theta.size() == 4586);
    CHECK(nn::plan_param_count(model.plan) == 4586);

    // Layer-by-layer: 288, 288, 1024, 288, 2048, 0 (pool), 650.
    const std::size_t expected[] = {288, 288, 1024, 288, 2048, 0, 650};
    for (std::size_t i = 0; i < model.plan.size(); ++i)
        CHECK(nn::layer_param_count(model.plan[i]) == expected[i]);
}

TEST_CASE("builds are deterministic in the seed") {
    auto a = nn::build_ul_mobilenet(42);
    auto b = nn::build_ul_mobilenet(42);
    CHECK(a.theta == b.theta);
    auto c = nn::build_ul_mobilenet(43);
    CHECK(a.theta != c.theta);
}

TEST_CASE("width masks: prefix rule, partition, counts") {
    auto model = nn::build_ul_mobilenet(1);
    auto half = nn::width_mask(model, 1);
    auto full = nn::width_mask(model, 2);

    CHECK(full.active_count == 4586);
    for (auto b : full.bits) CHECK(b == 1);

    CHECK(half.active_count == 1530);

    // Half mask is contained in the full mask, and its complement partitions it.
    std::size_t complement = 0;
    for (std::size_t j = 0; j < half.bits.size(); ++j) {
        CHECK(half.bits[j] <= full.bits[j]);
        if (full.bits[j] && !half.bits[j]) ++complement;
    }
    CHECK(half.active_count + complement == full.active_count);

    CHECK_THROWS_AS(nn::width_mask(model, 0), invalid_parameter);
    CHECK_THROWS_AS(nn::width_mask(model, 3), invalid_parameter);
}

TEST_CASE("masked-parameter pass equals skipped-channel pass") {
    auto model = nn::build_ul_mobilenet(7);
    auto half = nn::width_mask(model, 1);
    auto full = nn::width_mask(model, 2);
    auto batch = testutil::random_batch(model.plan, 3, 10, 10, 21);

    // theta .* mask evaluated at full width vs the masked pass.
    nn::SlimmableModel zeroed = model;
    for (std::size_t j = 0; j < zeroed.theta.size(); ++j)
        if (!half[j]) zeroed.theta[j] = 0.0;
    auto masked_pass = nn::forward(model, half, batch);
    auto zeroed_pass = nn::forward(zeroed, full, batch);
    REQUIRE(masked_pass.size() == zeroed_pass.size());
    for (std::size_t i = 0; i < masked_pass.size(); ++i)
        CHECK(masked_pass[i] == Approx(zeroed_pass[i]).epsilon(1e-12));

    // Full mask leaves the parameters untouched.
    auto direct = nn::forward(model, full, batch);
    CHECK(direct.size() == std::size_t(batch.count) * 10);
}

TEST_CASE("zero parameters give bias-only logits") {
    auto model = nn::build_ul_mobilenet(9);
    std::fill(model.theta.begin(), model.theta.end(), 0.0);
    // Plant a recognizable bias.
    const std::size_t bias_base = model.theta.size() - 10;
    for (int c = 0; c < 10; ++c) model.theta[bias_base + std::size_t(c)] = 0.1 * c;
    auto batch = testutil::random_batch(model.plan, 2, 8, 8, 5);
    auto logits = nn::forward(model, nn::width_mask(model, 2), batch);
    for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 10; ++c) CHECK(logits[std::size_t(b) * 10 + c] == Approx(0.1 * c));
}

TEST_CASE("task loss closed forms") {
    // Uniform logits over 10 classes.
    std::vector<double> logits(10, 0.0);
    auto r = nn::task_loss(logits, {3}, 10);
    CHECK(r.value == Approx(std::log(10.0)));

    // Saturated correct class.
    std::vector<double> sharp(10, 0.0);
    sharp[4] = 50.0;
    CHECK(nn::task_loss(sharp, {4}, 10).value < 1e-6);

    // Two-class symmetric case.
    CHECK(nn::task_loss({0.0, 0.0}, {0}, 2).value == Approx(std::log(2.0)));

    // Softmax rows sum to one within 1e-12: gradient rows sum to zero.
    auto st = rng::stream(4, "loss");
    std::vector<double> rnd(30);
    for (auto& v : rnd) v = 4.0 * st.next_unit() - 2.0;
    auto g = nn::task_loss(rnd, {0, 1, 2}, 10);
    for (int b = 0; b < 3; ++b) {
        double row = 0.0;
        for (int c = 0; c < 10; ++c) row += g.dlogits[std::size_t(b) * 10 + c];
        CHECK(std::abs(row) < 1e-12);
    }

    CHECK_THROWS_AS(nn::task_loss(logits, {11}, 10), invalid_parameter);
}

TEST_CASE("distill loss closed forms") {
    auto st = rng::stream(6, "distill");
    std::vector<double> teacher(12);
    for (auto& v : teacher) v = 3.0 * st.next_unit() - 1.5;

    // Student equal to teacher: zero gradient, loss equals teacher entropy.
    auto same = nn::distill_loss(teacher, teacher, 4);
    for (double d : same.dlogits) CHECK(d == 0.0);
    double entropy = 0.0;
    for (int b = 0; b < 3; ++b) {
        const double* row = teacher.data() + b * 4;
        double m = *std::max_element(row, row + 4);
        double z = 0.0;
        for (int c = 0; c < 4; ++c) z += std::exp(row[c] - m);
        for (int c = 0; c < 4; ++c) {
            double p = std::exp(row[c] - m) / z;
            entropy -= p * std::log(p);
        }
    }
    CHECK(same.value == Approx(entropy / 3.0).epsilon(1e-12));

    // Near-one-hot teacher behaves like the hard label.
    std::vector<double> hard_teacher(10, 0.0);
    hard_teacher[7] = 50.0;
    std::vector<double> student(10);
    for (auto& v : student) v = st.next_unit();
    auto soft = nn::distill_loss(student, hard_teacher, 10);
    auto hard = nn::task_loss(student, {7}, 10);
    CHECK(soft.value == Approx(hard.value).epsilon(1e-9));
}

TEST_CASE("distill logit gradient matches finite differences to 1e-6") {
    auto st = rng::stream(8, "distill-fd");
    std::vector<double> teacher(6), student(6);
    for (auto& v : teacher) v = 2.0 * st.next_unit() - 1.0;
    for (auto& v : student) v = 2.0 * st.next_unit() - 1.0;
    auto res = nn::distill_loss(student, teacher, 3);
    const double h = 1e-5;
    for (std::size_t j = 0; j < student.size(); ++j) {
        std::vector<double> up = student, down = student;
        up[j] += h;
        down[j] -= h;
        const double fd =
            (nn::distill_loss(up, teacher, 3).value - nn::distill_loss(down, teacher, 3).value) /
            (2.0 * h);
        CHECK(std::abs(res.dlogits[j] - fd) / std::max(1.0, std::abs(fd)) < 1e-6);
    }
}

TEST_CASE("gradients match finite differences on small plans") {
    auto plan = tiny_plan();
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        auto model = nn::build_model(plan, seed);
        auto batch = testutil::random_batch(plan, 2, 6, 6, seed + 100);
        for (int width : {1, 2}) {
            auto mask = nn::width_mask(model, width);
            auto rep = testutil::finite_difference_check(model, mask, batch, nn::LossKind::Task,
                                                         nullptr);
            CHECK(rep.max_rel_error < 1e-4);

            std::vector<double> teacher =
                nn::forward(model, nn::width_mask(model, 2), batch);
            auto rep2 = testutil::finite_difference_check(model, mask, batch,
                                                          nn::LossKind::Distill, &teacher);
            CHECK(rep2.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("gradient support stays inside the mask") {
    auto model = nn::build_ul_mobilenet(11);
    auto half = nn::width_mask(model, 1);
    auto batch = testutil::random_batch(model.plan, 2, 9, 9, 31);
    auto g = nn::grad(model, half, batch, nn::LossKind::Task);
    for (std::size_t j = 0; j < g.size(); ++j)
        if (!half[j]) CHECK(g[j] == 0.0);
}

TEST_CASE("duplicated batch rows leave the mean gradient unchanged") {
    auto plan = tiny_plan();
    auto model = nn::build_model(plan, 5);
    auto one = testutil::random_batch(plan, 1, 6, 6, 77);
    nn::Batch two = one;
    two.count = 2;
    two.images.insert(two.images.end(), one.images.begin(), one.images.end());
    two.labels.push_back(one.labels[0]);
    auto g1 = nn::grad(model, nn::width_mask(model, 2), one, nn::LossKind::Task);
    auto g2 = nn::grad(model, nn::width_mask(model, 2), two, nn::LossKind::Task);
    for (std::size_t j = 0; j < g1.size(); ++j) CHECK(g1[j] == Approx(g2[j]).epsilon(1e-12));
}

TEST_CASE("model stats: flops ratio and payload constants") {
    auto model = nn::build_ul_mobilenet(2);
    auto full = nn::model_stats(model, 2);
    auto half = nn::model_stats(model, 1);

    CHECK(full.params == 4586);
    CHECK(half.params == 1530);
    CHECK(full.payload_bits == 172688);
    CHECK(half.payload_bits == 86344);

    const double ratio = half.flops / full.flops;
    CHECK(std::abs(ratio - 0.305) < 0.05);
    CHECK(std::abs(ratio - 0.286) < 0.05);

    // Configurable payload: 32 bits per parameter.
    auto packed = nn::model_stats(model, 2, 28, 28, 32.0);
    CHECK(packed.payload_bits == 4586u * 32u);
}

TEST_CASE("checkpoint round trip and error paths") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "slimfl_nn_test";
    fs::create_directories(dir);
    const std::string path = (dir / "model.slnn").string();

    auto model = nn::build_ul_mobilenet(123);
    nn::save_checkpoint(model, path);
    auto loaded = nn::load_checkpoint(path, model.plan);
    CHECK(loaded.theta == model.theta);

    // Header layout: magic, version, count, width count.
    auto bytes = [&] {
        std::FILE* f = std::fopen(path.c_str(), "rb");
        REQUIRE(f != nullptr);
        unsigned char head[17];
        REQUIRE(std::fread(head, 1, sizeof head, f) == sizeof head);
        std::fclose(f);
        return std::vector<unsigned char>(head, head + sizeof head);
    }();
    CHECK(bytes[0] == 'S');
    CHECK(bytes[1] == 'L');
    CHECK(bytes[2] == 'N');
    CHECK(bytes[3] == 'N');
    CHECK(bytes[4] == 1);  // version, little endian
    CHECK(bytes[8] == (4586 & 0xff));
    CHECK(bytes[9] == (4586 >> 8));
    CHECK(bytes[16] == 2);  // width count

    const std::string bad = (dir / "bad.slnn").string();
    {
        std::FILE* f = std::fopen(bad.c_str(), "wb");
        std::fputs("NOPE", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(nn::load_checkpoint(bad, model.plan), io_error);
    CHECK_THROWS_AS(nn::load_checkpoint((dir / "missing.slnn").string(), model.plan), io_error);
}
