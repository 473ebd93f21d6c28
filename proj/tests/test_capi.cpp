// Exercises the shared library strictly through the public C header.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <slimfl/slimfl.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

using doctest::Approx;

namespace {

std::string temp_out(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "slimfl_capi_test" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

const char* kSmallConfig =
    "seed = 3\n"
    "rounds = 2\n"
    "devices = 3\n"
    "dataset.n = 45\n"
    "trainer.batch_size = 8\n"
    "local_steps = 1\n"
    "channel.sigma2_dbm = -30\n";

}  // namespace

TEST_CASE("config lifecycle and error reporting") {
    slimfl_config* cfg = nullptr;
    CHECK(slimfl_config_parse("seed = 1\n", &cfg) == SLIMFL_OK);
    REQUIRE(cfg != nullptr);

    CHECK(slimfl_config_set(cfg, "rounds", "4") == SLIMFL_OK);
    CHECK(slimfl_config_set(cfg, "lambda", "1.5") == SLIMFL_ERR_CONFIG);
    CHECK(std::strstr(slimfl_last_error(), "(0.5, 1]") != nullptr);
    CHECK(slimfl_config_set(cfg, "nonsense", "1") == SLIMFL_ERR_CONFIG);

    // Switching the noise source displaces the other key.
    CHECK(slimfl_config_set(cfg, "channel.sigma2_dbm", "-30") == SLIMFL_OK);
    CHECK(slimfl_config_set(cfg, "channel.n0_db_hz", "-169") == SLIMFL_OK);
    slimfl_config_free(cfg);

    slimfl_config* bad = nullptr;
    CHECK(slimfl_config_parse("rounds = 1\n", &bad) == SLIMFL_ERR_CONFIG);
    CHECK(std::strstr(slimfl_last_error(), "seed") != nullptr);
    CHECK(slimfl_config_load("/missing/file.conf", &bad) == SLIMFL_ERR_CONFIG);
    CHECK(slimfl_config_parse(nullptr, &bad) == SLIMFL_ERR_INVALID_ARGUMENT);
}

TEST_CASE("experiment runs expose the metrics table") {
    slimfl_config* cfg = nullptr;
    REQUIRE(slimfl_config_parse(kSmallConfig, &cfg) == SLIMFL_OK);

    slimfl_metrics* metrics = nullptr;
    REQUIRE(slimfl_run(cfg, &metrics) == SLIMFL_OK);
    REQUIRE(metrics != nullptr);
    CHECK(slimfl_metrics_rows(metrics) == 2);

    double round = 0, comm = 0, nl = 0, dropped = 0, decoded_h = 0, decoded_f = 0;
    CHECK(slimfl_metrics_cell(metrics, 1, SLIMFL_COL_ROUND, &round) == SLIMFL_OK);
    CHECK(round == 2.0);
    CHECK(slimfl_metrics_cell(metrics, 0, SLIMFL_COL_COMM_MW, &comm) == SLIMFL_OK);
    CHECK(comm == Approx(199.526).epsilon(1e-4));
    CHECK(slimfl_metrics_cell(metrics, 0, SLIMFL_COL_N_LEFT, &nl) == SLIMFL_OK);
    CHECK(nl <= 3.0);
    CHECK(slimfl_metrics_cell(metrics, 0, SLIMFL_COL_DECODED_BITS_HALF, &decoded_h) == SLIMFL_OK);
    CHECK(slimfl_metrics_cell(metrics, 0, SLIMFL_COL_DECODED_BITS_FULL, &decoded_f) == SLIMFL_OK);
    CHECK(slimfl_metrics_cell(metrics, 0, SLIMFL_COL_DROPPED_BITS, &dropped) == SLIMFL_OK);
    CHECK(decoded_h + decoded_f + dropped == 3.0 * 172688);

    double out = 0;
    CHECK(slimfl_metrics_cell(metrics, 5, SLIMFL_COL_ROUND, &out) == SLIMFL_ERR_INVALID_ARGUMENT);
    slimfl_metrics_free(metrics);
    slimfl_config_free(cfg);
}

TEST_CASE("subcommand execution writes files") {
    slimfl_config* cfg = nullptr;
    REQUIRE(slimfl_config_parse(kSmallConfig, &cfg) == SLIMFL_OK);
    const std::string out = temp_out("exec");
    CHECK(slimfl_execute(cfg, "run", out.c_str()) == SLIMFL_OK);
    CHECK(std::filesystem::exists(out + "/metrics.csv"));
    CHECK(std::filesystem::exists(out + "/summary.json"));
    CHECK(std::filesystem::exists(out + "/model.slnn"));

    CHECK(slimfl_execute(cfg, "partition-report", out.c_str()) == SLIMFL_OK);
    CHECK(std::filesystem::exists(out + "/partition.csv"));

    CHECK(slimfl_execute(cfg, "frobnicate", out.c_str()) == SLIMFL_ERR_CONFIG);
    CHECK(std::strstr(slimfl_last_error(), "unknown subcommand") != nullptr);
    slimfl_config_free(cfg);
}

TEST_CASE("link operations through the C surface") {
    double mw = 0;
    CHECK(slimfl_dbm_to_milliwatts(23.0, &mw) == SLIMFL_OK);
    CHECK(mw == Approx(199.526).epsilon(1e-5));

    double up = 0;
    CHECK(slimfl_effective_code_rate(75e6, 75e6, &up) == SLIMFL_OK);
    CHECK(up == Approx(1.0));
    CHECK(slimfl_effective_code_rate(1.0, 0.0, &up) == SLIMFL_ERR_INVALID_ARGUMENT);

    double c = 0;
    CHECK(slimfl_link_constant(1e-3, 100.0, 2.5, &c) == SLIMFL_OK);
    CHECK(c == Approx(100.0));

    double p1 = 0, p2 = 0;
    CHECK(slimfl_split_power(mw, 0.662, &p1, &p2) == SLIMFL_OK);
    CHECK(p1 == Approx(132.1).epsilon(1e-3));
    CHECK(p2 == Approx(67.4).epsilon(1e-3));
    CHECK(slimfl_split_power(mw, 0.4, &p1, &p2) == SLIMFL_ERR_INVALID_ARGUMENT);

    double prof[4] = {0, 0, 0, 0};
    CHECK(slimfl_decode_profile(132.1, 67.4, 0.5841, 100.0, prof) == SLIMFL_OK);
    CHECK(prof[0] == Approx(0.6299).epsilon(1e-3));
    CHECK(prof[1] == Approx(0.8666).epsilon(1e-3));
    CHECK(prof[2] == Approx(0.5327).epsilon(1e-3));
    CHECK(prof[3] == Approx(0.4204).epsilon(1e-3));

    double d = 0;
    CHECK(slimfl_diversity_cost(0.662, mw, 0.5841, 100.0, &d) == SLIMFL_OK);
    CHECK(d == Approx(4.256).epsilon(1e-3));

    double opt = 0;
    CHECK(slimfl_optimize_lambda(mw, 0.5841, 100.0, SLIMFL_OPTIMIZE_GOLDEN, &opt) == SLIMFL_OK);
    double opt_grid = 0;
    CHECK(slimfl_optimize_lambda(mw, 0.5841, 100.0, SLIMFL_OPTIMIZE_GRID, &opt_grid) == SLIMFL_OK);
    CHECK(std::abs(opt - opt_grid) < 2e-4);

    double calibrated = 0;
    CHECK(slimfl_calibrated_u_prime(mw, 9.44e-5, 0.662, &calibrated) == SLIMFL_OK);
    CHECK(calibrated == Approx(0.6673).epsilon(2e-3));
}

TEST_CASE("bound arithmetic through the C surface") {
    double b = 0;
    CHECK(slimfl_gradient_variance_bound(1.0, 1.0, 1.0, 0.5, 0.5, &b) == SLIMFL_OK);
    CHECK(b == Approx(4.0));
    CHECK(slimfl_gradient_variance_bound(1.0, 0.0, 1.0, 0.5, 0.5, &b) == SLIMFL_ERR_RUNTIME);

    double bound1 = 0, bound_many = 0;
    CHECK(slimfl_convergence_bound(1, 4.0, 0.25, 1.0, 0.8, 0.6, 0.5, 0.5, 1.0, &bound1) ==
          SLIMFL_OK);
    CHECK(slimfl_convergence_bound(1000000, 4.0, 0.25, 1.0, 0.8, 0.6, 0.5, 0.5, 1.0,
                                   &bound_many) == SLIMFL_OK);
    CHECK(bound_many < 1e-3 * bound1);
}
