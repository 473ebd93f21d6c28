// Command-line front end. Links the shared library through its C interface
// only; all experiment logic lives behind it.
#include <slimfl/slimfl.h>

#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <string>

namespace {

struct ConfigDeleter {
    void operator()(slimfl_config* c) const { slimfl_config_free(c); }
};
using ConfigPtr = std::unique_ptr<slimfl_config, ConfigDeleter>;

int status_to_exit_code(slimfl_status st) {
    switch (st) {
        case SLIMFL_OK: return 0;
        case SLIMFL_ERR_CONFIG: return 1;
        case SLIMFL_ERR_INVALID_ARGUMENT: return 1;
        default: return 2;
    }
}

int fail(slimfl_status st) {
    std::fprintf(stderr, "error: %s\n", slimfl_last_error());
    return status_to_exit_code(st);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated learning over width-adjustable networks with superposition-coded "
                 "uplinks: simulator and analysis toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed_override = 0;
    bool seed_given = false;

    const char* subcommands[] = {"run", "sweep-lambda", "bound", "counterexample",
                                 "partition-report"};
    const char* descriptions[] = {
        "execute the configured experiment and write metrics.csv / summary.json",
        "emit the (lambda, D, final accuracy) grid",
        "emit the (t, eta_t, bound) convergence curve",
        "emit the multi-step-averaging fixed-point gap table",
        "emit the per-device class histogram of the configured partition"};

    for (int i = 0; i < 5; ++i) {
        CLI::App* sub = app.add_subcommand(subcommands[i], descriptions[i]);
        sub->add_option("--config", config_path, "experiment config file")->required();
        sub->add_option("--out", out_dir, "output directory (default: current)");
        sub->add_option("--seed", seed_override, "override the config seed")
            ->each([&](const std::string&) { seed_given = true; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;
    }

    slimfl_config* raw = nullptr;
    slimfl_status st = slimfl_config_load(config_path.c_str(), &raw);
    if (st != SLIMFL_OK) return fail(st);
    ConfigPtr cfg(raw);

    if (seed_given) {
        st = slimfl_config_set(cfg.get(), "seed", std::to_string(seed_override).c_str());
        if (st != SLIMFL_OK) return fail(st);
    }

    const std::string subcommand = app.get_subcommands().front()->get_name();
    st = slimfl_execute(cfg.get(), subcommand.c_str(), out_dir.c_str());
    if (st != SLIMFL_OK) return fail(st);
    return 0;
}
