#include <iostream>

#include <CLI11.hpp>

#include "kc/cli/run.hpp"

int main(int argc, char** argv) {
    using namespace kc::cli;
    CLI::App app{"Boundary control toolkit for two Schroedinger equations with Kirchhoff coupling"};
    app.set_help_flag("-h,--help");
    RunOptions opt;
    std::string out;
    std::uint64_t seed = 0;
    app.add_option("command", opt.command, "simulate | adjoint | carleman | hum | stabilize | trace-check | duality-check")
        ->required();
    app.add_option("--config", opt.config_path, "JSON run configuration")->required();
    auto* out_opt = app.add_option("--out", out, "output directory (overrides output_dir)");
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed (overrides seed)");
    app.add_flag("--force-inadmissible", opt.force_inadmissible, "run carleman/hum/stabilize with kappa <= 3");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << error_json(kConfigInvalid, "usage", e.what()).dump() << '\n';
        return kConfigInvalid;
    }
    if (*out_opt) opt.out_dir = out;
    if (*seed_opt) opt.seed = seed;
    return run(opt, std::cout, std::cerr);
}
