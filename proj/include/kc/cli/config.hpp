#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "kc/params.hpp"
#include "kc/stabilization.hpp"

namespace kc::cli {

struct InitialSpec {
    std::string kind = "modes";  // modes | zero | file
    int modes = 5;
    std::string path;
};

struct SimulateSpec {
    std::string control = "zero";  // zero | sine
    double amplitude = 1;
    int snapshot_stride = 0;
};

struct CarlemanSpec {
    std::vector<double> lambdas{1.1, 1.5, 2.0};
    std::vector<double> s_values{0.5, 1, 2, 4, 8};
    int seeds = 20;
    double delta = 0;  // 0 -> T/50, materialized on load
    double rel_tol = 1e-9;
};

struct HumSpec {
    double tol = 1e-8;
    int max_iter = 500;
};

struct StabilizeSpec {
    std::vector<double> omegas{0.25, 0.5, 1.0};
    double dt = 1e-3;
    double horizon = 8;  // closed-loop run length
    double t_obs = 1;
    double tail_tol = 1e-8;
    double tail_check_tol = 1e-6;
    double filter_tol = 1e-3;
    std::string pairing = "L2";
    double fit_start = -1;  // negative -> horizon/4
    double fit_end = -1;    // negative -> horizon
};

struct TraceSpec {
    std::vector<double> multiplier{1, -3, 2};
};

struct DualitySpec {
    int samples = 10;
};

struct RunConfig {
    PhysicalParams<double> params;
    int N = 100;
    double T = 1;
    int M = 800;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    InitialSpec initial;
    SimulateSpec simulate;
    CarlemanSpec carleman;
    HumSpec hum;
    StabilizeSpec stabilize;
    TraceSpec trace;
    DualitySpec duality;

    StabOptions<double> stab_options(double omega) const;
};

// Strict parse: unknown keys and type mismatches throw ValidationError naming the key.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

// Echo with every default materialized; kappa is reported as derived.
nlohmann::json to_json(const RunConfig& c);

}  // namespace kc::cli
