#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "kc/cli/config.hpp"
#include "kc/cli/run.hpp"

using namespace kc;
using namespace kc::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("kc_cli_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write_config(const fs::path& dir, const json& j) {
    const auto p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

struct Outcome {
    int code;
    std::string log, err;
    json manifest;
};

Outcome run_cmd(const std::string& command, const fs::path& dir, const json& cfg, bool force = false,
                std::optional<std::uint64_t> seed = {}) {
    RunOptions opt;
    opt.command = command;
    opt.config_path = write_config(dir, cfg);
    opt.out_dir = (dir / "out").string();
    opt.seed = seed;
    opt.force_inadmissible = force;
    std::ostringstream log, err;
    Outcome o{run(opt, log, err), log.str(), err.str(), nullptr};
    if (fs::exists(dir / "out" / "manifest.json")) o.manifest = read_json(dir / "out" / "manifest.json");
    return o;
}

std::string config_error(const json& j) {
    try {
        parse_config(j);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

const json kSmall = {{"N", 12}, {"M", 40}};

}  // namespace

TEST_CASE("config defaults and echo") {
    const auto c = parse_config(json::object());
    CHECK(c.N == 100);
    CHECK(c.M == 800);
    CHECK(c.T == 1.0);
    CHECK(c.carleman.delta == doctest::Approx(1.0 / 50));
    CHECK(c.stabilize.fit_start == doctest::Approx(c.stabilize.horizon / 4));
    CHECK(c.stabilize.fit_end == c.stabilize.horizon);
    const json e = to_json(c);
    CHECK(e["derived"]["kappa"] == 4.0);
    CHECK(e["derived"]["admissible"] == true);
    CHECK(e["params"]["sigma"] == 4.0);
    CHECK(e["stabilize"]["pairing"] == "L2");
    // the echo parses back to the same configuration
    json back = e;
    back.erase("derived");
    CHECK(to_json(parse_config(back)) == e);
}

TEST_CASE("config rejection messages") {
    CHECK(config_error({{"params", {{"sigma", -1}}}}) == "sigma must be positive");
    CHECK(config_error({{"params", {{"gamma2", 0}}}}) == "gamma2 must be positive");
    CHECK(config_error({{"params", {{"kappa", 4}}}}).find("kappa") != std::string::npos);
    CHECK(config_error({{"foo", 1}}) == "unknown key 'foo'");
    CHECK(config_error({{"hum", {{"bar", 1}}}}) == "unknown key 'hum.bar'");
    CHECK(config_error({{"N", "x"}}) == "key 'N' has the wrong type");
    CHECK(config_error({{"N", 3}}) == "N must be at least 4");
    CHECK(config_error({{"stabilize", {{"pairing", "W"}}}}) == "stabilize.pairing must be L2 or H");
    CHECK(config_error({{"carleman", {{"lambdas", json::array({1.0})}}}}) == "carleman.lambdas entries must be > 1");
    CHECK_THROWS_AS(load_config("/nonexistent/kc.json"), ValidationError);
}

TEST_CASE("invalid config exits with code 2") {
    const auto dir = scratch("invalid");
    const auto o = run_cmd("simulate", dir, {{"params", {{"sigma", -1}}}});
    CHECK(o.code == kConfigInvalid);
    const json e = json::parse(o.err);
    CHECK(e["error"]["exit_code"] == 2);
    CHECK(e["error"]["message"] == "sigma must be positive");
    CHECK(run_cmd("bogus", dir, kSmall).code == kConfigInvalid);
}

TEST_CASE("simulate from zero data writes a zero trajectory") {
    const auto dir = scratch("zero");
    json cfg = kSmall;
    cfg["initial"] = {{"kind", "zero"}};
    cfg["simulate"] = {{"snapshot_stride", 10}};
    const auto o = run_cmd("simulate", dir, cfg);
    REQUIRE(o.code == kOk);
    CHECK(o.manifest["status"] == "ok");
    CHECK(o.manifest["missing_outputs"].empty());
    CHECK(o.manifest["outputs"].size() == 2u + 5u);
    for (const auto& p : o.manifest["outputs"]) CHECK(fs::exists(p.get<std::string>()));
    std::ifstream in(dir / "out" / "trajectory.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "t,l2_norm,h_norm,re_trace,im_trace,re_h,im_h");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        CHECK(line.substr(line.find(',')) == ",0,0,0,0,0,0");
    }
    CHECK(rows == 41);
    CHECK(o.manifest["results"]["final_l2"] == 0.0);
    CHECK(o.manifest["timings_s"].contains("total"));
}

TEST_CASE("runs are deterministic in the seed") {
    const auto a = scratch("seed_a"), b = scratch("seed_b"), c = scratch("seed_c");
    REQUIRE(run_cmd("simulate", a, kSmall, false, 7).code == kOk);
    REQUIRE(run_cmd("simulate", b, kSmall, false, 7).code == kOk);
    REQUIRE(run_cmd("simulate", c, kSmall, false, 8).code == kOk);
    CHECK(slurp(a / "out" / "final_state.csv") == slurp(b / "out" / "final_state.csv"));
    CHECK(slurp(a / "out" / "final_state.csv") != slurp(c / "out" / "final_state.csv"));
    CHECK(read_json(a / "out" / "manifest.json")["config"]["seed"] == 7);
}

TEST_CASE("inadmissible parameters are refused unless forced") {
    const auto dir = scratch("gate");
    json cfg = kSmall;
    cfg["params"] = {{"sigma", 2}};
    cfg["carleman"] = {{"lambdas", {1.5}}, {"s_values", {1.0}}, {"seeds", 2}};
    const auto refused = run_cmd("carleman", dir, cfg);
    CHECK(refused.code == kInadmissible);
    CHECK(refused.manifest["status"] == "refused");
    CHECK(refused.manifest["error"]["kind"] == "inadmissible_sigma");
    CHECK_FALSE(fs::exists(dir / "out" / "carleman_sweep.csv"));

    const auto forced = run_cmd("carleman", dir, cfg, true);
    CHECK(forced.code == kOk);
    CHECK(forced.manifest["warnings"].size() >= 1u);
    CHECK(fs::exists(dir / "out" / "carleman_sweep.csv"));

    // commands outside the gate still run
    CHECK(run_cmd("simulate", dir, cfg).code == kOk);
}

TEST_CASE("numerical guard exits with code 3 and keeps the manifest") {
    const auto dir = scratch("guard");
    json cfg = kSmall;
    cfg["stabilize"] = {{"omegas", {1.0}}, {"tail_check_tol", 1e-30}};
    const auto o = run_cmd("stabilize", dir, cfg);
    CHECK(o.code == kNumericalGuard);
    CHECK(o.manifest["status"] == "numerical_guard");
    CHECK(o.manifest["error"]["message"].get<std::string>().find("T_inf") != std::string::npos);
    CHECK(json::parse(o.err)["error"]["exit_code"] == 3);
}

TEST_CASE("analysis commands on a small grid") {
    const auto dir = scratch("analysis");
    json cfg = {{"N", 20}, {"M", 100}};
    cfg["stabilize"] = {{"omegas", {0.5, 1.0}}, {"horizon", 4.0}};
    cfg["duality"] = {{"samples", 3}};

    auto o = run_cmd("adjoint", dir, cfg);
    CHECK(o.code == kOk);
    CHECK(o.manifest["results"]["admissibility_ratio"].get<double>() > 0);

    o = run_cmd("hum", dir, cfg);
    CHECK(o.code == kOk);
    CHECK(o.manifest["results"]["final_ratio"].get<double>() <= 1e-3);
    CHECK(o.manifest["conventions"].size() >= 1u);

    o = run_cmd("duality-check", dir, cfg);
    CHECK(o.code == kOk);
    CHECK(o.manifest["results"]["max_residual"].get<double>() <= 1e-6);
    CHECK(o.manifest["results"]["min_residual_flipped_convention"].get<double>() > 0.1);

    o = run_cmd("trace-check", dir, cfg);
    CHECK(o.code == kOk);
    CHECK(o.manifest["results"]["residual"].get<double>() < o.manifest["results"]["residual_printed_coefficients"].get<double>());

    o = run_cmd("stabilize", dir, cfg);
    CHECK(o.code == kOk);
    CHECK(o.manifest["results"]["per_omega"].size() == 2u);
    CHECK(o.manifest["missing_outputs"].empty());
    CHECK(fs::exists(dir / "out" / "gramian_omega_0.5.json"));
}

#ifdef KC_CLI_PATH
TEST_CASE("command line executable") {
    const auto dir = scratch("exe");
    const std::string cfg = write_config(dir, kSmall);
    const std::string exe = KC_CLI_PATH;
    auto sh = [&](const std::string& args) {
        const int st = std::system((exe + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
                                    (dir / "stderr.txt").string()).c_str());
        return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    };
    CHECK(sh("trace-check --config " + cfg + " --out " + (dir / "run").string()) == 0);
    const json m = read_json(dir / "run" / "manifest.json");
    CHECK(m["command"] == "trace-check");
    CHECK(fs::exists(dir / "run" / "trace_terms.csv"));

    CHECK(sh("simulate") == 2);
    CHECK(json::parse(slurp(dir / "stderr.txt"))["error"]["kind"] == "usage");
    CHECK(sh("nonsense --config " + cfg) == 2);
    CHECK(sh("simulate --config /nonexistent.json") == 2);
    CHECK(sh("--help") == 0);
}
#endif
