#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace kc::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kConfigInvalid = 2,
    kNumericalGuard = 3,
    kInadmissible = 4,
};

struct RunOptions {
    std::string command;
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    bool force_inadmissible = false;
};

const std::vector<std::string>& commands();

class RunManifest {
public:
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json conventions = nlohmann::json::object();
    nlohmann::json timings = nlohmann::json::object();
    nlohmann::json results = nlohmann::json::object();
    nlohmann::json warnings = nlohmann::json::array();
    nlohmann::json error = nullptr;
    std::string command;
    std::string status = "ok";

    void add_output(const std::string& path) { outputs_.push_back(path); }
    const std::vector<std::string>& outputs() const { return outputs_; }

    nlohmann::json to_json() const;
    // Writes manifest.json through a temporary file and rename; returns the path.
    std::string write(const std::string& dir) const;

private:
    std::vector<std::string> outputs_;
};

// Records wall-clock seconds for one stage into manifest.timings on destruction.
class StageTimer {
public:
    StageTimer(RunManifest& m, std::string name) : m_(m), name_(std::move(name)), t0_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        m_.timings[name_] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    RunManifest& m_;
    std::string name_;
    std::chrono::steady_clock::time_point t0_;
};

nlohmann::json error_json(int code, const std::string& kind, const std::string& message);

// Runs one command; diagnostics go to `log`, the error JSON to `err`.
int run(const RunOptions& opt, std::ostream& log, std::ostream& err);

}  // namespace kc::cli
