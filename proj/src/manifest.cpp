#include <filesystem>
#include <fstream>

#include "kc/cli/run.hpp"
#include "kc/parallel.hpp"

#ifndef KC_VERSION
#define KC_VERSION "0.0.0"
#endif

namespace kc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

json error_json(int code, const std::string& kind, const std::string& message) {
    return {{"error", {{"exit_code", code}, {"kind", kind}, {"message", message}}}};
}

json RunManifest::to_json() const {
    json files = json::array(), missing = json::array();
    for (const auto& p : outputs_) (fs::exists(p) ? files : missing).push_back(p);
    json j = {
        {"command", command},
        {"status", status},
        {"version", KC_VERSION},
        {"workers", worker_count()},
        {"config", config},
        {"conventions", conventions},
        {"timings_s", timings},
        {"outputs", files},
        {"missing_outputs", missing},
        {"results", results},
        {"warnings", warnings},
    };
    if (!error.is_null()) j["error"] = error;
    return j;
}

std::string RunManifest::write(const std::string& dir) const {
    fs::create_directories(dir);
    const fs::path final_path = fs::path(dir) / "manifest.json";
    const fs::path tmp = fs::path(dir) / "manifest.json.tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << to_json().dump(2) << '\n';
    }
    fs::rename(tmp, final_path);
    return final_path.string();
}

}  // namespace kc::cli
