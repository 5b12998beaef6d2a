#include "kc/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace kc::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ValidationError(where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ValidationError("unknown key '" + where + it.key() + "'");
}

template <class T>
void read(const json& j, const std::string& key, const std::string& where, T& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    try {
        if constexpr (std::is_same_v<T, int>) {
            if (!v.is_number_integer()) throw ValidationError("");
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) throw ValidationError("");
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw ValidationError("");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ValidationError("");
        } else {
            if (!v.is_array()) throw ValidationError("");
            for (const auto& e : v)
                if (!e.is_number()) throw ValidationError("");
        }
        out = v.get<T>();
    } catch (const std::exception&) {
        throw ValidationError("key '" + where + key + "' has the wrong type");
    }
}

void positive(double v, const std::string& name) {
    if (!(v > 0) || !std::isfinite(v)) throw ValidationError(name + " must be positive");
}

}  // namespace

StabOptions<double> RunConfig::stab_options(double omega) const {
    StabOptions<double> o;
    o.omega = omega;
    o.dt = stabilize.dt;
    o.t_obs = stabilize.t_obs;
    o.tail_tol = stabilize.tail_tol;
    o.tail_check_tol = stabilize.tail_check_tol;
    o.filter_tol = stabilize.filter_tol;
    o.pairing = stabilize.pairing == "H" ? Pairing::H : Pairing::L2;
    return o;
}

RunConfig parse_config(const json& j) {
    RunConfig c;
    reject_unknown(j, "", {"params", "N", "T", "M", "seed", "output_dir", "initial", "simulate", "carleman", "hum",
                           "stabilize", "trace", "duality"});
    if (j.contains("params")) {
        const json& p = j.at("params");
        reject_unknown(p, "params.", {"gamma1", "gamma2", "alpha1", "alpha2", "alpha", "sigma", "kappa"});
        read(p, "gamma1", "params.", c.params.gamma1);
        read(p, "gamma2", "params.", c.params.gamma2);
        read(p, "alpha1", "params.", c.params.alpha1);
        read(p, "alpha2", "params.", c.params.alpha2);
        read(p, "alpha", "params.", c.params.alpha);
        read(p, "sigma", "params.", c.params.sigma);
        c.params.validate();
        if (p.contains("kappa"))
            throw ValidationError("kappa is derived-only (sigma*gamma1/gamma2 = " + std::to_string(c.params.kappa()) +
                                  "); remove it from the config");
    }
    read(j, "N", "", c.N);
    read(j, "T", "", c.T);
    read(j, "M", "", c.M);
    read(j, "seed", "", c.seed);
    read(j, "output_dir", "", c.output_dir);
    if (c.N < 4) throw ValidationError("N must be at least 4");
    positive(c.T, "T");
    if (c.M < 4) throw ValidationError("M must be at least 4");

    if (j.contains("initial")) {
        const json& b = j.at("initial");
        reject_unknown(b, "initial.", {"kind", "modes", "path"});
        read(b, "kind", "initial.", c.initial.kind);
        read(b, "modes", "initial.", c.initial.modes);
        read(b, "path", "initial.", c.initial.path);
    }
    if (c.initial.kind != "modes" && c.initial.kind != "zero" && c.initial.kind != "file")
        throw ValidationError("initial.kind must be one of modes, zero, file");
    if (c.initial.modes < 1) throw ValidationError("initial.modes must be positive");
    if (c.initial.kind == "file" && c.initial.path.empty()) throw ValidationError("initial.path is required for kind file");

    if (j.contains("simulate")) {
        const json& b = j.at("simulate");
        reject_unknown(b, "simulate.", {"control", "amplitude", "snapshot_stride"});
        read(b, "control", "simulate.", c.simulate.control);
        read(b, "amplitude", "simulate.", c.simulate.amplitude);
        read(b, "snapshot_stride", "simulate.", c.simulate.snapshot_stride);
    }
    if (c.simulate.control != "zero" && c.simulate.control != "sine")
        throw ValidationError("simulate.control must be zero or sine");
    if (c.simulate.snapshot_stride < 0) throw ValidationError("simulate.snapshot_stride must be non-negative");

    if (j.contains("carleman")) {
        const json& b = j.at("carleman");
        reject_unknown(b, "carleman.", {"lambdas", "s_values", "seeds", "delta", "rel_tol"});
        read(b, "lambdas", "carleman.", c.carleman.lambdas);
        read(b, "s_values", "carleman.", c.carleman.s_values);
        read(b, "seeds", "carleman.", c.carleman.seeds);
        read(b, "delta", "carleman.", c.carleman.delta);
        read(b, "rel_tol", "carleman.", c.carleman.rel_tol);
    }
    if (c.carleman.lambdas.empty() || c.carleman.s_values.empty())
        throw ValidationError("carleman.lambdas and carleman.s_values must be non-empty");
    for (double l : c.carleman.lambdas)
        if (!(l > 1)) throw ValidationError("carleman.lambdas entries must be > 1");
    for (double s : c.carleman.s_values) positive(s, "carleman.s_values entries");
    if (c.carleman.seeds < 1) throw ValidationError("carleman.seeds must be positive");
    if (c.carleman.delta == 0) c.carleman.delta = c.T / 50;
    if (!(c.carleman.delta > 0 && 2 * c.carleman.delta < c.T)) throw ValidationError("carleman.delta must lie in (0, T/2)");
    positive(c.carleman.rel_tol, "carleman.rel_tol");

    if (j.contains("hum")) {
        const json& b = j.at("hum");
        reject_unknown(b, "hum.", {"tol", "max_iter"});
        read(b, "tol", "hum.", c.hum.tol);
        read(b, "max_iter", "hum.", c.hum.max_iter);
    }
    positive(c.hum.tol, "hum.tol");
    if (c.hum.max_iter < 1) throw ValidationError("hum.max_iter must be positive");

    if (j.contains("stabilize")) {
        const json& b = j.at("stabilize");
        reject_unknown(b, "stabilize.", {"omegas", "dt", "horizon", "t_obs", "tail_tol", "tail_check_tol", "filter_tol",
                                         "pairing", "fit_start", "fit_end"});
        read(b, "omegas", "stabilize.", c.stabilize.omegas);
        read(b, "dt", "stabilize.", c.stabilize.dt);
        read(b, "horizon", "stabilize.", c.stabilize.horizon);
        read(b, "t_obs", "stabilize.", c.stabilize.t_obs);
        read(b, "tail_tol", "stabilize.", c.stabilize.tail_tol);
        read(b, "tail_check_tol", "stabilize.", c.stabilize.tail_check_tol);
        read(b, "filter_tol", "stabilize.", c.stabilize.filter_tol);
        read(b, "pairing", "stabilize.", c.stabilize.pairing);
        read(b, "fit_start", "stabilize.", c.stabilize.fit_start);
        read(b, "fit_end", "stabilize.", c.stabilize.fit_end);
    }
    auto& s = c.stabilize;
    if (s.omegas.empty()) throw ValidationError("stabilize.omegas must be non-empty");
    for (double w : s.omegas) positive(w, "stabilize.omegas entries");
    positive(s.dt, "stabilize.dt");
    positive(s.horizon, "stabilize.horizon");
    positive(s.t_obs, "stabilize.t_obs");
    if (!(s.tail_tol > 0 && s.tail_tol < 1)) throw ValidationError("stabilize.tail_tol must lie in (0, 1)");
    positive(s.tail_check_tol, "stabilize.tail_check_tol");
    if (!(s.filter_tol >= 0 && s.filter_tol < 1)) throw ValidationError("stabilize.filter_tol must lie in [0, 1)");
    if (s.pairing != "L2" && s.pairing != "H") throw ValidationError("stabilize.pairing must be L2 or H");
    if (s.fit_start < 0) s.fit_start = s.horizon / 4;
    if (s.fit_end < 0) s.fit_end = s.horizon;
    if (!(s.fit_start < s.fit_end && s.fit_end <= s.horizon))
        throw ValidationError("stabilize fit window must satisfy fit_start < fit_end <= horizon");

    if (j.contains("trace")) {
        const json& b = j.at("trace");
        reject_unknown(b, "trace.", {"multiplier"});
        read(b, "multiplier", "trace.", c.trace.multiplier);
    }
    if (c.trace.multiplier.empty()) throw ValidationError("trace.multiplier must be non-empty");

    if (j.contains("duality")) {
        const json& b = j.at("duality");
        reject_unknown(b, "duality.", {"samples"});
        read(b, "samples", "duality.", c.duality.samples);
    }
    if (c.duality.samples < 1) throw ValidationError("duality.samples must be positive");
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

json to_json(const RunConfig& c) {
    const auto& p = c.params;
    return {
        {"params",
         {{"gamma1", p.gamma1},
          {"gamma2", p.gamma2},
          {"alpha1", p.alpha1},
          {"alpha2", p.alpha2},
          {"alpha", p.alpha},
          {"sigma", p.sigma}}},
        {"derived", {{"kappa", p.kappa()}, {"admissible", p.admissible()}, {"nu1", p.nu1()}, {"nu2", p.nu2()},
                     {"theta1", p.theta1()}, {"theta2", p.theta2()}}},
        {"N", c.N},
        {"T", c.T},
        {"M", c.M},
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"initial", {{"kind", c.initial.kind}, {"modes", c.initial.modes}, {"path", c.initial.path}}},
        {"simulate",
         {{"control", c.simulate.control},
          {"amplitude", c.simulate.amplitude},
          {"snapshot_stride", c.simulate.snapshot_stride}}},
        {"carleman",
         {{"lambdas", c.carleman.lambdas},
          {"s_values", c.carleman.s_values},
          {"seeds", c.carleman.seeds},
          {"delta", c.carleman.delta},
          {"rel_tol", c.carleman.rel_tol}}},
        {"hum", {{"tol", c.hum.tol}, {"max_iter", c.hum.max_iter}}},
        {"stabilize",
         {{"omegas", c.stabilize.omegas},
          {"dt", c.stabilize.dt},
          {"horizon", c.stabilize.horizon},
          {"t_obs", c.stabilize.t_obs},
          {"tail_tol", c.stabilize.tail_tol},
          {"tail_check_tol", c.stabilize.tail_check_tol},
          {"filter_tol", c.stabilize.filter_tol},
          {"pairing", c.stabilize.pairing},
          {"fit_start", c.stabilize.fit_start},
          {"fit_end", c.stabilize.fit_end}}},
        {"trace", {{"multiplier", c.trace.multiplier}}},
        {"duality", {{"samples", c.duality.samples}}},
    };
}

}  // namespace kc::cli
