#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "kc/cli/config.hpp"
#include "kc/cli/run.hpp"
#include "kc/kc.hpp"

namespace kc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Inadmissible : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Context {
    RunConfig cfg;
    std::string out;
    std::mt19937_64 rng;
    RunManifest& man;
    std::ostream& log;

    std::string file(const std::string& name) const { return (fs::path(out) / name).string(); }
};

std::string tag(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

StatePair<double> initial_state(Context& c, const Grid<double>& g) {
    const auto& in = c.cfg.initial;
    if (in.kind == "zero") return StatePair<double>(g.n_cells, CVector<double>::Zero(g.dofs()));
    if (in.kind == "file") {
        auto s = read_state_csv<double>(in.path);
        if (s.n != g.n_cells) throw ValidationError("initial.path holds N = " + std::to_string(s.n) + ", config has N = " +
                                                    std::to_string(g.n_cells));
        return s;
    }
    return smooth_random_state(c.cfg.params, g, c.rng, in.modes);
}

json conservation_json(const ConservationReport<double>& r) {
    return {{"l2_drift", r.l2_drift}, {"h_drift", r.h_drift}, {"energy_drift", r.energy_drift}};
}

void cmd_simulate(Context& c) {
    const Grid<double> g(c.cfg.N);
    const TimeGrid<double> tg(c.cfg.T, c.cfg.M);
    const auto gen = assemble_generator(c.cfg.params, g);
    const auto u0 = initial_state(c, g);
    Trajectory<double> traj{tg, {}, {}, {}};
    {
        StageTimer t(c.man, "solve");
        if (c.cfg.simulate.control == "zero") {
            traj = solve_free(gen, u0, tg);
        } else {
            std::vector<Complex<double>> h(tg.n_steps + 1);
            for (int n = 0; n <= tg.n_steps; ++n)
                h[n] = c.cfg.simulate.amplitude * std::sin(std::numbers::pi * tg.t(n) / tg.horizon);
            traj = solve_forward(gen, u0, h, tg);
        }
    }
    StageTimer t(c.man, "write");
    write_trajectory_csv(c.file("trajectory.csv"), traj, g);
    c.man.add_output(c.file("trajectory.csv"));
    write_state_csv(c.file("final_state.csv"), traj.states.back(), g);
    c.man.add_output(c.file("final_state.csv"));
    for (const auto& p : write_snapshots(fs::path(c.out) / "snapshots", traj, g, c.cfg.simulate.snapshot_stride))
        c.man.add_output(p);
    c.man.results["initial_l2"] = l2_norm(traj.states.front(), g);
    c.man.results["final_l2"] = l2_norm(traj.states.back(), g);
    c.man.results["final_h"] = h_norm(traj.states.back(), g);
    if (!traj.controlled()) c.man.results["conservation"] = conservation_json(conservation_report(traj, g, &gen));
}

void cmd_adjoint(Context& c) {
    const Grid<double> g(c.cfg.N);
    const TimeGrid<double> tg(c.cfg.T, c.cfg.M);
    const auto gen = assemble_generator(c.cfg.params, g);
    const auto zeta = initial_state(c, g);
    Trajectory<double> traj{tg, {}, {}, {}};
    {
        StageTimer t(c.man, "solve");
        traj = solve_adjoint(gen, zeta, tg);
    }
    write_state_csv(c.file("final_data.csv"), zeta, g);
    c.man.add_output(c.file("final_data.csv"));
    write_trajectory_csv(c.file("adjoint_trajectory.csv"), traj, g);
    c.man.add_output(c.file("adjoint_trajectory.csv"));
    const double hz = h_norm(zeta, g);
    if (hz > 0) {
        std::vector<double> sq;
        double sup = 0;
        for (const auto& z : traj.left_trace_v) sq.push_back(std::norm(z));
        for (const auto& s : traj.states) sup = std::max(sup, h_norm(s, g) / hz);
        c.man.results["admissibility_ratio"] = trapezoid(sq, tg.dt) / (hz * hz);
        c.man.results["sup_h_over_data_h"] = sup;
    }
    c.man.results["conservation"] = conservation_json(conservation_report(traj, g, &gen));
}

void cmd_carleman(Context& c) {
    const auto& cs = c.cfg.carleman;
    std::vector<std::uint64_t> seeds;
    for (int k = 0; k < cs.seeds; ++k) seeds.push_back(c.rng());
    CarlemanQuadrature<double> q;
    q.rel_tol = cs.rel_tol;
    SweepReport<double> rep;
    {
        StageTimer t(c.man, "sweep");
        rep = carleman_sweep(c.cfg.params, c.cfg.T, cs.lambdas, cs.s_values, seeds, q, cs.delta);
    }
    write_sweep_csv(c.file("carleman_sweep.csv"), rep);
    c.man.add_output(c.file("carleman_sweep.csv"));
    json table = json::array();
    for (const auto& [key, m] : rep.max_ratio) table.push_back({{"lambda", key.first}, {"s", key.second}, {"max_ratio", m}});
    json nm = json::array();
    for (const auto& [l, s] : rep.non_monotone) nm.push_back({{"lambda", l}, {"s", s}});
    const json summary = {{"admissible", rep.admissible},
                          {"thresholds_found", rep.thresholds_found},
                          {"lambda0", rep.lambda0},
                          {"mu0", rep.mu0},
                          {"s0", rep.s0},
                          {"c_emp", rep.c_emp},
                          {"max_ratio", table},
                          {"non_monotone", nm},
                          {"warnings", rep.warnings},
                          {"seeds", seeds}};
    write_json(c.file("carleman_summary.json"), summary);
    c.man.add_output(c.file("carleman_summary.json"));
    for (const auto& w : rep.warnings) c.man.warnings.push_back(w);
    c.man.results["c_emp"] = rep.c_emp;
    c.man.results["lambda0"] = rep.lambda0;
    c.man.results["mu0"] = rep.mu0;
    c.man.results["rows"] = rep.rows.size();
}

void cmd_hum(Context& c) {
    const Grid<double> g(c.cfg.N);
    const TimeGrid<double> tg(c.cfg.T, c.cfg.M);
    const auto gen = assemble_generator(c.cfg.params, g);
    const auto u0 = initial_state(c, g);
    HumOperator<double> op(gen, tg);
    {
        StageTimer t(c.man, "calibrate");
        calibrate_convention(op, c.rng);
    }
    c.man.conventions["duality"] = op.convention().describe();
    HumResult<double> res;
    {
        StageTimer t(c.man, "cg");
        res = hum_control(op, u0, c.cfg.hum.tol, c.cfg.hum.max_iter);
    }
    const auto& r = res.report;
    if (!r.converged)
        c.man.warnings.push_back("CG stopped at " + std::to_string(r.iterations) + " iterations with relative residual " +
                                 std::to_string(r.cg_residual));
    write_control_csv(c.file("control.csv"), res.control, tg);
    c.man.add_output(c.file("control.csv"));
    const json report = {{"iterations", r.iterations},
                         {"cg_residual", r.cg_residual},
                         {"control_l2", r.control_l2},
                         {"final_ratio", r.final_ratio},
                         {"observability_rayleigh", std::isfinite(r.observability_rayleigh) ? json(r.observability_rayleigh)
                                                                                             : json(nullptr)},
                         {"converged", r.converged},
                         {"residual_history", r.residual_history}};
    write_json(c.file("hum_report.json"), report);
    c.man.add_output(c.file("hum_report.json"));
    c.man.results["final_ratio"] = r.final_ratio;
    c.man.results["iterations"] = r.iterations;
    c.man.results["cg_residual"] = r.cg_residual;
    c.man.results["control_l2"] = r.control_l2;
}

void cmd_stabilize(Context& c) {
    const auto& sc = c.cfg.stabilize;
    const Grid<double> g(c.cfg.N);
    const auto gen = assemble_generator(c.cfg.params, g);
    const auto u0 = initial_state(c, g);
    const int steps = static_cast<int>(std::lround(sc.horizon / sc.dt));
    const TimeGrid<double> tg(steps * sc.dt, steps);
    c.man.conventions["pairing"] = sc.pairing;
    c.man.conventions["feedback"] = "h_n = F(U_n) held over [t_n, t_n+1]; F = -trace(R Lambda^-1 G z), no conjugation";
    json per = json::array();
    std::vector<double> rates;
    for (double w : sc.omegas) {
        const std::string k = tag(w);
        std::unique_ptr<StabGramian<double>> lam;
        {
            StageTimer t(c.man, "gramian_omega_" + k);
            lam = std::make_unique<StabGramian<double>>(gen, c.cfg.stab_options(w));
        }
        Trajectory<double> traj{tg, {}, {}, {}};
        {
            StageTimer t(c.man, "closed_loop_omega_" + k);
            traj = closed_loop_simulate(*lam, u0, tg);
        }
        std::vector<double> ts, hs;
        for (std::size_t n = 0; n < traj.states.size(); ++n) {
            ts.push_back(tg.t(static_cast<int>(n)));
            hs.push_back(h_norm(traj.states[n], g));
        }
        const auto fit = fit_decay_rate(ts, hs, sc.fit_start, sc.fit_end);
        rates.push_back(fit.rate);
        const json header = {{"omega", w},
                             {"horizon", lam->horizon()},
                             {"steps", lam->steps()},
                             {"dt", lam->dt()},
                             {"D", lam->size()},
                             {"N", g.n_cells},
                             {"params_hash", params_hash(c.cfg.params, g)},
                             {"pairing", to_string(lam->options().pairing)},
                             {"hermitian_defect", lam->hermitian_defect()},
                             {"tail_bound", lam->tail_bound()},
                             {"kept_modes", lam->kept_modes().cols()},
                             {"filtered_min_eigenvalue", lam->filtered_min_eigenvalue()},
                             {"matrix_csv", "gramian_omega_" + k + ".csv"}};
        write_json(c.file("gramian_omega_" + k + ".json"), header);
        c.man.add_output(c.file("gramian_omega_" + k + ".json"));
        write_gramian_csv(c.file("gramian_omega_" + k + ".csv"), *lam);
        c.man.add_output(c.file("gramian_omega_" + k + ".csv"));
        write_decay_csv(c.file("decay_omega_" + k + ".csv"), traj, g);
        c.man.add_output(c.file("decay_omega_" + k + ".csv"));
        per.push_back({{"omega", w},
                       {"rate", fit.rate},
                       {"target_rate", 2 * w},
                       {"prefactor", fit.prefactor},
                       {"fit_residual", fit.residual},
                       {"feedback_norm_h", lam->feedback_norm(Pairing::H)},
                       {"feedback_norm_l2", lam->feedback_norm(Pairing::L2)},
                       {"filtered_min_eigenvalue", lam->filtered_min_eigenvalue()}});
        c.log << "omega " << w << ": rate " << fit.rate << " (target " << 2 * w << ")\n";
    }
    bool monotone = true;
    for (std::size_t i = 1; i < rates.size(); ++i)
        if (sc.omegas[i] > sc.omegas[i - 1] && !(rates[i] > rates[i - 1])) monotone = false;
    c.man.results["per_omega"] = per;
    c.man.results["rates_monotone_in_omega"] = monotone;
    c.man.results["fit_window"] = {sc.fit_start, sc.fit_end};
}

void cmd_trace_check(Context& c) {
    const Grid<double> g(c.cfg.N);
    const TimeGrid<double> tg(c.cfg.T, c.cfg.M);
    const auto gen = assemble_generator(c.cfg.params, g);
    const auto zeta = initial_state(c, g);
    const Multiplier<double> m{c.cfg.trace.multiplier};
    if (!m.admissible()) c.man.warnings.push_back("multiplier does not satisfy m(1)=0, m(0)>0, m'(1)=1");
    TraceIdentity<double> id;
    {
        StageTimer t(c.man, "identity");
        const auto traj = solve_adjoint(gen, zeta, tg);
        id = trace_identity_terms(traj, m, c.cfg.params);
        c.man.results["conservation"] = conservation_json(conservation_report(traj, g, &gen));
    }
    write_trace_terms_csv(c.file("trace_terms.csv"), id);
    c.man.add_output(c.file("trace_terms.csv"));
    c.man.results["lhs"] = id.lhs;
    c.man.results["rhs"] = id.rhs();
    c.man.results["residual"] = id.residual();
    c.man.results["residual_printed_coefficients"] = id.residual(true);
}

void cmd_duality_check(Context& c) {
    const Grid<double> g(c.cfg.N);
    const TimeGrid<double> tg(c.cfg.T, c.cfg.M);
    const auto gen = assemble_generator(c.cfg.params, g);
    HumOperator<double> op(gen, tg);
    {
        StageTimer t(c.man, "calibrate");
        calibrate_convention(op, c.rng);
    }
    c.man.conventions["duality"] = op.convention().describe();
    auto flipped = op.convention();
    flipped.conjugate_trace = !flipped.conjugate_trace;
    HumOperator<double> contrast(gen, tg);
    contrast.set_convention(flipped);

    StageTimer t(c.man, "samples");
    std::ofstream out(c.file("duality.csv"));
    if (!out) throw std::runtime_error("cannot write " + c.file("duality.csv"));
    out << std::setprecision(17) << "sample,residual,residual_smooth_fd,residual_flipped\n";
    double worst = 0, worst_fd = 0, best_flipped = std::numeric_limits<double>::infinity();
    for (int k = 0; k < c.cfg.duality.samples; ++k) {
        const auto h = random_coefficients<double>(c.rng, tg.n_steps + 1);
        const StatePair<double> zeta(g.n_cells, random_dofs<double>(g.dofs(), c.rng));
        const CVector<double> u0 = random_dofs<double>(g.dofs(), c.rng);
        const double r = duality_check(op, h, zeta, u0).residual;
        const double rf = duality_check(contrast, h, zeta, u0).residual;
        // smooth data for the continuum-consistency residual
        const auto zs = smooth_random_state(c.cfg.params, g, c.rng, 5);
        const auto us = smooth_random_state(c.cfg.params, g, c.rng, 5);
        const auto a = random_coefficients<double>(c.rng, 3);
        std::vector<Complex<double>> hs(tg.n_steps + 1);
        for (int n = 0; n <= tg.n_steps; ++n)
            for (int j = 0; j < 3; ++j) hs[n] += a[j] * std::sin((j + 1) * std::numbers::pi * tg.t(n) / tg.horizon);
        const double rs = duality_residual_fd(op, hs, zs, us.dofs);
        out << k << ',' << r << ',' << rs << ',' << rf << '\n';
        worst = std::max(worst, r);
        worst_fd = std::max(worst_fd, rs);
        best_flipped = std::min(best_flipped, rf);
    }
    out.close();
    c.man.add_output(c.file("duality.csv"));
    c.man.results["max_residual"] = worst;
    c.man.results["max_residual_smooth_fd"] = worst_fd;
    c.man.results["min_residual_flipped_convention"] = best_flipped;
}

bool needs_gate(const std::string& cmd) { return cmd == "carleman" || cmd == "hum" || cmd == "stabilize"; }

}  // namespace

const std::vector<std::string>& commands() {
    static const std::vector<std::string> c{"simulate", "adjoint", "carleman", "hum", "stabilize", "trace-check",
                                            "duality-check"};
    return c;
}

int run(const RunOptions& opt, std::ostream& log, std::ostream& err) {
    RunManifest man;
    man.command = opt.command;
    RunConfig cfg;
    try {
        if (std::find(commands().begin(), commands().end(), opt.command) == commands().end())
            throw ValidationError("unknown command '" + opt.command + "'");
        cfg = load_config(opt.config_path);
        if (opt.seed) cfg.seed = *opt.seed;
        if (opt.out_dir) cfg.output_dir = *opt.out_dir;
    } catch (const std::exception& e) {
        err << error_json(kConfigInvalid, "config_invalid", e.what()).dump() << '\n';
        return kConfigInvalid;
    }
    man.config = to_json(cfg);
    man.config["force_inadmissible"] = opt.force_inadmissible;
    Context ctx{cfg, cfg.output_dir, std::mt19937_64(cfg.seed), man, log};
    int code = kOk;
    try {
        fs::create_directories(ctx.out);
        const auto rep = validate_sigma(cfg.params);
        if (needs_gate(opt.command) && !rep.admissible) {
            const std::string msg = "kappa = " + std::to_string(rep.kappa) + " <= 3 is outside the admissible set";
            if (!opt.force_inadmissible) throw Inadmissible(msg + "; pass --force-inadmissible for a contrast run");
            man.warnings.push_back(msg + " (forced contrast run)");
        }
        StageTimer total(man, "total");
        if (opt.command == "simulate") cmd_simulate(ctx);
        else if (opt.command == "adjoint") cmd_adjoint(ctx);
        else if (opt.command == "carleman") cmd_carleman(ctx);
        else if (opt.command == "hum") cmd_hum(ctx);
        else if (opt.command == "stabilize") cmd_stabilize(ctx);
        else if (opt.command == "trace-check") cmd_trace_check(ctx);
        else cmd_duality_check(ctx);
    } catch (const Inadmissible& e) {
        code = kInadmissible;
        man.status = "refused";
        man.error = error_json(code, "inadmissible_sigma", e.what())["error"];
    } catch (const ValidationError& e) {
        code = kConfigInvalid;
        man.status = "config_invalid";
        man.error = error_json(code, "config_invalid", e.what())["error"];
    } catch (const NumericalGuard& e) {
        code = kNumericalGuard;
        man.status = "numerical_guard";
        man.error = error_json(code, "numerical_guard", e.what())["error"];
    } catch (const std::exception& e) {
        code = kFailure;
        man.status = "failed";
        man.error = error_json(code, "failure", e.what())["error"];
    }
    try {
        const auto path = man.write(ctx.out);
        log << "manifest: " << path << '\n';
    } catch (const std::exception& e) {
        err << error_json(kFailure, "manifest", e.what()).dump() << '\n';
        if (code == kOk) code = kFailure;
    }
    if (code != kOk) err << json{{"error", man.error}}.dump() << '\n';
    return code;
}

}  // namespace kc::cli
