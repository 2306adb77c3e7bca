#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "chemodose/config.hpp"
#include "chemodose/io.hpp"
#include "chemodose/optimizer.hpp"
#include "chemodose/parallel.hpp"
#include "chemodose/verification.hpp"

namespace chemodose {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitSolver = 3 };

/// Tolerances of the `verify` and `grad-check` suites.
struct SuiteTolerances {
    double sigma_bound = 1e-8;
    double nutrient_mass = 1e-9;
    double phase_mass = 1e-8;
    double energy_increment = 1e-10;
    double taylor_slope = 0.2;
    double duality = 1e-2;
    double duality_ratio = 1.7;
    double gradient_best = 1e-3;
    double gradient_slope = 0.3;
    double dtau_factor = 5.0;  ///< times dt
    double dependence_spread = 10.0;
    double dependence_scaling = 2.0;
    double order_dt = 0.3;
    double order_h = 0.4;
};

inline const std::vector<double>& taylor_eps_sweep() {
    static const std::vector<double> v{1e-1, 5e-2, 2.5e-2, 1.25e-2};
    return v;
}

inline const std::vector<double>& gradient_eps_sweep() {
    static const std::vector<double> v{1e-1, 5e-2, 2.5e-2, 1.25e-2};
    return v;
}

namespace detail {

inline Manifest base_manifest(const RunConfig& c, const std::string& sub) {
    Manifest m;
    m.set("version", kVersion)
        .set("subcommand", sub)
        .set("config_hash", config_hash(c))
        .set("seed", std::to_string(c.seed))
        .set("dim", c.dim)
        .set("nx", c.nx);
    if (c.dim == 2) m.set("ny", c.ny);
    m.set("lx", c.lx);
    if (c.dim == 2) m.set("ly", c.ly);
    m.set("t_end", c.t_end).set("dt", c.dt).set("n_steps", c.timegrid().n_steps());
    return m;
}

/// Seed of the i-th random object drawn for check `salt`.
inline unsigned long long sub_seed(unsigned long long seed, unsigned long long salt, unsigned long long i) {
    std::seed_seq seq{static_cast<unsigned>(seed), static_cast<unsigned>(seed >> 32), static_cast<unsigned>(salt),
                      static_cast<unsigned>(i)};
    std::mt19937_64 rng(seq);
    return rng();
}

inline Control random_dose(const TimeGrid& tg, const Grid& g, unsigned long long seed) {
    return project_admissible(smooth_random_control(tg, g, seed, 0.5, 0.9));
}

inline ScalarField random_phase(const Grid& g, unsigned long long seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    ScalarField f(g);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = dist(rng);
    return f;
}

inline ScalarField random_unit_field(const Grid& g, unsigned long long seed) {
    const auto f = smooth_random_function(g, 1.0, seed, 0.5, 0.9);
    return ScalarField::from_function(g, [&](double x, double y) { return std::clamp(f(x, y, 0.0), 0.0, 1.0); });
}

inline Grid scaled_grid(const Grid& g, double factor) {
    const int nx = static_cast<int>(std::lround(g.nx() * factor));
    const int ny = static_cast<int>(std::lround(g.ny() * factor));
    return g.dim() == 1 ? Grid::line(nx, g.lx()) : Grid::box(nx, ny, g.lx(), g.ly());
}

}  // namespace detail

/// Solver-level verification suite on the configured problem. `sabotage`
/// is one of "", "duality", "gradient", "sigma-bounds".
inline VerificationReport verification_suite(const RunConfig& cfg, const std::string& sabotage = "",
                                             const SuiteTolerances& tol = {}) {
    const ProblemData data = build_problem(cfg);
    const TimeGrid tg = cfg.timegrid();
    const Grid g = data.grid();
    const ObjectiveSpec obj = build_objective(cfg, data, tg);
    const int threads = thread_cap();
    const int N = tg.n_steps();
    VerificationReport rep;

    // Nutrient bounds and mass ledgers over random admissible runs.
    {
        const int runs = cfg.verify_random_runs;
        std::vector<double> bound(static_cast<std::size_t>(runs)), nmass(bound.size()), pmass(bound.size());
        parallel_for(runs, threads, [&](int i) {
            ProblemData d = data;
            const auto s = static_cast<unsigned long long>(i);
            if (i > 0) {
                d.phi0 = detail::random_phase(g, detail::sub_seed(cfg.seed, 1, s));
                d.sigma0 = detail::random_unit_field(g, detail::sub_seed(cfg.seed, 2, s));
                d.sigmaS = detail::random_unit_field(g, detail::sub_seed(cfg.seed, 3, s));
            }
            if (sabotage == "sigma-bounds") d.sigma0 = ScalarField(g, 1.5);
            const Control u = detail::random_dose(tg, g, detail::sub_seed(cfg.seed, 4, s));
            const StateTrajectory tr = solve_state(d, u, tg);
            const auto k = static_cast<std::size_t>(i);
            bound[k] = check_sigma_bounds(tr).measured;
            nmass[k] = check_mass_identity(tr, d, u).measured;
            pmass[k] = check_phase_mass_ledger(tr, d, u).measured;
        });
        const std::string note = std::to_string(runs) + " random admissible runs";
        rep.add_upper("sigma_bounds", *std::max_element(bound.begin(), bound.end()), tol.sigma_bound,
                      note + "; max distance of sigma from [0 1]");
        rep.add_upper("nutrient_mass_identity", *std::max_element(nmass.begin(), nmass.end()), tol.nutrient_mass,
                      note + "; max per-step residual");
        rep.add_upper("phase_mass_ledger", *std::max_element(pmass.begin(), pmass.end()), tol.phase_mass,
                      note + "; max telescoped residual");
    }

    // Source-free energy dissipation over 500 steps.
    {
        ProblemData d = data;
        d.params.proliferation = 0.0;
        d.params.apoptosis = 0.0;
        d.params.alpha = 1.0;
        d.phi0 = detail::random_phase(g, detail::sub_seed(cfg.seed, 5, 0));
        const TimeGrid tge(500 * tg.dt(), 500);
        const StateTrajectory tr = solve_state(d, Control(tge, g, 0.0), tge);
        rep.add_upper("energy_dissipation", check_energy_dissipation(tr, d).measured, tol.energy_increment,
                      "source-free run from random phi0; max energy increment over 500 steps");
    }

    const Control u_mid = project_admissible(smooth_random_control(tg, g, detail::sub_seed(cfg.seed, 6, 0), 0.5, 0.3));

    // Taylor remainder slope.
    {
        double worst = 0.0;
        for (int i = 0; i < 3; ++i) {
            const Control w = smooth_random_control(tg, g, detail::sub_seed(cfg.seed, 7, static_cast<unsigned>(i)), 0.0, 1.0);
            const TaylorCheck t = check_taylor(data, u_mid, w, taylor_eps_sweep());
            worst = std::max(worst, std::isfinite(t.slope_theta) ? std::abs(t.slope_theta - 2.0) : 1e300);
        }
        rep.add_upper("taylor_slope", worst, tol.taylor_slope, "max |slope - 2| of the phase remainder; 3 directions");
    }

    // Adjoint duality at dt and dt/2 along a nonnegative direction; sign-changing
    // directions can make the pairing cancel and the relative mismatch meaningless.
    {
        const bool sab = sabotage == "duality";
        const auto fine_cfg = [&] {
            RunConfig f = cfg;
            f.dt = 0.5 * cfg.dt;
            return f;
        }();
        const TimeGrid tg2 = fine_cfg.timegrid();
        const auto fw = smooth_random_function(g, tg.t_end(), detail::sub_seed(cfg.seed, 8, 0), 0.5, 0.5);
        const auto fu = smooth_random_function(g, tg.t_end(), detail::sub_seed(cfg.seed, 6, 0), 0.5, 0.3);
        const auto clampu = [&](double x, double y, double t) { return std::clamp(fu(x, y, t), 0.0, 1.0); };
        const ObjectiveSpec obj2 = build_objective(fine_cfg, data, tg2);
        const DualityResult a =
            check_duality(data, Control::from_function(tg, g, clampu), Control::from_function(tg, g, fw), obj, N, sab);
        const DualityResult b = check_duality(data, Control::from_function(tg2, g, clampu),
                                              Control::from_function(tg2, g, fw), obj2, tg2.n_steps(), sab);
        rep.add_upper("duality_mismatch", a.mismatch, tol.duality, "relative mismatch at the configured dt");
        const double ratio = b.mismatch > 0 ? a.mismatch / b.mismatch : std::numeric_limits<double>::infinity();
        rep.add({"duality_refinement_ratio", ratio, tol.duality_ratio, std::isfinite(ratio) && ratio >= tol.duality_ratio,
                 "mismatch(dt) / mismatch(dt/2); lower bound"});
    }

    // Reduced gradient against central differences.
    {
        std::vector<Control> dirs;
        for (int i = 0; i < cfg.verify_directions; ++i)
            dirs.push_back(smooth_random_control(tg, g, detail::sub_seed(cfg.seed, 9, static_cast<unsigned>(i)), 0.0, 1.0));
        AdjointOptions ao;
        ao.sabotage_sign_flip = sabotage == "gradient";
        const GradientCheckResult gc = check_gradient_fd(data, u_mid, obj, N, dirs, gradient_eps_sweep(), ao);
        double worst_slope = 0.0;
        for (double s : gc.slope) worst_slope = std::max(worst_slope, std::isfinite(s) ? std::abs(s - 2.0) : 1e300);
        rep.add_upper("gradient_fd_best", gc.worst_best(), tol.gradient_best,
                      std::to_string(dirs.size()) + " directions; worst best relative error over the eps sweep");
        rep.add_upper("gradient_fd_slope", worst_slope, tol.gradient_slope, "max |Richardson slope - 2|");
    }

    // Tau derivative.
    {
        const StateTrajectory tr = solve_state(data, u_mid, tg);
        const DtauCheck dc = check_dtau_consistency(tr, u_mid, obj);
        rep.add_upper("dtau_consistency", dc.max_rel_error, tol.dtau_factor * tg.dt(),
                      "central node differences vs dtau_J; bound 5 dt");
        ObjectiveSpec pen = obj;
        pen.beta_Q = pen.beta_Omega = pen.beta_S = 0.0;
        double worst = 0.0;
        for (int k = 0; k <= N; ++k) worst = std::max(worst, std::abs(dtau_J(tr, u_mid, k, pen) - pen.beta_T));
        rep.add_upper("dtau_penalty_only", worst, 0.0, "tracking weights zero: dtau_J equals beta_T exactly");
    }

    // Continuous dependence probes.
    {
        const int pairs = 20;
        std::vector<double> ratios(pairs), scaling(pairs);
        parallel_for(pairs, threads, [&](int i) {
            const auto s = static_cast<unsigned long long>(i);
            const Control u1 = detail::random_dose(tg, g, detail::sub_seed(cfg.seed, 10, s));
            const Control u2 = detail::random_dose(tg, g, detail::sub_seed(cfg.seed, 11, s));
            Control u3 = u1;
            u3.axpy(0.5, u2);
            u3.axpy(-0.5, u1);
            const double r = check_continuous_dependence(data, u1, u2).ratio;
            const double r3 = check_continuous_dependence(data, u1, u3).ratio;
            ratios[static_cast<std::size_t>(i)] = r;
            scaling[static_cast<std::size_t>(i)] = std::max(r3 / r, r / r3);
        });
        std::vector<double> sorted = ratios;
        std::sort(sorted.begin(), sorted.end());
        const double median = 0.5 * (sorted[pairs / 2 - 1] + sorted[pairs / 2]);
        rep.add_upper("dependence_spread", sorted.back() / median, tol.dependence_spread,
                      "20 random pairs; max ratio / median ratio");
        rep.add_upper("dependence_scaling", *std::max_element(scaling.begin(), scaling.end()), tol.dependence_scaling,
                      "ratio change when the pair distance is halved");
    }

    // Self-convergence under refinement.
    {
        const auto fu = smooth_random_function(g, tg.t_end(), detail::sub_seed(cfg.seed, 6, 0), 0.5, 0.3);
        const auto clampu = [fu](double x, double y, double t) { return std::clamp(fu(x, y, t), 0.0, 1.0); };
        const int coarse = N % 4 == 0 ? N / 4 : N;
        const ConvergenceStudy st = check_self_convergence_time(data, clampu, tg.t_end(), coarse, 3);
        const double od = st.observed_order();
        rep.add({"self_convergence_dt", od, tol.order_dt,
                 !st.inconclusive && std::isfinite(od) && std::abs(od - 1.0) <= tol.order_dt,
                 st.inconclusive ? "inconclusive: errors not decreasing" : "observed order; expected 1"});
        const bool down = g.nx() % 4 == 0 && (g.dim() == 1 || g.ny() % 4 == 0) && g.nx() / 4 >= 8;
        const Grid coarse_grid = down ? detail::scaled_grid(g, 0.25) : g;
        const auto make = [&](const Grid& gg) {
            RunConfig c2 = cfg;
            c2.nx = gg.nx();
            c2.ny = gg.ny();
            ProblemData d = build_problem(c2);
            return d;
        };
        const ConvergenceStudy sh = check_self_convergence_space(make, coarse_grid, clampu, tg, 3);
        const double oh = sh.observed_order();
        rep.add({"self_convergence_h", oh, tol.order_h,
                 !sh.inconclusive && std::isfinite(oh) && std::abs(oh - 2.0) <= tol.order_h,
                 sh.inconclusive ? "inconclusive: errors not decreasing" : "observed order; expected 2"});
    }
    return rep;
}

/// Result of the `grad-check` subcommand.
struct GradCheckOutcome {
    GradientCheckResult result;
    bool passed = false;
};

inline GradCheckOutcome run_grad_check(const RunConfig& cfg, const std::filesystem::path& out,
                                       const SuiteTolerances& tol = {}) {
    const ProblemData data = build_problem(cfg);
    const TimeGrid tg = cfg.timegrid();
    const Grid g = data.grid();
    const ObjectiveSpec obj = build_objective(cfg, data, tg);
    const int tau = cfg.optimizer.fixed_tau_index >= 0 ? cfg.optimizer.fixed_tau_index : tg.n_steps();
    const Control u = project_admissible(smooth_random_control(tg, g, detail::sub_seed(cfg.seed, 6, 0), 0.5, 0.3));
    std::vector<Control> dirs;
    for (int i = 0; i < cfg.verify_directions; ++i)
        dirs.push_back(smooth_random_control(tg, g, detail::sub_seed(cfg.seed, 9, static_cast<unsigned>(i)), 0.0, 1.0));

    GradCheckOutcome o;
    o.result = check_gradient_fd(data, u, obj, tau, dirs, gradient_eps_sweep());
    double worst_slope = 0.0;
    for (double s : o.result.slope) worst_slope = std::max(worst_slope, std::isfinite(s) ? std::abs(s - 2.0) : 1e300);
    o.passed = o.result.worst_best() <= tol.gradient_best && worst_slope <= tol.gradient_slope;

    std::filesystem::create_directories(out);
    write_text_file(out / "gradient_check.csv", o.result.to_csv());
    const StateTrajectory base = solve_state(data, u, tg);
    write_adjoint(out / "adjoint", solve_adjoint(base, data, u, obj, tau));
    write_linearized(out / "linearized", solve_linearized(base, data, u, dirs.front()));

    Manifest m = detail::base_manifest(cfg, "grad-check");
    m.set("tau_index", tau)
        .set("directions", static_cast<int>(dirs.size()))
        .set("worst_best_rel_error", o.result.worst_best())
        .set("worst_slope_deviation", worst_slope)
        .set("status", o.passed ? "pass" : "fail");
    write_text_file(out / "manifest.txt", m.text());
    return o;
}

inline void run_simulate(const RunConfig& cfg, const std::filesystem::path& out) {
    const ProblemData data = build_problem(cfg);
    const TimeGrid tg = cfg.timegrid();
    const Control u = build_initial_control(cfg, tg, data.grid());
    const StateTrajectory tr = solve_state(data, u, tg);
    write_trajectory(out, tr, data);
    write_text_file(out / "residuals.csv", residual_report(tr, data, u).to_csv(tg.dt()));
    Manifest m = detail::base_manifest(cfg, "simulate");
    m.set("sigma_bound_violation", sigma_bound_violation(tr)).set("status", "completed");
    write_text_file(out / "manifest.txt", m.text());
}

inline OptimizationResult run_optimize(const RunConfig& cfg, const std::filesystem::path& out) {
    const ProblemData data = build_problem(cfg);
    const TimeGrid tg = cfg.timegrid();
    const ObjectiveSpec obj = build_objective(cfg, data, tg);
    OptimizerConfig oc = cfg.optimizer;
    oc.threads = thread_cap();
    const OptimizationResult r = optimize(data, obj, tg, build_initial_control(cfg, tg, data.grid()), oc);

    std::filesystem::create_directories(out);
    write_text_file(out / "iterations.csv", iterations_csv(r));
    write_text_file(out / "objective.csv", objective_csv(r));
    write_control(out / "u_star", "u_star_", r.u_star);
    Manifest m = detail::base_manifest(cfg, "optimize");
    m.set("tau_mode", oc.tau_mode == TauMode::Scan ? "scan" : "fixed")
        .set("status", to_string(r.status))
        .set("iterations", r.iterations)
        .set("J_final", r.J_history.back())
        .set("tau_index_star", r.tau_index_star)
        .set("tau_star", tg.time(r.tau_index_star))
        .set("stationarity_u", r.fonc.stationarity_u)
        .set("dtau_value", r.fonc.dtau_value)
        .set("tau_case", to_string(r.fonc.tau_case))
        .set("tau_tol", r.fonc.tau_tol)
        .set("fonc_satisfied", r.fonc.satisfied() ? "true" : "false");
    write_text_file(out / "manifest.txt", m.text());
    return r;
}

/// Entry point of the command-line tool; returns the process exit code.
inline int run_cli(int argc, char** argv, std::ostream& os = std::cout, std::ostream& es = std::cerr) {
    CLI::App app{"Tumour-growth optimal dosing: forward solves, optimization and verification"};
    app.require_subcommand(1);
    app.footer(config_reference() +
               "\nExit codes: 0 success, 1 check failure, 2 usage or config error, 3 solver or I/O failure.\n"
               "CHEMODOSE_THREADS caps internal parallelism (default 1).");

    std::string config_path;
    std::string out_dir;
    long long seed = -1;
    bool btau = false;
    std::string sabotage;

    const auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "configuration file")->required();
        sub->add_option("--out", out_dir, "output directory")->required();
        sub->add_option("--seed", seed, "overrides [run] seed")->check(CLI::NonNegativeNumber);
        sub->add_flag("--include-btau-term", btau, "add beta_u/2 |u(tau)|^2 to the tau derivative");
    };
    CLI::App* sim = app.add_subcommand("simulate", "forward solve with the configured initial dose");
    CLI::App* opt = app.add_subcommand("optimize", "projected-gradient optimization of dose and treatment time");
    CLI::App* ver = app.add_subcommand("verify", "solver-level verification suite");
    CLI::App* grad = app.add_subcommand("grad-check", "adjoint gradient against finite differences");
    for (CLI::App* s : {sim, opt, ver, grad}) common(s);
    ver->add_option("--sabotage", sabotage, "inject a known defect into one check")
        ->check(CLI::IsMember({"duality", "gradient", "sigma-bounds"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, os, es);
        return code == 0 ? kExitOk : kExitUsage;
    }

    RunConfig cfg;
    try {
        cfg = parse_config(config_path);
        if (seed >= 0) {
            cfg.seed = static_cast<unsigned long long>(seed);
            cfg.optimizer.seed = cfg.seed;
        }
        if (btau) cfg.include_btau_term = true;
    } catch (const ConfigError& e) {
        es << config_path << ": " << e.what() << "\n";
        return kExitUsage;
    }

    const std::filesystem::path out(out_dir);
    try {
        std::filesystem::create_directories(out);
        if (*sim) {
            run_simulate(cfg, out);
            os << "simulate: wrote " << out.string() << "\n";
            return kExitOk;
        }
        if (*opt) {
            const OptimizationResult r = run_optimize(cfg, out);
            os << "optimize: " << to_string(r.status) << " after " << r.iterations << " iterations, J = "
               << r.J_history.back() << ", tau* = " << cfg.timegrid().time(r.tau_index_star) << "\n";
            return kExitOk;
        }
        if (*ver) {
            const VerificationReport rep = verification_suite(cfg, sabotage);
            write_text_file(out / "verification_report.csv", rep.to_csv());
            Manifest m = detail::base_manifest(cfg, "verify");
            m.set("sabotage", sabotage.empty() ? "none" : sabotage).set("status", rep.all_passed() ? "pass" : "fail");
            write_text_file(out / "manifest.txt", m.text());
            for (const auto& c : rep.checks)
                os << (c.passed ? "PASS " : "FAIL ") << c.name << " measured=" << c.measured
                   << " tolerance=" << c.tolerance << "\n";
            return rep.all_passed() ? kExitOk : kExitCheckFailed;
        }
        const GradCheckOutcome g = run_grad_check(cfg, out);
        os << "grad-check: " << (g.passed ? "pass" : "fail") << ", worst best relative error "
           << g.result.worst_best() << "\n";
        return g.passed ? kExitOk : kExitCheckFailed;
    } catch (const ConfigError& e) {
        es << config_path << ": " << e.what() << "\n";
        return kExitUsage;
    } catch (const SolverError& e) {
        es << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    } catch (const DivergenceError& e) {
        es << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    } catch (const IoError& e) {
        es << "i/o failure: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::filesystem::filesystem_error& e) {
        es << "i/o failure: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::invalid_argument& e) {
        es << "invalid input: " << e.what() << "\n";
        return kExitUsage;
    }
}

}  // namespace chemodose
