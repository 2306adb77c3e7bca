#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "chemodose/objective.hpp"
#include "chemodose/parallel.hpp"

namespace chemodose {

enum class TauMode {
    Scan,   ///< exhaustive scan over all time nodes each outer iteration
    Fixed,  ///< tau held at a given node; only u is optimized
};

struct OptimizerConfig {
    int max_outer_iters = 200;
    double initial_step = 1.0;
    double shrink = 0.5;
    double slope = 1e-4;
    int max_backtracks = 30;
    double stationarity_tol = 1e-4;
    /// Overrides ObjectiveSpec::tau_tolerance() when positive.
    double tau_tol = -1.0;
    /// Barzilai-Borwein trial step after the first iteration.
    bool spectral_steps = true;
    TauMode tau_mode = TauMode::Scan;
    int fixed_tau_index = -1;  ///< -1 means the final node
    unsigned long long seed = 0;
    int threads = 1;

    void validate() const {
        if (max_outer_iters < 1) throw std::invalid_argument("max_outer_iters must be >= 1");
        if (!(initial_step > 0)) throw std::invalid_argument("initial step must be positive");
        if (!(shrink > 0 && shrink < 1)) throw std::invalid_argument("shrink factor must lie in (0, 1)");
        if (!(slope > 0)) throw std::invalid_argument("Armijo slope parameter must be positive");
        if (!(stationarity_tol > 0)) throw std::invalid_argument("stationarity tolerance must be positive");
        if (max_backtracks < 1) throw std::invalid_argument("max_backtracks must be >= 1");
    }
};

enum class OptimizationStatus { Converged, MaxIters, Stalled };

inline const char* to_string(OptimizationStatus s) {
    switch (s) {
        case OptimizationStatus::Converged: return "converged";
        case OptimizationStatus::MaxIters: return "max-iters";
        case OptimizationStatus::Stalled: return "stalled";
    }
    return "?";
}

struct IterationRecord {
    int iter = 0;
    double J = 0.0;
    ObjectiveTerms terms;
    double stationarity = 0.0;
    double dtau = 0.0;
    int tau_index = 0;
    double tau = 0.0;
    double step = 0.0;  ///< step accepted to reach this iterate (0 for the initial one)
};

struct OptimizationResult {
    Control u_star;
    int tau_index_star = 0;
    std::vector<double> J_history;
    std::vector<IterationRecord> records;
    FoncReport fonc;
    int iterations = 0;
    OptimizationStatus status = OptimizationStatus::MaxIters;
};

struct ArmijoResult {
    Control u_new;
    double step = 0.0;
    double J_new = 0.0;
    int trials = 0;
    bool accepted = false;
};

/// Backtracking along the projection arc u(s) = P(u - s g). A trial is
/// accepted when J(u(s)) <= J_current - slope / s * |u(s) - u|^2, which
/// reduces to J_current - slope * s * |g|^2 wherever no bound is active.
inline ArmijoResult armijo_step(const Control& u, const Control& g, double J_current,
                                const std::function<double(const Control&)>& eval, double initial_step,
                                double shrink = 0.5, double slope = 1e-4, int max_backtracks = 30) {
    ArmijoResult res;
    double s = initial_step;
    for (int trial = 0; trial <= max_backtracks; ++trial) {
        Control cand = u;
        cand.axpy(-s, g);
        cand = project_admissible(std::move(cand));
        Control diff = cand;
        diff.axpy(-1.0, u);
        const double moved = inner_product(diff, diff);
        const double J_new = eval(cand);
        res.trials = trial + 1;
        if (std::isfinite(J_new) && J_new <= J_current - slope / s * moved) {
            res.u_new = std::move(cand);
            res.step = s;
            res.J_new = J_new;
            res.accepted = true;
            return res;
        }
        s *= shrink;
    }
    res.u_new = u;
    res.J_new = J_current;
    return res;
}

/// J_r at every node of one trajectory; index = tau node.
inline std::vector<double> objective_per_node(const StateTrajectory& traj, const Control& u, const ObjectiveSpec& obj,
                                              int threads = 1) {
    std::vector<double> J(static_cast<std::size_t>(traj.timegrid.node_count()));
    parallel_for(static_cast<int>(J.size()), threads,
                 [&](int k) { J[static_cast<std::size_t>(k)] = eval_Jr(traj, u, k, obj); });
    return J;
}

/// Smallest node index attaining the minimum.
inline int argmin_node(const std::vector<double>& J) {
    return static_cast<int>(std::min_element(J.begin(), J.end()) - J.begin());
}

/// Projected-gradient minimization in u alternating with a tau-node scan.
inline OptimizationResult optimize(const ProblemData& data, const ObjectiveSpec& obj, const TimeGrid& tg,
                                   const Control& init_u, const OptimizerConfig& cfg) {
    cfg.validate();
    obj.validate(tg);
    ObjectiveSpec spec = obj;
    if (cfg.tau_tol > 0) spec.tau_tol = cfg.tau_tol;
    const int fixed_tau = cfg.fixed_tau_index < 0 ? tg.n_steps() : cfg.fixed_tau_index;
    if (cfg.tau_mode == TauMode::Fixed && fixed_tau > tg.n_steps())
        throw std::out_of_range("fixed tau index beyond the time grid");

    OptimizationResult res;
    Control u = project_admissible(init_u);
    Control u_prev;
    Control g_prev;
    double last_step = 0.0;

    for (int it = 0;; ++it) {
        const StateTrajectory traj = solve_state(data, u, tg);
        int tau = fixed_tau;
        if (cfg.tau_mode == TauMode::Scan) tau = argmin_node(objective_per_node(traj, u, spec, cfg.threads));
        const ObjectiveTerms terms = eval_Jr_terms(traj, u, tau, spec);
        const AdjointTrajectory adj = solve_adjoint(traj, data, u, spec, tau);
        const Control g = grad_u(adj, u, data, traj, spec);
        const FoncReport fonc = fonc_residuals(u, g, traj, tau, spec, cfg.stationarity_tol);

        res.J_history.push_back(terms.total());
        res.records.push_back({it, terms.total(), terms, fonc.stationarity_u, fonc.dtau_value, tau, tg.time(tau),
                               last_step});
        res.u_star = u;
        res.tau_index_star = tau;
        res.fonc = fonc;
        res.iterations = it;

        if (fonc.satisfied()) {
            res.status = OptimizationStatus::Converged;
            break;
        }
        if (it >= cfg.max_outer_iters) {
            res.status = OptimizationStatus::MaxIters;
            break;
        }

        double s0 = cfg.initial_step;
        if (cfg.spectral_steps && it > 0) {
            Control du = u;
            du.axpy(-1.0, u_prev);
            Control dg = g;
            dg.axpy(-1.0, g_prev);
            const double num = inner_product(du, du);
            const double den = inner_product(du, dg);
            if (den > 0 && num > 0) s0 = std::clamp(num / den, 1e-10, 1e10);
        }
        const auto eval = [&](const Control& c) { return eval_Jr(solve_state(data, c, tg), c, tau, spec); };
        ArmijoResult step = armijo_step(u, g, terms.total(), eval, s0, cfg.shrink, cfg.slope, cfg.max_backtracks);
        if (!step.accepted) {
            res.status = OptimizationStatus::Stalled;
            break;
        }
        u_prev = std::move(u);
        g_prev = g;
        u = std::move(step.u_new);
        last_step = step.step;
    }
    return res;
}

}  // namespace chemodose
