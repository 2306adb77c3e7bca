#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "chemodose/adjoint.hpp"
#include "chemodose/objective.hpp"
#include "chemodose/sensitivity.hpp"

namespace chemodose {

struct CheckResult {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string note;
};

struct VerificationReport {
    std::vector<CheckResult> checks;

    void add(CheckResult r) { checks.push_back(std::move(r)); }

    /// measured <= tolerance
    void add_upper(std::string name, double measured, double tolerance, std::string note) {
        add({std::move(name), measured, tolerance, std::isfinite(measured) && measured <= tolerance, std::move(note)});
    }

    bool all_passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
    }

    std::string to_csv() const {
        std::string out = "check,measured,tolerance,passed,note\n";
        char buf[128];
        for (const auto& c : checks) {
            std::snprintf(buf, sizeof buf, ",%.10e,%.10e,%d,", c.measured, c.tolerance, c.passed ? 1 : 0);
            out += c.name + buf + c.note + "\n";
        }
        return out;
    }
};

/// Smooth pseudo-random space-time field
///   base + amp * sum_{i,j,l < modes} a_ijl cos(i pi x/Lx) cos(l pi y/Ly) cos(j pi t/T) / modes^2
/// with a_ijl uniform in [-1, 1]. Being a function of (x, y, t), the same
/// seed gives consistent controls on every grid and time step.
inline std::function<double(double, double, double)> smooth_random_function(const Grid& g, double t_end,
                                                                             unsigned long long seed, double base,
                                                                             double amp, int modes = 3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    const int ly = g.dim() == 2 ? modes : 1;
    std::vector<double> a(static_cast<std::size_t>(modes * modes * ly));
    for (double& v : a) v = coef(rng);
    const double lx = g.lx();
    const double lyy = g.dim() == 2 ? g.ly() : 1.0;
    const double scale = amp / (modes * modes);
    return [a, modes, ly, lx, lyy, t_end, base, scale](double x, double y, double t) {
        const double pi = std::acos(-1.0);
        double s = 0.0;
        std::size_t idx = 0;
        for (int i = 0; i < modes; ++i)
            for (int j = 0; j < modes; ++j)
                for (int l = 0; l < ly; ++l)
                    s += a[idx++] * std::cos(i * pi * x / lx) * std::cos(j * pi * t / t_end) *
                         std::cos(l * pi * y / lyy);
        return base + scale * s;
    };
}

inline Control smooth_random_control(const TimeGrid& tg, const Grid& g, unsigned long long seed, double base,
                                     double amp, int modes = 3) {
    return Control::from_function(tg, g, smooth_random_function(g, tg.t_end(), seed, base, amp, modes));
}

/// Least-squares slope of log(y) against log(x); non-positive entries are skipped.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
        if (!(x[i] > 0) || !(y[i] > 0)) continue;
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double den = n * sxx - sx * sx;
    if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (n * sxy - sx * sy) / den;
}

/// Largest distance of sigma from [0, 1] over all nodes.
inline double sigma_bound_violation(const StateTrajectory& traj) {
    double v = 0.0;
    for (const auto& s : traj.sigma) v = std::max({v, -s.min(), s.max() - 1.0});
    return v;
}

inline CheckResult check_sigma_bounds(const StateTrajectory& traj, double tol = 1e-8) {
    const double v = sigma_bound_violation(traj);
    return {"sigma_bounds", v, tol, v <= tol, "max distance of sigma from [0,1] over all nodes"};
}

/// Per-step nutrient mass identity.
inline CheckResult check_mass_identity(const StateTrajectory& traj, const ProblemData& data, const Control& u,
                                       double tol = 1e-9) {
    const ResidualSeries rs = residual_report(traj, data, u);
    double worst = 0.0;
    for (double r : rs.mass_sigma) worst = std::max(worst, std::abs(r));
    return {"nutrient_mass_identity", worst, tol, worst <= tol, "max per-step residual"};
}

/// Telescoped phase-mass ledger int phi^k - int phi^0 against the summed sources.
inline CheckResult check_phase_mass_ledger(const StateTrajectory& traj, const ProblemData& data, const Control& u,
                                           double tol = 1e-8) {
    const ResidualSeries rs = residual_report(traj, data, u);
    double acc = 0.0;
    double worst = 0.0;
    for (double r : rs.mass_phi) {
        acc += r;
        worst = std::max(worst, std::abs(acc));
    }
    return {"phase_mass_ledger", worst, tol, worst <= tol, "max telescoped residual"};
}

/// Largest discrete energy increment; meaningful for source-free parameters.
inline CheckResult check_energy_dissipation(const StateTrajectory& traj, const ProblemData& data,
                                            double tol = 1e-10) {
    double worst = -std::numeric_limits<double>::infinity();
    double prev = energy(traj.phi[0], data);
    for (std::size_t k = 1; k < traj.phi.size(); ++k) {
        const double e = energy(traj.phi[k], data);
        worst = std::max(worst, e - prev);
        prev = e;
    }
    return {"energy_dissipation", worst, tol, worst <= tol, "max energy increment per step"};
}

struct DualityResult {
    double lhs = 0.0;  ///< tracking source paired with the linearized phase field
    double rhs = 0.0;  ///< -alpha <h(phi) p, w>
    double mismatch = 0.0;
};

/// Pairing identity between one linearized and one adjoint solve. The
/// adjoint uses the node-indicator source unless `source` says otherwise;
/// both sides use the objective's trapezoid time quadrature.
inline DualityResult check_duality(const ProblemData& data, const Control& u, const Control& w,
                                   const ObjectiveSpec& obj, int tau_index, bool sabotage = false,
                                   AdjointSource source = AdjointSource::Indicator) {
    const TimeGrid& tg = u.timegrid();
    const StateTrajectory base = solve_state(data, u, tg);
    const LinearizedTrajectory lin = solve_linearized(base, data, u, w);
    AdjointOptions opts;
    opts.source = source;
    opts.sabotage_sign_flip = sabotage;
    const AdjointTrajectory adj = solve_adjoint(base, data, u, obj, tau_index, opts);

    const double dt = tg.dt();
    DualityResult d;
    for (int k = 0; k <= tau_index; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        d.lhs += dt * inner_product(adjoint_source_quadrature(base.phi[kk], obj, k, tau_index, tg), lin.Phi[kk]);
    }
    for (int k = 0; k < tau_index; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        d.rhs -= data.params.alpha * dt * inner_product(hadamard(data.h_of(base.phi[kk]), adj.p[kk]), w.frame(k));
    }
    d.mismatch = std::abs(d.lhs - d.rhs) / std::max({std::abs(d.lhs), std::abs(d.rhs), 1e-14});
    return d;
}

struct GradientCheckRow {
    int direction = 0;
    double eps = 0.0;
    double fd = 0.0;
    double adjoint = 0.0;  ///< <g, w>
    double rel_error = 0.0;
};

struct GradientCheckResult {
    std::vector<GradientCheckRow> rows;
    std::vector<double> best_rel_error;  ///< per direction
    std::vector<double> slope;           ///< per direction

    double worst_best() const {
        double v = 0.0;
        for (double b : best_rel_error) v = std::max(v, b);
        return v;
    }

    std::string to_csv() const {
        std::string out = "direction,eps,fd,adjoint,rel_error\n";
        char buf[160];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%d,%.6e,%.17g,%.17g,%.10e\n", r.direction, r.eps, r.fd, r.adjoint,
                          r.rel_error);
            out += buf;
        }
        return out;
    }
};

/// Central differences of eval_Jr o solve_state against the adjoint gradient.
/// Perturbed controls are not clamped.
inline GradientCheckResult check_gradient_fd(const ProblemData& data, const Control& u, const ObjectiveSpec& obj,
                                             int tau_index, const std::vector<Control>& directions,
                                             const std::vector<double>& eps_sweep,
                                             const AdjointOptions& adj_opts = {}) {
    const TimeGrid& tg = u.timegrid();
    const StateTrajectory base = solve_state(data, u, tg);
    const AdjointTrajectory adj = solve_adjoint(base, data, u, obj, tau_index, adj_opts);
    const Control g = grad_u(adj, u, data, base, obj);
    const auto J = [&](const Control& c) { return eval_Jr(solve_state(data, c, tg), c, tau_index, obj); };

    GradientCheckResult res;
    for (std::size_t d = 0; d < directions.size(); ++d) {
        const Control& w = directions[d];
        const double gw = inner_product(g, w);
        double best = std::numeric_limits<double>::infinity();
        std::vector<double> errs;
        for (double eps : eps_sweep) {
            Control up = u;
            up.axpy(eps, w);
            Control um = u;
            um.axpy(-eps, w);
            const double fd = (J(up) - J(um)) / (2.0 * eps);
            const double scale = std::max({std::abs(gw), std::abs(fd), 1e-300});
            const double rel = (fd == gw) ? 0.0 : std::abs(fd - gw) / scale;
            res.rows.push_back({static_cast<int>(d), eps, fd, gw, rel});
            best = std::min(best, rel);
            errs.push_back(rel);
        }
        res.best_rel_error.push_back(best);
        res.slope.push_back(loglog_slope(eps_sweep, errs));
    }
    return res;
}

struct TaylorCheck {
    std::vector<double> eps;
    std::vector<double> theta;
    std::vector<double> xi;
    double slope_theta = 0.0;
    double slope_xi = 0.0;
};

inline TaylorCheck check_taylor(const ProblemData& data, const Control& u, const Control& w,
                                const std::vector<double>& eps_sweep) {
    TaylorCheck t;
    t.eps = eps_sweep;
    for (double e : eps_sweep) {
        const TaylorRemainder r = taylor_remainder(data, u, w, e);
        t.theta.push_back(r.theta_norm);
        t.xi.push_back(r.xi_norm);
    }
    t.slope_theta = loglog_slope(t.eps, t.theta);
    t.slope_xi = loglog_slope(t.eps, t.xi);
    return t;
}

struct DtauCheck {
    double max_rel_error = 0.0;
    int worst_node = -1;
};

/// Central node differences of J_r in tau against dtau_J at interior nodes
/// whose window lies inside the stored trajectory. Each node's error is
/// relative to the largest |dtau_J| over the tested nodes.
inline DtauCheck check_dtau_consistency(const StateTrajectory& traj, const Control& u, const ObjectiveSpec& obj) {
    const TimeGrid& tg = traj.timegrid;
    const int m = obj.window_steps(tg);
    const double dt = tg.dt();
    std::vector<int> nodes;
    for (int k = m + 1; k < tg.n_steps(); ++k) nodes.push_back(k);
    std::vector<double> fd, an;
    double scale = 0.0;
    for (int k : nodes) {
        fd.push_back((eval_Jr(traj, u, k + 1, obj) - eval_Jr(traj, u, k - 1, obj)) / (2.0 * dt));
        an.push_back(dtau_J(traj, u, k, obj));
        scale = std::max(scale, std::abs(an.back()));
    }
    DtauCheck c;
    if (scale == 0.0) return c;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const double e = std::abs(fd[i] - an[i]) / scale;
        if (e > c.max_rel_error) {
            c.max_rel_error = e;
            c.worst_node = nodes[i];
        }
    }
    return c;
}

struct DependenceResult {
    double numerator = 0.0;
    double denominator = 0.0;
    bool defined = false;
    double ratio = std::numeric_limits<double>::quiet_NaN();
};

/// (max-node |phi1 - phi2|^2_L2 + max-node |sigma1 - sigma2|^2_H1) / |u1 - u2|^2_L2(Q).
inline DependenceResult check_continuous_dependence(const ProblemData& data, const Control& u1, const Control& u2) {
    u1.require_same(u2);
    const TimeGrid& tg = u1.timegrid();
    const StateTrajectory a = solve_state(data, u1, tg);
    const StateTrajectory b = solve_state(data, u2, tg);
    double phi_part = 0.0;
    double sigma_part = 0.0;
    for (std::size_t k = 0; k < a.phi.size(); ++k) {
        const ScalarField dp = a.phi[k] - b.phi[k];
        const ScalarField ds = a.sigma[k] - b.sigma[k];
        phi_part = std::max(phi_part, inner_product(dp, dp));
        sigma_part = std::max(sigma_part, h1_norm_sq(ds));
    }
    Control du = u1;
    du.axpy(-1.0, u2);
    DependenceResult r;
    r.numerator = phi_part + sigma_part;
    r.denominator = inner_product(du, du);
    r.defined = r.denominator > 0.0;
    if (r.defined) r.ratio = r.numerator / r.denominator;
    return r;
}

struct ConvergenceStudy {
    std::vector<double> errors;  ///< differences between successive levels
    std::vector<double> orders;  ///< log2 of successive error ratios
    bool exact = false;          ///< all differences vanish
    bool inconclusive = false;   ///< errors not strictly decreasing

    double observed_order() const { return orders.empty() ? std::numeric_limits<double>::quiet_NaN() : orders.back(); }
};

namespace detail {

inline ConvergenceStudy orders_from(std::vector<double> errors) {
    ConvergenceStudy s;
    s.errors = std::move(errors);
    s.exact = std::all_of(s.errors.begin(), s.errors.end(), [](double e) { return e <= 1e-14; });
    if (s.exact) return s;
    for (std::size_t i = 0; i + 1 < s.errors.size(); ++i) {
        if (!(s.errors[i + 1] < s.errors[i]) || s.errors[i + 1] <= 0.0) s.inconclusive = true;
        s.orders.push_back(std::log2(s.errors[i] / s.errors[i + 1]));
    }
    return s;
}

/// Average of fine cells onto a grid coarser by a factor of two per axis.
inline ScalarField restrict_by_two(const ScalarField& fine, const Grid& coarse) {
    ScalarField out(coarse);
    const Grid& fg = fine.grid();
    if (coarse.dim() == 1) {
        for (int i = 0; i < coarse.nx(); ++i)
            out[static_cast<std::size_t>(i)] =
                0.5 * (fine[static_cast<std::size_t>(2 * i)] + fine[static_cast<std::size_t>(2 * i + 1)]);
        return out;
    }
    const auto at = [&](int ix, int iy) { return fine[static_cast<std::size_t>(iy * fg.nx() + ix)]; };
    for (int iy = 0; iy < coarse.ny(); ++iy)
        for (int ix = 0; ix < coarse.nx(); ++ix)
            out[static_cast<std::size_t>(iy * coarse.nx() + ix)] =
                0.25 * (at(2 * ix, 2 * iy) + at(2 * ix + 1, 2 * iy) + at(2 * ix, 2 * iy + 1) +
                        at(2 * ix + 1, 2 * iy + 1));
    return out;
}

}  // namespace detail

using SpaceTimeFunction = std::function<double(double, double, double)>;

/// Time-step refinement: n_steps = coarse_steps * 2^l for l < levels; the
/// error of level l is the max over coarse nodes of |phi_l - phi_{l+1}|_L2.
inline ConvergenceStudy check_self_convergence_time(const ProblemData& data, const SpaceTimeFunction& u,
                                                    double t_end, int coarse_steps, int levels) {
    if (levels < 3) throw std::invalid_argument("self-convergence needs at least 3 levels");
    std::vector<StateTrajectory> runs;
    for (int l = 0; l < levels; ++l) {
        const TimeGrid tg(t_end, coarse_steps << l);
        runs.push_back(solve_state(data, Control::from_function(tg, data.grid(), u), tg));
    }
    std::vector<double> errors;
    for (int l = 0; l + 1 < levels; ++l) {
        double e = 0.0;
        for (int k = 0; k <= coarse_steps; ++k) {
            const auto a = static_cast<std::size_t>(k << l);
            const auto b = static_cast<std::size_t>(k << (l + 1));
            e = std::max(e, l2_norm(runs[static_cast<std::size_t>(l + 1)].phi[b] - runs[static_cast<std::size_t>(l)].phi[a]));
        }
        errors.push_back(e);
    }
    return detail::orders_from(std::move(errors));
}

/// Mesh refinement at fixed time step: the grid is doubled per axis per
/// level; fine solutions are averaged onto the coarser grid and the error of
/// level l is the max over nodes of the L2 difference.
inline ConvergenceStudy check_self_convergence_space(const std::function<ProblemData(const Grid&)>& make_data,
                                                     const Grid& coarse, const SpaceTimeFunction& u,
                                                     const TimeGrid& tg, int levels) {
    if (levels < 3) throw std::invalid_argument("self-convergence needs at least 3 levels");
    std::vector<Grid> grids{coarse};
    for (int l = 1; l < levels; ++l) {
        const Grid& p = grids.back();
        grids.push_back(p.dim() == 1 ? Grid::line(2 * p.nx(), p.lx()) : Grid::box(2 * p.nx(), 2 * p.ny(), p.lx(), p.ly()));
    }
    std::vector<StateTrajectory> runs;
    for (const Grid& g : grids) runs.push_back(solve_state(make_data(g), Control::from_function(tg, g, u), tg));
    std::vector<double> errors;
    for (int l = 0; l + 1 < levels; ++l) {
        const auto ll = static_cast<std::size_t>(l);
        double e = 0.0;
        for (std::size_t k = 0; k < runs[ll].phi.size(); ++k)
            e = std::max(e, l2_norm(detail::restrict_by_two(runs[ll + 1].phi[k], grids[ll]) - runs[ll].phi[k]));
        errors.push_back(e);
    }
    return detail::orders_from(std::move(errors));
}

}  // namespace chemodose
