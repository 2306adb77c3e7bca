#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>

#include "chemodose/adjoint.hpp"
#include "chemodose/objective_spec.hpp"
#include "chemodose/state_solver.hpp"

namespace chemodose {

/// Term-by-term value of the relaxed objective.
struct ObjectiveTerms {
    double tracking = 0.0;      ///< beta_Q/2 int_0^tau |phi - phi_Q|^2
    double window_target = 0.0; ///< beta_Omega/(2r) int_{tau-r}^tau |phi - phi_Omega|^2
    double window_size = 0.0;   ///< beta_S/(2r) int_{tau-r}^tau int (1 + phi)
    double control = 0.0;       ///< beta_u/2 |u|^2_{L2(Q)}
    double time = 0.0;          ///< beta_T tau

    double total() const { return tracking + window_target + window_size + control + time; }
};

namespace detail {

inline void check_tau(int tau_index, const TimeGrid& tg) {
    if (tau_index < 0 || tau_index > tg.n_steps())
        throw std::out_of_range("tau_index " + std::to_string(tau_index) + " outside [0, " +
                                std::to_string(tg.n_steps()) + "]");
}

inline double sq_dist(const ScalarField& a, const ScalarField& b) {
    const ScalarField d = a - b;
    return inner_product(d, d);
}

inline const ScalarField& phi_at(const StateTrajectory& traj, int k) {
    return traj.phi[static_cast<std::size_t>(std::max(k, 0))];
}

}  // namespace detail

/// Control-penalty term alone; it does not depend on the state or on tau.
inline double control_penalty(const Control& u, const ObjectiveSpec& obj) {
    return 0.5 * obj.beta_u * inner_product(u, u);
}

/// Relaxed objective with trapezoid time quadrature on node values. phi at
/// negative times is phi0; the control penalty uses the piecewise-constant
/// control exactly over [0, T].
inline ObjectiveTerms eval_Jr_terms(const StateTrajectory& traj, const Control& u, int tau_index,
                                    const ObjectiveSpec& obj) {
    const TimeGrid& tg = traj.timegrid;
    detail::check_tau(tau_index, tg);
    if (!(u.timegrid() == tg)) throw StructuralError("objective: control and trajectory time grids differ");
    const double dt = tg.dt();
    const int m = obj.window_steps(tg);

    ObjectiveTerms t;
    if (obj.beta_Q != 0.0) {
        double s = 0.0;
        for (int k = 0; k <= tau_index; ++k)
            s += tracking_weight(k, tau_index) * detail::sq_dist(detail::phi_at(traj, k), obj.phi_Q.at(k));
        t.tracking = 0.5 * obj.beta_Q * dt * s;
    }
    double sw = 0.0;
    double ss = 0.0;
    for (int j = tau_index - m; j <= tau_index; ++j) {
        const double w = window_weight(j, tau_index, m);
        const ScalarField& phi = detail::phi_at(traj, j);
        if (obj.beta_Omega != 0.0) sw += w * detail::sq_dist(phi, obj.phi_Omega.at(j));
        ss += w * (phi.grid().measure() + integrate(phi));
    }
    t.window_target = obj.beta_Omega / (2.0 * obj.r_relax) * dt * sw;
    t.window_size = obj.beta_S / (2.0 * obj.r_relax) * dt * ss;
    t.control = control_penalty(u, obj);
    t.time = obj.beta_T * tg.time(tau_index);
    return t;
}

inline double eval_Jr(const StateTrajectory& traj, const Control& u, int tau_index, const ObjectiveSpec& obj) {
    return eval_Jr_terms(traj, u, tau_index, obj).total();
}

/// Reduced gradient g = beta_u u - alpha h(phi) p, p extended by zero past tau.
/// It represents the derivative in the L2(Q) pairing of Control.
inline Control grad_u(const AdjointTrajectory& adj, const Control& u, const ProblemData& data,
                      const StateTrajectory& base, const ObjectiveSpec& obj) {
    if (!(adj.timegrid == base.timegrid) || !(u.timegrid() == base.timegrid))
        throw StructuralError("gradient: adjoint, control and trajectory time grids differ");
    Control g = u;
    g *= obj.beta_u;
    const double alpha = data.params.alpha;
    for (int k = 0; k <= std::min(adj.tau_index, u.frame_count() - 1); ++k) {
        const ScalarField& phi = base.phi[static_cast<std::size_t>(k)];
        const ScalarField& p = adj.p[static_cast<std::size_t>(k)];
        ScalarField& gk = g.frame(k);
        for (std::size_t i = 0; i < gk.size(); ++i) gk[i] -= alpha * data.interp.hval(phi[i]) * p[i];
    }
    return g;
}

/// Derivative of the reduced objective with respect to the treatment time.
inline double dtau_J(const StateTrajectory& traj, const Control& u, int tau_index, const ObjectiveSpec& obj) {
    const TimeGrid& tg = traj.timegrid;
    detail::check_tau(tau_index, tg);
    const int m = obj.window_steps(tg);
    const int back = tau_index - m;
    const ScalarField& phi_tau = detail::phi_at(traj, tau_index);
    const ScalarField& phi_back = detail::phi_at(traj, back);

    double d = obj.beta_T;
    if (obj.beta_Q != 0.0) d += 0.5 * obj.beta_Q * detail::sq_dist(phi_tau, obj.phi_Q.at(tau_index));
    d += obj.beta_S / (2.0 * obj.r_relax) * (integrate(phi_tau) - integrate(phi_back));
    if (obj.beta_Omega != 0.0)
        d += obj.beta_Omega / (2.0 * obj.r_relax) *
             (detail::sq_dist(phi_tau, obj.phi_Omega.at(tau_index)) - detail::sq_dist(phi_back, obj.phi_Omega.at(back)));
    if (obj.include_btau_term) {
        const int frame = std::min(tau_index, tg.n_steps() - 1);
        d += 0.5 * obj.beta_u * inner_product(u.frame(frame), u.frame(frame));
    }
    return d;
}

enum class TauCase { LeftBoundary, Interior, RightBoundary };

inline const char* to_string(TauCase c) {
    switch (c) {
        case TauCase::LeftBoundary: return "left-boundary";
        case TauCase::Interior: return "interior";
        case TauCase::RightBoundary: return "right-boundary";
    }
    return "?";
}

struct FoncReport {
    double stationarity_u = 0.0;  ///< |u - P(u - g)|_{L2(Q)}
    double dtau_value = 0.0;
    TauCase tau_case = TauCase::Interior;
    double stationarity_tol = 0.0;
    double tau_tol = 0.0;
    bool u_satisfied = false;
    bool tau_satisfied = false;

    bool satisfied() const { return u_satisfied && tau_satisfied; }
};

inline double stationarity(const Control& u, const Control& g) {
    Control step = u;
    step.axpy(-1.0, g);
    Control diff = u;
    diff.axpy(-1.0, project_admissible(std::move(step)));
    return l2_norm(diff);
}

/// Sign condition of the tau derivative at a node: >= at 0, = in the
/// interior, <= at T, each up to `tol`.
inline bool tau_condition_holds(TauCase c, double dtau, double tol) {
    switch (c) {
        case TauCase::LeftBoundary: return dtau >= -tol;
        case TauCase::Interior: return std::abs(dtau) <= tol;
        case TauCase::RightBoundary: return dtau <= tol;
    }
    return false;
}

inline TauCase tau_case_of(int tau_index, const TimeGrid& tg) {
    if (tau_index == 0) return TauCase::LeftBoundary;
    if (tau_index == tg.n_steps()) return TauCase::RightBoundary;
    return TauCase::Interior;
}

inline FoncReport fonc_residuals(const Control& u, const Control& g, const StateTrajectory& traj, int tau_index,
                                 const ObjectiveSpec& obj, double stationarity_tol = 1e-4) {
    FoncReport r;
    r.stationarity_u = stationarity(u, g);
    r.dtau_value = dtau_J(traj, u, tau_index, obj);
    r.tau_case = tau_case_of(tau_index, traj.timegrid);
    r.stationarity_tol = stationarity_tol;
    r.tau_tol = obj.tau_tolerance();
    r.u_satisfied = r.stationarity_u <= stationarity_tol;
    r.tau_satisfied = tau_condition_holds(r.tau_case, r.dtau_value, r.tau_tol);
    return r;
}

}  // namespace chemodose
