#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "chemodose/objective_spec.hpp"
#include "chemodose/state_solver.hpp"

namespace chemodose {

/// How the tracking source is weighted in time.
enum class AdjointSource {
    /// Node-resolved window indicator on (tau - r, tau] and unit weight for the
    /// tracking term: the direct discretization of the continuous source.
    Indicator,
    /// Trapezoid weights of the objective's own time quadrature. With these
    /// weights the backward march is the exact transpose of the tangent step,
    /// so the reduced gradient matches the discrete objective.
    Quadrature,
};

struct AdjointOptions {
    AdjointSource source = AdjointSource::Quadrature;
    /// Test hook: flips the sign of the A psi''(phi) q term in the p-equation.
    bool sabotage_sign_flip = false;
};

struct AdjointTrajectory {
    TimeGrid timegrid;
    int tau_index = 0;
    std::vector<ScalarField> p;      ///< nodes 0..tau_index
    std::vector<ScalarField> q;      ///< q = Lap p
    std::vector<ScalarField> r_adj;  ///< adjoint nutrient

    /// p extended by zero beyond tau.
    ScalarField extended_p(int k) const {
        if (k <= tau_index) return p.at(static_cast<std::size_t>(k));
        return ScalarField(p.front().grid());
    }
};

/// Tracking source of the p-equation at node k in indicator form:
/// beta_Q (phi - phi_Q) + 1/(2r) chi_window(k) (2 beta_Omega (phi - phi_Omega) + beta_S),
/// with window nodes t_k in (t_tau - r, t_tau].
inline ScalarField adjoint_source(const ScalarField& phi_k, const ObjectiveSpec& obj, int k, int tau_index,
                                  const TimeGrid& tg) {
    const int m = obj.window_steps(tg);
    const bool in_window = k > tau_index - m && k <= tau_index;
    const ScalarField& tq = obj.phi_Q.at(k);
    const ScalarField& tw = obj.phi_Omega.at(k);
    ScalarField s(phi_k.grid());
    for (std::size_t i = 0; i < s.size(); ++i) {
        double v = obj.beta_Q * (phi_k[i] - tq[i]);
        if (in_window) v += (2.0 * obj.beta_Omega * (phi_k[i] - tw[i]) + obj.beta_S) / (2.0 * obj.r_relax);
        s[i] = v;
    }
    return s;
}

/// Same source with the objective's trapezoid time weights.
inline ScalarField adjoint_source_quadrature(const ScalarField& phi_k, const ObjectiveSpec& obj, int k,
                                             int tau_index, const TimeGrid& tg) {
    const int m = obj.window_steps(tg);
    const double cq = tracking_weight(k, tau_index);
    const double cw = window_weight_folded(k, tau_index, m);
    const ScalarField& tq = obj.phi_Q.at(k);
    const ScalarField& tw = obj.phi_Omega.at(k);
    ScalarField s(phi_k.grid());
    for (std::size_t i = 0; i < s.size(); ++i)
        s[i] = cq * obj.beta_Q * (phi_k[i] - tq[i]) +
               cw * (2.0 * obj.beta_Omega * (phi_k[i] - tw[i]) + obj.beta_S) / (2.0 * obj.r_relax);
    return s;
}

/// Backward march of the adjoint system on [0, t_tau] with p = r_adj = 0 at tau.
///
/// For k = tau, ..., 1 (coefficients frozen at the known node k, mirroring the
/// forward freeze at phi^n):
///   K p^{k-1} = p^k + dt A (psi''(phi^k) - S) Lap p^k
///             + dt h'(phi^k)(P sigma^{k+1} - apoptosis - alpha u^k) p^k
///             - dt C h'(phi^k) sigma^{k+1} r^k + dt source^k
///   M(h(phi^{k-1})) r^{k-1} = r^k + dt P h(phi^{k-1}) p^{k-1}
/// where K and M are the forward step's implicit operators.
inline AdjointTrajectory solve_adjoint(const StateTrajectory& base, const ProblemData& data, const Control& u,
                                       const ObjectiveSpec& obj, int tau_index, const AdjointOptions& opts = {}) {
    const TimeGrid& tg = base.timegrid;
    if (tau_index < 0 || tau_index > tg.n_steps())
        throw std::out_of_range("tau_index " + std::to_string(tau_index) + " outside [0, " +
                                std::to_string(tg.n_steps()) + "]");
    if (!(u.timegrid() == tg)) throw StructuralError("adjoint solve: control and trajectory time grids differ");

    const ModelParams& mp = data.params;
    const double dt = tg.dt();
    const double S = data.scheme.stabilization;
    const Grid& g = data.grid();
    const StepOperators ops(data, dt);
    const double curvature_sign = opts.sabotage_sign_flip ? -1.0 : 1.0;

    const auto nodes = static_cast<std::size_t>(tau_index) + 1;
    AdjointTrajectory adj;
    adj.timegrid = tg;
    adj.tau_index = tau_index;
    adj.p.assign(nodes, ScalarField(g));
    adj.q.assign(nodes, ScalarField(g));
    adj.r_adj.assign(nodes, ScalarField(g));

    for (int k = tau_index; k >= 1; --k) {
        const auto kk = static_cast<std::size_t>(k);
        const ScalarField& phik = base.phi[kk];
        const ScalarField& pk = adj.p[kk];
        const ScalarField& rk = adj.r_adj[kk];

        ScalarField rhs = opts.source == AdjointSource::Indicator
                              ? adjoint_source(phik, obj, k, tau_index, tg)
                              : adjoint_source_quadrature(phik, obj, k, tau_index, tg);
        rhs *= dt;
        rhs += pk;
        if (k < tau_index) {
            const ScalarField& sig_next = base.sigma[kk + 1];
            const ScalarField& uk = u.frame(k);
            const ScalarField hp = data.hprime_of(phik);
            const ScalarField lap_p = laplacian_neumann(pk);
            for (std::size_t i = 0; i < rhs.size(); ++i) {
                const double d2 = curvature_sign * data.potential.psi2(phik[i]);
                rhs[i] += dt * mp.A * (d2 - S) * lap_p[i];
                rhs[i] += dt * hp[i] * (mp.proliferation * sig_next[i] - mp.apoptosis - mp.alpha * uk[i]) * pk[i];
                rhs[i] -= dt * mp.consumption * hp[i] * sig_next[i] * rk[i];
            }
        }
        ScalarField p_prev = pk;
        ops.solve_phase(rhs, p_prev);

        const ScalarField h_prev = data.h_of(base.phi[kk - 1]);
        ScalarField rhs_r = rk;
        for (std::size_t i = 0; i < rhs_r.size(); ++i) rhs_r[i] += dt * mp.proliferation * h_prev[i] * p_prev[i];
        ScalarField r_prev = rk;
        ops.solve_nutrient(h_prev, rhs_r, r_prev);

        adj.q[kk - 1] = laplacian_neumann(p_prev);
        adj.p[kk - 1] = std::move(p_prev);
        adj.r_adj[kk - 1] = std::move(r_prev);
    }
    return adj;
}

}  // namespace chemodose
