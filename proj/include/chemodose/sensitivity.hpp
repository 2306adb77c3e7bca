#pragma once

#include <algorithm>
#include <vector>

#include "chemodose/state_solver.hpp"

namespace chemodose {

/// Directional derivative of the control-to-state map, one frame per node.
struct LinearizedTrajectory {
    TimeGrid timegrid;
    std::vector<ScalarField> Phi;
    std::vector<ScalarField> Xi;
    std::vector<ScalarField> Sigma;
};

/// Solves the linearized state equations around `base` in direction `w`.
///
/// The stepping is the exact tangent of step_state: same implicit operators,
/// coefficients frozen at the base node values phi^n, sigma^{n+1}, u^n.
inline LinearizedTrajectory solve_linearized(const StateTrajectory& base, const ProblemData& data,
                                             const Control& u_bar, const Control& w) {
    const TimeGrid& tg = base.timegrid;
    if (!(u_bar.timegrid() == tg) || !(w.timegrid() == tg))
        throw StructuralError("linearized solve: time grids of base, control and direction differ");
    w.frame(0).require_same(base.phi[0]);

    const ModelParams& mp = data.params;
    const double dt = tg.dt();
    const double S = data.scheme.stabilization;
    const StepOperators ops(data, dt);
    const Grid& g = data.grid();

    LinearizedTrajectory lin;
    lin.timegrid = tg;
    lin.Phi.assign(1, ScalarField(g));
    lin.Xi.assign(1, ScalarField(g));
    lin.Sigma.assign(1, ScalarField(g));
    for (int n = 0; n < tg.n_steps(); ++n) {
        const auto k = static_cast<std::size_t>(n);
        const ScalarField& phib = base.phi[k];
        const ScalarField& sigb_next = base.sigma[k + 1];
        const ScalarField& ub = u_bar.frame(n);
        const ScalarField& wn = w.frame(n);
        const ScalarField& Phin = lin.Phi[k];
        const ScalarField hn = data.h_of(phib);
        const ScalarField hpn = data.hprime_of(phib);
        const ScalarField d2 = map(phib, data.potential.psi2);

        ScalarField rhs_sigma = lin.Sigma[k];
        for (std::size_t i = 0; i < rhs_sigma.size(); ++i)
            rhs_sigma[i] -= dt * mp.consumption * hpn[i] * sigb_next[i] * Phin[i];
        ScalarField sigma = lin.Sigma[k];
        ops.solve_nutrient(hn, rhs_sigma, sigma);

        ScalarField explicit_part(g);
        for (std::size_t i = 0; i < g.cell_count(); ++i) explicit_part[i] = (d2[i] - S) * Phin[i];
        ScalarField rhs_phi = Phin;
        rhs_phi.axpy(dt * mp.A, laplacian_neumann(explicit_part));
        for (std::size_t i = 0; i < g.cell_count(); ++i) {
            rhs_phi[i] += dt * (hn[i] * (mp.proliferation * sigma[i] - mp.alpha * wn[i]) +
                                hpn[i] * Phin[i] *
                                    (mp.proliferation * sigb_next[i] - mp.apoptosis - mp.alpha * ub[i]));
        }
        ScalarField phi = Phin;
        ops.solve_phase(rhs_phi, phi);

        ScalarField xi = laplacian_neumann(phi);
        xi *= -mp.B;
        for (std::size_t i = 0; i < g.cell_count(); ++i) xi[i] += mp.A * (d2[i] * Phin[i] + S * (phi[i] - Phin[i]));

        lin.Phi.push_back(std::move(phi));
        lin.Xi.push_back(std::move(xi));
        lin.Sigma.push_back(std::move(sigma));
    }
    return lin;
}

struct TaylorRemainder {
    double theta_norm = 0.0;  ///< max over nodes of |phi(u+eps w) - phi(u) - eps Phi|_{L2}
    double xi_norm = 0.0;     ///< max over nodes of |sigma(u+eps w) - sigma(u) - eps Sigma|_{L2}
};

/// First-order Taylor remainders of the control-to-state map along eps * w.
/// The perturbed control is not clamped.
inline TaylorRemainder taylor_remainder(const ProblemData& data, const Control& u_bar, const Control& w, double eps) {
    const TimeGrid& tg = u_bar.timegrid();
    const StateTrajectory base = solve_state(data, u_bar, tg);
    Control u_hat = u_bar;
    u_hat.axpy(eps, w);
    const StateTrajectory pert = solve_state(data, u_hat, tg);
    const LinearizedTrajectory lin = solve_linearized(base, data, u_bar, w);

    TaylorRemainder r;
    for (std::size_t k = 0; k < base.phi.size(); ++k) {
        ScalarField theta = pert.phi[k] - base.phi[k];
        theta.axpy(-eps, lin.Phi[k]);
        ScalarField xi = pert.sigma[k] - base.sigma[k];
        xi.axpy(-eps, lin.Sigma[k]);
        r.theta_norm = std::max(r.theta_norm, l2_norm(theta));
        r.xi_norm = std::max(r.xi_norm, l2_norm(xi));
    }
    return r;
}

}  // namespace chemodose
