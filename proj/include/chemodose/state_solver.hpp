#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "chemodose/grid.hpp"
#include "chemodose/linear_solver.hpp"
#include "chemodose/model.hpp"

namespace chemodose {

/// Time-discretization knobs shared by the forward, linearized and adjoint
/// solvers.
struct SchemeOptions {
    /// Linear stabilization constant of the semi-implicit Cahn-Hilliard step.
    /// Must dominate sup psi'' over the iterates for energy stability.
    double stabilization = 2.0;
    LinearSolverOptions linear;
};

struct ProblemData {
    ScalarField phi0;
    ScalarField sigma0;
    ScalarField sigmaS;  ///< time-constant vasculature supply
    ModelParams params;
    DoubleWellPotential potential = default_potential();
    Interpolant interp = default_interpolant();
    SchemeOptions scheme;

    const Grid& grid() const { return phi0.grid(); }

    /// Structural consistency only; range conditions are in validate().
    void check_structure() const {
        phi0.require_same(sigma0);
        phi0.require_same(sigmaS);
    }

    void validate() const {
        check_structure();
        params.validate();
        if (sigma0.min() < 0.0 || sigma0.max() > 1.0)
            throw std::invalid_argument("initial nutrient must lie in [0, 1]");
        if (sigmaS.min() < 0.0 || sigmaS.max() > 1.0)
            throw std::invalid_argument("vasculature nutrient must lie in [0, 1]");
        if (!phi0.all_finite()) throw std::invalid_argument("initial phase field must be finite");
    }

    ScalarField h_of(const ScalarField& phi) const { return map(phi, interp.hval); }
    ScalarField hprime_of(const ScalarField& phi) const { return map(phi, interp.hprime); }
};

/// Implicit operators of one time step on a fixed grid and step size.
///
///   phase:    K = I + dt (B Lap^2 - A S Lap)      (constant, factored once)
///   nutrient: M(h) = I + dt (-Lap + supply + consumption h)
class StepOperators {
public:
    StepOperators(const ProblemData& data, double dt)
        : grid_(data.grid()),
          dt_(dt),
          consumption_(data.params.consumption),
          supply_(data.params.supply),
          linear_(data.scheme.linear),
          lap_(SparseRows::laplacian(grid_)) {
        if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
        SparseRows k = SparseRows::identity(grid_.cell_count());
        k.axpy(dt * data.params.B, multiply(lap_, lap_));
        k.axpy(-dt * data.params.A * data.scheme.stabilization, lap_);
        phase_ = SpdSystem(std::move(k), linear_);
    }

    double dt() const noexcept { return dt_; }
    const Grid& grid() const noexcept { return grid_; }

    /// Solves K x = rhs; x is overwritten (initial guess for CG).
    void solve_phase(const ScalarField& rhs, ScalarField& x) const {
        rhs.require_same(x);
        phase_.solve(rhs.values(), x.values());
    }

    /// Solves M(h) x = rhs.
    void solve_nutrient(const ScalarField& h, const ScalarField& rhs, ScalarField& x) const {
        rhs.require_same(x);
        SparseRows m = SparseRows::identity(grid_.cell_count());
        m.axpy(-dt_, lap_);
        std::vector<double> diag(grid_.cell_count());
        for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = dt_ * (supply_ + consumption_ * h[i]);
        m.add_diagonal(diag);
        SpdSystem(std::move(m), linear_).solve(rhs.values(), x.values());
    }

private:
    Grid grid_;
    double dt_;
    double consumption_;
    double supply_;
    LinearSolverOptions linear_;
    SparseRows lap_;
    SpdSystem phase_;
};

struct StateStep {
    ScalarField phi;
    ScalarField mu;
    ScalarField sigma;
};

/// One step of the scheme: nutrient by backward Euler with h frozen at
/// phi_n, then the linearly stabilized semi-implicit Cahn-Hilliard update.
inline StateStep step_state(const StepOperators& ops, const ScalarField& phi_n, const ScalarField& sigma_n,
                            const ScalarField& u_n, const ProblemData& data) {
    phi_n.require_same(sigma_n);
    phi_n.require_same(u_n);
    const ModelParams& mp = data.params;
    const double dt = ops.dt();
    const double S = data.scheme.stabilization;
    const ScalarField hn = data.h_of(phi_n);

    ScalarField rhs_sigma = sigma_n;
    rhs_sigma.axpy(dt * mp.supply, data.sigmaS);
    ScalarField sigma = sigma_n;
    ops.solve_nutrient(hn, rhs_sigma, sigma);

    const ScalarField dpsi = map(phi_n, data.potential.psi1);
    ScalarField explicit_part = dpsi;
    explicit_part.axpy(-S, phi_n);
    ScalarField rhs_phi = phi_n;
    rhs_phi.axpy(dt * mp.A, laplacian_neumann(explicit_part));
    for (std::size_t i = 0; i < rhs_phi.size(); ++i)
        rhs_phi[i] += dt * hn[i] * (mp.proliferation * sigma[i] - mp.apoptosis - mp.alpha * u_n[i]);
    ScalarField phi = phi_n;
    ops.solve_phase(rhs_phi, phi);

    ScalarField mu = laplacian_neumann(phi);
    mu *= -mp.B;
    for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += mp.A * (dpsi[i] + S * (phi[i] - phi_n[i]));

    if (!phi.all_finite() || !sigma.all_finite()) throw DivergenceError("non-finite state after time step");
    return {std::move(phi), std::move(mu), std::move(sigma)};
}

inline StateStep step_state(const ScalarField& phi_n, const ScalarField& sigma_n, const ScalarField& u_n,
                            const ProblemData& data, double dt) {
    return step_state(StepOperators(data, dt), phi_n, sigma_n, u_n, data);
}

/// All time nodes of a forward solve (full checkpointing).
struct StateTrajectory {
    TimeGrid timegrid;
    std::vector<ScalarField> phi;
    std::vector<ScalarField> mu;
    std::vector<ScalarField> sigma;

    int n_steps() const noexcept { return timegrid.n_steps(); }
};

/// Chemical potential consistent with a phase field, A psi'(phi) - B Lap phi.
inline ScalarField chemical_potential(const ScalarField& phi, const ProblemData& data) {
    ScalarField mu = laplacian_neumann(phi);
    mu *= -data.params.B;
    for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += data.params.A * data.potential.psi1(phi[i]);
    return mu;
}

inline StateTrajectory solve_state(const ProblemData& data, const Control& u, const TimeGrid& tg) {
    data.check_structure();
    if (!(u.timegrid() == tg)) throw StructuralError("control is not defined on the requested time grid");
    u.frame(0).require_same(data.phi0);
    if (!data.phi0.all_finite() || !data.sigma0.all_finite() || !data.sigmaS.all_finite())
        throw DivergenceError("non-finite initial data at step 0", 0);

    const StepOperators ops(data, tg.dt());
    StateTrajectory traj;
    traj.timegrid = tg;
    const auto nodes = static_cast<std::size_t>(tg.node_count());
    traj.phi.reserve(nodes);
    traj.mu.reserve(nodes);
    traj.sigma.reserve(nodes);
    traj.phi.push_back(data.phi0);
    traj.mu.push_back(chemical_potential(data.phi0, data));
    traj.sigma.push_back(data.sigma0);
    for (int k = 0; k < tg.n_steps(); ++k) {
        if (!u.frame(k).all_finite()) throw DivergenceError("non-finite dose at step " + std::to_string(k), k);
        try {
            StateStep s = step_state(ops, traj.phi.back(), traj.sigma.back(), u.frame(k), data);
            traj.phi.push_back(std::move(s.phi));
            traj.mu.push_back(std::move(s.mu));
            traj.sigma.push_back(std::move(s.sigma));
        } catch (const SolverError& e) {
            throw SolverError(std::string(e.what()) + " at step " + std::to_string(k), e.residual(), k);
        } catch (const DivergenceError& e) {
            throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(k), k);
        }
    }
    return traj;
}

/// Ginzburg-Landau energy A int psi(phi) + B/2 int |grad phi|^2.
inline double energy(const ScalarField& phi, const ProblemData& data) {
    double bulk = 0.0;
    for (double v : phi.values()) bulk += data.potential.psi(v);
    bulk *= phi.grid().cell_volume();
    return data.params.A * bulk + 0.5 * data.params.B * gradient_sq_integral(phi);
}

/// Per-step diagnostics of the discrete mass and energy identities.
struct ResidualSeries {
    /// int phi^{n+1} - int phi^n - dt int h(phi^n)(P sigma^{n+1} - apoptosis - alpha u^n)
    std::vector<double> mass_phi;
    /// int sigma^{n+1} - int sigma^n - dt [-C int h(phi^n) sigma^{n+1} + supply int (sigmaS - sigma^{n+1})]
    std::vector<double> mass_sigma;
    /// E^{n+1} - E^n
    std::vector<double> energy_increment;
    /// (E^{n+1}-E^n)/dt + |grad mu^{n+1}|^2 - int (P sigma - apoptosis - alpha u) h mu
    std::vector<double> energy_defect;

    std::string to_csv(double dt) const {
        std::string out = "step,t,mass_phi_residual,mass_sigma_residual,energy_increment,energy_defect\n";
        char buf[256];
        for (std::size_t n = 0; n < mass_phi.size(); ++n) {
            std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", n + 1, (n + 1) * dt, mass_phi[n],
                          mass_sigma[n], energy_increment[n], energy_defect[n]);
            out += buf;
        }
        return out;
    }

    /// dt-weighted L1 norm of the energy defect.
    double integrated_energy_defect(double dt) const {
        double s = 0.0;
        for (double v : energy_defect) s += std::abs(v);
        return s * dt;
    }
};

inline ResidualSeries residual_report(const StateTrajectory& traj, const ProblemData& data, const Control& u) {
    const ModelParams& mp = data.params;
    const double dt = traj.timegrid.dt();
    ResidualSeries rs;
    double e_prev = energy(traj.phi[0], data);
    for (int n = 0; n < traj.n_steps(); ++n) {
        const auto k = static_cast<std::size_t>(n);
        const ScalarField hn = data.h_of(traj.phi[k]);
        const ScalarField& sig = traj.sigma[k + 1];
        const ScalarField& un = u.frame(n);

        ScalarField growth(hn.grid());
        for (std::size_t i = 0; i < growth.size(); ++i)
            growth[i] = mp.proliferation * sig[i] - mp.apoptosis - mp.alpha * un[i];
        const ScalarField gh = hadamard(growth, hn);
        rs.mass_phi.push_back(integrate(traj.phi[k + 1]) - integrate(traj.phi[k]) - dt * integrate(gh));

        const double consumed = integrate(hadamard(hn, sig));
        const double supplied = integrate(data.sigmaS) - integrate(sig);
        rs.mass_sigma.push_back(integrate(sig) - integrate(traj.sigma[k]) -
                                dt * (-mp.consumption * consumed + mp.supply * supplied));

        const double e_next = energy(traj.phi[k + 1], data);
        rs.energy_increment.push_back(e_next - e_prev);
        rs.energy_defect.push_back((e_next - e_prev) / dt + gradient_sq_integral(traj.mu[k + 1]) -
                                   inner_product(gh, traj.mu[k + 1]));
        e_prev = e_next;
    }
    return rs;
}

}  // namespace chemodose
