#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "chemodose/state_solver.hpp"
#include "chemodose/verification.hpp"
#include "fixtures.hpp"

using namespace chemodose;

namespace {

ProblemData constant_problem(const Grid& g, double phi, double sigma, double sigmaS) {
    ProblemData d;
    d.phi0 = ScalarField(g, phi);
    d.sigma0 = ScalarField(g, sigma);
    d.sigmaS = ScalarField(g, sigmaS);
    return d;
}

ProblemData random_problem(const Grid& g, std::mt19937_64& rng) {
    ProblemData d;
    d.phi0 = fixtures::uniform_field(g, rng, -1, 1);
    d.sigma0 = fixtures::uniform_field(g, rng, 0, 1);
    d.sigmaS = fixtures::uniform_field(g, rng, 0, 1);
    return d;
}

}  // namespace

TEST(StepState, StationaryPurePhase) {
    const Grid g = Grid::line(16, 1.0);
    ProblemData d = constant_problem(g, 1.0, 0.5, 0.5);
    d.params.proliferation = d.params.apoptosis = 0.0;
    d.params.alpha = 0.0;
    const StateStep s = step_state(d.phi0, d.sigma0, ScalarField(g, 0.3), d, 0.01);
    EXPECT_LE(fixtures::max_abs_diff(s.phi, ScalarField(g, 1.0)), 1e-12);
    EXPECT_LE(fixtures::max_abs(s.mu), 1e-12);
}

TEST(StepState, SupplyEquilibrium) {
    const Grid g = Grid::box(6, 6, 1.0, 1.0);
    ProblemData d = constant_problem(g, 0.2, 0.8, 0.8);
    d.params.consumption = 0.0;
    const StateStep s = step_state(d.phi0, d.sigma0, ScalarField(g, 0.0), d, 0.05);
    EXPECT_LE(fixtures::max_abs_diff(s.sigma, ScalarField(g, 0.8)), 1e-12);
}

// The step must satisfy the discrete equations it claims to solve; residuals
// are evaluated with the stencil directly rather than the factored operators.
TEST(StepState, SatisfiesDiscreteEquations) {
    std::mt19937_64 rng(21);
    for (const Grid& g : {Grid::line(40, 1.0), Grid::box(10, 12, 1.0, 1.2)}) {
        const ProblemData d = random_problem(g, rng);
        const ScalarField u = fixtures::uniform_field(g, rng, 0, 1);
        const double dt = 0.01;
        const StateStep s = step_state(d.phi0, d.sigma0, u, d, dt);
        const ModelParams& p = d.params;
        const ScalarField lap_sigma = laplacian_neumann(s.sigma);
        const ScalarField lap_mu = laplacian_neumann(s.mu);
        const ScalarField lap_phi = laplacian_neumann(s.phi);
        double r_sigma = 0, r_phi = 0, r_mu = 0;
        for (std::size_t i = 0; i < g.cell_count(); ++i) {
            const double h = d.interp.hval(d.phi0[i]);
            r_sigma = std::max(r_sigma, std::abs(s.sigma[i] - d.sigma0[i] -
                                                 dt * (lap_sigma[i] - p.consumption * h * s.sigma[i] +
                                                       p.supply * (d.sigmaS[i] - s.sigma[i]))));
            r_phi = std::max(r_phi, std::abs(s.phi[i] - d.phi0[i] -
                                             dt * (lap_mu[i] + h * (p.proliferation * s.sigma[i] - p.apoptosis -
                                                                    p.alpha * u[i]))));
            const double mu = p.A * (d.potential.psi1(d.phi0[i]) + 2.0 * (s.phi[i] - d.phi0[i])) - p.B * lap_phi[i];
            r_mu = std::max(r_mu, std::abs(s.mu[i] - mu));
        }
        EXPECT_LE(r_sigma, 1e-11);
        EXPECT_LE(r_phi, 1e-9);
        EXPECT_LE(r_mu, 1e-9);
    }
}

TEST(SolveState, GlobalEquilibrium) {
    const Grid g = Grid::line(16, 1.0);
    ProblemData d = constant_problem(g, -1.0, 1.0, 1.0);
    d.params.proliferation = d.params.apoptosis = d.params.consumption = d.params.supply = 0.0;
    const TimeGrid tg(1.0, 20);
    const StateTrajectory tr = solve_state(d, Control(tg, g, 0.0), tg);
    ASSERT_EQ(tr.phi.size(), 21u);
    for (std::size_t k = 0; k < tr.phi.size(); ++k) {
        EXPECT_LE(fixtures::max_abs_diff(tr.phi[k], ScalarField(g, -1.0)), 1e-12);
        EXPECT_LE(fixtures::max_abs(tr.mu[k]), 1e-12);
        EXPECT_LE(fixtures::max_abs_diff(tr.sigma[k], ScalarField(g, 1.0)), 1e-12);
    }
    const ResidualSeries rs = residual_report(tr, d, Control(tg, g, 0.0));
    for (std::size_t n = 0; n < rs.mass_phi.size(); ++n) {
        EXPECT_LE(std::abs(rs.mass_phi[n]), 1e-12);
        EXPECT_LE(std::abs(rs.mass_sigma[n]), 1e-12);
        EXPECT_LE(std::abs(rs.energy_increment[n]), 1e-12);
    }
}

TEST(SolveState, FrameCountsAndInitialFrames) {
    const ProblemData d = fixtures::seed_problem(32);
    const TimeGrid tg(0.5, 10);
    const StateTrajectory tr = solve_state(d, Control(tg, d.grid(), 0.5), tg);
    EXPECT_EQ(tr.phi.size(), 11u);
    EXPECT_EQ(tr.mu.size(), 11u);
    EXPECT_EQ(tr.sigma.size(), 11u);
    EXPECT_EQ(fixtures::max_abs_diff(tr.phi[0], d.phi0), 0.0);
    EXPECT_EQ(fixtures::max_abs_diff(tr.sigma[0], d.sigma0), 0.0);
}

TEST(SolveState, RandomRunsKeepNutrientBoundsAndMassLedgers) {
    std::mt19937_64 rng(23);
    const Grid g = Grid::line(48, 1.0);
    const TimeGrid tg(1.0, 50);
    for (int trial = 0; trial < 8; ++trial) {
        const ProblemData d = random_problem(g, rng);
        const Control u = project_admissible(smooth_random_control(tg, g, 100 + trial, 0.5, 0.9));
        const StateTrajectory tr = solve_state(d, u, tg);
        EXPECT_LE(sigma_bound_violation(tr), 1e-8);
        const ResidualSeries rs = residual_report(tr, d, u);
        double acc = 0.0;
        for (std::size_t n = 0; n < rs.mass_sigma.size(); ++n) {
            EXPECT_LE(std::abs(rs.mass_sigma[n]), 1e-9);
            acc += rs.mass_phi[n];
            EXPECT_LE(std::abs(acc), 1e-8);
        }
    }
}

TEST(SolveState, PhaseMassTelescopesFromTrajectory) {
    const ProblemData d = fixtures::seed_problem(64);
    const TimeGrid tg(1.0, 40);
    const Control u = smooth_random_control(tg, d.grid(), 4, 0.4, 0.3);
    const StateTrajectory tr = solve_state(d, u, tg);
    double acc = 0.0;
    const ModelParams& p = d.params;
    for (int j = 0; j < tg.n_steps(); ++j) {
        const auto k = static_cast<std::size_t>(j);
        ScalarField src(d.grid());
        for (std::size_t i = 0; i < src.size(); ++i)
            src[i] = d.interp.hval(tr.phi[k][i]) *
                     (p.proliferation * tr.sigma[k + 1][i] - p.apoptosis - p.alpha * u.frame(j)[i]);
        acc += tg.dt() * integrate(src);
        EXPECT_NEAR(integrate(tr.phi[k + 1]) - integrate(tr.phi[0]), acc, 1e-8);
    }
}

TEST(Energy, ClosedFormValues) {
    const Grid g = Grid::box(5, 5, 2.0, 1.0);
    ProblemData d = constant_problem(g, 1.0, 1.0, 1.0);
    EXPECT_EQ(energy(ScalarField(g, 1.0), d), 0.0);
    d.params.B = 7.0;
    EXPECT_NEAR(energy(ScalarField(g, 0.0), d), 0.25 * 2.0, 1e-14);
}

TEST(Energy, SourceFreeRunIsDissipative) {
    std::mt19937_64 rng(29);
    const Grid g = Grid::line(64, 1.0);
    ProblemData d = random_problem(g, rng);
    d.params.proliferation = d.params.apoptosis = 0.0;
    d.params.alpha = 0.0;
    const TimeGrid tg(1.0, 200);
    const StateTrajectory tr = solve_state(d, Control(tg, g, 0.0), tg);
    double prev = energy(tr.phi[0], d);
    for (std::size_t k = 1; k < tr.phi.size(); ++k) {
        const double e = energy(tr.phi[k], d);
        EXPECT_LE(e - prev, 1e-10) << "step " << k;
        prev = e;
    }
}

// The discrete energy identity holds up to a first-order defect in dt.
TEST(ResidualReport, EnergyDefectIsFirstOrder) {
    const ProblemData d = fixtures::seed_problem(64);
    const auto uf = smooth_random_function(d.grid(), 0.5, 8, 0.5, 0.3);
    std::vector<double> defects;
    for (int n : {50, 100, 200}) {
        const TimeGrid tg(0.5, n);
        const Control u = Control::from_function(tg, d.grid(), uf);
        defects.push_back(residual_report(solve_state(d, u, tg), d, u).integrated_energy_defect(tg.dt()));
    }
    EXPECT_NEAR(defects[0] / defects[1], 2.0, 0.3);
    EXPECT_NEAR(defects[1] / defects[2], 2.0, 0.3);
}

TEST(ResidualReport, CsvShape) {
    const ProblemData d = fixtures::seed_problem(16);
    const TimeGrid tg(1.0, 4);
    const Control u(tg, d.grid(), 0.0);
    const std::string csv = residual_report(solve_state(d, u, tg), d, u).to_csv(tg.dt());
    EXPECT_EQ(csv.rfind("step,t,mass_phi_residual,mass_sigma_residual,energy_increment,energy_defect\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(SolveState, BitIdenticalReruns) {
    const ProblemData d = fixtures::seed_problem(64);
    const TimeGrid tg(1.0, 50);
    const Control u = smooth_random_control(tg, d.grid(), 2, 0.5, 0.3);
    const StateTrajectory a = solve_state(d, u, tg);
    const StateTrajectory b = solve_state(d, u, tg);
    for (std::size_t k = 0; k < a.phi.size(); ++k) {
        EXPECT_EQ(fixtures::max_abs_diff(a.phi[k], b.phi[k]), 0.0);
        EXPECT_EQ(fixtures::max_abs_diff(a.sigma[k], b.sigma[k]), 0.0);
    }
}

TEST(SolveState, ConjugateGradientMatchesDirect) {
    ProblemData d = fixtures::seed_problem(48);
    const TimeGrid tg(0.5, 25);
    const Control u(tg, d.grid(), 0.5);
    const StateTrajectory a = solve_state(d, u, tg);
    d.scheme.linear.kind = LinearSolverKind::ConjugateGradient;
    const StateTrajectory b = solve_state(d, u, tg);
    EXPECT_LE(fixtures::max_abs_diff(a.phi.back(), b.phi.back()), 1e-7);
    EXPECT_LE(fixtures::max_abs_diff(a.sigma.back(), b.sigma.back()), 1e-7);
}

TEST(SolveState, TwoDimensionalRun) {
    const Grid g = Grid::box(16, 16, 1.0, 1.0);
    ProblemData d;
    d.phi0 = ScalarField::from_function(
        g, [](double x, double y) { return std::tanh((0.3 - std::hypot(x - 0.5, y - 0.5)) / 0.05); });
    d.sigma0 = ScalarField(g, 1.0);
    d.sigmaS = ScalarField(g, 1.0);
    const TimeGrid tg(0.2, 20);
    const Control u(tg, g, 0.3);
    const StateTrajectory tr = solve_state(d, u, tg);
    EXPECT_LE(sigma_bound_violation(tr), 1e-8);
    for (double r : residual_report(tr, d, u).mass_sigma) EXPECT_LE(std::abs(r), 1e-9);
}

TEST(SolveState, StructuralErrors) {
    const ProblemData d = fixtures::seed_problem(16);
    const TimeGrid tg(1.0, 10);
    EXPECT_THROW(solve_state(d, Control(TimeGrid(1.0, 12), d.grid(), 0.0), tg), StructuralError);
    EXPECT_THROW(solve_state(d, Control(tg, Grid::line(32, 1.0), 0.0), tg), StructuralError);
    ProblemData bad = d;
    bad.sigma0 = ScalarField(Grid::line(8, 1.0), 1.0);
    EXPECT_THROW(solve_state(bad, Control(tg, d.grid(), 0.0), tg), StructuralError);
}

TEST(SolveState, NonFiniteStateReportsStep) {
    ProblemData d = fixtures::seed_problem(16);
    d.phi0[3] = std::nan("");
    const TimeGrid tg(1.0, 10);
    try {
        solve_state(d, Control(tg, d.grid(), 0.0), tg);
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.step(), 0);
    }
}

TEST(SolveState, SolverCapReportsStep) {
    ProblemData d = fixtures::seed_problem(32);
    d.scheme.linear = {LinearSolverKind::ConjugateGradient, 1e-300, 1};
    const TimeGrid tg(1.0, 10);
    try {
        solve_state(d, Control(tg, d.grid(), 0.5), tg);
        FAIL() << "expected SolverError";
    } catch (const SolverError& e) {
        EXPECT_EQ(e.step(), 0);
    }
}

TEST(ProblemData, ValidateRanges) {
    ProblemData d = fixtures::seed_problem(16);
    EXPECT_NO_THROW(d.validate());
    d.sigma0 = ScalarField(d.grid(), 1.5);
    EXPECT_THROW(d.validate(), std::invalid_argument);
    d.sigma0 = ScalarField(d.grid(), 1.0);
    d.sigmaS = ScalarField(d.grid(), -0.1);
    EXPECT_THROW(d.validate(), std::invalid_argument);
}
