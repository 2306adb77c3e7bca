#pragma once

#include <cmath>
#include <random>

#include "chemodose/objective.hpp"
#include "chemodose/verification.hpp"

namespace fixtures {

using namespace chemodose;

/// One tumour seed of half-width 0.25 in the unit interval, nutrient saturated.
inline ProblemData seed_problem(int n) {
    const Grid g = Grid::line(n, 1.0);
    ProblemData d;
    const double width = std::sqrt(d.params.B / d.params.A);
    d.phi0 = ScalarField::from_function(
        g, [&](double x, double) { return std::tanh((0.25 - std::abs(x - 0.5)) / (std::sqrt(2.0) * width)); });
    d.sigma0 = ScalarField(g, 1.0);
    d.sigmaS = ScalarField(g, 1.0);
    return d;
}

inline ObjectiveSpec host_targets(const Grid& g) {
    ObjectiveSpec o;
    o.phi_Q = TargetField(ScalarField(g, -1.0));
    o.phi_Omega = TargetField(ScalarField(g, -1.0));
    return o;
}

inline ScalarField uniform_field(const Grid& g, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    ScalarField f(g);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = d(rng);
    return f;
}

inline double max_abs_diff(const ScalarField& a, const ScalarField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double max_abs(const ScalarField& a) {
    double m = 0.0;
    for (double v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace fixtures
