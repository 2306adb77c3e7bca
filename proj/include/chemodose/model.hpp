#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "chemodose/grid.hpp"

namespace chemodose {

/// Rate coefficients of the tumour model (all dimensionless).
struct ModelParams {
    double proliferation = 1.0;  ///< P
    double apoptosis = 0.5;      ///< apoptosis rate
    double consumption = 1.0;    ///< nutrient consumption rate
    double supply = 1.0;         ///< nutrient supply rate from the vasculature
    double alpha = 2.0;          ///< drug kill rate
    double A = 1.0;              ///< potential scale
    double B = 1e-3;             ///< gradient-energy scale

    void validate() const {
        if (proliferation < 0 || apoptosis < 0 || consumption < 0 || supply < 0)
            throw std::invalid_argument("proliferation, apoptosis, consumption and supply rates must be nonnegative");
        if (!(alpha > 0)) throw std::invalid_argument("alpha must be positive");
        if (!(A > 0) || !(B > 0)) throw std::invalid_argument("A and B must be positive");
    }
};

/// Double-well potential with its first two derivatives.
///
/// Custom potentials are accepted as-is; the growth bounds that the analysis
/// relies on are not checked at runtime.
struct DoubleWellPotential {
    std::function<double(double)> psi;
    std::function<double(double)> psi1;
    std::function<double(double)> psi2;
};

/// Interpolation function gating the tumour-specific source terms.
struct Interpolant {
    std::function<double(double)> hval;
    std::function<double(double)> hprime;
};

/// Quartic double well 1/4 (1 - s^2)^2.
inline DoubleWellPotential default_potential() {
    return {
        [](double s) {
            const double a = 1.0 - s * s;
            return 0.25 * a * a;
        },
        [](double s) { return s * s * s - s; },
        [](double s) { return 3.0 * s * s - 1.0; },
    };
}

/// Quintic smoothstep in t = (s+1)/2, constant outside [-1, 1].
inline Interpolant default_interpolant() {
    return {
        [](double s) {
            const double t = std::clamp(0.5 * (s + 1.0), 0.0, 1.0);
            return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
        },
        [](double s) {
            if (s <= -1.0 || s >= 1.0) return 0.0;
            const double t = 0.5 * (s + 1.0);
            const double a = t * (1.0 - t);
            return 15.0 * a * a;
        },
    };
}

/// Dose field, one frame per time node. Frame k acts on [t_k, t_{k+1}); the
/// last frame lies beyond the horizon and carries zero quadrature weight.
class Control {
public:
    Control() = default;
    Control(const TimeGrid& tg, const Grid& grid, double value = 0.0)
        : timegrid_(tg), frames_(static_cast<std::size_t>(tg.node_count()), ScalarField(grid, value)) {}
    Control(const TimeGrid& tg, std::vector<ScalarField> frames) : timegrid_(tg), frames_(std::move(frames)) {
        if (frames_.size() != static_cast<std::size_t>(tg.node_count()))
            throw StructuralError("control frame count does not match time grid");
        for (const auto& f : frames_) f.require_same(frames_.front());
    }

    template <class F>
    static Control from_function(const TimeGrid& tg, const Grid& grid, F&& f) {
        std::vector<ScalarField> frames;
        frames.reserve(static_cast<std::size_t>(tg.node_count()));
        for (int k = 0; k < tg.node_count(); ++k) {
            const double t = tg.time(k);
            frames.push_back(ScalarField::from_function(grid, [&](double x, double y) { return f(x, y, t); }));
        }
        return Control(tg, std::move(frames));
    }

    const TimeGrid& timegrid() const noexcept { return timegrid_; }
    const Grid& grid() const { return frames_.front().grid(); }
    int frame_count() const noexcept { return static_cast<int>(frames_.size()); }
    const ScalarField& frame(int k) const { return frames_.at(static_cast<std::size_t>(k)); }
    ScalarField& frame(int k) { return frames_.at(static_cast<std::size_t>(k)); }
    const std::vector<ScalarField>& frames() const noexcept { return frames_; }

    Control& axpy(double s, const Control& o) {
        require_same(o);
        for (std::size_t k = 0; k < frames_.size(); ++k) frames_[k].axpy(s, o.frames_[k]);
        return *this;
    }
    Control& operator*=(double s) {
        for (auto& f : frames_) f *= s;
        return *this;
    }

    bool admissible() const {
        for (const auto& f : frames_)
            for (double v : f.values())
                if (!(v >= 0.0 && v <= 1.0)) return false;
        return true;
    }

    void require_same(const Control& o) const {
        if (!(timegrid_ == o.timegrid_) || frames_.size() != o.frames_.size())
            throw StructuralError("controls live on different time grids");
        if (!frames_.empty()) frames_.front().require_same(o.frames_.front());
    }

private:
    TimeGrid timegrid_;
    std::vector<ScalarField> frames_;
};

/// L2(Q) pairing of piecewise-constant-in-time fields: sum over the n_steps
/// intervals of dt * <a_k, b_k>.
inline double inner_product(const Control& a, const Control& b) {
    a.require_same(b);
    const double dt = a.timegrid().dt();
    double s = 0.0;
    for (int k = 0; k < a.timegrid().n_steps(); ++k) s += inner_product(a.frame(k), b.frame(k));
    return dt * s;
}

inline double l2_norm(const Control& a) { return std::sqrt(inner_product(a, a)); }

/// Pointwise clamp into [0, 1].
inline Control project_admissible(Control u) {
    for (int k = 0; k < u.frame_count(); ++k)
        for (double& v : u.frame(k).values()) v = std::clamp(v, 0.0, 1.0);
    return u;
}

}  // namespace chemodose
