#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "chemodose/errors.hpp"

namespace chemodose {

/// Uniform cell-centred box grid in one or two dimensions.
///
/// Cells are stored row-major: index = iy * nx + ix. In 1-D, ny == 1 and
/// ly is unused (kept at 1 so the cell volume equals hx).
class Grid {
public:
    Grid() = default;

    static Grid line(int nx, double lx) { return Grid(1, nx, 1, lx, 1.0); }
    static Grid box(int nx, int ny, double lx, double ly) { return Grid(2, nx, ny, lx, ly); }

    Grid(int dim, int nx, int ny, double lx, double ly)
        : dim_(dim), nx_(nx), ny_(dim == 1 ? 1 : ny), lx_(lx), ly_(dim == 1 ? 1.0 : ly) {
        if (dim != 1 && dim != 2) throw std::invalid_argument("grid dimension must be 1 or 2");
        if (nx_ < 4 || (dim == 2 && ny_ < 4))
            throw std::invalid_argument("grid needs at least 4 cells per axis");
        if (!(lx_ > 0.0) || !(ly_ > 0.0) || !std::isfinite(lx_) || !std::isfinite(ly_))
            throw std::invalid_argument("grid lengths must be positive and finite");
    }

    int dim() const noexcept { return dim_; }
    int nx() const noexcept { return nx_; }
    int ny() const noexcept { return ny_; }
    double lx() const noexcept { return lx_; }
    double ly() const noexcept { return ly_; }
    double hx() const noexcept { return lx_ / nx_; }
    double hy() const noexcept { return dim_ == 1 ? 1.0 : ly_ / ny_; }
    std::size_t cell_count() const noexcept { return static_cast<std::size_t>(nx_) * ny_; }
    double cell_volume() const noexcept { return hx() * hy(); }
    double measure() const noexcept { return dim_ == 1 ? lx_ : lx_ * ly_; }

    double x_center(int ix) const noexcept { return (ix + 0.5) * hx(); }
    double y_center(int iy) const noexcept { return dim_ == 1 ? 0.0 : (iy + 0.5) * hy(); }

    /// Half bandwidth of the five-point Laplacian in row-major ordering.
    int laplacian_bandwidth() const noexcept { return dim_ == 1 ? 1 : nx_; }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    int dim_ = 1;
    int nx_ = 4;
    int ny_ = 1;
    double lx_ = 1.0;
    double ly_ = 1.0;
};

/// Grid-aligned real field, one value per cell.
class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(const Grid& grid, double value = 0.0)
        : grid_(grid), values_(grid.cell_count(), value) {}
    ScalarField(const Grid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
        if (values_.size() != grid_.cell_count())
            throw StructuralError("field value count does not match grid cell count");
    }

    template <class F>
    static ScalarField from_function(const Grid& grid, F&& f) {
        ScalarField out(grid);
        for (int iy = 0; iy < grid.ny(); ++iy)
            for (int ix = 0; ix < grid.nx(); ++ix)
                out.values_[static_cast<std::size_t>(iy) * grid.nx() + ix] =
                    f(grid.x_center(ix), grid.y_center(iy));
        return out;
    }

    const Grid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    double& operator[](std::size_t i) noexcept { return values_[i]; }

    bool all_finite() const noexcept {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }
    double min() const { return *std::min_element(values_.begin(), values_.end()); }
    double max() const { return *std::max_element(values_.begin(), values_.end()); }

    ScalarField& operator+=(const ScalarField& o) {
        require_same(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
        return *this;
    }
    ScalarField& operator-=(const ScalarField& o) {
        require_same(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
        return *this;
    }
    ScalarField& operator*=(double s) noexcept {
        for (double& v : values_) v *= s;
        return *this;
    }
    /// this += s * o
    ScalarField& axpy(double s, const ScalarField& o) {
        require_same(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += s * o.values_[i];
        return *this;
    }

    friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
    friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
    friend ScalarField operator*(double s, ScalarField a) { return a *= s; }

    void require_same(const ScalarField& o) const {
        if (!(grid_ == o.grid_) || values_.size() != o.values_.size())
            throw StructuralError("fields live on different grids");
    }

private:
    Grid grid_;
    std::vector<double> values_;
};

/// Pointwise map of a field.
template <class F>
ScalarField map(const ScalarField& f, F&& fn) {
    ScalarField out(f.grid());
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = fn(f[i]);
    return out;
}

/// Pointwise product.
inline ScalarField hadamard(const ScalarField& a, const ScalarField& b) {
    a.require_same(b);
    ScalarField out(a.grid());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

/// Uniform time grid t_k = k * dt on [0, t_end].
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double t_end, int n_steps) : t_end_(t_end), n_steps_(n_steps) {
        if (!(t_end > 0.0) || !std::isfinite(t_end)) throw std::invalid_argument("time horizon must be positive");
        if (n_steps < 2) throw std::invalid_argument("time grid needs at least 2 steps");
    }

    double t_end() const noexcept { return t_end_; }
    int n_steps() const noexcept { return n_steps_; }
    int node_count() const noexcept { return n_steps_ + 1; }
    double dt() const noexcept { return t_end_ / n_steps_; }
    double time(int k) const noexcept { return k * dt(); }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    double t_end_ = 1.0;
    int n_steps_ = 2;
};

/// Five-point (three-point in 1-D) Laplacian with mirror ghost cells, i.e.
/// homogeneous Neumann data. Writes into `out` to avoid reallocation in loops.
inline void laplacian_neumann_into(const ScalarField& f, ScalarField& out) {
    const Grid& g = f.grid();
    if (!(out.grid() == g)) out = ScalarField(g);
    const int nx = g.nx();
    const int ny = g.ny();
    const double ix2 = 1.0 / (g.hx() * g.hx());
    const double iy2 = g.dim() == 2 ? 1.0 / (g.hy() * g.hy()) : 0.0;
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            const std::size_t i = static_cast<std::size_t>(iy) * nx + ix;
            const double c = f[i];
            const double w = ix > 0 ? f[i - 1] : c;
            const double e = ix < nx - 1 ? f[i + 1] : c;
            double acc = (w - 2.0 * c + e) * ix2;
            if (g.dim() == 2) {
                const double s = iy > 0 ? f[i - nx] : c;
                const double n = iy < ny - 1 ? f[i + nx] : c;
                acc += (s - 2.0 * c + n) * iy2;
            }
            out[i] = acc;
        }
    }
}

inline ScalarField laplacian_neumann(const ScalarField& f) {
    ScalarField out(f.grid());
    laplacian_neumann_into(f, out);
    return out;
}

/// Cell-volume quadrature of a field over the domain.
inline double integrate(const ScalarField& f) {
    double s = 0.0;
    for (double v : f.values()) s += v;
    return s * f.grid().cell_volume();
}

inline double inner_product(const ScalarField& f, const ScalarField& g) {
    f.require_same(g);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * g[i];
    return s * f.grid().cell_volume();
}

inline double l2_norm(const ScalarField& f) { return std::sqrt(inner_product(f, f)); }

/// Discrete Dirichlet integral over interior faces. Summation by parts gives
/// gradient_sq_integral(f) == -inner_product(f, laplacian_neumann(f)).
inline double gradient_sq_integral(const ScalarField& f) {
    const Grid& g = f.grid();
    const int nx = g.nx();
    const int ny = g.ny();
    double sx = 0.0;
    double sy = 0.0;
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix + 1 < nx; ++ix) {
            const std::size_t i = static_cast<std::size_t>(iy) * nx + ix;
            const double d = f[i + 1] - f[i];
            sx += d * d;
        }
    }
    if (g.dim() == 2) {
        for (int iy = 0; iy + 1 < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                const std::size_t i = static_cast<std::size_t>(iy) * nx + ix;
                const double d = f[i + nx] - f[i];
                sy += d * d;
            }
        }
        sy /= g.hy() * g.hy();
    }
    return (sx / (g.hx() * g.hx()) + sy) * g.cell_volume();
}

/// Discrete H^1 norm squared: L2 part plus Dirichlet integral.
inline double h1_norm_sq(const ScalarField& f) { return inner_product(f, f) + gradient_sq_integral(f); }

}  // namespace chemodose
