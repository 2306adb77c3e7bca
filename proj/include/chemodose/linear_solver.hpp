#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "chemodose/errors.hpp"
#include "chemodose/grid.hpp"

namespace chemodose {

enum class LinearSolverKind { Direct, ConjugateGradient };

struct LinearSolverOptions {
    LinearSolverKind kind = LinearSolverKind::Direct;
    double cg_rel_tol = 1e-10;
    int cg_iter_factor = 10;  ///< iteration cap = factor * unknowns
};

/// Row-wise sparse matrix used only for assembly.
class SparseRows {
public:
    explicit SparseRows(std::size_t n) : rows_(n) {}

    std::size_t size() const noexcept { return rows_.size(); }
    void add(std::size_t i, std::size_t j, double v) { rows_[i][j] += v; }
    const std::map<std::size_t, double>& row(std::size_t i) const { return rows_[i]; }

    static SparseRows identity(std::size_t n) {
        SparseRows m(n);
        for (std::size_t i = 0; i < n; ++i) m.add(i, i, 1.0);
        return m;
    }

    /// Matrix of laplacian_neumann on `g`.
    static SparseRows laplacian(const Grid& g) {
        SparseRows m(g.cell_count());
        const int nx = g.nx();
        const double cx = 1.0 / (g.hx() * g.hx());
        const double cy = g.dim() == 2 ? 1.0 / (g.hy() * g.hy()) : 0.0;
        for (int iy = 0; iy < g.ny(); ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                const std::size_t i = static_cast<std::size_t>(iy) * nx + ix;
                if (ix > 0) { m.add(i, i - 1, cx); m.add(i, i, -cx); }
                if (ix < nx - 1) { m.add(i, i + 1, cx); m.add(i, i, -cx); }
                if (g.dim() == 2) {
                    if (iy > 0) { m.add(i, i - nx, cy); m.add(i, i, -cy); }
                    if (iy < g.ny() - 1) { m.add(i, i + nx, cy); m.add(i, i, -cy); }
                }
            }
        }
        return m;
    }

    SparseRows& axpy(double s, const SparseRows& o) {
        for (std::size_t i = 0; i < rows_.size(); ++i)
            for (auto [j, v] : o.rows_[i]) rows_[i][j] += s * v;
        return *this;
    }

    SparseRows& add_diagonal(std::span<const double> d) {
        for (std::size_t i = 0; i < rows_.size(); ++i) rows_[i][i] += d[i];
        return *this;
    }

    friend SparseRows multiply(const SparseRows& a, const SparseRows& b) {
        SparseRows c(a.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            for (auto [k, av] : a.rows_[i])
                for (auto [j, bv] : b.rows_[k]) c.rows_[i][j] += av * bv;
        return c;
    }

    std::size_t half_bandwidth() const {
        std::size_t b = 0;
        for (std::size_t i = 0; i < rows_.size(); ++i)
            for (const auto& e : rows_[i]) b = std::max(b, e.first > i ? e.first - i : i - e.first);
        return b;
    }

    void apply(std::span<const double> x, std::span<double> y) const {
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            double s = 0.0;
            for (auto [j, v] : rows_[i]) s += v * x[j];
            y[i] = s;
        }
    }

private:
    std::vector<std::map<std::size_t, double>> rows_;
};

/// Cholesky factorization of a symmetric positive definite banded matrix.
class BandedCholesky {
public:
    BandedCholesky() = default;

    explicit BandedCholesky(const SparseRows& m) : n_(m.size()), b_(m.half_bandwidth()) {
        // lower band: l_[i * (b+1) + (i - j)] holds L(i, j) for i - b <= j <= i
        l_.assign(n_ * (b_ + 1), 0.0);
        for (std::size_t i = 0; i < n_; ++i)
            for (auto [j, v] : m.row(i))
                if (j <= i) at(i, j) = v;
        for (std::size_t j = 0; j < n_; ++j) {
            double d = at(j, j);
            const std::size_t k0 = j > b_ ? j - b_ : 0;
            for (std::size_t k = k0; k < j; ++k) d -= at(j, k) * at(j, k);
            if (!(d > 0.0)) throw SolverError("banded Cholesky: matrix not positive definite", d);
            d = std::sqrt(d);
            at(j, j) = d;
            const std::size_t iend = std::min(n_, j + b_ + 1);
            for (std::size_t i = j + 1; i < iend; ++i) {
                double s = at(i, j);
                const std::size_t kk0 = i > b_ ? i - b_ : 0;
                for (std::size_t k = std::max(k0, kk0); k < j; ++k) s -= at(i, k) * at(j, k);
                at(i, j) = s / d;
            }
        }
    }

    void solve(std::span<const double> rhs, std::span<double> x) const {
        std::vector<double> y(rhs.begin(), rhs.end());
        for (std::size_t i = 0; i < n_; ++i) {
            double s = y[i];
            const std::size_t k0 = i > b_ ? i - b_ : 0;
            for (std::size_t k = k0; k < i; ++k) s -= at(i, k) * y[k];
            y[i] = s / at(i, i);
        }
        for (std::size_t ii = n_; ii-- > 0;) {
            double s = y[ii];
            const std::size_t kend = std::min(n_, ii + b_ + 1);
            for (std::size_t k = ii + 1; k < kend; ++k) s -= at(k, ii) * x[k];
            x[ii] = s / at(ii, ii);
        }
    }

private:
    double& at(std::size_t i, std::size_t j) { return l_[i * (b_ + 1) + (i - j)]; }
    double at(std::size_t i, std::size_t j) const { return l_[i * (b_ + 1) + (i - j)]; }

    std::size_t n_ = 0;
    std::size_t b_ = 0;
    std::vector<double> l_;
};

struct CgStats {
    int iterations = 0;
    double rel_residual = 0.0;
};

/// Unpreconditioned conjugate gradients for SPD `apply`. Reductions run in a
/// fixed sequential order so results are bit-reproducible. `x` holds the
/// initial guess on entry.
template <class Apply>
CgStats cg_solve(Apply&& apply, std::span<const double> b, std::span<double> x, double rel_tol, int max_iter) {
    const std::size_t n = b.size();
    auto dot = [n](std::span<const double> u, std::span<const double> v) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += u[i] * v[i];
        return s;
    };
    const double bnorm = std::sqrt(dot(b, b));
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        return {};
    }
    std::vector<double> r(n), p(n), ap(n);
    apply(std::span<const double>(x.data(), n), std::span<double>(ap));
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
    p = r;
    double rr = dot(r, r);
    CgStats st;
    st.rel_residual = std::sqrt(rr) / bnorm;
    while (st.rel_residual > rel_tol) {
        if (st.iterations >= max_iter)
            throw SolverError("conjugate gradients hit the iteration cap (relative residual " +
                                  std::to_string(st.rel_residual) + ")",
                              st.rel_residual);
        apply(std::span<const double>(p), std::span<double>(ap));
        const double pap = dot(p, ap);
        const double a = rr / pap;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += a * p[i];
            r[i] -= a * ap[i];
        }
        const double rr_new = dot(r, r);
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
        ++st.iterations;
        st.rel_residual = std::sqrt(rr) / bnorm;
    }
    return st;
}

/// SPD system that is either factored once or solved iteratively.
class SpdSystem {
public:
    SpdSystem() = default;
    SpdSystem(SparseRows matrix, const LinearSolverOptions& opts) : matrix_(std::move(matrix)), opts_(opts) {
        if (opts_.kind == LinearSolverKind::Direct) chol_ = BandedCholesky(matrix_);
    }

    /// Solves into `x`; `x` on entry is the CG initial guess.
    void solve(std::span<const double> rhs, std::span<double> x) const {
        if (opts_.kind == LinearSolverKind::Direct) {
            chol_.solve(rhs, x);
            return;
        }
        const int cap = opts_.cg_iter_factor * static_cast<int>(rhs.size());
        cg_solve([this](std::span<const double> in, std::span<double> out) { matrix_.apply(in, out); }, rhs, x,
                 opts_.cg_rel_tol, cap);
    }

    const SparseRows& matrix() const noexcept { return matrix_; }

private:
    SparseRows matrix_{0};
    LinearSolverOptions opts_;
    BandedCholesky chol_;
};

}  // namespace chemodose
