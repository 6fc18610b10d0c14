#ifndef PERMLAB_DIVSOLVE_HPP
#define PERMLAB_DIVSOLVE_HPP

#include <cmath>
#include <vector>

#include "permlab/cg.hpp"
#include "permlab/fft_poisson.hpp"
#include "permlab/field.hpp"
#include "permlab/geometry.hpp"

namespace permlab {

// Minimum-L2-norm right inverse of the MAC divergence on the fluid part of a
// periodic cell: div phi = g on fluid cells, phi = 0 on every face touching
// the obstacle. The minimizer is the masked gradient of a potential, so one
// masked Neumann Poisson solve (CG) yields the canonical representative.
struct CellDivSolution {
    MacField phi;
    double residual = 0; // max |div phi - g| over fluid cells
    int iters = 0;
};

inline CellDivSolution solve_divergence_cell(const CellGeometry& cell, const Field& g,
                                             double tol = 1e-11) {
    const int n = cell.n();
    const double h = 1.0 / n;
    if (g.nx() != n || g.ny() != n) throw config_error("divergence rhs does not match the cell grid");

    double mean = 0;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (cell.fluid(i, j)) mean += g(i, j);
    mean /= cell.fluid_count();
    if (std::fabs(mean) > 1e-8)
        throw config_error("divergence rhs is incompatible: nonzero mean over the fluid cells");

    auto uact = [&](int i, int j) { return cell.fluid(i - 1, j) && cell.fluid(i, j); };
    auto vact = [&](int i, int j) { return cell.fluid(i, j - 1) && cell.fluid(i, j); };

    // masked Neumann Laplacian, negated to be SPD on zero-mean fluid fields
    auto apply = [&](const std::vector<double>& x, std::vector<double>& out) {
        Field xf = Field(n, n);
        xf.raw() = x;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                if (!cell.fluid(i, j)) {
                    out[i + static_cast<size_t>(n) * j] = x[i + static_cast<size_t>(n) * j];
                    continue;
                }
                double acc = 0;
                if (uact(i, j)) acc += xf(i, j) - xf.p(i - 1, j);
                if (uact(i + 1, j)) acc += xf(i, j) - xf.p(i + 1, j);
                if (vact(i, j)) acc += xf(i, j) - xf.p(i, j - 1);
                if (vact(i, j + 1)) acc += xf(i, j) - xf.p(i, j + 1);
                out[i + static_cast<size_t>(n) * j] = acc / (h * h);
            }
    };

    std::vector<double> rhs(g.size(), 0.0), lam(g.size(), 0.0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (cell.fluid(i, j)) rhs[i + static_cast<size_t>(n) * j] = -(g(i, j) - mean);

    CgOptions opt;
    opt.rel_tol = tol;
    opt.max_iter = 20000;
    auto res = pcg(apply, rhs, lam, nullptr, opt);
    require_converged(res, "divergence solve");

    Field lf(n, n);
    lf.raw() = lam;
    CellDivSolution sol;
    sol.iters = res.iterations;
    sol.phi = MacField::periodic(n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            if (uact(i, j)) sol.phi.u(i, j) = (lf(i, j) - lf.p(i - 1, j)) / h;
            if (vact(i, j)) sol.phi.v(i, j) = (lf(i, j) - lf.p(i, j - 1)) / h;
        }
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            if (!cell.fluid(i, j)) continue;
            double d = (sol.phi.u.p(i + 1, j) - sol.phi.u(i, j) + sol.phi.v.p(i, j + 1) - sol.phi.v(i, j)) / h;
            sol.residual = std::max(sol.residual, std::fabs(d - (g(i, j) - mean)));
        }
    return sol;
}

// Same construction on an arbitrary cell region of the (non-periodic) box:
// div phi = g - mean(g) on the region, phi = 0 on every face that is not
// interior to the region (exact zero trace). mask(i,j) != 0 marks region
// cells. A full-box Neumann DCT solve preconditions the masked CG.
struct RegionDivSolution {
    MacField phi;        // box layout, zero outside the region
    double mean = 0;     // region mean of g (removed before solving)
    double residual = 0; // max |div phi - (g - mean)| over the region
    int iters = 0;
};

inline RegionDivSolution solve_divergence_region(const Field& mask, const Field& g,
                                                 double tol = 1e-11) {
    const int N = mask.nx();
    const double h = 1.0 / N;
    if (g.nx() != N || g.ny() != N || mask.ny() != N)
        throw config_error("region divergence: rhs and mask grids disagree");

    // bounding box of the region: the CG runs on the local window only
    int i0 = N, i1 = -1, j0 = N, j1 = -1, count = 0;
    double mean = 0;
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i)
            if (mask(i, j) != 0.0) {
                i0 = std::min(i0, i);
                i1 = std::max(i1, i);
                j0 = std::min(j0, j);
                j1 = std::max(j1, j);
                mean += g(i, j);
                ++count;
            }
    if (count == 0) throw config_error("region divergence: empty region");
    mean /= count;
    const int wx = i1 - i0 + 1, wy = j1 - j0 + 1;

    auto in = [&](int i, int j) {
        return i >= 0 && i < wx && j >= 0 && j < wy && mask(i0 + i, j0 + j) != 0.0;
    };
    auto uact = [&](int i, int j) { return in(i - 1, j) && in(i, j); };
    auto vact = [&](int i, int j) { return in(i, j - 1) && in(i, j); };

    auto apply = [&](const std::vector<double>& x, std::vector<double>& out) {
        for (int j = 0; j < wy; ++j)
            for (int i = 0; i < wx; ++i) {
                size_t c = i + static_cast<size_t>(wx) * j;
                if (!in(i, j)) {
                    out[c] = x[c];
                    continue;
                }
                double acc = 0;
                if (uact(i, j)) acc += x[c] - x[c - 1];
                if (uact(i + 1, j)) acc += x[c] - x[c + 1];
                if (vact(i, j)) acc += x[c] - x[c - wx];
                if (vact(i, j + 1)) acc += x[c] - x[c + wx];
                out[c] = acc / (h * h);
            }
    };
    // Neumann DCT inverse on the window, with the mean mode put back to
    // keep the preconditioner positive definite
    Field pre(wx, wy);
    auto precond = [&](const std::vector<double>& r, std::vector<double>& z) {
        pre.raw() = r;
        Field s = solve_poisson_neumann(pre, h);
        double rbar = 0;
        for (double v : r) rbar += v;
        rbar /= r.size();
        for (size_t k = 0; k < s.size(); ++k) z[k] = -s.raw()[k] + rbar;
    };

    std::vector<double> rhs(static_cast<size_t>(wx) * wy, 0.0), lam(rhs.size(), 0.0);
    for (int j = 0; j < wy; ++j)
        for (int i = 0; i < wx; ++i)
            if (in(i, j)) rhs[i + static_cast<size_t>(wx) * j] = -(g(i0 + i, j0 + j) - mean);

    CgOptions opt;
    opt.rel_tol = tol;
    opt.max_iter = 50000;
    auto res = pcg(apply, rhs, lam, precond, opt);
    require_converged(res, "region divergence solve");

    Field lf(wx, wy);
    lf.raw() = lam;
    RegionDivSolution sol;
    sol.mean = mean;
    sol.iters = res.iterations;
    sol.phi = MacField::box(N);
    for (int j = 0; j < wy; ++j)
        for (int i = 0; i <= wx; ++i)
            if (uact(i, j)) sol.phi.u(i0 + i, j0 + j) = (lf(i, j) - lf(i - 1, j)) / h;
    for (int j = 0; j <= wy; ++j)
        for (int i = 0; i < wx; ++i)
            if (vact(i, j)) sol.phi.v(i0 + i, j0 + j) = (lf(i, j) - lf(i, j - 1)) / h;
    for (int j = 0; j < wy; ++j)
        for (int i = 0; i < wx; ++i) {
            if (!in(i, j)) continue;
            double d = (sol.phi.u(i0 + i + 1, j0 + j) - sol.phi.u(i0 + i, j0 + j) +
                        sol.phi.v(i0 + i, j0 + j + 1) - sol.phi.v(i0 + i, j0 + j)) / h;
            sol.residual = std::max(sol.residual, std::fabs(d - (g(i0 + i, j0 + j) - mean)));
        }
    return sol;
}

} // namespace permlab

#endif
