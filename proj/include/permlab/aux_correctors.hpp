#ifndef PERMLAB_AUX_CORRECTORS_HPP
#define PERMLAB_AUX_CORRECTORS_HPP

#include <array>
#include <cmath>
#include <vector>

#include "permlab/cell_corrector.hpp"
#include "permlab/divsolve.hpp"
#include "permlab/fft_poisson.hpp"

namespace permlab {

// Antisymmetric potential of one flux column b = (b_1, b_2) on the torus:
// solve lap f_i = b_i per component, return Phi_21 = D2 f_1 - D1 f_2 at the
// cell corners (Phi_12 = -Phi_21, Phi_11 = Phi_22 = 0). The staggered
// divergence of Phi recovers b up to the gradient of the discretely
// harmonic field D_k f_k.
inline Field flux_phi21(const MacField& bcol, double h) {
    const int n = bcol.u.nx();
    Field f1 = solve_poisson_periodic(bcol.u, h); // on u-faces
    Field f2 = solve_poisson_periodic(bcol.v, h); // on v-faces
    Field phi(n, n); // (i, j) sits at the corner (i h, j h)
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            phi(i, j) = (f1(i, j) - f1.p(i, j - 1)) / h - (f2(i, j) - f2.p(i - 1, j)) / h;
    return phi;
}

struct FluxCorrector {
    TimeGrid grid;
    int n = 0;
    std::vector<Mat2> abar;                  // face-grid mean of the extended W
    std::vector<std::array<MacField, 2>> b;  // [node][column j]
    std::vector<std::array<Field, 2>> phi21; // [node][column j]
    std::vector<double> mean_b;              // max |cell mean of b| per node
    std::vector<double> div_b;               // max fluid divergence per node
    std::vector<double> recon;               // max |div_k Phi_k. - b| per node
};

// Flux matrix b_ij = (zero-extended W_j) . e_i - Abar_ij and its
// antisymmetric potential, per time node. Abar is the plain face-grid mean,
// which equals A_ij for t > 0 (no-slip makes both quadratures agree) and
// makes the zero-mean property of b exact at every node including t = 0.
inline FluxCorrector flux_corrector(const CorrectorTrajectory& tr0,
                                    const CorrectorTrajectory& tr1,
                                    const PermeabilityKernel& K) {
    if (!tr0.grid.same_as(tr1.grid) || !tr0.grid.same_as(K.grid))
        throw config_error("flux corrector inputs are on different time grids");
    const int n = tr0.cell.n();
    const double h = 1.0 / n;
    FluxCorrector fc;
    fc.grid = tr0.grid;
    fc.n = n;
    const int M = fc.grid.steps();
    for (int k = 0; k <= M; ++k) {
        const MacField* W[2] = {&tr0.W[k], &tr1.W[k]};
        Mat2 ab;
        for (int j = 0; j < 2; ++j) {
            ab.at(0, j) = W[j]->u.sum() / W[j]->u.size();
            ab.at(1, j) = W[j]->v.sum() / W[j]->v.size();
        }
        fc.abar.push_back(ab);
        std::array<MacField, 2> bk = {MacField::periodic(n), MacField::periodic(n)};
        double meanb = 0, divb = 0;
        for (int j = 0; j < 2; ++j) {
            bk[j] = *W[j];
            for (double& x : bk[j].u.raw()) x -= ab.at(0, j);
            for (double& x : bk[j].v.raw()) x -= ab.at(1, j);
            meanb = std::max(meanb, std::fabs(bk[j].u.sum() / bk[j].u.size()));
            meanb = std::max(meanb, std::fabs(bk[j].v.sum() / bk[j].v.size()));
            for (int cy = 0; cy < n; ++cy)
                for (int cx = 0; cx < n; ++cx) {
                    double d = (bk[j].u.p(cx + 1, cy) - bk[j].u(cx, cy) +
                                bk[j].v.p(cx, cy + 1) - bk[j].v(cx, cy)) / h;
                    divb = std::max(divb, std::fabs(d));
                }
        }
        std::array<Field, 2> pk = {flux_phi21(bk[0], h), flux_phi21(bk[1], h)};
        double rec = 0;
        for (int j = 0; j < 2; ++j)
            for (int cy = 0; cy < n; ++cy)
                for (int cx = 0; cx < n; ++cx) {
                    // u-component: D2 Phi_21 back at the u-face;
                    // v-component: D1 Phi_12 = -D1 Phi_21 back at the v-face
                    double ru = (pk[j].p(cx, cy + 1) - pk[j](cx, cy)) / h - bk[j].u(cx, cy);
                    double rv = -(pk[j].p(cx + 1, cy) - pk[j](cx, cy)) / h - bk[j].v(cx, cy);
                    rec = std::max(rec, std::max(std::fabs(ru), std::fabs(rv)));
                }
        fc.b.push_back(std::move(bk));
        fc.phi21.push_back(std::move(pk));
        fc.mean_b.push_back(meanb);
        fc.div_b.push_back(divb);
        fc.recon.push_back(rec);
    }
    return fc;
}

struct BogovskiiCorrector {
    TimeGrid grid;
    int n = 0;
    double fluid_volume = 0;
    std::vector<std::array<MacField, 4>> phi; // [node][2*i + j]
    std::vector<double> compat;               // max |fluid mean of rhs| per node
    std::vector<double> div_residual;         // max over (i,j) per node
    double total_variation = 0;               // sum over nodes of the L2 increments
};

// Minimum-norm Bogovskii corrector: div phi_{i,j} = -W_ij + |Y_f|^{-1} A_ij
// on fluid cells, phi = 0 on every face touching the obstacle, periodic.
// Compatibility is exact because A_ij is defined by the same face-average
// quadrature that produces the cell values of W_ij.
inline BogovskiiCorrector bogovskii_cell(const CorrectorTrajectory& tr0,
                                         const CorrectorTrajectory& tr1,
                                         const PermeabilityKernel& K) {
    if (!tr0.grid.same_as(tr1.grid) || !tr0.grid.same_as(K.grid))
        throw config_error("bogovskii corrector inputs are on different time grids");
    const CellGeometry& cell = tr0.cell;
    const int n = cell.n();
    BogovskiiCorrector bc;
    bc.grid = tr0.grid;
    bc.n = n;
    bc.fluid_volume = K.fluid_volume;
    const int M = bc.grid.steps();
    for (int k = 0; k <= M; ++k) {
        const MacField* W[2] = {&tr0.W[k], &tr1.W[k]};
        std::array<MacField, 4> pk = {MacField::periodic(n), MacField::periodic(n),
                                      MacField::periodic(n), MacField::periodic(n)};
        double compat = 0, divres = 0;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                Field g(n, n);
                double target = K.A[k].at(i, j) / K.fluid_volume;
                for (int cy = 0; cy < n; ++cy)
                    for (int cx = 0; cx < n; ++cx) {
                        if (!cell.fluid(cx, cy)) continue;
                        const Field& comp = i == 0 ? W[j]->u : W[j]->v;
                        double favg = i == 0 ? 0.5 * (comp.p(cx, cy) + comp.p(cx + 1, cy))
                                             : 0.5 * (comp.p(cx, cy) + comp.p(cx, cy + 1));
                        g(cx, cy) = -favg + target;
                    }
                double mean = g.sum() / cell.fluid_count();
                compat = std::max(compat, std::fabs(mean));
                auto sol = solve_divergence_cell(cell, g);
                divres = std::max(divres, sol.residual);
                pk[2 * i + j] = std::move(sol.phi);
            }
        if (k > 0) {
            const double h = 1.0 / n;
            for (int q = 0; q < 4; ++q) {
                MacField d = pk[q];
                d -= bc.phi.back()[q];
                bc.total_variation += std::sqrt(d.dot(d)) * h;
            }
        }
        bc.phi.push_back(std::move(pk));
        bc.compat.push_back(compat);
        bc.div_residual.push_back(divres);
    }
    return bc;
}

} // namespace permlab

#endif
