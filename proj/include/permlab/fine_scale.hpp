#ifndef PERMLAB_FINE_SCALE_HPP
#define PERMLAB_FINE_SCALE_HPP

#include <cmath>
#include <vector>

#include "permlab/darcy_memory.hpp"
#include "permlab/geometry.hpp"
#include "permlab/stokes_mac.hpp"

namespace permlab {

struct FineScaleSolution {
    double eps = 0;
    int N = 0;
    TimeGrid grid;
    std::vector<MacField> u;  // box faces, exact zeros outside the fluid
    std::vector<Field> p;     // zero mean over fluid cells
    std::vector<double> kinetic;      // (1/2) |u|^2 h^2 per node
    std::vector<double> dissipation;  // eps^2 dt |grad u|^2 increments (node k covers (t_{k-1}, t_k])
    std::vector<double> div_residual;
    double force_l2 = 0;         // int_0^T |f|^2 dt
    double energy_constant = 0;  // (sup |u|^2 + eps^2 int |grad u|^2) / int |f|^2
    double poincare = 0;         // max_k |u| / (eps |grad u|)
};

inline MacStokes make_fine_stokes(const PerforatedDomain& dom) {
    return MacStokes(dom.N(), false, [&dom](int i, int j) { return dom.solid(i, j); },
                     dom.eps() * dom.eps());
}

// Unsteady Stokes on the perforated box with viscosity eps^2, u(0) = 0,
// no-slip on all of the boundary, implicit Euler + projection. The coupled
// flag switches to the monolithic saddle-point step, which keeps discrete
// gradient forcings exactly at rest (slower, mostly for cross-checks).
inline FineScaleSolution solve_fine(const PerforatedDomain& dom, const BodyForce& f,
                                    const TimeGrid& grid, bool coupled = false) {
    MacStokes st = make_fine_stokes(dom);
    const int N = dom.N();
    const double h = dom.h();
    FineScaleSolution sol;
    sol.eps = dom.eps();
    sol.N = N;
    sol.grid = grid;
    sol.u.push_back(st.velocity());
    sol.p.push_back(Field(N, N));
    sol.kinetic.push_back(0);
    sol.dissipation.push_back(0);
    sol.div_residual.push_back(0);
    double sup_u2 = 0, diss_total = 0;
    for (int k = 1; k <= grid.steps(); ++k) {
        MacField fk = f.sample(N, grid.t(k));
        auto stats = coupled ? st.step_coupled(grid.dt(k), &fk) : st.step(grid.dt(k), &fk);
        sol.u.push_back(st.velocity());
        sol.p.push_back(st.pressure());
        sol.kinetic.push_back(stats.kinetic);
        sol.dissipation.push_back(stats.dissipation);
        sol.div_residual.push_back(stats.div_residual);
        sup_u2 = std::max(sup_u2, 2.0 * stats.kinetic);
        diss_total += stats.dissipation;
        double gradn2 = stats.dissipation / (grid.dt(k) * st.viscosity());
        if (gradn2 > 0)
            sol.poincare = std::max(sol.poincare,
                                    std::sqrt(2.0 * stats.kinetic / gradn2) / dom.eps());
    }
    for (int k = 0; k <= grid.steps(); ++k) {
        MacField fk = f.sample(N, grid.t(k));
        sol.force_l2 += grid.weight(k) * fk.dot(fk) * h * h;
    }
    sol.energy_constant = (sup_u2 + diss_total) / std::max(sol.force_l2, 1e-300);
    return sol;
}

// Pressure extension: keep p on the fluid, fill each hole with the average
// of p over the fluid part of its own eps-lattice cell.
inline Field extend_pressure(const Field& p, const PerforatedDomain& dom) {
    const int nc = dom.cell().n();
    Field out = p;
    for (const auto& [zi, zj] : dom.kept_cells()) {
        double s = 0;
        int cnt = 0;
        for (int j = 0; j < nc; ++j)
            for (int i = 0; i < nc; ++i) {
                int gi = zi * nc + i, gj = zj * nc + j;
                if (dom.fluid(gi, gj)) {
                    s += p(gi, gj);
                    ++cnt;
                }
            }
        double avg = cnt > 0 ? s / cnt : 0.0;
        for (int j = 0; j < nc; ++j)
            for (int i = 0; i < nc; ++i) {
                int gi = zi * nc + i, gj = zj * nc + j;
                if (!dom.fluid(gi, gj)) out(gi, gj) = avg;
            }
    }
    return out;
}

} // namespace permlab

#endif
