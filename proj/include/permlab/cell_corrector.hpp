#ifndef PERMLAB_CELL_CORRECTOR_HPP
#define PERMLAB_CELL_CORRECTOR_HPP

#include <cmath>
#include <vector>

#include "permlab/geometry.hpp"
#include "permlab/stokes_mac.hpp"
#include "permlab/time_grid.hpp"

namespace permlab {

// One direction's corrector history on the periodic cell. Node 0 holds the
// raw initial data e_j (walls included); every later node has exact no-slip.
struct CorrectorTrajectory {
    int direction = 0;
    CellGeometry cell = CellGeometry::empty(4);
    TimeGrid grid;
    double fluid_volume = 0;
    std::vector<MacField> W;
    std::vector<Field> pi;              // zero-mean over fluid cells
    std::vector<double> div_residual;   // max fluid-cell divergence
    std::vector<double> kinetic;        // (1/2)||W||^2
    std::vector<double> grad_norm2;     // discrete ||grad W||^2 at each node
    std::vector<double> energy_residual; // per-step identity defect, k=1..M
};

struct PermeabilityKernel {
    TimeGrid grid;
    double fluid_volume = 0;
    std::vector<Mat2> A;
    std::vector<Mat2> dA;   // finite-difference derivative on the graded grid
    double dA_l1 = 0;       // \int_0^T |A'| dt, Frobenius norm

    Mat2 at(double t) const { return TimeInterp<Mat2>(grid, A)(t); }
    Mat2 deriv_at(double t) const { return TimeInterp<Mat2>(grid, dA)(t); }

    double max_asym() const {
        double m = 0;
        for (const auto& a : A) m = std::max(m, a.max_asym());
        return m;
    }
    double min_eig() const {
        double m = 1e300;
        for (const auto& a : A) m = std::min(m, a.min_eig_sym());
        return m;
    }
    bool trace_nonincreasing(double slack = 1e-12) const {
        for (size_t k = 1; k < A.size(); ++k)
            if (A[k].trace() > A[k - 1].trace() + slack) return false;
        return true;
    }
};

inline MacStokes make_cell_stokes(const CellGeometry& cell) {
    return MacStokes(cell.n(), true, [&cell](int i, int j) { return cell.solid(i, j); }, 1.0);
}

inline CorrectorTrajectory solve_corrector(const CellGeometry& cell, int j, const TimeGrid& grid) {
    if (j != 0 && j != 1) throw config_error("solve_corrector: direction must be 0 or 1");
    MacStokes st = make_cell_stokes(cell);
    CorrectorTrajectory tr;
    tr.direction = j;
    tr.cell = cell;
    tr.grid = grid;
    tr.fluid_volume = cell.fluid_fraction();
    st.set_uniform_initial(j);
    tr.W.push_back(st.velocity());
    tr.pi.emplace_back(cell.n(), cell.n());
    tr.div_residual.push_back(0.0);
    // energy bookkeeping uses the active-face field (walls clamped)
    st.zero_walls();
    tr.kinetic.push_back(st.kinetic());
    tr.grad_norm2.push_back(st.dissipation(st.velocity()));
    for (int k = 1; k <= grid.steps(); ++k) {
        double ke_prev = st.kinetic();
        auto stats = st.step(grid.dt(k));
        tr.W.push_back(st.velocity());
        Field p = st.pressure();
        tr.pi.push_back(p);
        tr.div_residual.push_back(stats.div_residual);
        tr.kinetic.push_back(stats.kinetic);
        tr.grad_norm2.push_back(st.dissipation(st.velocity()));
        tr.energy_residual.push_back(std::fabs(stats.kinetic - ke_prev + stats.dissipation));
    }
    return tr;
}

// A_ij(t) = \int_{Y_f} W_j . e_i : average the two i-faces of each fluid
// cell, so A(0) = |Y_f| I holds exactly.
inline Mat2 permeability_sample(const CellGeometry& cell, const MacField& W0, const MacField& W1) {
    const int n = cell.n();
    const double h2 = 1.0 / (static_cast<double>(n) * n);
    Mat2 A;
    const MacField* Wj[2] = {&W0, &W1};
    for (int j = 0; j < 2; ++j)
        for (int cy = 0; cy < n; ++cy)
            for (int cx = 0; cx < n; ++cx) {
                if (cell.solid(cx, cy)) continue;
                const MacField& w = *Wj[j];
                A.at(0, j) += 0.5 * (w.u.p(cx, cy) + w.u.p(cx + 1, cy)) * h2;
                A.at(1, j) += 0.5 * (w.v.p(cx, cy) + w.v.p(cx, cy + 1)) * h2;
            }
    return A;
}

inline double frob(const Mat2& m) {
    return std::sqrt(sq(m.a11) + sq(m.a12) + sq(m.a21) + sq(m.a22));
}

inline PermeabilityKernel permeability(const CorrectorTrajectory& t0, const CorrectorTrajectory& t1) {
    if (!t0.grid.same_as(t1.grid)) throw config_error("permeability: trajectories on different time grids");
    if (t0.cell.hash() != t1.cell.hash()) throw config_error("permeability: trajectories on different cells");
    PermeabilityKernel K;
    K.grid = t0.grid;
    K.fluid_volume = t0.fluid_volume;
    const int M = K.grid.steps();
    K.A.resize(M + 1);
    for (int k = 0; k <= M; ++k) K.A[k] = permeability_sample(t0.cell, t0.W[k], t1.W[k]);
    K.dA.resize(M + 1);
    for (int k = 0; k <= M; ++k) {
        if (k == 0) {
            K.dA[k] = (K.A[1] - K.A[0]) * (1.0 / K.grid.dt(1));
        } else if (k == M) {
            K.dA[k] = (K.A[M] - K.A[M - 1]) * (1.0 / K.grid.dt(M));
        } else {
            double hm = K.grid.dt(k), hp = K.grid.dt(k + 1);
            Mat2 fwd = (K.A[k + 1] - K.A[k]) * (1.0 / hp);
            Mat2 bwd = (K.A[k] - K.A[k - 1]) * (1.0 / hm);
            K.dA[k] = (fwd * hm + bwd * hp) * (1.0 / (hm + hp));
        }
    }
    for (int k = 0; k <= M; ++k) K.dA_l1 += K.grid.weight(k) * frob(K.dA[k]);
    return K;
}

struct LineFit {
    double slope = 0, intercept = 0, r2 = 1;
    int points = 0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    LineFit f;
    f.points = static_cast<int>(x.size());
    if (f.points < 2) return f;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (int i = 0; i < f.points; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
        syy += y[i] * y[i];
    }
    double n = f.points;
    double det = n * sxx - sx * sx;
    f.slope = (n * sxy - sx * sy) / det;
    f.intercept = (sy - f.slope * sx) / n;
    double ss_tot = syy - sy * sy / n;
    double ss_res = 0;
    for (int i = 0; i < f.points; ++i) ss_res += sq(y[i] - (f.slope * x[i] + f.intercept));
    f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return f;
}

struct DecayDiagnostics {
    bool flat = false;         // no obstacle: grad W identically zero
    LineFit sigma_fit;         // log ||grad W|| vs log t on (0, T/10]
    double sigma = 0;          // -slope of the fit
    double weighted_dtW[3] = {0, 0, 0}; // \int t^a ||dW/dt||^2, a in {.5,.8,1}
    double weighted_pi[3] = {0, 0, 0};  // \int t^a ||pi||^2
    LineFit trace_fit;         // log tr A vs t on [T/4, T]
};

inline DecayDiagnostics decay_diagnostics(const CorrectorTrajectory& tr, const PermeabilityKernel& K) {
    const TimeGrid& g = tr.grid;
    const double T = g.horizon();
    int early = 0;
    for (int k = 0; k <= g.steps(); ++k)
        if (g.t(k) <= T / 10.0) ++early;
    if (early < 8) throw config_error("decay_diagnostics: need at least 8 nodes in [0, T/10]");

    DecayDiagnostics d;
    std::vector<double> lx, ly;
    double gmax = 0;
    for (int k = 1; k <= g.steps(); ++k) {
        double gn = std::sqrt(std::max(tr.grad_norm2[k], 0.0));
        gmax = std::max(gmax, gn);
        if (g.t(k) <= T / 10.0 && gn > 1e-13) {
            lx.push_back(std::log(g.t(k)));
            ly.push_back(std::log(gn));
        }
    }
    if (gmax <= 1e-12 || lx.size() < 2) {
        d.flat = true;
    } else {
        d.sigma_fit = fit_line(lx, ly);
        d.sigma = -d.sigma_fit.slope;
    }

    const int n = tr.cell.n();
    const double h2 = 1.0 / (static_cast<double>(n) * n);
    const double alphas[3] = {0.5, 0.8, 1.0};
    for (int k = 1; k <= g.steps(); ++k) {
        double dt = g.dt(k);
        double tm = 0.5 * (g.t(k) + g.t(k - 1));
        double dtw2 = 0, pi2 = 0;
        for (size_t q = 0; q < tr.W[k].u.size(); ++q)
            dtw2 += sq(tr.W[k].u.raw()[q] - tr.W[k - 1].u.raw()[q]);
        for (size_t q = 0; q < tr.W[k].v.size(); ++q)
            dtw2 += sq(tr.W[k].v.raw()[q] - tr.W[k - 1].v.raw()[q]);
        dtw2 *= h2 / (dt * dt);
        for (double v : tr.pi[k].raw()) pi2 += v * v;
        pi2 *= h2;
        for (int a = 0; a < 3; ++a) {
            double w = std::pow(tm, alphas[a]) * dt;
            d.weighted_dtW[a] += w * dtw2;
            d.weighted_pi[a] += w * pi2;
        }
    }

    std::vector<double> tx, tyv;
    for (size_t k = 0; k < K.A.size(); ++k) {
        double t = K.grid.t(static_cast<int>(k));
        double trc = K.A[k].trace();
        if (t >= T / 4.0 && trc > 0) {
            tx.push_back(t);
            tyv.push_back(std::log(trc));
        }
    }
    d.trace_fit = fit_line(tx, tyv);
    return d;
}

struct SemigroupReport {
    TimeGrid grid;
    std::vector<double> discrepancy;     // ||d_t w - W|| at nodes 1..M
    std::vector<double> rel_discrepancy; // divided by ||W|| at the node
};

// Alternative corrector: d_t w - lap w + grad q = e_j, w(0) = 0. Its
// discrete time derivative should reproduce W away from t = 0. Both
// problems are advanced with the monolithic (unsplit) step, for which the
// identity telescopes exactly on any grid; the reported discrepancy is
// then a pure consistency measurement.
inline SemigroupReport verify_semigroup_relation(const CellGeometry& cell, int j,
                                                 const TimeGrid& grid) {
    if (j != 0 && j != 1) throw config_error("verify_semigroup_relation: direction must be 0 or 1");
    MacStokes sw = make_cell_stokes(cell);
    MacStokes sW = make_cell_stokes(cell);
    sW.set_uniform_initial(j);
    MacField force = MacField::periodic(cell.n());
    Field& fc = j == 0 ? force.u : force.v;
    for (int jj = 0; jj < fc.ny(); ++jj)
        for (int ii = 0; ii < fc.nx(); ++ii)
            if ((j == 0 && sw.u_active(ii, jj)) || (j == 1 && sw.v_active(ii, jj))) fc(ii, jj) = 1.0;
    SemigroupReport rep;
    rep.grid = grid;
    const int n = cell.n();
    const double h2 = 1.0 / (static_cast<double>(n) * n);
    MacField prev = sw.velocity();
    for (int k = 1; k <= grid.steps(); ++k) {
        double dt = grid.dt(k);
        sW.step_coupled(dt);
        sw.step_coupled(dt, &force);
        double num = 0, den = 0;
        for (size_t q = 0; q < prev.u.size(); ++q) {
            double dtw = (sw.velocity().u.raw()[q] - prev.u.raw()[q]) / dt;
            num += sq(dtw - sW.velocity().u.raw()[q]);
            den += sq(sW.velocity().u.raw()[q]);
        }
        for (size_t q = 0; q < prev.v.size(); ++q) {
            double dtw = (sw.velocity().v.raw()[q] - prev.v.raw()[q]) / dt;
            num += sq(dtw - sW.velocity().v.raw()[q]);
            den += sq(sW.velocity().v.raw()[q]);
        }
        rep.discrepancy.push_back(std::sqrt(num * h2));
        rep.rel_discrepancy.push_back(den > 0 ? std::sqrt(num / den) : std::sqrt(num * h2));
        prev = sw.velocity();
    }
    return rep;
}

} // namespace permlab

#endif
