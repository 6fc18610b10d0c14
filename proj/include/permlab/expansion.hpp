#ifndef PERMLAB_EXPANSION_HPP
#define PERMLAB_EXPANSION_HPP

#include <cmath>
#include <string>
#include <vector>

#include "permlab/aux_correctors.hpp"
#include "permlab/cell_corrector.hpp"
#include "permlab/darcy_memory.hpp"
#include "permlab/divsolve.hpp"
#include "permlab/fine_scale.hpp"
#include "permlab/smoothing.hpp"

namespace permlab {

// ---------------------------------------------------------------- forcing

// F = f - grad p0 and its localized mollification G = S_delta(varphi_eps F)
// with delta = eps/2, both sampled on the macroscopic box faces per node.
struct ForcingFields {
    TimeGrid grid;
    int N = 0;
    double eps = 0, delta = 0;
    std::vector<MacField> F, G;
};

inline ForcingFields make_forcing_fields(const BodyForce& f, const HomogenizedSolution& hom,
                                         double eps) {
    ForcingFields ff;
    ff.grid = hom.grid;
    ff.N = hom.N;
    ff.eps = eps;
    ff.delta = 0.5 * eps;
    const int N = ff.N;
    const double h = 1.0 / N;
    MacField gp = MacField::box(N);
    for (int k = 0; k <= ff.grid.steps(); ++k) {
        MacField Fk = f.sample(N, ff.grid.t(k));
        grad_to_faces(hom.p[k], gp, h);
        Fk -= gp;
        zero_boundary_faces(Fk); // F . n = 0, matching the Darcy no-flux form
        MacField cut = Fk;
        for (int j = 0; j < N; ++j)
            for (int i = 0; i <= N; ++i)
                cut.u(i, j) *= generic_cutoff(eps, i * h, (j + 0.5) * h);
        for (int j = 0; j <= N; ++j)
            for (int i = 0; i < N; ++i)
                cut.v(i, j) *= generic_cutoff(eps, (i + 0.5) * h, j * h);
        ff.G.push_back(smooth_mac(cut, ff.delta, h));
        ff.F.push_back(std::move(Fk));
    }
    return ff;
}

// ------------------------------------------------------- convolution core

namespace detail {

inline void check_commensurate(const CorrectorTrajectory& tr0, const CorrectorTrajectory& tr1,
                               int N, const TimeGrid& g) {
    const int n = tr0.cell.n();
    if (tr0.cell.hash() != tr1.cell.hash())
        throw config_error("corrector convolution: trajectories on different cells");
    if (!tr0.grid.same_as(g) || !tr1.grid.same_as(g))
        throw config_error("corrector convolution: time grids disagree");
    if (g.gamma() != 1.0)
        throw config_error("corrector convolution: needs a uniform time grid");
    if (N % n != 0)
        throw config_error("corrector convolution: cell grid does not divide the macroscopic grid");
}

inline std::vector<int> mod_map(int count, int n) {
    std::vector<int> m(count);
    for (int i = 0; i < count; ++i) m[i] = i % n;
    return m;
}

} // namespace detail

// out += \int_0^{t_k} W(x/eps, t_k - s) F(x, s) ds at node k (trapezoid).
inline void accumulate_corrector_conv(const CorrectorTrajectory& tr0,
                                      const CorrectorTrajectory& tr1,
                                      const std::vector<MacField>& F, const TimeGrid& g, int k,
                                      MacField& out) {
    const int N = out.v.nx();
    const int n = tr0.cell.n();
    auto im = detail::mod_map(N + 1, n);
    for (int s = 0; s <= k; ++s) {
        double wt = conv_weight(g, k, s);
        if (wt <= 0) continue;
        const MacField& W0 = tr0.W[k - s];
        const MacField& W1 = tr1.W[k - s];
        const MacField& f = F[s];
        for (int j = 0; j < N; ++j) {
            int jm = im[j];
            for (int i = 0; i <= N; ++i) {
                int c0 = std::max(i - 1, 0), c1 = std::min(i, N - 1);
                double f2 = 0.25 * (f.v(c0, j) + f.v(c0, j + 1) + f.v(c1, j) + f.v(c1, j + 1));
                out.u(i, j) += wt * (W0.u.p(im[i], jm) * f.u(i, j) + W1.u.p(im[i], jm) * f2);
            }
        }
        for (int j = 0; j <= N; ++j) {
            int jm = im[j];
            for (int i = 0; i < N; ++i) {
                int c0 = std::max(j - 1, 0), c1 = std::min(j, N - 1);
                double f1 = 0.25 * (f.u(i, c0) + f.u(i + 1, c0) + f.u(i, c1) + f.u(i + 1, c1));
                out.v(i, j) += wt * (W0.v.p(im[i], jm) * f1 + W1.v.p(im[i], jm) * f.v(i, j));
            }
        }
    }
}

// Full history of W(./eps) * F on the box faces.
inline std::vector<MacField> corrector_convolution(const CorrectorTrajectory& tr0,
                                                   const CorrectorTrajectory& tr1,
                                                   const std::vector<MacField>& F, int N,
                                                   const TimeGrid& g) {
    detail::check_commensurate(tr0, tr1, N, g);
    if (static_cast<int>(F.size()) != g.nodes())
        throw config_error("corrector convolution: field history does not match the time grid");
    std::vector<MacField> out;
    for (int k = 0; k <= g.steps(); ++k) {
        MacField acc = MacField::box(N);
        accumulate_corrector_conv(tr0, tr1, F, g, k, acc);
        out.push_back(std::move(acc));
    }
    return out;
}

// out += \int_0^{t_k} A(t_k - s) F(x, s) ds (spatially constant kernel).
inline void accumulate_kernel_conv(const PermeabilityKernel& K, const std::vector<MacField>& F,
                                   const TimeGrid& g, int k, MacField& out) {
    for (int s = 0; s <= k; ++s) {
        double wt = conv_weight(g, k, s);
        if (wt > 0) mat_axpy_faces(out, K.A[k - s], F[s], wt);
    }
}

// Gradient tensor samples: entry (i,k) = d_k v_i. The diagonal entries live
// at cell centers, the off-diagonal ones at cell corners.
struct TensorField {
    Field c11, c22; // centers
    Field x12, x21; // corners: d2 v1 and d1 v2
};

// (grad_y W)(x/eps) * F: the gradient is taken on the cell grid (O(1) in
// the fast variable), then sampled at the matching macroscopic positions.
inline void accumulate_grad_conv(const CorrectorTrajectory& tr0, const CorrectorTrajectory& tr1,
                                 const std::vector<MacField>& F, const TimeGrid& g, int k,
                                 TensorField& out) {
    const int N = out.c11.nx();
    const int n = tr0.cell.n();
    const double hc = 1.0 / n;
    const double h = 1.0 / N;
    auto im = detail::mod_map(N + 1, n);
    for (int s = 0; s <= k; ++s) {
        double wt = conv_weight(g, k, s);
        if (wt <= 0) continue;
        const MacField* W[2] = {&tr0.W[k - s], &tr1.W[k - s]};
        const MacField& f = F[s];
        for (int j = 0; j < N; ++j) {
            int jm = im[j];
            for (int i = 0; i < N; ++i) {
                int imc = im[i];
                double f1 = 0.5 * (f.u(i, j) + f.u(i + 1, j));
                double f2 = 0.5 * (f.v(i, j) + f.v(i, j + 1));
                double fc[2] = {f1, f2};
                for (int d = 0; d < 2; ++d) {
                    const MacField& w = *W[d];
                    out.c11(i, j) += wt * fc[d] * (w.u.p(imc + 1, jm) - w.u.p(imc, jm)) / hc;
                    out.c22(i, j) += wt * fc[d] * (w.v.p(imc, jm + 1) - w.v.p(imc, jm)) / hc;
                }
            }
        }
        // interior corners only; the norm masks skip the rest
        for (int j = 1; j < N; ++j) {
            int jm = im[j];
            for (int i = 1; i < N; ++i) {
                int imc = im[i];
                double f1 = 0.5 * (f.u(i, j) + f.u(i, j - 1));
                double f2 = 0.5 * (f.v(i, j) + f.v(i - 1, j));
                double fc[2] = {f1, f2};
                for (int d = 0; d < 2; ++d) {
                    const MacField& w = *W[d];
                    out.x12(i, j) += wt * fc[d] * (w.u.p(imc, jm) - w.u.p(imc, jm - 1)) / hc;
                    out.x21(i, j) += wt * fc[d] * (w.v.p(imc, jm) - w.v.p(imc - 1, jm)) / hc;
                }
            }
        }
    }
    (void)h;
}

// Discrete gradient tensor of a box MAC field (no scaling applied).
inline TensorField velocity_gradient(const MacField& v, int N, double h) {
    TensorField t{Field(N, N), Field(N, N), Field(N + 1, N + 1), Field(N + 1, N + 1)};
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i) {
            t.c11(i, j) = (v.u(i + 1, j) - v.u(i, j)) / h;
            t.c22(i, j) = (v.v(i, j + 1) - v.v(i, j)) / h;
        }
    for (int j = 1; j < N; ++j)
        for (int i = 1; i < N; ++i) {
            t.x12(i, j) = (v.u(i, j) - v.u(i, j - 1)) / h;
            t.x21(i, j) = (v.v(i, j) - v.v(i - 1, j)) / h;
        }
    return t;
}

// ------------------------------------------------------------ error norms

struct ErrorNorms {
    double vel = 0;      // || u_eps - W(./eps) * F ||_{L2(L2)}
    double grad = 0;     // || eps grad u_eps - (grad W)(./eps) * F ||
    double dtv = 0;      // || d_t u_eps - (d_t W)(./eps) * F - W(0) F ||
    double pressure = 0; // inf_c || extended p_eps - p0 - c ||
};

namespace detail {

// discrete time derivative of the corrector history (uniform grid)
inline std::vector<MacField> corrector_rate(const CorrectorTrajectory& tr) {
    const int M = tr.grid.steps();
    std::vector<MacField> d;
    for (int k = 0; k <= M; ++k) {
        int a = std::max(k - 1, 0), b = std::min(k + 1, M);
        MacField dk = tr.W[b];
        dk -= tr.W[a];
        dk *= 1.0 / (tr.grid.t(b) - tr.grid.t(a));
        d.push_back(std::move(dk));
    }
    return d;
}

} // namespace detail

inline ErrorNorms error_norms(const FineScaleSolution& fine, const CorrectorTrajectory& tr0,
                              const CorrectorTrajectory& tr1, const std::vector<MacField>& Fhist,
                              const HomogenizedSolution& hom, const PerforatedDomain& dom) {
    const int N = dom.N();
    const TimeGrid& g = fine.grid;
    detail::check_commensurate(tr0, tr1, N, g);
    if (hom.N != N || fine.N != N || !hom.grid.same_as(g))
        throw config_error("error norms: solutions on incompatible grids");
    if (static_cast<int>(Fhist.size()) != g.nodes())
        throw config_error("error norms: field history does not match the time grid");
    const double h = 1.0 / N;
    const double h2 = h * h;
    const int M = g.steps();

    // face masks: at least one adjacent fluid cell
    Field umask(N + 1, N), vmask(N, N + 1), cmask(N + 1, N + 1);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i <= N; ++i)
            umask(i, j) = (dom.fluid(i - 1, j) || dom.fluid(i, j)) ? 1.0 : 0.0;
    for (int j = 0; j <= N; ++j)
        for (int i = 0; i < N; ++i)
            vmask(i, j) = (dom.fluid(i, j - 1) || dom.fluid(i, j)) ? 1.0 : 0.0;
    for (int j = 1; j < N; ++j)
        for (int i = 1; i < N; ++i)
            cmask(i, j) = (dom.fluid(i - 1, j - 1) && dom.fluid(i, j - 1) && dom.fluid(i - 1, j) &&
                           dom.fluid(i, j))
                              ? 1.0
                              : 0.0;

    auto masked_mac_norm2 = [&](const MacField& a, const MacField& b) {
        double s = 0;
        for (int j = 0; j < N; ++j)
            for (int i = 0; i <= N; ++i)
                if (umask(i, j) != 0.0) s += sq(a.u(i, j) - b.u(i, j));
        for (int j = 0; j <= N; ++j)
            for (int i = 0; i < N; ++i)
                if (vmask(i, j) != 0.0) s += sq(a.v(i, j) - b.v(i, j));
        return s * h2;
    };

    auto dW0 = detail::corrector_rate(tr0);
    auto dW1 = detail::corrector_rate(tr1);
    CorrectorTrajectory rt0 = tr0, rt1 = tr1; // rate trajectories reuse the conv kernel
    rt0.W = dW0;
    rt1.W = dW1;

    ErrorNorms en;
    double vel2 = 0, grad2 = 0, dtv2 = 0;
    double pS1 = 0, pS2 = 0;
    MacField prev_u = fine.u[0];
    for (int k = 0; k <= M; ++k) {
        double wt = g.weight(k);
        // (i) velocity
        MacField conv = MacField::box(N);
        accumulate_corrector_conv(tr0, tr1, Fhist, g, k, conv);
        vel2 += wt * masked_mac_norm2(fine.u[k], conv);
        // (ii) gradient tensor
        TensorField mt{Field(N, N), Field(N, N), Field(N + 1, N + 1), Field(N + 1, N + 1)};
        accumulate_grad_conv(tr0, tr1, Fhist, g, k, mt);
        TensorField ft = velocity_gradient(fine.u[k], N, h);
        double gs = 0;
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i)
                if (dom.fluid(i, j)) {
                    gs += sq(fine.eps * ft.c11(i, j) - mt.c11(i, j));
                    gs += sq(fine.eps * ft.c22(i, j) - mt.c22(i, j));
                }
        for (int j = 1; j < N; ++j)
            for (int i = 1; i < N; ++i)
                if (cmask(i, j) != 0.0) {
                    gs += sq(fine.eps * ft.x12(i, j) - mt.x12(i, j));
                    gs += sq(fine.eps * ft.x21(i, j) - mt.x21(i, j));
                }
        grad2 += wt * gs * h2;
        // (iii) temporal derivative, at nodes k >= 1 with the backward
        // difference of the fine solution
        if (k >= 1) {
            MacField model = MacField::box(N);
            accumulate_corrector_conv(rt0, rt1, Fhist, g, k, model);
            // + W(0) F(t_k), with the complementary face average
            const MacField* W0[2] = {&tr0.W[0], &tr1.W[0]};
            auto im = detail::mod_map(N + 1, tr0.cell.n());
            const MacField& fk = Fhist[k];
            for (int j = 0; j < N; ++j)
                for (int i = 0; i <= N; ++i) {
                    int c0 = std::max(i - 1, 0), c1 = std::min(i, N - 1);
                    double f2 =
                        0.25 * (fk.v(c0, j) + fk.v(c0, j + 1) + fk.v(c1, j) + fk.v(c1, j + 1));
                    model.u(i, j) +=
                        W0[0]->u.p(im[i], im[j]) * fk.u(i, j) + W0[1]->u.p(im[i], im[j]) * f2;
                }
            for (int j = 0; j <= N; ++j)
                for (int i = 0; i < N; ++i) {
                    int c0 = std::max(j - 1, 0), c1 = std::min(j, N - 1);
                    double f1 =
                        0.25 * (fk.u(i, c0) + fk.u(i + 1, c0) + fk.u(i, c1) + fk.u(i + 1, c1));
                    model.v(i, j) +=
                        W0[0]->v.p(im[i], im[j]) * f1 + W0[1]->v.p(im[i], im[j]) * fk.v(i, j);
                }
            MacField du = fine.u[k];
            du -= prev_u;
            du *= 1.0 / g.dt(k);
            dtv2 += g.dt(k) * masked_mac_norm2(du, model);
        }
        prev_u = fine.u[k];
        // (iv) pressure, on the whole box with the hole extension; the
        // fine pressure at t = 0 is not defined by the initial data, so
        // the time quadrature is the right-endpoint rule over k >= 1
        if (k >= 1) {
            Field pe = extend_pressure(fine.p[k], dom);
            pe -= hom.p[k];
            double s1 = 0, s2 = 0;
            for (double v : pe.raw()) {
                s1 += v;
                s2 += v * v;
            }
            pS1 += g.dt(k) * s1 * h2;
            pS2 += g.dt(k) * s2 * h2;
        }
    }
    en.vel = std::sqrt(vel2);
    en.grad = std::sqrt(grad2);
    en.dtv = std::sqrt(dtv2);
    // quadratic in c, minimized at the space-time mean
    double T = g.horizon();
    en.pressure = std::sqrt(std::max(pS2 - pS1 * pS1 / T, 0.0));
    return en;
}

inline LineFit rate_fit(const std::vector<double>& eps, const std::vector<double>& err) {
    if (eps.size() != err.size() || eps.size() < 3)
        throw config_error("rate fit: need at least 3 epsilon values");
    std::vector<double> lx, ly;
    for (size_t i = 0; i < eps.size(); ++i) {
        if (err[i] <= 0) throw config_error("rate fit: nonpositive error value");
        lx.push_back(std::log(eps[i]));
        ly.push_back(std::log(err[i]));
    }
    return fit_line(lx, ly);
}

// ------------------------------------------------------------ layer sources

// J1, J2 and their split against the layer decomposition. The discrete
// assembly uses the exact product rule for the staggered divergence, so
// J1 + J2 equals div(psi V) to round-off, where
// V = W(./eps) * G + eps phi(./eps) *2 dG.
struct LayerSources {
    TimeGrid grid;
    int N = 0;
    double eps = 0;
    Field layer_mask;  // discrete support of grad psi (cells)
    Field region_id;   // epsilon-cell id on fluid cells, -1 on obstacles
    int region_count = 0;
    std::vector<MacField> psiV;
    std::vector<Field> J1, J2;
    std::vector<Field> cond_avg; // per-cell average of J1 + J2, broadcast
    std::vector<Field> Pi, H;    // eta-rhs (zero cell means) and xi-rhs (the averages)
    std::vector<double> supp_violation;
    std::vector<double> total_integral;
    std::vector<double> boundary_flux;
    std::vector<double> pi_mean_res; // max |per-cell mean of Pi|, re-summed
};

// phi(./eps) *2 dG at node k: component m gets phi_{mk,j} nabla_k G_j.
inline void accumulate_phi_conv(const BogovskiiCorrector& bog, const std::vector<MacField>& G,
                                const TimeGrid& g, int k, MacField& out) {
    const int N = out.v.nx();
    const int n = bog.n;
    const double h = 1.0 / N;
    auto im = detail::mod_map(N + 1, n);
    // zero-extended accessors for the compactly supported G
    for (int s = 0; s <= k; ++s) {
        double wt = conv_weight(g, k, s);
        if (wt <= 0) continue;
        const auto& ph = bog.phi[k - s];
        const Field& gu = G[s].u;
        const Field& gv = G[s].v;
        auto U = [&](int i, int j) { return (i < 0 || i > N || j < 0 || j >= N) ? 0.0 : gu(i, j); };
        auto V = [&](int i, int j) { return (i < 0 || i >= N || j < 0 || j > N) ? 0.0 : gv(i, j); };
        for (int j = 0; j < N; ++j) {
            int jm = im[j];
            for (int i = 0; i <= N; ++i) {
                double d1g1 = 0.5 * (U(i + 1, j) - U(i - 1, j)) / h;
                double d2g1 = 0.5 * (U(i, j + 1) - U(i, j - 1)) / h;
                double d1g2 = 0.5 * (V(i, j) + V(i, j + 1) - V(i - 1, j) - V(i - 1, j + 1)) / h;
                double d2g2 = 0.5 * (V(i - 1, j + 1) - V(i - 1, j) + V(i, j + 1) - V(i, j)) / h;
                out.u(i, j) += wt * (ph[0].u.p(im[i], jm) * d1g1 + ph[1].u.p(im[i], jm) * d1g2 +
                                     ph[2].u.p(im[i], jm) * d2g1 + ph[3].u.p(im[i], jm) * d2g2);
            }
        }
        for (int j = 0; j <= N; ++j) {
            int jm = im[j];
            for (int i = 0; i < N; ++i) {
                double d2g2 = 0.5 * (V(i, j + 1) - V(i, j - 1)) / h;
                double d1g2 = 0.5 * (V(i + 1, j) - V(i - 1, j)) / h;
                double d2g1 = 0.5 * (U(i, j) + U(i + 1, j) - U(i, j - 1) - U(i + 1, j - 1)) / h;
                double d1g1 = 0.5 * (U(i + 1, j - 1) - U(i, j - 1) + U(i + 1, j) - U(i, j)) / h;
                out.v(i, j) += wt * (ph[0].v.p(im[i], jm) * d1g1 + ph[1].v.p(im[i], jm) * d1g2 +
                                     ph[2].v.p(im[i], jm) * d2g1 + ph[3].v.p(im[i], jm) * d2g2);
            }
        }
    }
}

inline LayerSources assemble_J(const CutoffFunction& cutoff, const LayerDecomposition& decomp,
                               const CorrectorTrajectory& tr0, const CorrectorTrajectory& tr1,
                               const PermeabilityKernel& K, const BogovskiiCorrector& bog,
                               const std::vector<MacField>& G, const PerforatedDomain& dom) {
    const int N = dom.N();
    const double h = 1.0 / N;
    const double eps = dom.eps();
    const TimeGrid& g = tr0.grid;
    detail::check_commensurate(tr0, tr1, N, g);
    if (!K.grid.same_as(g) || !bog.grid.same_as(g))
        throw config_error("layer sources: kernel or corrector time grid disagrees");
    if (cutoff.N() != N || cutoff.eps() != eps || decomp.N() != N)
        throw config_error("layer sources: cutoff grid disagrees");
    if (static_cast<int>(G.size()) != g.nodes())
        throw config_error("layer sources: field history does not match the time grid");

    // radial cutoff sampled at the box faces (exactly 0 on the border)
    CutoffProfile prof(eps);
    Field psi_u(N + 1, N), psi_v(N, N + 1);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i <= N; ++i)
            psi_u(i, j) = prof.value(Domain::dist_boundary(i * h, (j + 0.5) * h));
    for (int j = 0; j <= N; ++j)
        for (int i = 0; i < N; ++i)
            psi_v(i, j) = prof.value(Domain::dist_boundary((i + 0.5) * h, j * h));

    LayerSources src;
    src.grid = g;
    src.N = N;
    src.eps = eps;
    const int nper = tr0.cell.n();
    const int nc = N / nper;
    src.region_count = nc * nc;
    src.layer_mask = Field(N, N);
    src.region_id = Field(N, N, -1.0);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i) {
            if (dom.fluid(i, j)) src.region_id(i, j) = (i / nper) + nc * (j / nper);
            bool active = psi_u(i + 1, j) != psi_u(i, j) || psi_v(i, j + 1) != psi_v(i, j);
            if (!active) continue;
            if (dom.solid(i, j))
                throw solver_error("layer sources: cut-off layer meets an obstacle");
            src.layer_mask(i, j) = 1.0;
        }

    const int M = g.steps();
    for (int k = 0; k <= M; ++k) {
        MacField conv1 = MacField::box(N);
        accumulate_corrector_conv(tr0, tr1, G, g, k, conv1);
        MacField conv2 = MacField::box(N);
        accumulate_phi_conv(bog, G, g, k, conv2);
        MacField aconv = MacField::box(N);
        accumulate_kernel_conv(K, G, g, k, aconv);

        MacField V0 = conv1;
        V0.axpy(eps, conv2);
        MacField psiV = V0;
        for (int j = 0; j < N; ++j)
            for (int i = 0; i <= N; ++i) psiV.u(i, j) *= psi_u(i, j);
        for (int j = 0; j <= N; ++j)
            for (int i = 0; i < N; ++i) psiV.v(i, j) *= psi_v(i, j);

        Field J1(N, N), J2(N, N);
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i) {
                double dp1 = (psi_u(i + 1, j) - psi_u(i, j)) / h;
                double dp2 = (psi_v(i, j + 1) - psi_v(i, j)) / h;
                double mp1 = 0.5 * (psi_u(i + 1, j) + psi_u(i, j));
                double mp2 = 0.5 * (psi_v(i, j + 1) + psi_v(i, j));
                double b1 = 0.5 * (conv1.u(i, j) - aconv.u(i, j) + conv1.u(i + 1, j) - aconv.u(i + 1, j));
                double b2 = 0.5 * (conv1.v(i, j) - aconv.v(i, j) + conv1.v(i, j + 1) - aconv.v(i, j + 1));
                double c1 = 0.5 * (aconv.u(i, j) + eps * conv2.u(i, j) + aconv.u(i + 1, j) +
                                   eps * conv2.u(i + 1, j));
                double c2 = 0.5 * (aconv.v(i, j) + eps * conv2.v(i, j) + aconv.v(i, j + 1) +
                                   eps * conv2.v(i, j + 1));
                double dv = (V0.u(i + 1, j) - V0.u(i, j) + V0.v(i, j + 1) - V0.v(i, j)) / h;
                double dv1 = (V0.u(i + 1, j) - V0.u(i, j)) / h;
                double dv2 = (V0.v(i, j + 1) - V0.v(i, j)) / h;
                (void)dv;
                J1(i, j) = dp1 * b1 + dp2 * b2;
                J2(i, j) = dp1 * c1 + dp2 * c2 + mp1 * dv1 + mp2 * dv2;
            }

        // conditional average of the full source over the epsilon cells; the
        // zero-mean remainder goes to the per-cell (eta) solves, the averages
        // to the global (xi) solve, so the Bogovskii constant seen by the
        // oscillatory part is the epsilon-local one
        std::vector<double> rsum(src.region_count, 0.0);
        std::vector<int> rcnt(src.region_count, 0);
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i)
                if (src.region_id(i, j) >= 0.0) {
                    int r = static_cast<int>(src.region_id(i, j));
                    rsum[r] += J1(i, j) + J2(i, j);
                    ++rcnt[r];
                }
        Field avg(N, N), Pi(N, N), H(N, N);
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i)
                if (src.region_id(i, j) >= 0.0) {
                    int r = static_cast<int>(src.region_id(i, j));
                    avg(i, j) = rsum[r] / rcnt[r];
                    Pi(i, j) = J1(i, j) + J2(i, j) - avg(i, j);
                    H(i, j) = avg(i, j);
                }

        // honest re-summation of the per-cell means of Pi
        std::vector<double> psum(src.region_count, 0.0);
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i)
                if (src.region_id(i, j) >= 0.0)
                    psum[static_cast<int>(src.region_id(i, j))] += Pi(i, j);
        double pmean = 0;
        for (int r = 0; r < src.region_count; ++r)
            if (rcnt[r] > 0) pmean = std::max(pmean, std::fabs(psum[r] / rcnt[r]));
        src.pi_mean_res.push_back(pmean);

        double viol = 0, total = 0, flux = 0;
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i) {
                if (src.layer_mask(i, j) == 0.0) viol = std::max(viol, std::fabs(J1(i, j)));
                if (dom.fluid(i, j)) total += (J1(i, j) + J2(i, j)) * h * h;
            }
        for (int j = 0; j < N; ++j)
            flux = std::max(flux, std::max(std::fabs(psiV.u(0, j)), std::fabs(psiV.u(N, j))));
        for (int i = 0; i < N; ++i)
            flux = std::max(flux, std::max(std::fabs(psiV.v(i, 0)), std::fabs(psiV.v(i, N))));

        src.psiV.push_back(std::move(psiV));
        src.J1.push_back(std::move(J1));
        src.J2.push_back(std::move(J2));
        src.cond_avg.push_back(std::move(avg));
        src.Pi.push_back(std::move(Pi));
        src.H.push_back(std::move(H));
        src.supp_violation.push_back(viol);
        src.total_integral.push_back(total);
        src.boundary_flux.push_back(flux);
    }
    return src;
}

// -------------------------------------------------- boundary-layer solves

inline double grad_energy_zero_ext(const Field& c) {
    const int nx = c.nx(), ny = c.ny();
    double s = 0;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i <= nx; ++i) {
            double l = i > 0 ? c(i - 1, j) : 0.0;
            double r = i < nx ? c(i, j) : 0.0;
            s += sq(r - l);
        }
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i < nx; ++i) {
            double l = j > 0 ? c(i, j - 1) : 0.0;
            double r = j < ny ? c(i, j) : 0.0;
            s += sq(r - l);
        }
    return s;
}

struct BoundaryLayerCorrectors {
    TimeGrid grid;
    double eps = 0;
    std::vector<MacField> xi_hat, eta_hat; // primitives, solved per node
    std::vector<MacField> xi, eta;         // rates, exact inverse cumulative trapezoid
    std::vector<double> xi_div_res, eta_div_res;
    std::vector<double> xi_l2, xi_grad, eta_l2, eta_grad; // per node, hats
    double xi_norm = 0, eta_norm = 0; // ||.||_{L2(L2)} + eps ||grad .||_{L2(L2)}
};

inline BoundaryLayerCorrectors boundary_layer_solve(const LayerSources& src,
                                                    const PerforatedDomain& dom,
                                                    double tol = 1e-11) {
    const int N = src.N;
    if (dom.N() != N) throw config_error("boundary layer: domain grid disagrees");
    const double h = 1.0 / N;
    BoundaryLayerCorrectors bl;
    bl.grid = src.grid;
    bl.eps = src.eps;

    Field fluid_mask(N, N);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i) fluid_mask(i, j) = dom.fluid(i, j) ? 1.0 : 0.0;

    // per-cell fluid lists for the eta solves
    std::vector<std::vector<std::pair<int, int>>> rcells(src.region_count);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i)
            if (src.region_id(i, j) >= 0.0)
                rcells[static_cast<int>(src.region_id(i, j))].push_back({i, j});

    Field scratch(N, N);
    const int M = src.grid.steps();
    for (int k = 0; k <= M; ++k) {
        auto xs = solve_divergence_region(fluid_mask, src.H[k], tol);
        bl.xi_div_res.push_back(xs.residual);
        bl.xi_hat.push_back(std::move(xs.phi));

        MacField eta = MacField::box(N);
        double max_res = 0;
        double scale = src.Pi[k].max_abs();
        for (int r = 0; r < src.region_count; ++r) {
            if (rcells[r].empty()) continue;
            double mean = 0;
            for (auto& [i, j] : rcells[r]) mean += src.Pi[k](i, j);
            mean /= rcells[r].size();
            if (std::fabs(mean) > 1e-8 * (scale + 1e-300))
                throw solver_error("boundary layer: incompatible rhs on decomposition cell " +
                                   std::to_string(r));
            for (auto& [i, j] : rcells[r]) scratch(i, j) = 1.0;
            auto es = solve_divergence_region(scratch, src.Pi[k], tol);
            for (auto& [i, j] : rcells[r]) scratch(i, j) = 0.0;
            max_res = std::max(max_res, es.residual);
            eta += es.phi;
        }
        bl.eta_div_res.push_back(max_res);
        bl.eta_hat.push_back(std::move(eta));

        const MacField& xh = bl.xi_hat.back();
        const MacField& eh = bl.eta_hat.back();
        bl.xi_l2.push_back(std::sqrt(xh.dot(xh) * h * h));
        bl.eta_l2.push_back(std::sqrt(eh.dot(eh) * h * h));
        bl.xi_grad.push_back(std::sqrt(grad_energy_zero_ext(xh.u) + grad_energy_zero_ext(xh.v)));
        bl.eta_grad.push_back(std::sqrt(grad_energy_zero_ext(eh.u) + grad_energy_zero_ext(eh.v)));
    }

    // rates by exact inversion of the cumulative trapezoid rule
    bl.xi.push_back(MacField::box(N));
    bl.eta.push_back(MacField::box(N));
    for (int k = 1; k <= M; ++k) {
        double dt = src.grid.dt(k);
        MacField x = bl.xi_hat[k];
        x -= bl.xi_hat[k - 1];
        x *= 2.0 / dt;
        x -= bl.xi[k - 1];
        bl.xi.push_back(std::move(x));
        MacField e = bl.eta_hat[k];
        e -= bl.eta_hat[k - 1];
        e *= 2.0 / dt;
        e -= bl.eta[k - 1];
        bl.eta.push_back(std::move(e));
    }

    double xl = 0, xg = 0, el = 0, eg = 0;
    for (int k = 0; k <= M; ++k) {
        double wt = src.grid.weight(k);
        xl += wt * sq(bl.xi_l2[k]);
        xg += wt * sq(bl.xi_grad[k]);
        el += wt * sq(bl.eta_l2[k]);
        eg += wt * sq(bl.eta_grad[k]);
    }
    bl.xi_norm = std::sqrt(xl) + bl.eps * std::sqrt(xg);
    bl.eta_norm = std::sqrt(el) + bl.eps * std::sqrt(eg);
    return bl;
}

// ------------------------------------------------- divergence identity

struct DivergenceIdentity {
    std::vector<double> identity_res; // div(psi V) - div xi_hat - div eta_hat
    std::vector<double> w_div_res;    // div of the full error field w_eps
    std::vector<double> ablation_res; // identity without eta_hat on the layer
};

inline DivergenceIdentity check_divergence_identity(const LayerSources& src,
                                                    const BoundaryLayerCorrectors& bl,
                                                    const FineScaleSolution& fine,
                                                    const PerforatedDomain& dom) {
    const int N = src.N;
    const double h = 1.0 / N;
    DivergenceIdentity di;
    Field dpsiV(N, N), dxi(N, N), deta(N, N), dw(N, N);
    for (int k = 0; k <= src.grid.steps(); ++k) {
        div_to_cells(src.psiV[k], dpsiV, h);
        div_to_cells(bl.xi_hat[k], dxi, h);
        div_to_cells(bl.eta_hat[k], deta, h);
        MacField w = fine.u[k];
        w -= src.psiV[k];
        w += bl.xi_hat[k];
        w += bl.eta_hat[k];
        div_to_cells(w, dw, h);
        double ir = 0, wr = 0, ar = 0;
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i) {
                if (!dom.fluid(i, j)) continue;
                ir = std::max(ir, std::fabs(dpsiV(i, j) - dxi(i, j) - deta(i, j)));
                wr = std::max(wr, std::fabs(dw(i, j)));
                if (src.layer_mask(i, j) != 0.0)
                    ar = std::max(ar, std::fabs(dpsiV(i, j) - dxi(i, j)));
            }
        di.identity_res.push_back(ir);
        di.w_div_res.push_back(wr);
        di.ablation_res.push_back(ar);
    }
    return di;
}

// ----------------------------------------------- Bogovskii estimate probe

struct BogovskiiProbe {
    bool defined = false;
    double ratio_poincare = 0;  // ||v|| / (eps ||grad v||)
    double ratio_stability = 0; // eps ||grad v|| / ||g||
    double residual = 0;
    MacField v;
};

inline BogovskiiProbe bogovskii_estimate_probe(const PerforatedDomain& dom, const Field& g,
                                               double tol = 1e-11) {
    const int N = dom.N();
    const double h = 1.0 / N;
    if (g.nx() != N || g.ny() != N) throw config_error("bogovskii probe: rhs grid disagrees");
    Field mask(N, N);
    double mean = 0, gmax = 0;
    int cnt = 0;
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i)
            if (dom.fluid(i, j)) {
                mask(i, j) = 1.0;
                mean += g(i, j);
                gmax = std::max(gmax, std::fabs(g(i, j)));
                ++cnt;
            }
    mean /= cnt;
    if (std::fabs(mean) > 1e-8 * (gmax + 1e-300))
        throw config_error("bogovskii probe: rhs has nonzero mean over the fluid region");

    auto sol = solve_divergence_region(mask, g, tol);
    BogovskiiProbe pr;
    pr.residual = sol.residual;
    pr.v = std::move(sol.phi);
    double l2 = std::sqrt(pr.v.dot(pr.v) * h * h);
    double gr = std::sqrt(grad_energy_zero_ext(pr.v.u) + grad_energy_zero_ext(pr.v.v));
    if (l2 > 0 && gr > 0) {
        pr.defined = true;
        pr.ratio_poincare = l2 / (dom.eps() * gr);
        pr.ratio_stability = dom.eps() * gr / std::sqrt(g.dot(g) * h * h);
    }
    return pr;
}

} // namespace permlab

#endif
