#ifndef PERMLAB_PIPELINE_HPP
#define PERMLAB_PIPELINE_HPP

#include <chrono>
#include <cmath>

#include "permlab/expansion.hpp"

namespace permlab {

struct PipelineOptions {
    double T = 0.5;
    int M = 16;
    bool layers = true;   // assemble J and solve the boundary-layer fields
    bool coupled = false; // monolithic fine-scale stepping
};

// Everything the verification sweep wants from one epsilon, in scalars.
struct PipelineResult {
    double eps = 0;
    int N = 0;
    double fluid_volume = 0;
    ErrorNorms norms_F, norms_G;
    double hom_max_ratio = 0;
    double fine_energy = 0, fine_poincare = 0, fine_div_res = 0;
    // boundary-layer diagnostics (zero when layers are disabled)
    double xi_norm = 0, eta_norm = 0;
    double xi_div_res = 0, eta_div_res = 0;
    double supp_violation = 0, total_integral = 0, boundary_flux = 0;
    double identity_res = 0, w_div_res = 0, ablation_res = 0;
    double phi_div_res = 0;  // Bogovskii cell corrector divergence residual
    double pi_mean_res = 0;  // per-cell means of Pi (compatibility split)
    double source_scale = 0; // max |H| over nodes, for relative residuals
    // Bogovskii probe on the perforated geometry
    double bog_poincare = 0, bog_stability = 0;
    double runtime_seconds = 0;
};

namespace detail {

inline double vmax(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

} // namespace detail

inline PipelineResult run_pipeline(const CellGeometry& cell, double eps, const BodyForce& f,
                                   const PipelineOptions& opt = {}) {
    auto t_start = std::chrono::steady_clock::now();
    TimeGrid grid(opt.T, opt.M, 1.0);
    PerforatedDomain dom(cell, eps);
    const int N = dom.N();
    const double h = dom.h();

    auto tr0 = solve_corrector(cell, 0, grid);
    auto tr1 = solve_corrector(cell, 1, grid);
    auto K = permeability(tr0, tr1);

    std::vector<MacField> fh;
    for (int k = 0; k <= grid.steps(); ++k) fh.push_back(f.sample(N, grid.t(k)));
    auto hom = solve_pressure(K, fh, N, grid);
    auto fine = solve_fine(dom, f, grid, opt.coupled);
    auto ff = make_forcing_fields(f, hom, eps);

    PipelineResult r;
    r.eps = eps;
    r.N = N;
    r.fluid_volume = K.fluid_volume;
    r.hom_max_ratio = hom.max_ratio;
    r.fine_energy = fine.energy_constant;
    r.fine_poincare = fine.poincare;
    r.fine_div_res = detail::vmax(fine.div_residual);
    r.norms_F = error_norms(fine, tr0, tr1, ff.F, hom, dom);
    r.norms_G = error_norms(fine, tr0, tr1, ff.G, hom, dom);

    if (opt.layers) {
        auto bogc = bogovskii_cell(tr0, tr1, K);
        CutoffFunction cutoff(eps, N);
        LayerDecomposition decomp(cutoff);
        auto src = assemble_J(cutoff, decomp, tr0, tr1, K, bogc, ff.G, dom);
        auto bl = boundary_layer_solve(src, dom);
        auto di = check_divergence_identity(src, bl, fine, dom);
        r.xi_norm = bl.xi_norm;
        r.eta_norm = bl.eta_norm;
        r.xi_div_res = detail::vmax(bl.xi_div_res);
        r.eta_div_res = detail::vmax(bl.eta_div_res);
        r.supp_violation = detail::vmax(src.supp_violation);
        r.total_integral = detail::vmax(src.total_integral);
        r.boundary_flux = detail::vmax(src.boundary_flux);
        r.identity_res = detail::vmax(di.identity_res);
        r.w_div_res = detail::vmax(di.w_div_res);
        r.ablation_res = detail::vmax(di.ablation_res);
        r.phi_div_res = detail::vmax(bogc.div_residual);
        r.pi_mean_res = detail::vmax(src.pi_mean_res);
        for (const auto& Hk : src.H) r.source_scale = std::max(r.source_scale, Hk.max_abs());
    }

    // canonical zero-mean probe for the Bogovskii stability constants
    {
        const double pi = std::acos(-1.0);
        Field g(N, N);
        double mean = 0;
        int cnt = 0;
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i)
                if (dom.fluid(i, j)) {
                    g(i, j) = std::sin(2.0 * pi * (i + 0.5) * h) +
                              0.3 * std::cos(pi * (j + 0.5) * h);
                    mean += g(i, j);
                    ++cnt;
                }
        mean /= cnt;
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i)
                if (dom.fluid(i, j)) g(i, j) -= mean;
        auto pr = bogovskii_estimate_probe(dom, g);
        if (pr.defined) {
            r.bog_poincare = pr.ratio_poincare;
            r.bog_stability = pr.ratio_stability;
        }
    }

    r.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return r;
}

} // namespace permlab

#endif
