#ifndef PERMLAB_SMOOTHING_HPP
#define PERMLAB_SMOOTHING_HPP

#include <cmath>
#include <vector>

#include "permlab/field.hpp"
#include "permlab/geometry.hpp"

namespace permlab {

// Discrete radial bump kernel for the smoothing operator S_delta. The
// continuum kernel zeta lives in B(0, 1/2), so the scaled kernel
// zeta_delta has radius delta/2. Weights are sampled at cell-center
// offsets and renormalized to unit sum, which makes S_delta exactly
// mass-preserving and exact on constants.
struct SmoothingKernel {
    int radius = 0;                 // stencil half-width in cells
    std::vector<double> w;          // (2r+1)^2 weights, row-major
    double at(int dx, int dy) const {
        return w[(dx + radius) + static_cast<size_t>(2 * radius + 1) * (dy + radius)];
    }
};

inline SmoothingKernel make_smoothing_kernel(double delta, double h) {
    if (delta < 2.0 * h - 1e-12)
        throw config_error("smoothing scale under-resolved: need delta >= 2 grid spacings");
    const double r = 0.5 * delta;
    SmoothingKernel k;
    k.radius = static_cast<int>(std::ceil(r / h));
    const int n = 2 * k.radius + 1;
    k.w.assign(static_cast<size_t>(n) * n, 0.0);
    double sum = 0;
    for (int dy = -k.radius; dy <= k.radius; ++dy)
        for (int dx = -k.radius; dx <= k.radius; ++dx) {
            double rho = std::hypot(dx * h, dy * h) / r;
            double v = detail::mollifier_unnormalized(rho);
            k.w[(dx + k.radius) + static_cast<size_t>(n) * (dy + k.radius)] = v;
            sum += v;
        }
    for (double& v : k.w) v /= sum;
    return k;
}

// S_delta(f) by discrete convolution; the field is extended by zero, which
// is exact for the intended inputs (compact support away from the border).
inline Field smooth_field(const Field& f, double delta, double h) {
    SmoothingKernel k = make_smoothing_kernel(delta, h);
    const int nx = f.nx(), ny = f.ny();
    Field out(nx, ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            double acc = 0;
            for (int dy = -k.radius; dy <= k.radius; ++dy) {
                int sj = j - dy;
                if (sj < 0 || sj >= ny) continue;
                for (int dx = -k.radius; dx <= k.radius; ++dx) {
                    int si = i - dx;
                    if (si < 0 || si >= nx) continue;
                    double wt = k.at(dx, dy);
                    if (wt != 0.0) acc += wt * f(si, sj);
                }
            }
            out(i, j) = acc;
        }
    return out;
}

inline MacField smooth_mac(const MacField& f, double delta, double h) {
    return {smooth_field(f.u, delta, h), smooth_field(f.v, delta, h)};
}

// Generic cut-off varphi_eps: 0 within distance eps/4 of the boundary,
// 1 on the co-layer {dist >= eps/2}, linear ramp in between. Distinct
// from the radial cut-off psi_eps; its only job is to localize the
// forcing away from the border before mollifying.
inline double generic_cutoff(double eps, double x, double y) {
    double d = Domain::dist_boundary(x, y);
    double t = (d - 0.25 * eps) / (0.25 * eps);
    return std::clamp(t, 0.0, 1.0);
}

} // namespace permlab

#endif
