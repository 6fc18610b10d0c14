#ifndef PERMLAB_DARCY_MEMORY_HPP
#define PERMLAB_DARCY_MEMORY_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "permlab/cell_corrector.hpp"
#include "permlab/fft_poisson.hpp"
#include "permlab/volterra.hpp"

namespace permlab {

// spectral norm of a 2x2 matrix
inline double mat_norm2(const Mat2& m) {
    double a = m.a11 * m.a11 + m.a12 * m.a12 + m.a21 * m.a21 + m.a22 * m.a22;
    double d = m.a11 * m.a22 - m.a12 * m.a21;
    double s = std::sqrt(std::max(a * a - 4.0 * d * d, 0.0));
    return std::sqrt(0.5 * (a + s));
}

// MAC gradient of a cell field onto box faces; domain-boundary faces get 0
// (the no-flux convention of the Neumann solve).
inline void grad_to_faces(const Field& p, MacField& g, double h) {
    const int N = p.nx();
    g.u.fill(0);
    g.v.fill(0);
    for (int j = 0; j < N; ++j)
        for (int i = 1; i < N; ++i) g.u(i, j) = (p(i, j) - p(i - 1, j)) / h;
    for (int j = 1; j < N; ++j)
        for (int i = 0; i < N; ++i) g.v(i, j) = (p(i, j) - p(i, j - 1)) / h;
}

// zero the domain-boundary normal faces (the no-flux convention of the
// homogenized problem: the Galerkin form of the Neumann condition keeps only
// interior fluxes, so the discrete Darcy velocity has u0 . n = 0 exactly)
inline void zero_boundary_faces(MacField& v) {
    const int N = v.v.nx();
    for (int j = 0; j < N; ++j) {
        v.u(0, j) = 0;
        v.u(N, j) = 0;
    }
    for (int i = 0; i < N; ++i) {
        v.v(i, 0) = 0;
        v.v(i, N) = 0;
    }
}

inline void div_to_cells(const MacField& v, Field& d, double h) {
    const int N = d.nx();
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i)
            d(i, j) = (v.u(i + 1, j) - v.u(i, j) + v.v(i, j + 1) - v.v(i, j)) / h;
}

// y += c * (M w) on box faces; the complementary component is averaged to
// the face (clamped at the domain boundary).
inline void mat_axpy_faces(MacField& y, const Mat2& M, const MacField& w, double c) {
    const int N = y.v.nx();
    for (int j = 0; j < N; ++j)
        for (int i = 0; i <= N; ++i) {
            int c0 = std::max(i - 1, 0), c1 = std::min(i, N - 1);
            double vavg = 0.25 * (w.v(c0, j) + w.v(c0, j + 1) + w.v(c1, j) + w.v(c1, j + 1));
            y.u(i, j) += c * (M.a11 * w.u(i, j) + M.a12 * vavg);
        }
    for (int j = 0; j <= N; ++j)
        for (int i = 0; i < N; ++i) {
            int c0 = std::max(j - 1, 0), c1 = std::min(j, N - 1);
            double uavg = 0.25 * (w.u(i, c0) + w.u(i + 1, c0) + w.u(i, c1) + w.u(i + 1, c1));
            y.v(i, j) += c * (M.a21 * uavg + M.a22 * w.v(i, j));
        }
}

struct BodyForce {
    std::string name;
    std::function<Vec2(double, double, double)> eval;

    MacField sample(int N, double t) const {
        MacField f = MacField::box(N);
        const double h = 1.0 / N;
        for (int j = 0; j < N; ++j)
            for (int i = 0; i <= N; ++i) f.u(i, j) = eval(i * h, (j + 0.5) * h, t).x;
        for (int j = 0; j <= N; ++j)
            for (int i = 0; i < N; ++i) f.v(i, j) = eval((i + 0.5) * h, j * h, t).y;
        return f;
    }
};

// measured operator norm of v -> grad L^{-1} div v on the box face grid
// (the discrete surrogate for the proof's Schauder constant C1)
inline double measure_c1(int N) {
    const double h = 1.0 / N;
    MacField v = MacField::box(N);
    const double pi = std::acos(-1.0);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i <= N; ++i)
            v.u(i, j) = std::sin(2.0 * pi * (j + 0.5) * h) + 0.3 * std::cos(pi * i * h);
    for (int j = 0; j <= N; ++j)
        for (int i = 0; i < N; ++i) v.v(i, j) = std::cos(3.0 * pi * (i + 0.5) * h);
    Field d(N, N);
    auto apply = [&](const MacField& x, MacField& out) {
        div_to_cells(x, d, h);
        double mean = d.sum() / d.size();
        for (double& q : d.raw()) q -= mean;
        Field phi = solve_poisson_neumann(d, h);
        grad_to_faces(phi, out, h);
    };
    MacField gv = v;
    apply(v, gv); // land in the gradient range
    double norm = 0;
    for (int it = 0; it < 25; ++it) {
        double n0 = std::sqrt(gv.dot(gv));
        if (n0 == 0) break;
        gv *= 1.0 / n0;
        MacField next = gv;
        apply(gv, next);
        norm = std::sqrt(next.dot(next));
        gv = next;
    }
    return norm;
}

struct HomogenizedSolution {
    TimeGrid grid;
    int N = 0;
    double fluid_volume = 1;
    double c1 = 0;
    double delta0 = 0;
    std::vector<Field> p;                      // zero-mean cell pressures
    std::vector<double> window_bounds;         // T_n
    std::vector<std::vector<double>> ratios;   // update-norm ratios per window
    double max_ratio = 0;
};

// Window width: largest delta with \int_0^delta |A'|_2 / |Y_f| <= 0.25/C1
inline double contraction_window(const PermeabilityKernel& K, double c1) {
    const double budget = 0.25 / c1;
    double cum = 0;
    for (int k = 1; k <= K.grid.steps(); ++k) {
        double a = mat_norm2(K.dA[k - 1]) / K.fluid_volume;
        double b = mat_norm2(K.dA[k]) / K.fluid_volume;
        double inc = 0.5 * (a + b) * K.grid.dt(k);
        if (cum + inc > budget) {
            double frac = inc > 0 ? (budget - cum) / inc : 1.0;
            return K.grid.t(k - 1) + frac * K.grid.dt(k);
        }
        cum += inc;
    }
    return K.grid.horizon();
}

// \int_a^b of the piecewise-linear kernel interpolant (constant beyond the
// kernel horizon); exact because a linear piece integrates to midpoint*length.
inline Mat2 kernel_integral(const TimeInterp<Mat2>& A, const TimeGrid& kg, double a, double b) {
    Mat2 acc{};
    double lo = a;
    for (int i = 0; i <= kg.steps() && lo < b; ++i) {
        double node = kg.t(i);
        if (node <= lo) continue;
        double hi = std::min(node, b);
        acc = acc + A(0.5 * (lo + hi)) * (hi - lo);
        lo = hi;
    }
    if (lo < b) acc = acc + A(0.5 * (lo + b)) * (b - lo);
    return acc;
}

// Product-integration weights for (A' * w)(t_k) with w piecewise linear on
// the macro grid: per source segment the moments of A' reduce to differences
// and integrals of A itself, so the integrable singularity of A' at lag 0
// never enters with a node value. Row sums telescope to A(t_k) - A(0).
inline std::vector<std::vector<Mat2>> memory_weights(const PermeabilityKernel& K,
                                                     const TimeGrid& g) {
    TimeInterp<Mat2> A(K.grid, K.A);
    const int M = g.steps();
    std::vector<std::vector<Mat2>> G(M + 1);
    for (int k = 0; k <= M; ++k) {
        G[k].assign(k + 1, Mat2{});
        for (int j = 1; j <= k; ++j) {
            double tau1 = g.t(k) - g.t(j), tau2 = g.t(k) - g.t(j - 1);
            double dt = g.dt(j);
            Mat2 m0 = A(tau2) - A(tau1);
            Mat2 m1 = A(tau2) * dt - kernel_integral(A, K.grid, tau1, tau2);
            Mat2 gl = m1 * (1.0 / dt);
            G[k][j - 1] = G[k][j - 1] + gl;
            G[k][j] = G[k][j] + (m0 - gl);
        }
    }
    return G;
}

// Differentiated Darcy-with-memory system solved by windowed Picard
// iteration: p = L^{-1} div[f + |Y_f|^{-1} A' * (f - grad p)], Neumann
// boundary conditions via the no-flux 5-point Laplacian, zero-mean gauge.
inline HomogenizedSolution solve_pressure(const PermeabilityKernel& K,
                                          const std::vector<MacField>& f, int N,
                                          const TimeGrid& g) {
    if (static_cast<int>(f.size()) != g.nodes())
        throw config_error("solve_pressure: forcing history does not match the time grid");
    if ((K.A[0] - Mat2::identity(K.fluid_volume)).max_abs() > 1e-8)
        throw config_error("solve_pressure: kernel does not satisfy A(0) = |Y_f| I");
    const int M = g.steps();
    const double h = 1.0 / N;
    HomogenizedSolution sol;
    sol.grid = g;
    sol.N = N;
    sol.fluid_volume = K.fluid_volume;
    sol.c1 = measure_c1(N);
    sol.delta0 = std::max(contraction_window(K, sol.c1), g.t(1));
    sol.p.assign(M + 1, Field(N, N));

    auto G = memory_weights(K, g);
    std::vector<MacField> w(M + 1, MacField::box(N)); // f - grad p
    for (int k = 0; k <= M; ++k) w[k] = f[k];

    Field div(N, N);
    MacField gp = MacField::box(N);
    auto solve_node = [&](MacField v) {
        zero_boundary_faces(v);
        div_to_cells(v, div, h);
        double mean = div.sum() / div.size();
        for (double& q : div.raw()) q -= mean; // Neumann compatibility
        return solve_poisson_neumann(div, h);
    };

    // the memory integral vanishes at t = 0, so the initial pressure solves
    // the plain Neumann problem and fixes w(0) for every later convolution
    sol.p[0] = solve_node(f[0]);
    grad_to_faces(sol.p[0], gp, h);
    w[0] -= gp;
    zero_boundary_faces(w[0]);

    // absolute floor for the update tolerance: keeps the iteration from
    // chewing on roundoff noise when the pressure is (near) zero
    double fscale = 0;
    for (const MacField& fk : f) fscale = std::max(fscale, fk.max_abs());
    const double floor = 1e-14 * (fscale + 1.0) * N;

    int a = 0; // nodes 1..M grouped into windows of width delta0
    while (a < M) {
        int b = a + 1;
        while (b < M && g.t(b + 1) - g.t(a) <= sol.delta0 + 1e-14) ++b;
        sol.window_bounds.push_back(g.t(b));
        // frozen convolution part from nodes outside the window
        std::vector<MacField> fixed(b - a, MacField::box(N));
        for (int k = a + 1; k <= b; ++k) {
            MacField& acc = fixed[k - a - 1];
            acc.u.fill(0);
            acc.v.fill(0);
            for (int j = 0; j <= a; ++j) mat_axpy_faces(acc, G[k][j], w[j], 1.0);
        }
        for (int k = a + 1; k <= b; ++k) sol.p[k] = sol.p[a]; // warm start
        for (int k = a + 1; k <= b; ++k) {
            grad_to_faces(sol.p[k], gp, h);
            w[k] = f[k];
            w[k] -= gp;
            zero_boundary_faces(w[k]);
        }

        std::vector<double> wr;
        double prev_update = -1;
        int bad = 0;
        for (int it = 1; it <= 50; ++it) {
            double update2 = 0, norm2 = 0;
            std::vector<Field> pnew(b - a, Field(N, N));
            for (int k = a + 1; k <= b; ++k) {
                MacField v = fixed[k - a - 1];
                for (int j = a + 1; j <= k; ++j) mat_axpy_faces(v, G[k][j], w[j], 1.0);
                v *= 1.0 / K.fluid_volume;
                v += f[k];
                pnew[k - a - 1] = solve_node(v);
            }
            for (int k = a + 1; k <= b; ++k) {
                Field& pn = pnew[k - a - 1];
                for (size_t q = 0; q < pn.size(); ++q) {
                    update2 += sq(pn.raw()[q] - sol.p[k].raw()[q]);
                    norm2 += sq(pn.raw()[q]);
                }
                sol.p[k] = pn;
                grad_to_faces(sol.p[k], gp, h);
                w[k] = f[k];
                w[k] -= gp;
                zero_boundary_faces(w[k]);
            }
            double update = std::sqrt(update2);
            if (update <= 1e-10 * std::sqrt(norm2) + floor) break;
            // ratios are only meaningful before the iteration stagnates at
            // solver precision, so record them after the convergence check
            if (prev_update > 0) {
                double r = update / prev_update;
                wr.push_back(r);
                sol.max_ratio = std::max(sol.max_ratio, r);
                if (r >= 1.0) {
                    if (++bad >= 3)
                        throw solver_error("solve_pressure: window iteration is not contracting");
                } else {
                    bad = 0;
                }
            }
            prev_update = update;
        }
        sol.ratios.push_back(wr);
        a = b;
    }
    return sol;
}

// u0(t_k) = \int_0^{t_k} A(t_k - s)(f - grad p0)(s) ds
inline MacField velocity_at(const HomogenizedSolution& sol, const PermeabilityKernel& K,
                            const std::vector<MacField>& f, int k) {
    const int N = sol.N;
    const double h = 1.0 / N;
    TimeInterp<Mat2> A(K.grid, K.A);
    MacField u = MacField::box(N), gp = MacField::box(N), w = MacField::box(N);
    for (int j = 0; j <= k; ++j) {
        double wt = conv_weight(sol.grid, k, j);
        if (wt <= 0) continue;
        grad_to_faces(sol.p[j], gp, h);
        w = f[j];
        w -= gp;
        zero_boundary_faces(w);
        mat_axpy_faces(u, A(sol.grid.t(k) - sol.grid.t(j)), w, wt);
    }
    // the off-diagonal averaging can leak onto the boundary faces
    zero_boundary_faces(u);
    return u;
}

struct HomogenizedResiduals {
    std::vector<double> div_res;  // max-norm interior divergence
    std::vector<double> flux_res; // max |u0 . n| on the domain boundary
};

inline HomogenizedResiduals check_homogenized(const HomogenizedSolution& sol,
                                              const PermeabilityKernel& K,
                                              const std::vector<MacField>& f) {
    HomogenizedResiduals r;
    const int N = sol.N;
    const double h = 1.0 / N;
    Field d(N, N);
    for (int k = 0; k <= sol.grid.steps(); ++k) {
        MacField u = velocity_at(sol, K, f, k);
        div_to_cells(u, d, h);
        r.div_res.push_back(d.max_abs());
        double flux = 0;
        for (int j = 0; j < N; ++j) {
            flux = std::max(flux, std::fabs(u.u(0, j)));
            flux = std::max(flux, std::fabs(u.u(N, j)));
        }
        for (int i = 0; i < N; ++i) {
            flux = std::max(flux, std::fabs(u.v(i, 0)));
            flux = std::max(flux, std::fabs(u.v(i, N)));
        }
        r.flux_res.push_back(flux);
    }
    return r;
}

} // namespace permlab

#endif
