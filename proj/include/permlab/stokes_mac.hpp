#ifndef PERMLAB_STOKES_MAC_HPP
#define PERMLAB_STOKES_MAC_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <vector>

#include "permlab/cg.hpp"
#include "permlab/fft_poisson.hpp"
#include "permlab/field.hpp"

namespace permlab {

// Face state. Walls carry exact zeros: faces on an obstacle or domain
// boundary for the normal component, reflection ghosts for tangential ones.
enum : uint8_t { FACE_ACTIVE = 0, FACE_WALL = 1 };

struct StokesStepStats {
    double kinetic = 0;         // (1/2) h^2 sum |u|^2 after the step
    double dissipation = 0;     // dt * nu * <-L u*, u*> h^2
    double visc_increment2 = 0; // (1/2) h^2 ||u* - u^n||^2
    double proj_increment2 = 0; // (1/2) h^2 ||u^{n+1} - u*||^2
    double div_residual = 0;    // max fluid-cell divergence after projection
    int visc_iters = 0, proj_iters = 0;
};

// Implicit-Euler unsteady Stokes on a MAC grid with an obstacle mask.
// Periodic cell or no-slip box; pressure by (non-incremental) projection,
// so each step is unconditionally energy-stable.
class MacStokes {
public:
    MacStokes(int n, bool periodic, const std::function<bool(int, int)>& solid_cell,
              double viscosity = 1.0)
        : n_(n), h_(1.0 / n), periodic_(periodic), nu_(viscosity) {
        int nux = periodic ? n : n + 1, nuy = n;
        int nvx = n, nvy = periodic ? n : n + 1;
        uclass_.assign(static_cast<size_t>(nux) * nuy, FACE_WALL);
        vclass_.assign(static_cast<size_t>(nvx) * nvy, FACE_WALL);
        fluid_.assign(static_cast<size_t>(n) * n, 0);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) fluid_[i + static_cast<size_t>(n) * j] = solid_cell(i, j) ? 0 : 1;
        for (int j = 0; j < nuy; ++j)
            for (int i = 0; i < nux; ++i)
                if (cell_fluid(i - 1, j) && cell_fluid(i, j))
                    uclass_[i + static_cast<size_t>(nux) * j] = FACE_ACTIVE;
        for (int j = 0; j < nvy; ++j)
            for (int i = 0; i < nvx; ++i)
                if (cell_fluid(i, j - 1) && cell_fluid(i, j))
                    vclass_[i + static_cast<size_t>(nvx) * j] = FACE_ACTIVE;
        vel_ = periodic ? MacField::periodic(n) : MacField::box(n);
        pressure_ = Field(n, n);
        for (int j = 0; j < nuy; ++j)
            for (int i = 0; i < nux; ++i)
                if (uclass_[i + static_cast<size_t>(nux) * j] == FACE_ACTIVE)
                    uact_.push_back(i + nux * j);
        for (int j = 0; j < nvy; ++j)
            for (int i = 0; i < nvx; ++i)
                if (vclass_[i + static_cast<size_t>(nvx) * j] == FACE_ACTIVE)
                    vact_.push_back(i + nvx * j);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                if (fluid_[i + static_cast<size_t>(n) * j]) pcells_.push_back(i + n * j);
    }

    int n() const { return n_; }
    double h() const { return h_; }
    bool periodic() const { return periodic_; }
    double viscosity() const { return nu_; }
    const MacField& velocity() const { return vel_; }
    MacField& velocity() { return vel_; }
    const Field& pressure() const { return pressure_; }
    size_t fluid_cells() const { return pcells_.size(); }

    bool cell_fluid(int i, int j) const {
        if (periodic_) {
            i = Field::wrap(i, n_);
            j = Field::wrap(j, n_);
        } else if (i < 0 || i >= n_ || j < 0 || j >= n_) {
            return false;
        }
        return fluid_[i + static_cast<size_t>(n_) * j] != 0;
    }
    bool u_active(int i, int j) const {
        int nux = vel_.u.nx();
        if (periodic_) {
            i = Field::wrap(i, nux);
            j = Field::wrap(j, n_);
        } else if (i < 0 || i > n_ || j < 0 || j >= n_) {
            return false;
        }
        return uclass_[i + static_cast<size_t>(nux) * j] == FACE_ACTIVE;
    }
    bool v_active(int i, int j) const {
        int nvx = vel_.v.nx();
        if (periodic_) {
            i = Field::wrap(i, n_);
            j = Field::wrap(j, n_);
        } else if (i < 0 || i >= n_ || j < 0 || j > n_) {
            return false;
        }
        return vclass_[i + static_cast<size_t>(nvx) * j] == FACE_ACTIVE;
    }

    // value 1 on every face adjacent to a fluid cell (the raw e_j data)
    void set_uniform_initial(int direction) {
        vel_.u.fill(0);
        vel_.v.fill(0);
        Field& c = direction == 0 ? vel_.u : vel_.v;
        for (int j = 0; j < c.ny(); ++j)
            for (int i = 0; i < c.nx(); ++i) {
                bool adj = direction == 0 ? (cell_fluid(i - 1, j) || cell_fluid(i, j))
                                          : (cell_fluid(i, j - 1) || cell_fluid(i, j));
                if (adj) c(i, j) = 1.0;
            }
    }

    void zero_walls() {
        for (int j = 0; j < vel_.u.ny(); ++j)
            for (int i = 0; i < vel_.u.nx(); ++i)
                if (!u_active(i, j)) vel_.u(i, j) = 0;
        for (int j = 0; j < vel_.v.ny(); ++j)
            for (int i = 0; i < vel_.v.nx(); ++i)
                if (!v_active(i, j)) vel_.v(i, j) = 0;
    }

    // 5-point vector Laplacian with wall reflection, applied on active faces
    void apply_laplacian(const MacField& in, MacField& out) const {
        const double inv_h2 = 1.0 / (h_ * h_);
        out.u.fill(0);
        out.v.fill(0);
        for (int f : uact_) {
            int nux = in.u.nx();
            int i = f % nux, j = f / nux;
            double c = in.u(i, j), s = 0;
            s += (u_active(i + 1, j) ? uval(in, i + 1, j) : 0.0) - c; // wall face: exact 0
            s += (u_active(i - 1, j) ? uval(in, i - 1, j) : 0.0) - c;
            s += (u_active(i, j + 1) ? uval(in, i, j + 1) : -c) - c; // ghost reflection
            s += (u_active(i, j - 1) ? uval(in, i, j - 1) : -c) - c;
            out.u(i, j) = s * inv_h2;
        }
        for (int f : vact_) {
            int nvx = in.v.nx();
            int i = f % nvx, j = f / nvx;
            double c = in.v(i, j), s = 0;
            s += (v_active(i, j + 1) ? vval(in, i, j + 1) : 0.0) - c;
            s += (v_active(i, j - 1) ? vval(in, i, j - 1) : 0.0) - c;
            s += (v_active(i + 1, j) ? vval(in, i + 1, j) : -c) - c;
            s += (v_active(i - 1, j) ? vval(in, i - 1, j) : -c) - c;
            out.v(i, j) = s * inv_h2;
        }
    }

    // nu * <-L u, u> h^2  (the discrete ||grad u||^2, walls included)
    double dissipation(const MacField& u) const {
        MacField lu = u;
        apply_laplacian(u, lu);
        double s = 0;
        for (int f : uact_) s += lu.u.raw()[f] * u.u.raw()[f];
        for (int f : vact_) s += lu.v.raw()[f] * u.v.raw()[f];
        return -nu_ * s * h_ * h_;
    }

    double kinetic(const MacField& u) const {
        double s = 0;
        for (int f : uact_) s += sq(u.u.raw()[f]);
        for (int f : vact_) s += sq(u.v.raw()[f]);
        return 0.5 * s * h_ * h_;
    }
    double kinetic() const { return kinetic(vel_); }

    Field divergence(const MacField& u) const {
        Field d(n_, n_);
        for (int c : pcells_) {
            int i = c % n_, j = c / n_;
            d(i, j) = (uval(u, i + 1, j) - uval(u, i, j) + vval(u, i, j + 1) - vval(u, i, j)) / h_;
        }
        return d;
    }
    double max_divergence() const { return divergence(vel_).max_abs(); }

    // masked Neumann Laplacian on fluid cells (flux through active faces)
    void apply_pressure_laplacian(const std::vector<double>& x, std::vector<double>& y) const {
        const double inv_h2 = 1.0 / (h_ * h_);
        std::fill(y.begin(), y.end(), 0.0);
        scatter_p(x);
        for (size_t k = 0; k < pcells_.size(); ++k) {
            int c = pcells_[k];
            int i = c % n_, j = c / n_;
            double pc = pwork_(i, j), s = 0;
            if (u_active(i + 1, j)) s += pval(i + 1, j) - pc;
            if (u_active(i, j)) s += pval(i - 1, j) - pc;
            if (v_active(i, j + 1)) s += pval(i, j + 1) - pc;
            if (v_active(i, j)) s += pval(i, j - 1) - pc;
            y[k] = s * inv_h2;
        }
    }

    // One implicit-Euler + projection step. force may be null.
    StokesStepStats step(double dt, const MacField* force = nullptr) {
        StokesStepStats st;
        // viscous solve: (I - dt nu L) u* = u^n + dt f
        size_t nu = uact_.size(), nv = vact_.size();
        std::vector<double> rhs(nu + nv), x(nu + nv);
        for (size_t k = 0; k < nu; ++k) {
            rhs[k] = vel_.u.raw()[uact_[k]] + (force ? dt * force->u.raw()[uact_[k]] : 0.0);
            x[k] = vel_.u.raw()[uact_[k]];
        }
        for (size_t k = 0; k < nv; ++k) {
            rhs[nu + k] = vel_.v.raw()[vact_[k]] + (force ? dt * force->v.raw()[vact_[k]] : 0.0);
            x[nu + k] = vel_.v.raw()[vact_[k]];
        }
        MacField w = vel_, lw = vel_;
        auto A = [&](const std::vector<double>& in, std::vector<double>& out) {
            w.u.fill(0);
            w.v.fill(0);
            for (size_t k = 0; k < nu; ++k) w.u.raw()[uact_[k]] = in[k];
            for (size_t k = 0; k < nv; ++k) w.v.raw()[vact_[k]] = in[nu + k];
            apply_laplacian(w, lw);
            for (size_t k = 0; k < nu; ++k) out[k] = in[k] - dt * nu_ * lw.u.raw()[uact_[k]];
            for (size_t k = 0; k < nv; ++k) out[nu + k] = in[nu + k] - dt * nu_ * lw.v.raw()[vact_[k]];
        };
        CgOptions vopt;
        vopt.rel_tol = 1e-10;
        vopt.max_iter = 10000;
        auto vres = pcg(A, rhs, x, nullptr, vopt);
        require_converged(vres, "viscous step");
        st.visc_iters = vres.iterations;

        MacField star = vel_;
        star.u.fill(0);
        star.v.fill(0);
        for (size_t k = 0; k < nu; ++k) star.u.raw()[uact_[k]] = x[k];
        for (size_t k = 0; k < nv; ++k) star.v.raw()[vact_[k]] = x[nu + k];
        st.dissipation = dt * dissipation(star);
        {
            double s = 0;
            for (size_t k = 0; k < nu; ++k) s += sq(star.u.raw()[uact_[k]] - vel_.u.raw()[uact_[k]]);
            for (size_t k = 0; k < nv; ++k) s += sq(star.v.raw()[vact_[k]] - vel_.v.raw()[vact_[k]]);
            st.visc_increment2 = 0.5 * s * h_ * h_;
        }

        // projection: L_p phi = div u* / dt, correct active faces
        Field div = divergence(star);
        std::vector<double> prhs(pcells_.size()), phi(pcells_.size(), 0.0);
        double mean = 0;
        for (size_t k = 0; k < pcells_.size(); ++k) {
            prhs[k] = div.raw()[pcells_[k]] / dt;
            mean += prhs[k];
        }
        mean /= pcells_.size();
        for (double& v : prhs) v -= mean; // quadrature-level compatibility fix
        for (size_t k = 0; k < phi.size(); ++k) phi[k] = pressure_.raw()[pcells_[k]]; // warm start
        auto P = [&](const std::vector<double>& in, std::vector<double>& out) {
            apply_pressure_laplacian(in, out);
            for (double& v : out) v = -v; // make SPD
        };
        std::vector<double> nrhs(prhs);
        for (double& v : nrhs) v = -v;
        CgOptions popt;
        popt.rel_tol = 1e-10;
        popt.max_iter = 40000;
        double umax = std::max(star.max_abs(), 1e-30);
        popt.abs_tol_inf = 1e-9 * umax / dt;
        // unmasked spectral inverse as preconditioner: identity away from
        // the obstacles, so iteration counts stay flat in the grid size
        Field pre(n_, n_);
        auto M = [&](const std::vector<double>& in, std::vector<double>& out) {
            pre.fill(0);
            for (size_t k = 0; k < pcells_.size(); ++k) pre.raw()[pcells_[k]] = in[k];
            Field z = periodic_ ? solve_poisson_periodic(pre, h_) : solve_poisson_neumann(pre, h_);
            for (size_t k = 0; k < pcells_.size(); ++k) out[k] = -z.raw()[pcells_[k]];
        };
        auto pres = pcg(P, nrhs, phi, M, popt);
        require_converged(pres, "pressure projection");
        st.proj_iters = pres.iterations;

        double pm = 0;
        for (double v : phi) pm += v;
        pm /= phi.size();
        pressure_.fill(0);
        for (size_t k = 0; k < pcells_.size(); ++k) pressure_.raw()[pcells_[k]] = phi[k] - pm;

        MacField next = star;
        scatter_p_field(pressure_);
        for (int f : uact_) {
            int nux = next.u.nx();
            int i = f % nux, j = f / nux;
            next.u.raw()[f] -= dt * (pval(i, j) - pval(i - 1, j)) / h_;
        }
        for (int f : vact_) {
            int nvx = next.v.nx();
            int i = f % nvx, j = f / nvx;
            next.v.raw()[f] -= dt * (pval(i, j) - pval(i, j - 1)) / h_;
        }
        {
            double s = 0;
            for (int f : uact_) s += sq(next.u.raw()[f] - star.u.raw()[f]);
            for (int f : vact_) s += sq(next.v.raw()[f] - star.v.raw()[f]);
            st.proj_increment2 = 0.5 * s * h_ * h_;
        }
        vel_ = next;
        st.kinetic = kinetic();
        st.div_residual = max_divergence();
        return st;
    }

    // Monolithic velocity-pressure solve of one implicit-Euler step via the
    // pressure Schur complement. Slower than step() but free of splitting
    // error; the semigroup verification relies on its exact telescoping.
    StokesStepStats step_coupled(double dt, const MacField* force = nullptr) {
        StokesStepStats st;
        const size_t nu = uact_.size(), nv = vact_.size();
        std::vector<double> rhs(nu + nv);
        for (size_t k = 0; k < nu; ++k)
            rhs[k] = vel_.u.raw()[uact_[k]] + (force ? dt * force->u.raw()[uact_[k]] : 0.0);
        for (size_t k = 0; k < nv; ++k)
            rhs[nu + k] = vel_.v.raw()[vact_[k]] + (force ? dt * force->v.raw()[vact_[k]] : 0.0);

        MacField w = vel_, lw = vel_;
        auto visc = [&](const std::vector<double>& in, std::vector<double>& out) {
            w.u.fill(0);
            w.v.fill(0);
            for (size_t k = 0; k < nu; ++k) w.u.raw()[uact_[k]] = in[k];
            for (size_t k = 0; k < nv; ++k) w.v.raw()[vact_[k]] = in[nu + k];
            apply_laplacian(w, lw);
            for (size_t k = 0; k < nu; ++k) out[k] = in[k] - dt * nu_ * lw.u.raw()[uact_[k]];
            for (size_t k = 0; k < nv; ++k) out[nu + k] = in[nu + k] - dt * nu_ * lw.v.raw()[vact_[k]];
        };
        CgOptions vopt;
        vopt.rel_tol = 1e-12;
        vopt.max_iter = 40000;
        auto solveG = [&](const std::vector<double>& b, std::vector<double>& x, const char* what) {
            auto r = pcg(visc, b, x, nullptr, vopt);
            require_converged(r, what);
            st.visc_iters += r.iterations;
        };
        auto grad_faces = [&](const std::vector<double>& p, std::vector<double>& out) {
            scatter_p(p);
            for (size_t k = 0; k < nu; ++k) {
                int i = uact_[k] % vel_.u.nx(), j = uact_[k] / vel_.u.nx();
                out[k] = (pval(i, j) - pval(i - 1, j)) / h_;
            }
            for (size_t k = 0; k < nv; ++k) {
                int i = vact_[k] % vel_.v.nx(), j = vact_[k] / vel_.v.nx();
                out[nu + k] = (pval(i, j) - pval(i, j - 1)) / h_;
            }
        };
        auto div_cells = [&](const std::vector<double>& fvec, std::vector<double>& out) {
            w.u.fill(0);
            w.v.fill(0);
            for (size_t k = 0; k < nu; ++k) w.u.raw()[uact_[k]] = fvec[k];
            for (size_t k = 0; k < nv; ++k) w.v.raw()[vact_[k]] = fvec[nu + k];
            for (size_t k = 0; k < pcells_.size(); ++k) {
                int i = pcells_[k] % n_, j = pcells_[k] / n_;
                out[k] = (uval(w, i + 1, j) - uval(w, i, j) + vval(w, i, j + 1) - vval(w, i, j)) / h_;
            }
        };

        std::vector<double> grhs(nu + nv, 0.0);
        for (size_t k = 0; k < nu; ++k) grhs[k] = vel_.u.raw()[uact_[k]];
        for (size_t k = 0; k < nv; ++k) grhs[nu + k] = vel_.v.raw()[vact_[k]];
        solveG(rhs, grhs, "coupled viscous");
        std::vector<double> b(pcells_.size());
        div_cells(grhs, b);
        double mean = 0;
        for (double v : b) mean += v;
        mean /= b.size();
        for (double& v : b) v = -(v - mean);

        std::vector<double> fwork(nu + nv), gwork(nu + nv);
        auto schur = [&](const std::vector<double>& p, std::vector<double>& out) {
            grad_faces(p, fwork);
            std::fill(gwork.begin(), gwork.end(), 0.0);
            CgOptions inner = vopt;
            auto r = pcg(visc, fwork, gwork, nullptr, inner);
            require_converged(r, "coupled schur inner");
            div_cells(gwork, out);
            for (double& v : out) v *= -dt;
        };
        std::vector<double> p(pcells_.size());
        for (size_t k = 0; k < p.size(); ++k) p[k] = pressure_.raw()[pcells_[k]];
        CgOptions sopt;
        sopt.rel_tol = 1e-10;
        sopt.max_iter = 40000;
        double umax = 0;
        for (double v : grhs) umax = std::max(umax, std::fabs(v));
        sopt.abs_tol_inf = 1e-9 * std::max(umax, 1e-30) * dt;
        auto sres = pcg(schur, b, p, nullptr, sopt);
        require_converged(sres, "coupled schur");
        st.proj_iters = sres.iterations;

        double pm = 0;
        for (double v : p) pm += v;
        pm /= p.size();
        pressure_.fill(0);
        for (size_t k = 0; k < pcells_.size(); ++k) pressure_.raw()[pcells_[k]] = p[k] - pm;

        grad_faces(p, fwork);
        for (size_t k = 0; k < fwork.size(); ++k) fwork[k] = rhs[k] - dt * fwork[k];
        solveG(fwork, grhs, "coupled final");
        vel_.u.fill(0);
        vel_.v.fill(0);
        for (size_t k = 0; k < nu; ++k) vel_.u.raw()[uact_[k]] = grhs[k];
        for (size_t k = 0; k < nv; ++k) vel_.v.raw()[vact_[k]] = grhs[nu + k];
        st.kinetic = kinetic();
        st.dissipation = dt * dissipation(vel_);
        st.div_residual = max_divergence();
        return st;
    }

    // zero-mean pressure over fluid cells
    double pressure_mean_zeroed() {
        double s = 0;
        for (int c : pcells_) s += pressure_.raw()[c];
        s /= pcells_.size();
        for (int c : pcells_) pressure_.raw()[c] -= s;
        return s;
    }

private:
    double uval(const MacField& f, int i, int j) const {
        int nux = f.u.nx();
        if (periodic_) return f.u.p(i, j);
        if (i < 0 || i >= nux || j < 0 || j >= f.u.ny()) return 0.0;
        return f.u(i, j);
    }
    double vval(const MacField& f, int i, int j) const {
        if (periodic_) return f.v.p(i, j);
        if (i < 0 || i >= f.v.nx() || j < 0 || j >= f.v.ny()) return 0.0;
        return f.v(i, j);
    }
    void scatter_p(const std::vector<double>& x) const {
        if (pwork_.nx() != n_) pwork_ = Field(n_, n_);
        pwork_.fill(0);
        for (size_t k = 0; k < pcells_.size(); ++k) pwork_.raw()[pcells_[k]] = x[k];
    }
    void scatter_p_field(const Field& f) const {
        if (pwork_.nx() != n_) pwork_ = Field(n_, n_);
        pwork_ = f;
    }
    double pval(int i, int j) const {
        if (periodic_) return pwork_.p(i, j);
        if (i < 0 || i >= n_ || j < 0 || j >= n_) return 0.0;
        return pwork_(i, j);
    }

    int n_;
    double h_;
    bool periodic_;
    double nu_;
    std::vector<uint8_t> uclass_, vclass_, fluid_;
    std::vector<int> uact_, vact_, pcells_;
    MacField vel_;
    Field pressure_;
    mutable Field pwork_;
};

} // namespace permlab

#endif
