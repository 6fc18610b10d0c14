#ifndef PERMLAB_CG_HPP
#define PERMLAB_CG_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "permlab/field.hpp"

namespace permlab {

struct CgResult {
    int iterations = 0;
    double residual = 0;  // final max-norm residual
    bool converged = false;
};

struct CgOptions {
    double rel_tol = 1e-10;   // on the 2-norm of the residual
    double abs_tol_inf = 0.0; // optional extra max-norm target (0 = off)
    int max_iter = 10000;
};

// Preconditioned conjugate gradient on raw vectors. A and M are
// matrix-free applications; M may be null (identity).
inline CgResult pcg(const std::function<void(const std::vector<double>&, std::vector<double>&)>& A,
                    const std::vector<double>& b, std::vector<double>& x,
                    const std::function<void(const std::vector<double>&, std::vector<double>&)>& M,
                    const CgOptions& opt) {
    const size_t n = b.size();
    std::vector<double> r(n), z(n), p(n), Ap(n);
    A(x, Ap);
    double rinf = 0;
    for (size_t k = 0; k < n; ++k) {
        r[k] = b[k] - Ap[k];
        rinf = std::max(rinf, std::fabs(r[k]));
    }
    auto nrm2 = [](const std::vector<double>& v) {
        double s = 0;
        for (double a : v) s += a * a;
        return std::sqrt(s);
    };
    double r0 = nrm2(r);
    double target2 = opt.rel_tol * r0;
    CgResult res;
    if (r0 == 0.0 || (r0 <= target2 && (opt.abs_tol_inf <= 0 || rinf <= opt.abs_tol_inf))) {
        res.converged = true;
        res.residual = rinf;
        return res;
    }
    if (M) M(r, z); else z = r;
    p = z;
    double rz = 0;
    for (size_t k = 0; k < n; ++k) rz += r[k] * z[k];
    for (int it = 1; it <= opt.max_iter; ++it) {
        A(p, Ap);
        double pAp = 0;
        for (size_t k = 0; k < n; ++k) pAp += p[k] * Ap[k];
        if (pAp <= 0) break; // lost positive definiteness (round-off)
        double alpha = rz / pAp;
        rinf = 0;
        for (size_t k = 0; k < n; ++k) {
            x[k] += alpha * p[k];
            r[k] -= alpha * Ap[k];
            rinf = std::max(rinf, std::fabs(r[k]));
        }
        res.iterations = it;
        double rn = nrm2(r);
        res.residual = rinf;
        bool ok2 = rn <= target2;
        bool okinf = opt.abs_tol_inf <= 0 || rinf <= opt.abs_tol_inf;
        if (opt.abs_tol_inf > 0 && rinf <= opt.abs_tol_inf) { res.converged = true; return res; }
        if (ok2 && okinf) { res.converged = true; return res; }
        if (M) M(r, z); else z = r;
        double rz_new = 0;
        for (size_t k = 0; k < n; ++k) rz_new += r[k] * z[k];
        double beta = rz_new / rz;
        rz = rz_new;
        for (size_t k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
    }
    return res;
}

inline void require_converged(const CgResult& r, const char* what) {
    if (!r.converged) {
        std::ostringstream os;
        os << what << ": linear solver did not converge (iters=" << r.iterations
           << ", residual=" << r.residual << ")";
        throw solver_error(os.str());
    }
}

} // namespace permlab

#endif
