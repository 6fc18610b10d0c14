#ifndef PERMLAB_FFT_POISSON_HPP
#define PERMLAB_FFT_POISSON_HPP

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "permlab/field.hpp"

namespace permlab {
namespace detail {

// fftw planning is not thread-safe; executions on distinct buffers are.
inline std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

struct R2RPlan {
    fftw_plan fwd = nullptr, bwd = nullptr;
};

inline R2RPlan& r2r_plans(int nx, int ny, fftw_r2r_kind fk, fftw_r2r_kind bk) {
    static std::map<std::tuple<int, int, int, int>, R2RPlan> cache;
    std::lock_guard<std::mutex> lock(fftw_mutex());
    auto key = std::make_tuple(nx, ny, static_cast<int>(fk), static_cast<int>(bk));
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    double* buf = fftw_alloc_real(static_cast<size_t>(nx) * ny);
    R2RPlan p;
    p.fwd = fftw_plan_r2r_2d(ny, nx, buf, buf, fk, fk, FFTW_ESTIMATE);
    p.bwd = fftw_plan_r2r_2d(ny, nx, buf, buf, bk, bk, FFTW_ESTIMATE);
    fftw_free(buf);
    return cache.emplace(key, p).first->second;
}

class FftwBuffer {
public:
    explicit FftwBuffer(size_t n) : p_(fftw_alloc_real(n)) {}
    ~FftwBuffer() { fftw_free(p_); }
    FftwBuffer(const FftwBuffer&) = delete;
    double* get() { return p_; }

private:
    double* p_;
};

} // namespace detail

// Solve the 5-point periodic Poisson problem  lap u = rhs - mean(rhs)
// on an nx-by-ny torus with spacing h; the result has zero mean.
inline Field solve_poisson_periodic(const Field& rhs, double h) {
    const int nx = rhs.nx(), ny = rhs.ny();
    auto& plans = detail::r2r_plans(nx, ny, FFTW_R2HC, FFTW_HC2R);
    detail::FftwBuffer buf(rhs.size());
    std::copy(rhs.data(), rhs.data() + rhs.size(), buf.get());
    fftw_execute_r2r(plans.fwd, buf.get(), buf.get());
    const double inv_h2 = 1.0 / (h * h);
    const double pi = std::acos(-1.0);
    for (int j = 0; j < ny; ++j) {
        int kj = (j <= ny / 2) ? j : ny - j;
        double ly = (2.0 * std::cos(2.0 * pi * kj / ny) - 2.0) * inv_h2;
        for (int i = 0; i < nx; ++i) {
            int ki = (i <= nx / 2) ? i : nx - i;
            double lx = (2.0 * std::cos(2.0 * pi * ki / nx) - 2.0) * inv_h2;
            double lam = lx + ly;
            size_t k = static_cast<size_t>(i) + static_cast<size_t>(nx) * j;
            buf.get()[k] = (lam == 0.0) ? 0.0 : buf.get()[k] / lam;
        }
    }
    fftw_execute_r2r(plans.bwd, buf.get(), buf.get());
    Field out(nx, ny);
    const double scale = 1.0 / (static_cast<double>(nx) * ny);
    for (size_t k = 0; k < out.size(); ++k) out.raw()[k] = buf.get()[k] * scale;
    return out;
}

// Solve the 5-point homogeneous-Neumann Poisson problem on the unit box
// (cell-centered): lap u = rhs - mean(rhs), zero-mean gauge, via DCT.
inline Field solve_poisson_neumann(const Field& rhs, double h) {
    const int nx = rhs.nx(), ny = rhs.ny();
    auto& plans = detail::r2r_plans(nx, ny, FFTW_REDFT10, FFTW_REDFT01);
    detail::FftwBuffer buf(rhs.size());
    std::copy(rhs.data(), rhs.data() + rhs.size(), buf.get());
    fftw_execute_r2r(plans.fwd, buf.get(), buf.get());
    const double inv_h2 = 1.0 / (h * h);
    const double pi = std::acos(-1.0);
    for (int j = 0; j < ny; ++j) {
        double ly = (2.0 * std::cos(pi * j / ny) - 2.0) * inv_h2;
        for (int i = 0; i < nx; ++i) {
            double lx = (2.0 * std::cos(pi * i / nx) - 2.0) * inv_h2;
            double lam = lx + ly;
            size_t k = static_cast<size_t>(i) + static_cast<size_t>(nx) * j;
            buf.get()[k] = (lam == 0.0) ? 0.0 : buf.get()[k] / lam;
        }
    }
    fftw_execute_r2r(plans.bwd, buf.get(), buf.get());
    Field out(nx, ny);
    const double scale = 1.0 / (4.0 * static_cast<double>(nx) * ny);
    for (size_t k = 0; k < out.size(); ++k) out.raw()[k] = buf.get()[k] * scale;
    return out;
}

} // namespace permlab

#endif
