#ifndef PERMLAB_VOLTERRA_HPP
#define PERMLAB_VOLTERRA_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "permlab/field.hpp"
#include "permlab/time_grid.hpp"

namespace permlab {

// Product-trapezoid weight of source node j in \int_0^{t_k}: the rule is
// exact for integrands that are piecewise linear on the grid.
inline double conv_weight(const TimeGrid& g, int k, int j) {
    if (k == 0 || j > k) return 0.0;
    double w = 0;
    if (j > 0) w += 0.5 * g.dt(j);
    if (j < k) w += 0.5 * g.dt(j + 1);
    return w;
}

// (K * X)(t_k) = \int_0^{t_k} K(t_k - s) X(s) ds for a scalar kernel given
// as a function of time (sampled on its own grid and interpolated upstream).
inline std::vector<double> volterra_scalar(const TimeGrid& g,
                                           const std::function<double(double)>& K,
                                           const std::vector<double>& X) {
    std::vector<double> out(X.size(), 0.0);
    for (int k = 1; k <= g.steps(); ++k) {
        double acc = 0;
        for (int j = 0; j <= k; ++j)
            acc += conv_weight(g, k, j) * K(g.t(k) - g.t(j)) * X[j];
        out[k] = acc;
    }
    return out;
}

// matrix-kernel mode (*): (A * X)(t_k) with X a vector history
inline std::vector<Vec2> volterra_mat(const TimeGrid& g, const std::function<Mat2(double)>& K,
                                      const std::vector<Vec2>& X) {
    std::vector<Vec2> out(X.size());
    for (int k = 1; k <= g.steps(); ++k) {
        Vec2 acc{0, 0};
        for (int j = 0; j <= k; ++j) {
            double w = conv_weight(g, k, j);
            Vec2 v = K(g.t(k) - g.t(j)) * X[j];
            acc.x += w * v.x;
            acc.y += w * v.y;
        }
        out[k] = acc;
    }
    return out;
}

} // namespace permlab

#endif
