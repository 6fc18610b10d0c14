#ifndef PERMLAB_TIME_GRID_HPP
#define PERMLAB_TIME_GRID_HPP

#include <cmath>
#include <vector>

#include "permlab/field.hpp"

namespace permlab {

// Nodes t_k = T (k/M)^gamma, k = 0..M. gamma = 1 gives a uniform grid;
// gamma > 1 clusters nodes near t = 0 where the corrector is singular.
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double T, int M, double gamma = 1.0) : T_(T), gamma_(gamma) {
        if (T <= 0 || M < 1 || gamma < 1.0)
            throw config_error("TimeGrid: need T > 0, M >= 1, gamma >= 1");
        t_.resize(M + 1);
        for (int k = 0; k <= M; ++k)
            t_[k] = T * std::pow(static_cast<double>(k) / M, gamma);
        t_[M] = T;
    }

    double horizon() const { return T_; }
    double gamma() const { return gamma_; }
    int steps() const { return static_cast<int>(t_.size()) - 1; }
    int nodes() const { return static_cast<int>(t_.size()); }
    double t(int k) const { return t_[k]; }
    double dt(int k) const { return t_[k] - t_[k - 1]; } // k = 1..M
    const std::vector<double>& all() const { return t_; }

    bool same_as(const TimeGrid& o, double tol = 1e-14) const {
        if (nodes() != o.nodes()) return false;
        for (int k = 0; k < nodes(); ++k)
            if (std::fabs(t_[k] - o.t_[k]) > tol) return false;
        return true;
    }

    // trapezoid weights for \int_0^T
    double weight(int k) const {
        double w = 0;
        if (k > 0) w += 0.5 * dt(k);
        if (k < steps()) w += 0.5 * (t_[k + 1] - t_[k]);
        return w;
    }

private:
    double T_ = 0, gamma_ = 1;
    std::vector<double> t_;
};

// Linear interpolation of a time-sampled sequence, clamped at the ends.
template <class T>
class TimeInterp {
public:
    TimeInterp(const TimeGrid& g, const std::vector<T>& samples) : g_(&g), s_(&samples) {}
    T operator()(double t) const {
        const auto& tt = g_->all();
        if (t <= tt.front()) return s_->front();
        if (t >= tt.back()) return s_->back();
        auto it = std::upper_bound(tt.begin(), tt.end(), t);
        int k = static_cast<int>(it - tt.begin());
        double w = (t - tt[k - 1]) / (tt[k] - tt[k - 1]);
        return (*s_)[k - 1] * (1.0 - w) + (*s_)[k] * w;
    }

private:
    const TimeGrid* g_;
    const std::vector<T>* s_;
};

} // namespace permlab

#endif
