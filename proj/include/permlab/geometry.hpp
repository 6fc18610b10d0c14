#ifndef PERMLAB_GEOMETRY_HPP
#define PERMLAB_GEOMETRY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "permlab/field.hpp"

namespace permlab {

enum class ObstacleShape { square, disk };

inline ObstacleShape obstacle_shape_from_string(const std::string& s) {
    if (s == "square") return ObstacleShape::square;
    if (s == "disk") return ObstacleShape::disk;
    throw config_error("unknown obstacle_shape: " + s);
}

namespace detail {
// flood fill over 4-neighbors; mask(i,j) != 0 marks blocked cells
inline bool connected(const std::vector<uint8_t>& solid, int nx, int ny, bool periodic) {
    std::vector<uint8_t> seen(solid.size(), 0);
    int start = -1, nfluid = 0;
    for (size_t k = 0; k < solid.size(); ++k) {
        if (!solid[k]) {
            ++nfluid;
            if (start < 0) start = static_cast<int>(k);
        }
    }
    if (nfluid == 0) return false;
    std::vector<int> stack{start};
    seen[start] = 1;
    int count = 0;
    while (!stack.empty()) {
        int c = stack.back();
        stack.pop_back();
        ++count;
        int i = c % nx, j = c / nx;
        const int di[4] = {1, -1, 0, 0};
        const int dj[4] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
            int ii = i + di[d], jj = j + dj[d];
            if (periodic) {
                ii = Field::wrap(ii, nx);
                jj = Field::wrap(jj, ny);
            } else if (ii < 0 || ii >= nx || jj < 0 || jj >= ny) {
                continue;
            }
            int cc = ii + nx * jj;
            if (!solid[cc] && !seen[cc]) {
                seen[cc] = 1;
                stack.push_back(cc);
            }
        }
    }
    return count == nfluid;
}
} // namespace detail

// Periodic unit cell Y = [0,1]^2 with a centered solid obstacle Y_s.
class CellGeometry {
public:
    CellGeometry(ObstacleShape shape, double extent, int n_cell)
        : shape_(shape), extent_(extent), n_(n_cell), solid_(static_cast<size_t>(n_cell) * n_cell, 0) {
        if (n_cell < 4) throw config_error("n_cell too small");
        if (extent < 0 || extent >= 0.5)
            throw config_error("obstacle_extent must lie in [0, 1/2)");
        if (extent > 0 && extent * n_cell < 4)
            throw config_error("grid does not resolve the obstacle (need >= 4 cells across)");
        const double h = 1.0 / n_;
        for (int j = 0; j < n_; ++j)
            for (int i = 0; i < n_; ++i) {
                double x = (i + 0.5) * h, y = (j + 0.5) * h;
                bool s = false;
                if (extent_ > 0) {
                    if (shape_ == ObstacleShape::square) {
                        double lo = 0.5 * (1.0 - extent_), hi = 0.5 * (1.0 + extent_);
                        s = x > lo && x < hi && y > lo && y < hi;
                    } else {
                        s = sq(x - 0.5) + sq(y - 0.5) < sq(extent_);
                    }
                }
                solid_[i + static_cast<size_t>(n_) * j] = s ? 1 : 0;
            }
        n_solid_ = 0;
        for (auto v : solid_) n_solid_ += v;
        // obstacle strictly interior to the cell
        for (int i = 0; i < n_; ++i)
            if (solid_[i] || solid_[i + static_cast<size_t>(n_) * (n_ - 1)] ||
                solid_[static_cast<size_t>(n_) * i] || solid_[n_ - 1 + static_cast<size_t>(n_) * i])
                throw config_error("obstacle touches the cell boundary");
        if (!detail::connected(solid_, n_, n_, true))
            throw config_error("fluid part of the cell is not connected");
    }

    static CellGeometry empty(int n_cell) { return CellGeometry(ObstacleShape::square, 0.0, n_cell); }

    ObstacleShape shape() const { return shape_; }
    double extent() const { return extent_; }
    int n() const { return n_; }
    double h() const { return 1.0 / n_; }
    bool solid(int i, int j) const { return solid_[Field::wrap(i, n_) + static_cast<size_t>(n_) * Field::wrap(j, n_)]; }
    bool fluid(int i, int j) const { return !solid(i, j); }
    int solid_count() const { return n_solid_; }
    int fluid_count() const { return n_ * n_ - n_solid_; }
    // |Y_f| by exact cell counting
    double fluid_fraction() const { return static_cast<double>(fluid_count()) / (n_ * static_cast<double>(n_)); }

    uint64_t hash() const {
        uint64_t h0 = 1469598103934665603ull;
        auto mix = [&](uint64_t v) {
            h0 ^= v;
            h0 *= 1099511628211ull;
        };
        mix(static_cast<uint64_t>(shape_));
        mix(static_cast<uint64_t>(n_));
        mix(static_cast<uint64_t>(extent_ * (1 << 24)));
        return h0;
    }

private:
    ObstacleShape shape_;
    double extent_;
    int n_;
    int n_solid_ = 0;
    std::vector<uint8_t> solid_;
};

// Macroscopic domain: the unit square [0,1]^2.
struct Domain {
    static double dist_boundary(double x, double y) {
        return std::min(std::min(x, 1.0 - x), std::min(y, 1.0 - y));
    }
    // inward direction at (x,y): -outward normal of the nearest side
    // (ties resolved by x-side first; only matters on the corner diagonals)
    static Vec2 dist_gradient(double x, double y) {
        double dl = x, dr = 1.0 - x, db = y, dt = 1.0 - y;
        double m = std::min(std::min(dl, dr), std::min(db, dt));
        if (dl == m) return {1, 0};
        if (dr == m) return {-1, 0};
        if (db == m) return {0, 1};
        return {0, -1};
    }
    static bool in_colayer(double x, double y, double eps) { return dist_boundary(x, y) >= eps; }
};

// Omega_eps: the unit square minus the eps-periodic obstacle array, kept
// only in cells clearing the kappa0*eps margin to the outer boundary.
class PerforatedDomain {
public:
    PerforatedDomain(const CellGeometry& cell, double eps, double kappa0 = 2.0)
        : cell_(cell), eps_(eps), kappa0_(kappa0) {
        double kd = 1.0 / eps;
        k_ = static_cast<int>(std::lround(kd));
        if (std::fabs(kd - k_) > 1e-9 || k_ < 1)
            throw config_error("epsilon must be the reciprocal of a positive integer");
        N_ = k_ * cell.n();
        solid_.assign(static_cast<size_t>(N_) * N_, 0);
        double clear = cell.extent() > 0
                           ? (cell.shape() == ObstacleShape::square ? 0.5 * (1.0 - cell.extent())
                                                                    : 0.5 - cell.extent())
                           : 0.5;
        for (int zj = 0; zj < k_; ++zj)
            for (int zi = 0; zi < k_; ++zi) {
                if (cell.extent() <= 0) continue;
                int border = std::min(std::min(zi, k_ - 1 - zi), std::min(zj, k_ - 1 - zj));
                double obstacle_dist = eps_ * (border + clear);
                if (obstacle_dist < kappa0_ * eps_ - 1e-12) continue;
                kept_.push_back({zi, zj});
                for (int j = 0; j < cell.n(); ++j)
                    for (int i = 0; i < cell.n(); ++i)
                        if (cell.solid(i, j))
                            solid_[(zi * cell.n() + i) + static_cast<size_t>(N_) * (zj * cell.n() + j)] = 1;
            }
        if (!detail::connected(solid_, N_, N_, false))
            throw solver_error("perforated domain is not connected");
    }

    const CellGeometry& cell() const { return cell_; }
    double eps() const { return eps_; }
    double kappa0() const { return kappa0_; }
    int cells_per_side() const { return k_; }
    int N() const { return N_; }
    double h() const { return 1.0 / N_; }
    const std::vector<std::pair<int, int>>& kept_cells() const { return kept_; }
    bool degenerate() const { return cell_.extent() > 0 && kept_.empty(); }
    void require_nondegenerate() const {
        if (degenerate()) throw solver_error("degenerate perforation: no lattice cell clears the margin");
    }

    bool solid(int i, int j) const {
        if (i < 0 || i >= N_ || j < 0 || j >= N_) return false;
        return solid_[i + static_cast<size_t>(N_) * j] != 0;
    }
    bool fluid(int i, int j) const {
        return i >= 0 && i < N_ && j >= 0 && j < N_ && !solid_[i + static_cast<size_t>(N_) * j];
    }
    int fluid_count() const {
        int c = 0;
        for (auto v : solid_) c += (v == 0);
        return c;
    }
    double fluid_area() const { return fluid_count() * h() * h(); }

    // shortest mask distance from the outer boundary to any obstacle cell
    double mask_margin() const {
        double m = 1e300;
        for (int j = 0; j < N_; ++j)
            for (int i = 0; i < N_; ++i)
                if (solid_[i + static_cast<size_t>(N_) * j]) {
                    double x0 = i * h(), x1 = (i + 1) * h();
                    double y0 = j * h(), y1 = (j + 1) * h();
                    m = std::min(m, std::min(std::min(x0, 1 - x1), std::min(y0, 1 - y1)));
                }
        return m;
    }

    uint64_t hash() const {
        uint64_t h0 = cell_.hash();
        h0 ^= static_cast<uint64_t>(k_) * 0x9e3779b97f4a7c15ull;
        h0 ^= static_cast<uint64_t>(kappa0_ * 64) + (h0 << 6) + (h0 >> 2);
        return h0;
    }

private:
    CellGeometry cell_;
    double eps_, kappa0_;
    int k_ = 0, N_ = 0;
    std::vector<uint8_t> solid_;
    std::vector<std::pair<int, int>> kept_;
};

namespace detail {
// 1-D standard mollifier eta(r) = C exp(-1/(1-r^2)) on (-1,1).
inline double mollifier_unnormalized(double r) {
    double r2 = r * r;
    if (r2 >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - r2));
}
inline double mollifier_mass() {
    // composite Simpson on [-1,1], 64 intervals; cached
    static const double mass = [] {
        const int n = 64;
        double hq = 2.0 / n, s = 0;
        for (int i = 0; i <= n; ++i) {
            double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
            s += w * mollifier_unnormalized(-1.0 + i * hq);
        }
        return s * hq / 3.0;
    }();
    return mass;
}
} // namespace detail

// 1-D mollified profile of the radial cut-off: g_eps = eta_{eps/3} * phi_eps,
// where phi_eps ramps linearly from 0 at 4eps/3 to 1 at 5eps/3.
class CutoffProfile {
public:
    explicit CutoffProfile(double eps) : eps_(eps) {}

    double value(double r) const {
        if (r <= eps_) return 0.0;
        if (r >= 2.0 * eps_) return 1.0;
        return convolve(r, false);
    }
    double derivative(double r) const {
        if (r <= eps_ || r >= 2.0 * eps_) return 0.0;
        return convolve(r, true);
    }

private:
    double ramp(double r) const {
        if (r <= 4.0 * eps_ / 3.0) return 0.0;
        if (r >= 5.0 * eps_ / 3.0) return 1.0;
        return (3.0 / eps_) * (r - 4.0 * eps_ / 3.0);
    }
    double ramp_d(double r) const {
        return (r > 4.0 * eps_ / 3.0 && r < 5.0 * eps_ / 3.0) ? 3.0 / eps_ : 0.0;
    }
    static double simpson(double a, double b, const std::function<double(double)>& f) {
        // 64-interval composite Simpson; integrands are smooth by construction
        const int n = 64;
        if (b <= a) return 0.0;
        double hq = (b - a) / n, s = 0;
        for (int i = 0; i <= n; ++i) {
            double wt = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
            s += wt * f(a + i * hq);
        }
        return s * hq / 3.0;
    }
    double eta(double s, double w) const {
        return detail::mollifier_unnormalized(s / w) / (detail::mollifier_mass() * w);
    }
    // split the convolution at the ramp kinks so each piece is smooth
    double convolve(double r, bool deriv) const {
        const double w = eps_ / 3.0;
        double s1 = std::clamp(r - 5.0 * eps_ / 3.0, -w, w);
        double s2 = std::clamp(r - 4.0 * eps_ / 3.0, -w, w);
        auto e = [&](double s) { return eta(s, w); };
        if (deriv) return (3.0 / eps_) * simpson(s1, s2, e);
        double total = simpson(-w, s1, e); // ramp = 1 for s < s1
        total += simpson(s1, s2, [&](double s) { return eta(s, w) * ramp(r - s); });
        return total;
    }
    double eps_;
};

// psi_eps sampled at the cell centers of an N-by-N macroscopic grid,
// together with its gradient (chain rule through the boundary distance).
class CutoffFunction {
public:
    CutoffFunction(double eps, int N) : eps_(eps), N_(N), psi_(N, N), gx_(N, N), gy_(N, N) {
        if (eps <= 0 || eps > 0.25 + 1e-12)
            throw config_error("radial cutoff requires 0 < eps <= 1/4");
        CutoffProfile prof(eps);
        const double h = 1.0 / N;
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i) {
                double x = (i + 0.5) * h, y = (j + 0.5) * h;
                double d = Domain::dist_boundary(x, y);
                psi_(i, j) = prof.value(d);
                double gd = prof.derivative(d);
                Vec2 dir = Domain::dist_gradient(x, y);
                gx_(i, j) = gd * dir.x;
                gy_(i, j) = gd * dir.y;
            }
    }

    double eps() const { return eps_; }
    int N() const { return N_; }
    double h() const { return 1.0 / N_; }
    double psi(int i, int j) const { return psi_(i, j); }
    double gx(int i, int j) const { return gx_(i, j); }
    double gy(int i, int j) const { return gy_(i, j); }
    const Field& psi_field() const { return psi_; }
    double max_grad() const {
        double m = 0;
        for (int j = 0; j < N_; ++j)
            for (int i = 0; i < N_; ++i) m = std::max(m, std::hypot(gx_(i, j), gy_(i, j)));
        return m;
    }
    // cell (i,j) lies in O_eps = supp(grad psi)
    bool in_layer(int i, int j) const { return gx_(i, j) != 0.0 || gy_(i, j) != 0.0; }

private:
    double eps_;
    int N_;
    Field psi_, gx_, gy_;
};

// Partition of the band {eps < dist < 2 eps} into side cylinders of width
// eps and the four corner squares.
class LayerDecomposition {
public:
    struct Cell {
        bool corner = false;
        int count = 0; // grid cells
    };

    explicit LayerDecomposition(const CutoffFunction& cutoff)
        : eps_(cutoff.eps()), N_(cutoff.N()), id_(N_, N_) {
        int m = static_cast<int>(std::lround(eps_ * N_));
        if (std::fabs(eps_ * N_ - m) > 1e-9 || m < 1)
            throw config_error("layer decomposition needs eps*N integral");
        per_side_ = static_cast<int>(std::lround((1.0 - 4.0 * eps_) / eps_));
        if (per_side_ < 0) per_side_ = 0;
        n_cylinders_ = 4 * per_side_;
        cells_.assign(n_cylinders_ + 4, Cell{});
        for (int c = 0; c < 4; ++c) cells_[n_cylinders_ + c].corner = true;
        id_.fill(-1);
        const double h = 1.0 / N_;
        for (int j = 0; j < N_; ++j)
            for (int i = 0; i < N_; ++i) {
                if (!cutoff.in_layer(i, j)) {
                    id_(i, j) = -1;
                    continue;
                }
                double x = (i + 0.5) * h, y = (j + 0.5) * h;
                int id = region(x, y);
                id_(i, j) = id;
                ++cells_[id].count;
            }
    }

    double eps() const { return eps_; }
    int N() const { return N_; }
    int cylinder_count() const { return n_cylinders_; }
    int cell_count() const { return static_cast<int>(cells_.size()); }
    const Cell& cell(int id) const { return cells_[id]; }
    // decomposition id of grid cell (i,j); -1 outside O_eps
    int id(int i, int j) const { return static_cast<int>(id_(i, j)); }

    // geometric classification of any point of the layer band: which side
    // cylinder or corner square it belongs to (independent of the cut-off
    // support mask, so the discrete support of grad psi can reuse it)
    int region(double x, double y) const {
        double dx = std::min(x, 1 - x), dy = std::min(y, 1 - y);
        if (per_side_ == 0 || (dx < 2 * eps_ && dy < 2 * eps_)) {
            int c = (x < 0.5 ? 0 : 1) + (y < 0.5 ? 0 : 2);
            return n_cylinders_ + c;
        }
        int side;      // 0 bottom, 1 top, 2 left, 3 right
        double tang;   // tangential coordinate
        if (dy < 2 * eps_) {
            side = (y < 0.5) ? 0 : 1;
            tang = x;
        } else {
            side = (x < 0.5) ? 2 : 3;
            tang = y;
        }
        int ic = static_cast<int>((tang - 2 * eps_) / eps_);
        ic = std::clamp(ic, 0, per_side_ - 1);
        return side * per_side_ + ic;
    }

private:
    double eps_;
    int N_;
    int per_side_ = 0;
    int n_cylinders_ = 0;
    std::vector<Cell> cells_;
    Field id_;
};

} // namespace permlab

#endif
