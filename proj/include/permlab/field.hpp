#ifndef PERMLAB_FIELD_HPP
#define PERMLAB_FIELD_HPP

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace permlab {

// Cell-centered (or face/node-centered) scalar field on an nx-by-ny grid.
// Storage is row-major in j (index = i + nx*j).
class Field {
public:
    Field() = default;
    Field(int nx, int ny, double value = 0.0)
        : nx_(nx), ny_(ny), data_(static_cast<size_t>(nx) * ny, value) {}

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    size_t size() const { return data_.size(); }

    double& operator()(int i, int j) { return data_[idx(i, j)]; }
    double operator()(int i, int j) const { return data_[idx(i, j)]; }

    // periodic access
    double& p(int i, int j) { return data_[idx(wrap(i, nx_), wrap(j, ny_))]; }
    double p(int i, int j) const { return data_[idx(wrap(i, nx_), wrap(j, ny_))]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Field& operator+=(const Field& o) {
        assert(size() == o.size());
        for (size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
        return *this;
    }
    Field& operator-=(const Field& o) {
        assert(size() == o.size());
        for (size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
        return *this;
    }
    Field& operator*=(double a) {
        for (double& v : data_) v *= a;
        return *this;
    }
    void axpy(double a, const Field& x) {
        assert(size() == x.size());
        for (size_t k = 0; k < data_.size(); ++k) data_[k] += a * x.data_[k];
    }

    double max_abs() const {
        double m = 0;
        for (double v : data_) m = std::max(m, std::fabs(v));
        return m;
    }
    double sum() const {
        double s = 0;
        for (double v : data_) s += v;
        return s;
    }
    double dot(const Field& o) const {
        assert(size() == o.size());
        double s = 0;
        for (size_t k = 0; k < data_.size(); ++k) s += data_[k] * o.data_[k];
        return s;
    }

    static int wrap(int i, int n) {
        int r = i % n;
        return r < 0 ? r + n : r;
    }

private:
    size_t idx(int i, int j) const {
        assert(i >= 0 && i < nx_ && j >= 0 && j < ny_);
        return static_cast<size_t>(i) + static_cast<size_t>(nx_) * j;
    }
    int nx_ = 0, ny_ = 0;
    std::vector<double> data_;
};

// MAC-staggered velocity on an n-by-n grid of cells.
// u lives on x-faces, v on y-faces. In the periodic case both arrays are
// n-by-n (face i is the left face of cell i). In the box case u is
// (n+1)-by-n and v is n-by-(n+1), with domain-boundary faces included.
struct MacField {
    Field u, v;

    static MacField periodic(int n, double uval = 0.0, double vval = 0.0) {
        return {Field(n, n, uval), Field(n, n, vval)};
    }
    static MacField box(int n, double uval = 0.0, double vval = 0.0) {
        return {Field(n + 1, n, uval), Field(n, n + 1, vval)};
    }

    MacField& operator+=(const MacField& o) {
        u += o.u;
        v += o.v;
        return *this;
    }
    MacField& operator-=(const MacField& o) {
        u -= o.u;
        v -= o.v;
        return *this;
    }
    MacField& operator*=(double a) {
        u *= a;
        v *= a;
        return *this;
    }
    void axpy(double a, const MacField& x) {
        u.axpy(a, x.u);
        v.axpy(a, x.v);
    }
    double dot(const MacField& o) const { return u.dot(o.u) + v.dot(o.v); }
    double max_abs() const { return std::max(u.max_abs(), v.max_abs()); }
};

struct Vec2 {
    double x = 0, y = 0;
};

struct Mat2 {
    // row-major: a(i,j)
    double a11 = 0, a12 = 0, a21 = 0, a22 = 0;

    static Mat2 identity(double s = 1.0) { return {s, 0, 0, s}; }
    double& at(int i, int j) {
        if (i == 0) return j == 0 ? a11 : a12;
        return j == 0 ? a21 : a22;
    }
    double at(int i, int j) const {
        if (i == 0) return j == 0 ? a11 : a12;
        return j == 0 ? a21 : a22;
    }
    double trace() const { return a11 + a22; }
    double max_asym() const { return std::fabs(a12 - a21); }
    // eigenvalues of the symmetrized matrix
    double min_eig_sym() const {
        double s = 0.5 * (a12 + a21);
        double m = 0.5 * (a11 + a22);
        double d = std::sqrt(0.25 * (a11 - a22) * (a11 - a22) + s * s);
        return m - d;
    }
    Mat2 operator+(const Mat2& o) const { return {a11 + o.a11, a12 + o.a12, a21 + o.a21, a22 + o.a22}; }
    Mat2 operator-(const Mat2& o) const { return {a11 - o.a11, a12 - o.a12, a21 - o.a21, a22 - o.a22}; }
    Mat2 operator*(double c) const { return {a11 * c, a12 * c, a21 * c, a22 * c}; }
    Vec2 operator*(const Vec2& w) const { return {a11 * w.x + a12 * w.y, a21 * w.x + a22 * w.y}; }
    double max_abs() const {
        return std::max(std::max(std::fabs(a11), std::fabs(a12)), std::max(std::fabs(a21), std::fabs(a22)));
    }
};

inline double sq(double x) { return x * x; }

class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& w) : std::runtime_error(w) {}
};

class solver_error : public std::runtime_error {
public:
    explicit solver_error(const std::string& w) : std::runtime_error(w) {}
};

} // namespace permlab

#endif
