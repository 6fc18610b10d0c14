#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "permlab/cg.hpp"
#include "permlab/fft_poisson.hpp"
#include "permlab/field.hpp"
#include "permlab/time_grid.hpp"

using namespace permlab;

TEST_CASE("field periodic access and axpy") {
    Field f(4, 3);
    f(0, 0) = 1.0;
    f(3, 2) = 7.0;
    CHECK(f.p(-4, 0) == 1.0);
    CHECK(f.p(4, 3) == 1.0);
    CHECK(f.p(-1, -1) == 7.0);
    Field g(4, 3, 2.0);
    g.axpy(0.5, f);
    CHECK(g(0, 0) == doctest::Approx(2.5));
    CHECK(g.sum() == doctest::Approx(2.0 * 12 + 0.5 * 8));
}

TEST_CASE("time grid grading and trapezoid weights") {
    TimeGrid g(2.0, 128, 2.0);
    CHECK(g.t(0) == 0.0);
    CHECK(g.t(128) == 2.0);
    CHECK(g.t(64) == doctest::Approx(0.5));
    for (int k = 1; k <= 128; ++k) CHECK(g.dt(k) > 0);
    double wsum = 0;
    for (int k = 0; k <= 128; ++k) wsum += g.weight(k);
    CHECK(wsum == doctest::Approx(2.0).epsilon(1e-14));
    CHECK_THROWS_AS(TimeGrid(2.0, 10, 0.5), config_error);

    // interpolation hits the nodes and is linear between
    std::vector<double> vals(g.nodes());
    for (int k = 0; k < g.nodes(); ++k) vals[k] = 3.0 * g.t(k) + 1.0;
    TimeInterp<double> it(g, vals);
    CHECK(it(0.7) == doctest::Approx(3.0 * 0.7 + 1.0));
    CHECK(it(-1.0) == doctest::Approx(1.0));
    CHECK(it(5.0) == doctest::Approx(7.0));
}

namespace {
// dense Gaussian-elimination oracle
std::vector<double> dense_solve(std::vector<std::vector<double>> A, std::vector<double> b) {
    int n = static_cast<int>(b.size());
    for (int c = 0; c < n; ++c) {
        int piv = c;
        for (int r = c + 1; r < n; ++r)
            if (std::fabs(A[r][c]) > std::fabs(A[piv][c])) piv = r;
        std::swap(A[c], A[piv]);
        std::swap(b[c], b[piv]);
        for (int r = c + 1; r < n; ++r) {
            double m = A[r][c] / A[c][c];
            for (int cc = c; cc < n; ++cc) A[r][cc] -= m * A[c][cc];
            b[r] -= m * b[c];
        }
    }
    std::vector<double> x(n);
    for (int r = n - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < n; ++c) s -= A[r][c] * x[c];
        x[r] = s / A[r][r];
    }
    return x;
}
} // namespace

TEST_CASE("cg matches a dense direct solve") {
    const int n = 24;
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<std::vector<double>> M(n, std::vector<double>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) M[i][j] = M[j][i] = U(rng);
    for (int i = 0; i < n; ++i) M[i][i] += n; // SPD by diagonal dominance
    std::vector<double> b(n);
    for (double& v : b) v = U(rng);

    auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
        for (int i = 0; i < n; ++i) {
            y[i] = 0;
            for (int j = 0; j < n; ++j) y[i] += M[i][j] * x[j];
        }
    };
    std::vector<double> x(n, 0.0);
    CgOptions opt;
    opt.rel_tol = 1e-12;
    auto res = pcg(apply, b, x, nullptr, opt);
    CHECK(res.converged);
    auto xd = dense_solve(M, b);
    for (int i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(xd[i]).epsilon(1e-9));
}

namespace {
double lap_periodic(const Field& u, int i, int j, double h) {
    return (u.p(i + 1, j) + u.p(i - 1, j) + u.p(i, j + 1) + u.p(i, j - 1) - 4.0 * u.p(i, j)) / (h * h);
}
double lap_neumann(const Field& u, int i, int j, double h) {
    auto at = [&](int a, int b) { // reflect across the box faces
        a = a < 0 ? 0 : (a >= u.nx() ? u.nx() - 1 : a);
        b = b < 0 ? 0 : (b >= u.ny() ? u.ny() - 1 : b);
        return u(a, b);
    };
    return (at(i + 1, j) + at(i - 1, j) + at(i, j + 1) + at(i, j - 1) - 4.0 * u(i, j)) / (h * h);
}
} // namespace

TEST_CASE("periodic poisson: residual and Fourier-mode oracle") {
    const int n = 32;
    const double h = 1.0 / n;
    Field rhs(n, n);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (double& v : rhs.raw()) v = U(rng);
    Field u = solve_poisson_periodic(rhs, h);
    CHECK(std::fabs(u.sum()) < 1e-10);
    double mean = rhs.sum() / rhs.size();
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            CHECK(lap_periodic(u, i, j, h) == doctest::Approx(rhs(i, j) - mean).epsilon(1e-8));

    // single discrete mode: exact eigenvalue relation
    const double pi = std::acos(-1.0);
    Field m(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) m(i, j) = std::cos(2.0 * pi * (i + 0.5) / n);
    Field um = solve_poisson_periodic(m, h);
    double lam = (2.0 * std::cos(2.0 * pi / n) - 2.0) / (h * h);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) CHECK(um(i, j) == doctest::Approx(m(i, j) / lam).epsilon(1e-10));
}

TEST_CASE("neumann poisson: residual oracle on random data") {
    const int n = 24;
    const double h = 1.0 / n;
    Field rhs(n, n);
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (double& v : rhs.raw()) v = U(rng);
    Field u = solve_poisson_neumann(rhs, h);
    CHECK(std::fabs(u.sum()) < 1e-9);
    double mean = rhs.sum() / rhs.size();
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            CHECK(lap_neumann(u, i, j, h) == doctest::Approx(rhs(i, j) - mean).epsilon(1e-8));
}
