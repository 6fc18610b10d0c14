#include <doctest.h>

#include <cmath>
#include <set>

#include "permlab/geometry.hpp"

using namespace permlab;

TEST_CASE("cell geometry: exact counting against brute force") {
    CellGeometry e = CellGeometry::empty(32);
    CHECK(e.fluid_fraction() == 1.0);
    CHECK(e.solid_count() == 0);

    CellGeometry sq(ObstacleShape::square, 0.25, 32);
    int count = 0;
    for (int j = 0; j < 32; ++j)
        for (int i = 0; i < 32; ++i) {
            double x = (i + 0.5) / 32.0, y = (j + 0.5) / 32.0;
            bool inside = x > 0.375 && x < 0.625 && y > 0.375 && y < 0.625;
            if (inside) ++count;
            CHECK(sq.solid(i, j) == inside);
        }
    CHECK(count == 64);
    CHECK(sq.fluid_fraction() == doctest::Approx(1.0 - 64.0 / 1024.0));

    CellGeometry dk(ObstacleShape::disk, 0.25, 32);
    int dcount = 0;
    for (int j = 0; j < 32; ++j)
        for (int i = 0; i < 32; ++i) {
            double x = (i + 0.5) / 32.0, y = (j + 0.5) / 32.0;
            bool inside = (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5) < 0.0625;
            if (inside) ++dcount;
            CHECK(dk.solid(i, j) == inside);
        }
    CHECK(dk.solid_count() == dcount);

    CHECK_THROWS_AS(CellGeometry(ObstacleShape::square, 0.5, 32), config_error);
    CHECK_THROWS_AS(CellGeometry(ObstacleShape::square, 0.25, 8), config_error);
}

TEST_CASE("perforated domain: margin rule by exhaustive enumeration") {
    CellGeometry cell(ObstacleShape::square, 0.25, 32);

    // eps = 1/2: none of the 4 candidates clears a 2*eps margin
    PerforatedDomain big(cell, 0.5);
    CHECK(big.kept_cells().empty());
    CHECK(big.degenerate());
    CHECK(big.fluid_area() == 1.0);
    CHECK_THROWS_AS(big.require_nondegenerate(), solver_error);

    // eps = 1/8: kept cells are exactly those at lattice distance >= 2 cells
    PerforatedDomain dom(cell, 0.125);
    CHECK(dom.N() == 256);
    std::set<std::pair<int, int>> expect;
    for (int zj = 0; zj < 8; ++zj)
        for (int zi = 0; zi < 8; ++zi) {
            double lo = 0.125 * (zi + 0.375), hi = 1.0 - 0.125 * (zi + 0.625);
            double lo2 = 0.125 * (zj + 0.375), hi2 = 1.0 - 0.125 * (zj + 0.625);
            double d = std::min(std::min(lo, hi), std::min(lo2, hi2));
            bool keep_margin = d >= 2 * 0.125 - 1e-12;
            bool keep_lattice = std::min(std::min(zi, 7 - zi), std::min(zj, 7 - zj)) >= 2;
            CHECK(keep_margin == keep_lattice); // two readings of the rule agree here
            if (keep_lattice) expect.insert({zi, zj});
        }
    CHECK(expect.size() == 16);
    std::set<std::pair<int, int>> got(dom.kept_cells().begin(), dom.kept_cells().end());
    CHECK(got == expect);

    int solid = 0;
    for (int j = 0; j < dom.N(); ++j)
        for (int i = 0; i < dom.N(); ++i) solid += dom.solid(i, j);
    CHECK(solid == 16 * cell.solid_count());
    CHECK(dom.mask_margin() >= 2 * 0.125 - 1e-12);

    // mask symmetry under the square's reflections
    for (int j = 0; j < dom.N(); ++j)
        for (int i = 0; i < dom.N(); ++i) {
            CHECK(dom.solid(i, j) == dom.solid(dom.N() - 1 - i, j));
            CHECK(dom.solid(i, j) == dom.solid(i, dom.N() - 1 - j));
            CHECK(dom.solid(i, j) == dom.solid(j, i));
        }

    PerforatedDomain empty_dom(CellGeometry::empty(32), 0.125);
    CHECK(empty_dom.fluid_area() == 1.0);
    CHECK(!empty_dom.degenerate());

    CHECK_THROWS_AS(PerforatedDomain(cell, 0.3), config_error);
}

namespace {
// dense-quadrature oracle for the mollified cutoff profile derivative
double profile_deriv_oracle(double eps, double r) {
    const int n = 1 << 16;
    const double w = eps / 3.0;
    // normalize the bump by its own fine quadrature
    double mass = 0;
    for (int i = 0; i < n; ++i) {
        double s = -1.0 + (i + 0.5) * (2.0 / n);
        mass += std::exp(-1.0 / (1.0 - s * s)) * (2.0 / n);
    }
    auto ramp_d = [&](double x) {
        return (x > 4.0 * eps / 3.0 && x < 5.0 * eps / 3.0) ? 3.0 / eps : 0.0;
    };
    double s = 0;
    for (int i = 0; i < n; ++i) {
        double y = -w + (i + 0.5) * (2.0 * w / n);
        double eta = std::exp(-1.0 / (1.0 - (y / w) * (y / w))) / (mass * w);
        s += eta * ramp_d(r - y) * (2.0 * w / n);
    }
    return s;
}
} // namespace

TEST_CASE("radial cutoff: profile values and gradient direction") {
    const double eps = 0.0625;
    CutoffProfile prof(eps);
    CHECK(prof.value(3 * eps) == 1.0);
    CHECK(prof.value(0.5 * eps) == 0.0);
    CHECK(prof.value(eps) == 0.0);
    CHECK(prof.value(2 * eps) == 1.0);
    // monotone ramp in between
    double prev = 0;
    for (int i = 0; i <= 40; ++i) {
        double r = eps + i * eps / 40.0;
        double v = prof.value(r);
        CHECK(v >= prev - 1e-12);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        prev = v;
    }
    // derivative against the dense 1-D quadrature oracle
    for (double r : {1.3 * eps, 1.5 * eps, 1.7 * eps})
        CHECK(prof.derivative(r) == doctest::Approx(profile_deriv_oracle(eps, r)).epsilon(2e-4));

    const int N = 256;
    CutoffFunction psi(eps, N);
    // grid point nearest (1/2, 1.5 eps): bottom edge, outward normal (0,-1)
    int i0 = N / 2, j0 = static_cast<int>(1.5 * eps * N - 0.5);
    CHECK(psi.gx(i0, j0) == doctest::Approx(0.0).epsilon(1e-12));
    double d0 = (j0 + 0.5) / N;
    CHECK(psi.gy(i0, j0) == doctest::Approx(profile_deriv_oracle(eps, d0)).epsilon(2e-4));
    CHECK(psi.gy(i0, j0) > 0);

    // psi depends on the boundary distance only
    CHECK(psi.psi(i0, j0) == doctest::Approx(psi.psi(j0, i0)).epsilon(1e-14));
    CHECK(psi.psi(i0, j0) == doctest::Approx(psi.psi(i0, N - 1 - j0)).epsilon(1e-14));

    // supp(grad psi) inside the open band (eps, 2 eps) exactly
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i) {
            double d = Domain::dist_boundary((i + 0.5) / double(N), (j + 0.5) / double(N));
            if (d <= eps || d >= 2 * eps) {
                CHECK(psi.gx(i, j) == 0.0);
                CHECK(psi.gy(i, j) == 0.0);
            }
            if (d <= eps) CHECK(psi.psi(i, j) == 0.0);
            if (d >= 2 * eps) CHECK(psi.psi(i, j) == 1.0);
        }

    CHECK_THROWS_AS(CutoffFunction(0.3, 64), config_error);
}

TEST_CASE("cutoff gradient scales like 1/eps") {
    CutoffFunction a(0.125, 256), b(0.0625, 512);
    double ratio = b.max_grad() / a.max_grad();
    CHECK(ratio >= 1.5);
    CHECK(ratio <= 2.5);
}

TEST_CASE("layer decomposition partitions the band") {
    const double eps = 0.125;
    const int N = 256;
    CutoffFunction psi(eps, N);
    LayerDecomposition dec(psi);
    CHECK(dec.cylinder_count() == 4 * static_cast<int>((1.0 - 4 * eps) / eps));
    // every layer point maps to exactly one cell; others to none
    std::vector<int> counts(dec.cell_count(), 0);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i) {
            if (psi.in_layer(i, j)) {
                CHECK(dec.id(i, j) >= 0);
                CHECK(dec.id(i, j) < dec.cell_count());
                ++counts[dec.id(i, j)];
            } else {
                CHECK(dec.id(i, j) == -1);
            }
        }
    for (int c = 0; c < dec.cell_count(); ++c) CHECK(counts[c] == dec.cell(c).count);

    // corner measure scales like eps^2
    CutoffFunction psi2(eps / 2, 2 * N);
    LayerDecomposition dec2(psi2);
    for (int c = 0; c < 4; ++c) {
        double m1 = dec.cell(dec.cylinder_count() + c).count / double(N) / N / (eps * eps);
        double m2 = dec2.cell(dec2.cylinder_count() + c).count / double(2 * N) / (2 * N) /
                    (eps * eps / 4);
        CHECK(m1 == doctest::Approx(m2).epsilon(0.15));
    }
}
