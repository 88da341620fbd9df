#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "thinshell/errors.hpp"
#include "thinshell/grid.hpp"

using namespace thinshell;
constexpr double kPi = std::numbers::pi;

namespace {

ScalarField random_bandlimited(const SphereGrid& g, int L, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    SphCoeffs c(g.lmax);
    for (int l = 0; l <= L; ++l)
        for (int m = 0; m <= l; ++m) c(l, m) = m == 0 ? cplx(nd(rng), 0.0) : cplx(nd(rng), nd(rng));
    c.enforce_real();
    return sht_inverse(g, c);
}

}  // namespace

TEST_CASE("sphere grid weights and sizes") {
    auto g = make_sphere_grid(2);
    double s = 0.0;
    for (double w : g.weights) s += w;
    CHECK(s == doctest::Approx(4.0 * kPi).epsilon(1e-12));
    CHECK(std::abs(s - 12.566370614) < 1e-9);
    for (int lmax : {2, 5, 8, 12}) {
        auto h = make_sphere_grid(lmax);
        CHECK(h.nlat >= lmax + 1);
        CHECK(h.nlon >= 2 * lmax + 1);
    }
    CHECK_THROWS_AS(make_sphere_grid(1), Error);
    try {
        make_sphere_grid(1);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidParameter);
    }
}

TEST_CASE("Y_3^2 normalization against brute-force colatitude integral") {
    // Oracle: |Y_3^2|^2 = (105/(32 pi)) sin^4 cos^2; phi integral is 2 pi; midpoint rule in theta.
    const int n = 200000;
    double oracle = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = (i + 0.5) * kPi / n;
        const double s = std::sin(t), c = std::cos(t);
        oracle += 105.0 / (32.0 * kPi) * std::pow(s, 4) * c * c * s * (kPi / n) * 2.0 * kPi;
    }
    CHECK(std::abs(oracle - 1.0) < 1e-9);

    auto g = make_sphere_grid(8);
    auto y = ylm_nodal(g, 3, 2);
    double q = 0.0;
    for (int i = 0; i < g.npts(); ++i) q += g.weights[i] * std::norm(y[i]);
    CHECK(std::abs(q - 1.0) < 1e-12);

    auto y10 = ylm_nodal(g, 1, 0);
    double q10 = 0.0;
    for (int i = 0; i < g.npts(); ++i) q10 += g.weights[i] * y10[i].real();
    CHECK(std::abs(q10) < 1e-14);
}

TEST_CASE("orthonormality of Y_l^m on the grid") {
    auto g = make_sphere_grid(6);
    double worst = 0.0;
    for (int l = 0; l <= g.lmax; ++l)
        for (int m = -l; m <= l; ++m) {
            auto a = ylm_nodal(g, l, m);
            for (int l2 = 0; l2 <= g.lmax; ++l2)
                for (int m2 = -l2; m2 <= l2; ++m2) {
                    auto b = ylm_nodal(g, l2, m2);
                    cplx s(0.0, 0.0);
                    for (int i = 0; i < g.npts(); ++i) s += g.weights[i] * a[i] * std::conj(b[i]);
                    const double expect = (l == l2 && m == m2) ? 1.0 : 0.0;
                    worst = std::max(worst, std::abs(s - expect));
                }
        }
    CHECK(worst < 1e-10);
}

TEST_CASE("forward transform examples") {
    auto g = make_sphere_grid(6);
    ScalarField one(g.npts(), 1.0);
    auto c = sht_forward(g, one);
    CHECK(std::abs(c(0, 0) - std::sqrt(4.0 * kPi)) < 1e-12);
    double rest = c.norm2() - std::norm(c(0, 0));
    CHECK(rest < 1e-24);

    // Real sampling of Y_2^1: 2 Re Y_2^1 = Y_2^1 - Y_2^{-1}.
    auto y = ylm_nodal(g, 2, 1);
    ScalarField f(g.npts());
    for (int i = 0; i < g.npts(); ++i) f[i] = 2.0 * y[i].real();
    auto d = sht_forward(g, f);
    CHECK(std::abs(d(2, 1) - 1.0) < 1e-12);
    CHECK(std::abs(d(2, -1) + 1.0) < 1e-12);
    double others = d.norm2() - std::norm(d(2, 1)) - std::norm(d(2, -1));
    CHECK(std::sqrt(others) < 1e-12);

    CHECK_THROWS_AS(sht_forward(g, ScalarField(3, 0.0)), Error);
}

TEST_CASE("round trip and Parseval for band-limited fields") {
    auto g = make_sphere_grid(10);
    auto f = random_bandlimited(g, 10, 7);
    auto c = sht_forward(g, f);
    auto f2 = sht_inverse(g, c);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < g.npts(); ++i) {
        num = std::max(num, std::abs(f[i] - f2[i]));
        den = std::max(den, std::abs(f[i]));
    }
    CHECK(num / den < 1e-10);
    // Oracle: direct quadrature of f^2.
    double quad = 0.0;
    for (int i = 0; i < g.npts(); ++i) quad += g.weights[i] * f[i] * f[i];
    CHECK(std::abs(quad - c.norm2()) / quad < 1e-10);
    // Conjugate symmetry of real-field coefficients.
    for (int l = 0; l <= g.lmax; ++l)
        for (int m = 1; m <= l; ++m)
            CHECK(std::abs(c(l, -m) - ((m % 2) ? -1.0 : 1.0) * std::conj(c(l, m))) < 1e-14);
}

TEST_CASE("vector harmonic round trip") {
    auto g = make_sphere_grid(8);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    SphCoeffs A(g.lmax), B(g.lmax);
    for (int l = 1; l <= g.lmax; ++l)
        for (int m = 0; m <= l; ++m) {
            A(l, m) = m == 0 ? cplx(nd(rng), 0) : cplx(nd(rng), nd(rng));
            B(l, m) = m == 0 ? cplx(nd(rng), 0) : cplx(nd(rng), nd(rng));
        }
    A.enforce_real();
    B.enforce_real();
    auto w = vsh_synthesis(g, A, B);
    double tang = 0.0;
    for (int i = 0; i < g.npts(); ++i) tang = std::max(tang, std::abs(w[i].dot(g.pos[i])));
    CHECK(tang < 1e-12);
    SphCoeffs A2, B2;
    vsh_analysis(g, w, A2, B2);
    double err = 0.0;
    for (size_t q = 0; q < A.c.size(); ++q) err = std::max({err, std::abs(A.c[q] - A2.c[q]), std::abs(B.c[q] - B2.c[q])});
    CHECK(err < 1e-12);
}

TEST_CASE("shell grid quadrature") {
    auto s = make_shell_grid(4, 0.5, 8);
    for (int j = 1; j < s.nrad; ++j) CHECK(s.rnodes[j] > s.rnodes[j - 1]);
    CHECK(s.rnodes.front() == 1.0);
    CHECK(s.rnodes.back() == 1.5);
    ScalarField one(s.npts(), 1.0);
    const double vol = shell_quadrature(s, one);
    CHECK(std::abs(vol - 9.948376736) < 1e-8);
    CHECK(std::abs(vol - 4.0 * kPi / 3.0 * (std::pow(1.5, 3) - 1.0)) / vol < 1e-12);

    auto t = make_shell_grid(4, 0.1, 8);
    ScalarField rr(t.npts());
    for (int j = 0; j < t.nrad; ++j)
        for (int i = 0; i < t.nsph(); ++i) rr[t.idx(j, i)] = t.rnodes[j];
    // Oracle: int r^3 dr in closed form.
    const double expect = 4.0 * kPi * (std::pow(1.1, 4) - 1.0) / 4.0;
    CHECK(std::abs(shell_quadrature(t, rr) - expect) / expect < 1e-12);
    CHECK(std::abs(expect / (4.0 * kPi) - 0.116025) < 1e-12);

    auto y = ylm_nodal(t.base, 1, 0);
    ScalarField ybar(t.npts());
    for (int j = 0; j < t.nrad; ++j)
        for (int i = 0; i < t.nsph(); ++i) ybar[t.idx(j, i)] = y[i].real();
    CHECK(std::abs(shell_quadrature(t, ybar)) < 1e-14);

    CHECK_THROWS_AS(shell_quadrature(t, ScalarField(5)), Error);
}

TEST_CASE("shell quadrature of separable fields factorizes") {
    auto s = make_shell_grid(6, 0.3, 9);
    ScalarField eta(s.nsph());
    for (int i = 0; i < s.nsph(); ++i) eta[i] = 1.0 + s.base.pos[i].x() * s.base.pos[i].y() + s.base.pos[i].z();
    ScalarField phi(s.npts());
    double radial = 0.0;
    for (int j = 0; j < s.nrad; ++j) {
        const double r = s.rnodes[j];
        const double h = 1.0 + r - 0.5 * r * r * r;
        radial += s.rweights[j] * h * r * r;
        for (int i = 0; i < s.nsph(); ++i) phi[s.idx(j, i)] = h * eta[i];
    }
    const double prod = sphere_quadrature(s.base, eta) * radial;
    CHECK(std::abs(shell_quadrature(s, phi) - prod) / std::abs(prod) < 1e-12);
}

TEST_CASE("radial spectral transforms and differentiation") {
    auto s = make_shell_grid(4, 0.1, 12);
    auto radial_field = [&](auto fn) {
        ScalarField f(s.npts());
        for (int j = 0; j < s.nrad; ++j)
            for (int i = 0; i < s.nsph(); ++i) f[s.idx(j, i)] = fn(s.rnodes[j]);
        return f;
    };
    auto max_err = [&](const ScalarField& a, auto fn) {
        double e = 0.0;
        for (int j = 0; j < s.nrad; ++j)
            for (int i = 0; i < s.nsph(); ++i) e = std::max(e, std::abs(a[s.idx(j, i)] - fn(s.rnodes[j])));
        return e;
    };

    auto one = shell_forward(s, radial_field([](double) { return 1.0; }));
    CHECK(max_err(shell_inverse(s, chebyshev_diff(one)), [](double) { return 0.0; }) < 1e-12);

    auto sq = shell_forward(s, radial_field([](double r) { return r * r; }));
    CHECK(max_err(shell_inverse(s, chebyshev_diff(sq)), [](double r) { return 2.0 * r; }) < 1e-12);

    auto ex = shell_forward(s, radial_field([](double r) { return std::exp(r); }));
    CHECK(max_err(shell_inverse(s, chebyshev_diff(ex)), [](double r) { return std::exp(r); }) < 1e-10);

    // Round trip of a band-limited angular x polynomial radial field.
    ScalarField f(s.npts());
    for (int j = 0; j < s.nrad; ++j)
        for (int i = 0; i < s.nsph(); ++i) {
            const auto& y = s.base.pos[i];
            f[s.idx(j, i)] = (y.x() * y.z() + y.y()) * std::pow(s.rnodes[j], 5) + y.z();
        }
    auto back = shell_inverse(s, shell_forward(s, f));
    double e = 0.0;
    for (size_t q = 0; q < f.size(); ++q) e = std::max(e, std::abs(back[q] - f[q]));
    CHECK(e < 1e-10);

    RadialSphCoeffs small(4, 3, 0.1);
    CHECK_THROWS_AS(chebyshev_diff(small), Error);
}
