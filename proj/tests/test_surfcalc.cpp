#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "thinshell/errors.hpp"
#include "thinshell/surfcalc.hpp"

using namespace thinshell;
constexpr double kPi = std::numbers::pi;

namespace {

double max_norm(const VecField& v) {
    double m = 0.0;
    for (const auto& x : v) m = std::max(m, x.norm());
    return m;
}

double max_norm(const MatField& v) {
    double m = 0.0;
    for (const auto& x : v) m = std::max(m, x.norm());
    return m;
}

double max_abs(const ScalarField& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

VecField normal_field(const SphereGrid& g) { return g.pos; }

// General (non-tangential) field: random tangent part plus random normal part.
VecField random_general(const SphereGrid& g, int band, std::mt19937_64& rng) {
    auto v = random_tangent(g, band, rng);
    auto h = random_scalar(g, band, rng);
    for (int i = 0; i < g.npts(); ++i) v[i] += h[i] * g.pos[i];
    return v;
}

double re_y31(double th, double ph) {
    return -std::sqrt(21.0 / (64.0 * kPi)) * std::sin(th) * (5.0 * std::cos(th) * std::cos(th) - 1.0) * std::cos(ph);
}

}  // namespace

TEST_CASE("gradient of the normal and projector algebra") {
    auto g = make_sphere_grid(6);
    auto M = tangential_gradient(g, normal_field(g));
    auto P = projector(g);
    auto div = surface_divergence(g, normal_field(g));
    double err = 0.0, derr = 0.0, perr = 0.0;
    for (int i = 0; i < g.npts(); ++i) {
        err = std::max(err, (M[i] - P[i]).norm());
        derr = std::max(derr, std::abs(div[i] - 2.0));
        perr = std::max({perr, (P[i] * P[i] - P[i]).norm(), (P[i].transpose() - P[i]).norm(),
                         std::abs(P[i].squaredNorm() - 2.0)});
    }
    CHECK(err < 1e-10);
    CHECK(derr < 1e-10);
    CHECK(perr < 1e-13);

    auto D = surface_strain(g, normal_field(g));
    double serr = 0.0;
    for (int i = 0; i < g.npts(); ++i) serr = std::max(serr, (D[i] - P[i]).norm());
    CHECK(serr < 1e-10);

    ScalarField one(g.npts(), 1.0);
    CHECK(max_norm(tangential_gradient(g, one)) < 1e-12);

    ScalarField bad(g.npts(), 0.0);
    bad[3] = std::nan("");
    try {
        tangential_gradient(g, bad);
        FAIL("expected data-error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DataError);
    }
}

TEST_CASE("Laplace-Beltrami of Y_3^1 against a finite-difference oracle") {
    auto g = make_sphere_grid(8);
    ScalarField f(g.npts());
    for (int i = 0; i < g.nlat; ++i)
        for (int k = 0; k < g.nlon; ++k) f[i * g.nlon + k] = re_y31(g.theta[i], g.phi[k]);
    // Closed form agrees with the grid's Y_3^1 (sign convention).
    auto y = ylm_nodal(g, 3, 1);
    double diff = 0.0;
    for (int n = 0; n < g.npts(); ++n) diff = std::max(diff, std::abs(f[n] - y[n].real()));
    CHECK(diff < 1e-12);

    auto lap = surface_divergence(g, tangential_gradient(g, f));
    const double h = 1e-4;
    double worst_fd = 0.0, worst_spec = 0.0;
    for (int i = 1; i < g.nlat - 1; i += 3)
        for (int k = 0; k < g.nlon; k += 5) {
            const double th = g.theta[i], ph = g.phi[k];
            const double st = std::sin(th);
            const double dth = (std::sin(th + h / 2) * (re_y31(th + h, ph) - re_y31(th, ph)) -
                                std::sin(th - h / 2) * (re_y31(th, ph) - re_y31(th - h, ph))) /
                               (h * h * st);
            const double dph = (re_y31(th, ph + h) - 2.0 * re_y31(th, ph) + re_y31(th, ph - h)) / (h * h * st * st);
            const double fd = dth + dph;
            const int n = i * g.nlon + k;
            worst_fd = std::max(worst_fd, std::abs(fd + 12.0 * f[n]));
            worst_spec = std::max(worst_spec, std::abs(lap[n] - fd));
        }
    CHECK(worst_fd < 1e-5);
    CHECK(worst_spec < 1e-5);
    double exact = 0.0;
    for (int n = 0; n < g.npts(); ++n) exact = std::max(exact, std::abs(lap[n] + 12.0 * f[n]));
    CHECK(exact < 1e-10);
}

TEST_CASE("rotation fields are tangential, solenoidal and strain free") {
    auto g = make_sphere_grid(6);
    const Vec3 a(0.3, -1.2, 0.7);
    auto r = rotation_field(g, a);
    CHECK(is_tangential(g, r, 1e-14));
    CHECK(max_abs(surface_divergence(g, r)) < 1e-12);
    CHECK(max_norm(surface_strain(g, r)) < 1e-12);

    // n x grad Y_2^0 is divergence free.
    SphCoeffs B(g.lmax);
    B(2, 0) = 1.0;
    auto curl = vsh_synthesis(g, SphCoeffs(g.lmax), B);
    CHECK(max_abs(surface_divergence(g, curl)) < 1e-12);

    auto s = make_shell_grid(6, 0.1, 8);
    auto rs = rotation_field(s, a);
    auto Dr = strain_shell(s, rs);
    CHECK(max_norm(Dr) < 1e-12);
    auto G = full_gradient_shell(s, rs);
    double anti = 0.0;
    for (const auto& m : G) anti = std::max(anti, (m + m.transpose()).norm());
    CHECK(anti < 1e-12);
    // Normal trace vanishes on both walls.
    double nt = 0.0;
    for (int j : {0, s.nrad - 1})
        for (int i = 0; i < s.nsph(); ++i) nt = std::max(nt, std::abs(rs[s.idx(j, i)].dot(s.base.pos[i])));
    CHECK(nt < 1e-14);
}

TEST_CASE("tangential component and strain identities for random fields") {
    auto g = make_sphere_grid(12);
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 3; ++trial) {
        auto v = random_general(g, 8, rng);
        VecField vt(g.npts());
        for (int i = 0; i < g.npts(); ++i) vt[i] = v[i] - g.pos[i] * g.pos[i].dot(v[i]);
        auto Gv = tangential_gradient(g, v);
        auto Gvt = tangential_gradient(g, vt);
        auto Dv = surface_strain(g, v);
        auto Dvt = surface_strain(g, vt);
        auto div_vt = surface_divergence(g, vt);
        double scale = max_norm(Gv), e1 = 0.0, e2 = 0.0, e3 = 0.0, e4 = 0.0, e5 = 0.0;
        for (int i = 0; i < g.npts(); ++i) {
            const Vec3& n = g.pos[i];
            const Mat3 P = Mat3::Identity() - n * n.transpose();
            const double vn = v[i].dot(n);
            e1 = std::max(e1, (Gvt[i] - (Gv[i] * P - vt[i] * n.transpose() - vn * P)).norm());
            e2 = std::max(e2, (Dvt[i] - (Dv[i] - vn * P)).norm());
            e3 = std::max(e3, (Gvt[i] - (P * Gvt[i] * P - vt[i] * n.transpose())).norm());
            e4 = std::max(e4, std::abs(Dvt[i].trace() - div_vt[i]));
            e5 = std::max({e5, (Dv[i] - Dv[i].transpose()).norm(), (P * Dv[i] * P - Dv[i]).norm()});
        }
        CHECK(e1 < 1e-10 * scale);
        CHECK(e2 < 1e-10 * scale);
        CHECK(e3 < 1e-10 * scale);
        CHECK(e4 < 1e-10 * scale);
        CHECK(e5 < 1e-10 * scale);
    }
}

TEST_CASE("Gauss formula and covariant derivative") {
    auto g = make_sphere_grid(10);
    std::mt19937_64 rng(5);
    auto v = random_tangent(g, 7, rng);
    auto w = random_tangent(g, 7, rng);
    auto cov = covariant_derivative(g, w, v);
    auto Gv = tangential_gradient(g, v);
    double err = 0.0;
    for (int i = 0; i < g.npts(); ++i) {
        const Vec3 dir = Gv[i].transpose() * w[i];
        err = std::max(err, (dir - (cov[i] - v[i].dot(w[i]) * g.pos[i])).norm());
    }
    CHECK(err < 1e-10 * max_norm(Gv));

    VecField zero(g.npts(), Vec3::Zero());
    CHECK(max_norm(covariant_derivative(g, zero, v)) == 0.0);
    CHECK_THROWS_AS(covariant_derivative(g, normal_field(g), v), Error);

    // Oracle: with r_a = a x y, (r_a . grad) r_a = a x (a x y), whose tangential part is (a.y) P a,
    // i.e. the surface gradient of (a.y)^2 / 2. Its Leray projection therefore vanishes.
    const Vec3 a(0.0, 0.0, 1.0);
    auto r = rotation_field(g, a);
    auto acc = covariant_derivative(g, r, r);
    ScalarField half_sq(g.npts());
    for (int i = 0; i < g.npts(); ++i) half_sq[i] = 0.5 * std::pow(a.dot(g.pos[i]), 2);
    auto grad = tangential_gradient(g, half_sq);
    double e1 = 0.0, e2 = 0.0;
    for (int i = 0; i < g.npts(); ++i) {
        const Vec3& y = g.pos[i];
        const Vec3 brute = a.cross(a.cross(y));
        const Vec3 brute_t = brute - y * y.dot(brute);
        e1 = std::max(e1, (acc[i] - brute_t).norm());
        e2 = std::max(e2, (acc[i] - grad[i]).norm());
    }
    CHECK(e1 < 1e-12);
    CHECK(e2 < 1e-12);
    CHECK(max_norm(leray_project_sphere(g, acc)) < 1e-12);
}

TEST_CASE("integration by parts on the sphere") {
    auto g = make_sphere_grid(10);
    std::mt19937_64 rng(9);
    auto eta = random_scalar(g, 8, rng);
    auto zeta = random_scalar(g, 8, rng);
    auto ge = tangential_gradient(g, eta);
    auto gz = tangential_gradient(g, zeta);
    const double scale = l2norm(g, eta) * l2norm(g, zeta);
    for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int i = 0; i < g.npts(); ++i)
            s += g.weights[i] * (ge[i](c) * zeta[i] + eta[i] * (gz[i](c) - 2.0 * zeta[i] * g.pos[i](c)));
        CHECK(std::abs(s) < 1e-9 * scale);
    }
}

TEST_CASE("trilinear antisymmetry on the sphere and in the shell") {
    auto g = make_sphere_grid(10);
    std::mt19937_64 rng(21);
    auto v = random_solenoidal(g, 6, rng);
    auto w = random_tangent(g, 6, rng);
    auto z = random_tangent(g, 6, rng);
    const double a = inner(g, covariant_derivative(g, v, w), z);
    const double b = inner(g, w, covariant_derivative(g, v, z));
    const double scale = l2norm(g, v) * h1norm(g, w) * h1norm(g, z);
    CHECK(std::abs(a + b) < 1e-9 * scale);
    CHECK(std::abs(inner(g, covariant_derivative(g, v, w), w)) < 1e-9 * scale);

    auto s = make_shell_grid(8, 0.2, 10);
    auto u = random_shell_solenoidal(s, 5, 2, RadialScale::Thin, rng);
    auto zz = random_shell_slip(s, 5, 2, RadialScale::Fixed, rng);
    CHECK(l2norm(s, divergence_shell(s, u)) < 1e-9 * h1norm(s, u));
    auto Gz = full_gradient_shell(s, zz);
    VecField adv(s.npts());
    for (int q = 0; q < s.npts(); ++q) adv[q] = Gz[q].transpose() * u[q];
    CHECK(std::abs(inner(s, adv, zz)) < 1e-9 * h1norm(s, u) * h1norm(s, zz) * h1norm(s, zz));
}

TEST_CASE("matrix inner product identities") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 20; ++t) {
        Mat3 A, B, C;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                A(i, j) = nd(rng);
                B(i, j) = nd(rng);
                C(i, j) = nd(rng);
            }
        auto dd = [](const Mat3& X, const Mat3& Y) { return (X.transpose() * Y).trace(); };
        CHECK(std::abs(dd(A, B) - dd(A.transpose(), B.transpose())) < 1e-13);
        CHECK(std::abs(dd(A * B, C) - dd(B, A.transpose() * C)) < 1e-12);
        CHECK(std::abs(dd(A * B, C) - dd(A, C * B.transpose())) < 1e-12);
    }
}

TEST_CASE("Leray projection on the sphere") {
    auto g = make_sphere_grid(10);
    std::mt19937_64 rng(4);
    auto v = random_tangent(g, 8, rng);
    auto w = leray_project_sphere(g, v);
    CHECK(l2norm(g, surface_divergence(g, w)) < 1e-9);
    auto w2 = leray_project_sphere(g, w);
    double idem = 0.0;
    for (int i = 0; i < g.npts(); ++i) idem = std::max(idem, (w2[i] - w[i]).norm());
    CHECK(idem < 1e-10);
    VecField d(g.npts());
    for (int i = 0; i < g.npts(); ++i) d[i] = v[i] - w[i];
    CHECK(std::abs(inner(g, d, w)) < 1e-10);

    auto r = rotation_field(g, Vec3(1.0, 2.0, -0.5));
    auto pr = leray_project_sphere(g, r);
    double e = 0.0;
    for (int i = 0; i < g.npts(); ++i) e = std::max(e, (pr[i] - r[i]).norm());
    CHECK(e < 1e-12);

    ScalarField y22(g.npts()), y10(g.npts());
    auto c22 = ylm_nodal(g, 2, 2);
    auto c10 = ylm_nodal(g, 1, 0);
    for (int i = 0; i < g.npts(); ++i) {
        y22[i] = c22[i].real();
        y10[i] = c10[i].real();
    }
    CHECK(max_norm(leray_project_sphere(g, tangential_gradient(g, y22))) < 1e-12);
    auto grad10 = tangential_gradient(g, y10);
    VecField mix(g.npts());
    for (int i = 0; i < g.npts(); ++i) mix[i] = r[i] + grad10[i];
    auto pm = leray_project_sphere(g, mix);
    e = 0.0;
    for (int i = 0; i < g.npts(); ++i) e = std::max(e, (pm[i] - r[i]).norm());
    CHECK(e < 1e-12);

    // Vorticity of r_a is 2 (a . y).
    const Vec3 a(0.2, -0.4, 1.1);
    auto om = sht_inverse(g, surface_vorticity(g, rotation_field(g, a)));
    double ve = 0.0;
    for (int i = 0; i < g.npts(); ++i) ve = std::max(ve, std::abs(om[i] - 2.0 * a.dot(g.pos[i])));
    CHECK(ve < 1e-12);
}

TEST_CASE("shell gradients of simple fields") {
    auto s = make_shell_grid(6, 0.1, 8);
    VecField x(s.npts());
    for (int j = 0; j < s.nrad; ++j)
        for (int i = 0; i < s.nsph(); ++i) x[s.idx(j, i)] = s.rnodes[j] * s.base.pos[i];
    auto G = full_gradient_shell(s, x);
    double e = 0.0;
    for (const auto& m : G) e = std::max(e, (m - Mat3::Identity()).norm());
    CHECK(e < 1e-10);
    CHECK(max_abs(divergence_shell(s, x)) == doctest::Approx(3.0).epsilon(1e-10));

    // Weighted extension |x| v(x/|x|) has strain equal to the extended surface strain.
    std::mt19937_64 rng(8);
    auto v = random_tangent(s.base, 5, rng);
    VecField vE(s.npts());
    for (int j = 0; j < s.nrad; ++j)
        for (int i = 0; i < s.nsph(); ++i) vE[s.idx(j, i)] = s.rnodes[j] * v[i];
    auto D = strain_shell(s, vE);
    auto Ds = surface_strain(s.base, v);
    e = 0.0;
    for (int j = 0; j < s.nrad; ++j)
        for (int i = 0; i < s.nsph(); ++i) e = std::max(e, (D[s.idx(j, i)] - Ds[i]).norm());
    CHECK(e < 1e-9 * max_norm(Ds));

    // Scalar shell gradient of r^2 is 2x.
    ScalarField r2(s.npts());
    for (int j = 0; j < s.nrad; ++j)
        for (int i = 0; i < s.nsph(); ++i) r2[s.idx(j, i)] = s.rnodes[j] * s.rnodes[j];
    auto g2 = full_gradient_shell(s, r2);
    e = 0.0;
    for (int q = 0; q < s.npts(); ++q) e = std::max(e, (g2[q] - 2.0 * x[q]).norm());
    CHECK(e < 1e-10);
}

TEST_CASE("toroidal-poloidal synthesis is solenoidal with zero normal trace") {
    auto s = make_shell_grid(8, 0.1, 10);
    std::mt19937_64 rng(14);
    auto u = random_shell_solenoidal(s, 6, 2, RadialScale::Thin, rng);
    CHECK(l2norm(s, divergence_shell(s, u)) < 1e-9 * l2norm(s, u));
    double nt = 0.0;
    for (int j : {0, s.nrad - 1})
        for (int i = 0; i < s.nsph(); ++i) nt = std::max(nt, std::abs(u[s.idx(j, i)].dot(s.base.pos[i])));
    CHECK(nt < 1e-12 * max_norm(u));

    auto w = random_shell_slip(s, 6, 2, RadialScale::Fixed, rng);
    nt = 0.0;
    for (int j : {0, s.nrad - 1})
        for (int i = 0; i < s.nsph(); ++i) nt = std::max(nt, std::abs(w[s.idx(j, i)].dot(s.base.pos[i])));
    CHECK(nt < 1e-12 * max_norm(w));

    // T = r (a . y) reproduces r_a through u_tan = -n x grad T.
    const Vec3 a(0.0, 1.0, 0.5);
    std::vector<SphCoeffs> T(s.nrad, SphCoeffs(s.base.lmax)), P(s.nrad, SphCoeffs(s.base.lmax));
    ScalarField ay(s.nsph());
    for (int i = 0; i < s.nsph(); ++i) ay[i] = a.dot(s.base.pos[i]);
    auto c = sht_forward(s.base, ay);
    for (int j = 0; j < s.nrad; ++j)
        for (size_t q = 0; q < c.c.size(); ++q) T[j].c[q] = s.rnodes[j] * c.c[q];
    auto ra = tp_synthesis(s, T, P);
    auto ref = rotation_field(s, a);
    double e = 0.0;
    for (int q = 0; q < s.npts(); ++q) e = std::max(e, (ra[q] - ref[q]).norm());
    CHECK(e < 1e-12);
}

TEST_CASE("rotation removal and inequality probes") {
    auto g = make_sphere_grid(8);
    std::mt19937_64 rng(3);
    auto v = remove_rotations(g, random_tangent(g, 6, rng));
    for (const Vec3& a : {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()})
        CHECK(std::abs(inner(g, v, rotation_field(g, a))) < 1e-12);

    ProbeOptions opt;
    opt.lmax = 8;
    opt.samples = 12;
    auto sphere = probe_inequality(ProbeKind::KornSphere, opt);
    REQUIRE(sphere.entries.size() == 1);
    CHECK(sphere.entries[0].used == 12);
    CHECK(std::isfinite(sphere.constant));
    CHECK(!sphere.killing_flagged);

    opt.orthogonalize = false;
    opt.include_killing = true;
    opt.samples = 2;
    auto killing = probe_inequality(ProbeKind::KornSphere, opt);
    CHECK(killing.killing_flagged);
    CHECK(killing.entries[0].skipped == 1);

    ProbeOptions sh;
    sh.lmax = 6;
    sh.band = 4;
    sh.samples = 6;
    auto shell = probe_inequality(ProbeKind::KornShellUniform, sh);
    CHECK(shell.entries.size() == 3);
    CHECK(std::isfinite(shell.constant));
    CHECK(shell.spread < 1.25);

    auto lad = probe_inequality(ProbeKind::Ladyzhenskaya, opt);
    CHECK(lad.constant < 10.0);

    CHECK(parse_probe_kind("normal_trace") == ProbeKind::NormalTrace);
    CHECK(to_string(ProbeKind::ProductThin) == "product_thin");
    CHECK_THROWS_AS(parse_probe_kind("nope"), Error);
}
