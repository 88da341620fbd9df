#include <cmath>
#include <cstdio>
#include <random>

#include "doctest.h"
#include "thinshell/errors.hpp"
#include "thinshell/shell_ns.hpp"

using namespace thinshell;

namespace {

double max_diff(const VecField& a, const VecField& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).norm());
    return m;
}

double max_abs(const VecField& a) {
    double m = 0.0;
    for (const auto& x : a) m = std::max(m, x.norm());
    return m;
}

// Stress-free toroidal eigenvalue -k^2 of D_l on [1, R] from spherical Bessel functions:
// T = a j_l(kr) + b y_l(kr) with r T' - T = 0 at both walls.
double toroidal_eigenvalue(int l, double R) {
    auto g = [l](double k, double r, bool second) {
        const double x = k * r;
        auto f = [&](int n) { return second ? std::sph_neumann(n, x) : std::sph_bessel(n, x); };
        const double fl = f(l), dfl = f(l - 1) - (l + 1.0) / x * fl;
        return x * dfl - fl;
    };
    auto det = [&](double k) { return g(k, 1.0, false) * g(k, R, true) - g(k, 1.0, true) * g(k, R, false); };
    double a = 0.05, fa = det(a);
    for (double b = a + 0.01; b < 200.0; b += 0.01) {
        const double fb = det(b);
        if (fa * fb < 0.0) {
            double lo = b - 0.01, hi = b;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (det(lo) * det(mid) <= 0.0) hi = mid;
                else lo = mid;
            }
            const double k = 0.5 * (lo + hi);
            return -k * k;
        }
        fa = fb;
    }
    return 0.0;
}

VecField random_slip_solenoidal(const ShellGrid& g, std::mt19937_64& rng, double amp) {
    auto u = remove_rotations(g, random_stress_free(g, 6, rng));
    const double n = max_abs(u);
    for (auto& x : u) x *= amp / n;
    return u;
}

}  // namespace

TEST_CASE("toroidal-poloidal inversion") {
    auto g = make_shell_grid(8, 0.1, 8);
    const Vec3 a(0.3, -0.4, 0.8);
    ShellSolverOptions opt;
    auto s = init_shell_solver(rotation_field(g, a), opt, g);
    CHECK(!s.projected_initial);
    // Oracle: T = r (a.y), whose l = 1 coefficients are the transform of a.y on the base grid.
    ScalarField ay(g.nsph());
    for (int i = 0; i < g.nsph(); ++i) ay[i] = a.dot(g.base.pos[i]);
    auto c = sht_forward(g.base, ay);
    double et = 0.0, ep = 0.0;
    for (int j = 0; j < g.nrad; ++j)
        for (int l = 0; l <= 8; ++l)
            for (int m = -l; m <= l; ++m) {
                const cplx expect = l == 1 ? g.rnodes[j] * c(l, m) : cplx(0.0, 0.0);
                et = std::max(et, std::abs(s.T[j](l, m) - expect));
                ep = std::max(ep, std::abs(s.P[j](l, m)));
            }
    CHECK(et < 1e-12);
    CHECK(ep < 1e-12);

    std::mt19937_64 rng(5);
    auto v = random_solenoidal(g.base, 6, rng);
    auto vE = extend(g, v, ExtensionMode::Weighted);
    auto sv = init_shell_solver(vE, opt, g);
    CHECK(max_diff(shell_velocity(sv), vE) < 1e-9);
    CHECK(!sv.projected_initial);

    auto u = random_shell_solenoidal(g, 6, 2, RadialScale::Fixed, rng);
    CHECK(max_diff(leray_project_shell(g, u), u) < 1e-9 * max_abs(u));

    auto z = init_shell_solver(VecField(g.npts(), Vec3::Zero()), opt, g);
    CHECK(max_abs(shell_velocity(z)) == 0.0);

    VecField bad(g.npts(), Vec3::Zero());
    bad[3].x() = std::nan("");
    CHECK_THROWS_AS(init_shell_solver(bad, opt, g), Error);
}

TEST_CASE("slip Leray projection") {
    auto g = make_shell_grid(8, 0.1, 10);
    std::mt19937_64 rng(8);
    auto phi = random_shell_scalar(g, 6, 3, RadialScale::Thin, rng);
    auto grad = full_gradient_shell(g, phi);
    CHECK(max_abs(leray_project_shell(g, grad)) < 1e-9 * max_abs(grad));

    auto u = random_shell_slip(g, 6, 2, RadialScale::Thin, rng);
    auto p = leray_project_shell(g, u);
    CHECK(l2norm(g, divergence_shell(g, p)) < 1e-9 * h1norm(g, p));
    CHECK(boundary_defect(g, p).normal_trace < 1e-10 * max_abs(p));
    // Orthogonality of the removed part to solenoidal slip fields.
    auto w = random_shell_solenoidal(g, 6, 2, RadialScale::Thin, rng);
    VecField d(u.size());
    for (size_t q = 0; q < u.size(); ++q) d[q] = u[q] - p[q];
    CHECK(std::abs(inner(g, d, w)) < 1e-10 * l2norm(g, u) * l2norm(g, w));
    // Idempotent.
    CHECK(max_diff(leray_project_shell(g, p), p) < 1e-10 * max_abs(p));
}

TEST_CASE("rotation is stationary in the shell") {
    auto g = make_shell_grid(8, 0.1, 8);
    const Vec3 a(0.0, 0.6, 0.8);
    ShellSolverOptions opt;
    opt.dt = 1e-2;
    auto ra = rotation_field(g, a);
    auto s = init_shell_solver(ra, opt, g);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        step3d(s);
        worst = std::max(worst, max_diff(shell_velocity(s), ra));
    }
    CHECK(s.t == doctest::Approx(0.5));
    CHECK(worst < 1e-8);
    auto r = energy_report(s);
    CHECK(r.max_momentum_drift < 1e-10);
    CHECK(r.max_tangential_stress < 1e-9);
}

TEST_CASE("Stokes toroidal decay matches the radial eigenproblem") {
    for (int l : {2, 3}) {
        auto g = make_shell_grid(6, 0.2, 10);
        ShellSolverOptions opt;
        opt.nu = 1.0;
        opt.dt = 1e-3;
        opt.advection = false;
        RadialPotential T(g.nrad, SphCoeffs(6)), P(g.nrad, SphCoeffs(6));
        for (int j = 0; j < g.nrad; ++j) {
            const double r = g.rnodes[j];
            T[j](l, 1) = cplx(r + 0.3 * (r - 1.0) * (r - 1.0), 0.0);
        }
        auto s = init_shell_solver_from_potentials(T, P, opt, g);
        for (int i = 0; i < 500; ++i) step3d(s);
        const double a0 = std::abs(s.T[0](l, 1));
        for (int i = 0; i < 500; ++i) step3d(s);
        const double a1 = std::abs(s.T[0](l, 1));
        const double rate = std::log(a1 / a0) / 0.5;
        const double lam = toroidal_eigenvalue(l, 1.2);
        // Crank-Nicolson amplification of the exact eigenvalue.
        const double z = opt.dt * lam;
        const double expect = std::log((1.0 + 0.5 * z) / (1.0 - 0.5 * z)) / opt.dt;
        CHECK(lam < 0.0);
        CHECK(std::abs(rate - expect) < 1e-8 * std::abs(expect));
        CHECK(std::abs(rate - lam) < 1e-5 * std::abs(lam));
    }
}

TEST_CASE("nonlinear run keeps the invariants") {
    auto g = make_shell_grid(10, 0.1, 8);
    std::mt19937_64 rng(12);
    ShellSolverOptions opt;
    opt.nu = 0.1;
    opt.dt = 2e-3;
    auto u0 = random_slip_solenoidal(g, rng, 1.0);
    auto s = init_shell_solver(u0, opt, g);
    for (int i = 0; i < 100; ++i) {
        step3d(s);
        const auto& L = s.ledger;
        CHECK(L.divergence.back() < 1e-9);
        CHECK(L.normal_trace.back() < 1e-9);
        CHECK(L.tangential_stress.back() < 1e-7);
    }
    auto r = energy_report(s);
    MESSAGE("slack " << r.worst_slack << " momentum drift " << r.max_momentum_drift << " nl power " << r.max_nonlinear_power);
    CHECK(r.worst_slack < 1e-6);
    CHECK(r.momentum0.norm() < 1e-12);
    CHECK(r.max_momentum_drift < 1e-8);
    CHECK(r.max_nonlinear_power < 1e-9 * s.ledger.energy.front());
    CHECK(s.ledger.energy.back() < s.ledger.energy.front());
}

TEST_CASE("solver configuration errors") {
    auto g = make_shell_grid(6, 0.1, 6);
    ShellSolverOptions opt;
    CHECK_THROWS_AS(init_shell_solver(VecField(g.npts(), Vec3::Zero()), opt, g), Error);
    try {
        init_shell_solver(VecField(g.npts(), Vec3::Zero()), opt, g);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ConfigurationError);
    }
    auto g8 = make_shell_grid(6, 0.1, 8);
    opt.nu = -1.0;
    CHECK_THROWS_AS(init_shell_solver(VecField(g8.npts(), Vec3::Zero()), opt, g8), Error);

    opt.nu = 1.0;
    opt.dt = 1.0;
    std::mt19937_64 rng(2);
    auto s = init_shell_solver(random_slip_solenoidal(g8, rng, 5.0), opt, g8);
    const auto T = s.T;
    try {
        step3d(s);
        FAIL("expected step-rejected");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::StepRejected);
    }
    CHECK(s.steps == 0);
    CHECK(s.T[3].c == T[3].c);
}

TEST_CASE("shell checkpoint round trip") {
    auto g = make_shell_grid(6, 0.1, 8);
    std::mt19937_64 rng(3);
    ShellSolverOptions opt;
    opt.dt = 1e-3;
    auto s = init_shell_solver(random_slip_solenoidal(g, rng, 1.0), opt, g);
    for (int i = 0; i < 3; ++i) step3d(s);
    const std::string path = "shell_checkpoint_test.txt";
    save_checkpoint(s, path);
    auto r = load_shell_checkpoint(path);
    std::remove(path.c_str());
    CHECK(r.steps == 3);
    CHECK(r.grid.same_shape(g));
    // The reload re-applies the stress-free projection, which is the identity up to round-off.
    CHECK(max_diff(shell_velocity(r), shell_velocity(s)) < 1e-13);
}

TEST_CASE("manufactured fields from sphere trajectories") {
    auto g = make_shell_grid(8, 0.1, 8);
    SphereSolverOptions so;
    so.nu = 1.0;
    so.dt = 1e-3;

    // Stationary rotation: the forcing is a pure gradient.
    {
        auto sp = init_sphere_solver(rotation_field(g.base, Vec3(0.0, 0.0, 1.0)), so, 8);
        std::vector<SphereSample> traj;
        for (int k = 0; k < 4; ++k) {
            traj.push_back({sp.t, sphere_velocity(sp)});
            step(sp);
        }
        auto mf = manufacture(traj, so.nu, g);
        for (const auto& f : mf.f) CHECK(l2norm(g, f) < 1e-8);
        CHECK(mf.navier_defect < 1e-10);
    }

    // Decaying mode: the discrete weak form holds and the residual forcing scales like eps^{3/2}.
    std::vector<double> ratios;
    for (double eps : {0.2, 0.1, 0.05}) {
        auto gs = make_shell_grid(8, eps, 8);
        SphCoeffs w(8);
        w(3, 2) = cplx(1.0, 0.5);
        w.enforce_real();
        auto sp = init_sphere_solver_from_vorticity(w, so);
        std::vector<SphereSample> traj;
        for (int k = 0; k < 5; ++k) {
            traj.push_back({sp.t, sphere_velocity(sp)});
            step(sp);
        }
        auto mf = manufacture(traj, so.nu, gs);
        std::mt19937_64 rng(4);
        auto psi = random_shell_solenoidal(gs, 6, 2, RadialScale::Thin, rng);
        const double res = weak_form_residual(mf, 2, psi);
        CHECK(std::abs(res) < 1e-7 * l2norm(gs, psi) * l2norm(gs, mf.u[2]));
        ratios.push_back(l2norm(gs, mf.f[2]) / std::pow(eps, 1.5) / l2norm(gs.base, traj[2].v));
        CHECK(mf.navier_defect < 1e-10);
    }
    const double hi = *std::max_element(ratios.begin(), ratios.end());
    const double lo = *std::min_element(ratios.begin(), ratios.end());
    CHECK(hi / lo < 2.0);

    // Zero trajectory.
    std::vector<SphereSample> zero(3, SphereSample{0.0, VecField(g.nsph(), Vec3::Zero())});
    for (int k = 0; k < 3; ++k) zero[k].t = 0.1 * k;
    auto mz = manufacture(zero, 1.0, g);
    for (const auto& f : mz.f) CHECK(max_abs(f) == 0.0);
    zero.pop_back();
    CHECK_THROWS_AS(manufacture(zero, 1.0, g), Error);
}
