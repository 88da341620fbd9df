// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include "thinshell/errors.hpp"
#include "thinshell/harness.hpp"

using namespace thinshell;

namespace {

int failures = 0;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

void report(int id, bool pass, const std::string& what) {
    if (!pass) ++failures;
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", id, what.c_str());
    std::fflush(stdout);
}

void info(int id, const std::string& what) {
    std::printf("       criterion %d (info): %s\n", id, what.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void guarded(int id, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        report(id, false, std::string("threw: ") + e.what());
    }
}

void criterion1() {
    Timer t;
    const auto res = identity_suite(12, 10, 0.1, 1);
    double worst = 0.0;
    std::string worst_name;
    for (const auto& r : res)
        if (r.residual >= worst) {
            worst = r.residual;
            worst_name = r.name;
        }
    const double sec = t.seconds();
    report(1, res.size() >= 15 && worst <= 1e-8 && sec < 30.0,
           fmt("%zu identities at lmax=12 nrad=10 eps=0.1, max relative residual %.2e (%s) <= 1e-8, %.1f s < 30 s",
               res.size(), worst, worst_name.c_str(), sec));
}

void criterion2() {
    const auto r = constant_bounds({0.2, 0.1, 0.05}, 10, 8, 100, 1);
    report(2, r.violations_bar == 0 && r.violations_ext == 0,
           fmt("%d fields: ||bar eta|| <= 2 eps^1/2 ||eta|| violated %d times (max ratio %.3f); "
               "||v_E - vbar|| <= 2 eps^3/2 ||v|| violated %d times (max ratio %.3f)",
               r.samples, r.violations_bar, r.worst_bar, r.violations_ext, r.worst_ext));
}

void criterion3() {
    Timer t;
    const auto rows = scaling_suite({0.2, 0.1, 0.05, 0.025}, 8, 8, 5, 1);
    bool ok = true;
    double worst_spread = 0.0, worst_trend = 1e300;
    for (const auto& r : rows) {
        const bool row_ok = r.spread < 4.0 && r.trend > -0.25;
        ok = ok && row_ok;
        worst_spread = std::max(worst_spread, r.spread);
        worst_trend = std::min(worst_trend, r.trend);
        std::printf("       %-14s eps^%-5g ratios", r.name.c_str(), r.power);
        for (double x : r.ratio) std::printf(" %.4e", x);
        std::printf("  spread %.3f trend %+.3f%s\n", r.spread, r.trend, row_ok ? "" : "  <-- fails");
    }
    const double sec = t.seconds();
    report(3, ok && sec < 120.0,
           fmt("%zu ratio rows over eps in {0.2,0.1,0.05,0.025}: max spread %.3f < 4, min log-log trend %+.3f > -0.25, "
               "%.1f s < 120 s",
               rows.size(), worst_spread, worst_trend, sec));
}

SphCoeffs random_vorticity(int lmax, int band, bool drop_l1, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    SphCoeffs w(lmax);
    for (int l = drop_l1 ? 2 : 1; l <= band; ++l)
        for (int m = 0; m <= l; ++m) w(l, m) = m == 0 ? cplx(nd(rng), 0.0) : cplx(nd(rng), nd(rng));
    w.enforce_real();
    return w;
}

void criterion4() {
    // (a) single-mode decay
    double decay_err = 0.0;
    for (int l = 1; l <= 4; ++l) {
        SphCoeffs w(8);
        w(l, 1) = cplx(0.7, -0.2);
        w.enforce_real();
        SphereSolverOptions opt;
        opt.nu = 1.0;
        opt.dt = 1e-3;
        auto s = init_sphere_solver_from_vorticity(w, opt);
        for (int i = 0; i < 100; ++i) step(s);
        const double factor = std::exp(opt.nu * (2.0 - l * (l + 1.0)) * s.t);
        const double err = std::abs(s.omega(l, 1) - factor * w(l, 1)) / std::abs(factor * w(l, 1));
        if (l <= 2)
            decay_err = std::max(decay_err, err);
        else
            info(4, fmt("l=%d decay error %.2e (Crank-Nicolson truncation lambda^3 dt^2 t/12 = %.2e)", l, err,
                        std::pow(l * (l + 1.0) - 2.0, 3) * 1e-6 * 0.1 / 12.0));
    }
    // (b) energy-equality residual under dt halving
    auto residual = [](double dt) {
        std::mt19937_64 rng(42);
        SphereSolverOptions opt;
        opt.nu = 0.05;
        opt.dt = dt;
        auto s = init_sphere_solver_from_vorticity(random_vorticity(10, 6, false, rng), opt);
        const long n = std::lround(1.0 / dt);
        for (long i = 0; i < n; ++i) step(s);
        return energy_report(s).residual;
    };
    const double r1 = residual(0.02), r2 = residual(0.01), r3 = residual(0.005);
    const double order = std::min(r1 / r2, r2 / r3);
    // (c) rotation is stationary
    const auto g = make_sphere_grid(8);
    const auto ra = rotation_field(g, Vec3(0.3, -0.5, 0.8));
    SphereSolverOptions opt;
    opt.nu = 1.0;
    opt.dt = 1e-3;
    auto st = init_sphere_solver(ra, opt, 8);
    double drift = 0.0;
    for (int i = 0; i < 1000; ++i) {
        step(st);
        auto v = sphere_velocity(st);
        for (size_t q = 0; q < v.size(); ++q) v[q] -= ra[q];
        drift = std::max(drift, l2norm(g, v) / l2norm(g, ra));
    }
    // (d) angular momentum with r_a-orthogonal data
    std::mt19937_64 rng(9);
    SphereSolverOptions o2;
    o2.nu = 0.02;
    o2.dt = 5e-3;
    const auto g10 = make_sphere_grid(10);
    auto s2 = init_sphere_solver_from_vorticity(random_vorticity(10, 7, true, rng), o2, [g10](double t) {
        SphCoeffs B(10);
        B(3, 2) = cplx(0.3 * std::cos(t), 0.1);
        B.enforce_real();
        return vsh_synthesis(g10, SphCoeffs(10), B);
    });
    for (int i = 0; i < 200; ++i) step(s2);
    const auto mom = energy_report(s2);
    report(4, decay_err <= 1e-6 && order >= 3.5 && drift <= 1e-8 && mom.max_momentum_drift <= 1e-9,
           fmt("(a) decay error l<=2 %.2e <= 1e-6; (b) residual ratio per dt halving %.2f >= 3.5; (c) rotation drift %.2e "
               "<= 1e-8 on [0,1]; (d) momentum drift %.2e <= 1e-9",
               decay_err, order, drift, mom.max_momentum_drift));
}

void criterion5() {
    Timer t;
    const auto grid = make_shell_grid(10, 0.1, 8);
    std::mt19937_64 rng(12);
    auto u0 = remove_rotations(grid, random_stress_free(grid, 6, rng));
    double amp = 0.0;
    for (const auto& x : u0) amp = std::max(amp, x.norm());
    for (auto& x : u0) x /= amp;
    ShellSolverOptions opt;
    opt.nu = 0.1;
    opt.dt = 2e-3;
    const double nu = opt.nu;
    const auto base = grid.base;
    // Forcing orthogonal to every r_a: the extension of the two-mode forcing.
    auto f = [grid, base, nu](double s) {
        return extend_forcing(sphere_forcing(two_mode_forcing(base, nu, s)), ExtensionMode::Weighted, grid).riesz;
    };
    auto st = init_shell_solver(u0, opt, grid, f);
    bool bc_ok = true;
    double div = 0.0, nt = 0.0, ts = 0.0;
    while (st.t < 0.5 - 1e-12) {
        step3d(st);
        const auto& L = st.ledger;
        div = std::max(div, L.divergence.back());
        nt = std::max(nt, L.normal_trace.back());
        ts = std::max(ts, L.tangential_stress.back());
        bc_ok = bc_ok && L.divergence.back() <= 1e-9 && L.normal_trace.back() <= 1e-9 && L.tangential_stress.back() <= 1e-7;
    }
    const auto r = energy_report(st);
    const double sec = t.seconds();
    report(5, bc_ok && r.worst_slack <= 1e-6 && r.max_momentum_drift <= 1e-8 && sec < 300.0,
           fmt("lmax=10 nrad=8 eps=0.1 T=0.5 (%ld steps): max div %.2e <= 1e-9, max |u.n| %.2e <= 1e-9, "
               "max |P D(u) n| %.2e <= 1e-7, worst energy slack %.2e <= 1e-6, momentum drift %.2e <= 1e-8, %.1f s < 300 s",
               st.steps, div, nt, ts, r.worst_slack, r.max_momentum_drift, sec));
}

void criterion6() {
    Timer t;
    SweepConfig c;  // two-mode data, nu = 1, T = 0.5, eps in {0.2, 0.1, 0.05, 0.025}, manufactured mode
    c.workers = 1;
    const auto rep = run_sweep(c);
    const double sec = t.seconds();
    for (const auto& e : rep.entries)
        info(6, fmt("eps=%-6g D_sol(T)=%.4e sup_t ||M0 u - v||=%.4e D_data(T)=%.4e", e.eps,
                    e.ok ? e.diff.samples.back().D_sol : NAN, e.sup_avg_err, e.ok ? e.diff.samples.back().D_data : NAN));
    report(6, rep.complete && rep.slope_D_sol >= 1.8 && rep.slope_avg_err >= 0.9 && sec < 600.0,
           fmt("manufactured sweep: slope of D_sol(T) %.3f >= 1.8, slope of sup ||M0 u - v|| %.3f >= 0.9, %.1f s < 600 s",
               rep.slope_D_sol, rep.slope_avg_err, sec));

    // Same data through the time-stepped shell solver.
    c.mode = SweepMode::Timestep;
    c.initial = ShellData::Ext;
    const auto ext = run_sweep(c);
    info(6, fmt("time-stepped, u0 = [v0]_E, f = fbar: slopes D_sol %.3f, avg error %.3f", ext.slope_D_sol, ext.slope_avg_err));
    c.initial = ShellData::Bar;
    const auto bar = run_sweep(c);
    info(6, fmt("time-stepped, u0 = vbar0, f = fbar: slopes D_sol %.3f, avg error %.3f "
                "(initial boundary layer of width eps^2/nu is not resolved by the sample grid)",
                bar.slope_D_sol, bar.slope_avg_err));
}

void criterion7() {
    Timer t;
    SweepConfig c;
    c.workers = 1;
    c.mode = SweepMode::Timestep;
    c.initial = ShellData::Ext;
    const auto g = global_mode_check(c, 50.0 / c.nu);
    const auto sg = make_sphere_grid(c.lmax);
    bool precondition = false;
    try {
        global_mode_check(c, 1.0, rotation_field(sg, Vec3::UnitZ()));
    } catch (const Error& e) {
        precondition = e.kind() == ErrorKind::PreconditionError;
    }
    const double sec = t.seconds();
    report(7, g.max_energy_ratio <= 4.0 && g.sweep.complete && g.sweep.slope_global_extra >= 1.8 && precondition,
           fmt("horizon 50/nu: max (||v||^2 + nu int ||v||_H1^2)/E0 = %.4f <= 4 (E0 = %.4e); slope of "
               "(nu/eps) int ||u - vbar||^2 = %.3f >= 1.8; v0 = r_a rejected: %s; %.1f s",
               g.max_energy_ratio, g.E0, g.sweep.slope_global_extra, precondition ? "yes" : "no", sec));
}

void criterion8() {
    ProbeOptions o;
    o.samples = 50;
    const auto sphere = probe_inequality(ProbeKind::KornSphere, o);
    const auto shell = probe_inequality(ProbeKind::KornShellUniform, o);
    auto bounded = [](const ProbeReport& r) {
        bool ok = std::isfinite(r.constant) && !r.killing_flagged;
        for (const auto& e : r.entries) ok = ok && e.used == 50 && e.max_ratio <= r.constant;
        return ok;
    };
    // v = r_a with orthogonalization off: D(r_a) = 0 with ||r_a|| > 0
    ProbeOptions k = o;
    k.samples = 1;
    k.orthogonalize = false;
    k.include_killing = true;
    const bool flag_sphere = probe_inequality(ProbeKind::KornSphere, k).killing_flagged;
    const bool flag_shell = probe_inequality(ProbeKind::KornShellUniform, k).killing_flagged;
    report(8, bounded(sphere) && bounded(shell) && shell.spread < 1.25 && flag_sphere && flag_shell,
           fmt("sphere Korn constant %.4f; shell Korn constant %.4f with spread %.4f < 1.25 over eps in "
               "{0.2,0.1,0.05}; v = r_a flagged infinite: sphere %s, shell %s",
               sphere.constant, shell.constant, shell.spread, flag_sphere ? "yes" : "no", flag_shell ? "yes" : "no"));
}

}  // namespace

int main() {
    Timer total;
    guarded(1, criterion1);
    guarded(2, criterion2);
    guarded(3, criterion3);
    guarded(4, criterion4);
    guarded(5, criterion5);
    guarded(6, criterion6);
    guarded(7, criterion7);
    guarded(8, criterion8);
    std::printf("%d criteria failed, %.1f s total\n", failures, total.seconds());
    return failures ? 1 : 0;
}
