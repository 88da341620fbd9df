#include "thinshell/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "thinshell/errors.hpp"

namespace thinshell {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double cheb(int k, double x) { return std::cos(k * std::acos(std::clamp(x, -1.0, 1.0))); }

double mapped(const ShellGrid& s, double r) { return 2.0 * (r - 1.0) / s.eps - 1.0; }

// Spherical-harmonic analysis of every layer: radial component R and tangential potentials A, B.
void analyze_layers(const ShellGrid& s, const VecField& u, std::vector<SphCoeffs>& R, std::vector<SphCoeffs>& A,
                    std::vector<SphCoeffs>& B) {
    const int ns = s.nsph();
    R.assign(s.nrad, SphCoeffs(s.base.lmax));
    A = R;
    B = R;
    for (int j = 0; j < s.nrad; ++j) {
        VecField layer(u.begin() + j * ns, u.begin() + (j + 1) * ns);
        ScalarField ur(ns);
        for (int i = 0; i < ns; ++i) ur[i] = layer[i].dot(s.base.pos[i]);
        vsh_analysis(s.base, layer, A[j], B[j]);
        R[j] = sht_forward(s.base, ur);
    }
}

Eigen::VectorXd llt_solve(const Eigen::LLT<MatrixXd>& llt, const VectorXd& b) { return llt.solve(b); }

}  // namespace

// ---- dual norms ---------------------------------------------------------------

double dual_norm_sphere(const SphereGrid& g, const VecField& riesz) {
    if (riesz.size() != static_cast<size_t>(g.npts())) throw Error(ErrorKind::ShapeError, "dual norm: field is not on the grid");
    SphCoeffs A, B;
    vsh_analysis(g, riesz, A, B);
    double s = 0.0;
    for (int l = 1; l <= g.lmax; ++l) {
        const double L = l * (l + 1.0);
        // H1 form of the unit solenoidal mode n x grad Y_l0 / sqrt(L); rotation invariance makes it m-independent.
        SphCoeffs Bl(g.lmax);
        Bl(l, 0) = 1.0 / std::sqrt(L);
        auto v = vsh_synthesis(g, SphCoeffs(g.lmax), Bl);
        auto G = tangential_gradient(g, v);
        const double lam = inner(g, G, G) / inner(g, v, v);
        double band = 0.0;
        for (int m = -l; m <= l; ++m) band += std::norm(B(l, m));
        s += L * band / (1.0 + lam);
    }
    return std::sqrt(s);
}

ShellDualNorm::ShellDualNorm(const ShellGrid& s) : grid_(s) {
    const int n = s.nrad, lmax = s.base.lmax;
    if (n < 4) throw Error(ErrorKind::ConfigurationError, "dual norm needs nrad >= 4");
    fine_ = make_shell_grid(lmax, s.eps, 2 * n + 4);
    const int nq = fine_.nrad;
    interp_.resize(nq, n);
    MatrixXd C(nq, n);
    for (int k = 0; k < nq; ++k)
        for (int m = 0; m < n; ++m) C(k, m) = cheb(m, mapped(s, fine_.rnodes[k]));
    interp_ = C * s.to_cheb;
    tor_.resize(nq, n);
    pol_.resize(nq, n - 2);
    for (int k = 0; k < nq; ++k) {
        const double x = mapped(s, fine_.rnodes[k]);
        for (int i = 0; i < n; ++i) tor_(k, i) = cheb(i, x);
        for (int i = 0; i < n - 2; ++i) pol_(k, i) = (1.0 - x * x) * cheb(i, x);
    }
    VectorXd rf(nq);
    for (int k = 0; k < nq; ++k) rf[k] = fine_.rnodes[k];
    pol_a_ = 2.0 * pol_ + rf.asDiagonal() * (fine_.Dr * pol_);

    mass_.assign(lmax + 1, MatrixXd());
    h1_.assign(lmax + 1, MatrixXd());
    h1_llt_.resize(lmax + 1);
    const int nb = n + (n - 2);
    for (int l = 1; l <= lmax; ++l) {
        std::vector<VecField> u(nb);
        std::vector<MatField> G(nb);
        for (int b = 0; b < nb; ++b) {
            std::vector<SphCoeffs> T(nq, SphCoeffs(lmax)), P(nq, SphCoeffs(lmax));
            for (int k = 0; k < nq; ++k) {
                if (b < n)
                    T[k](l, 0) = tor_(k, b);
                else
                    P[k](l, 0) = fine_.rnodes[k] * pol_(k, b - n);
            }
            u[b] = tp_synthesis(fine_, T, P);
            G[b] = full_gradient_shell(fine_, u[b]);
        }
        MatrixXd M(nb, nb), H(nb, nb);
        for (int a = 0; a < nb; ++a)
            for (int b = a; b < nb; ++b) {
                M(a, b) = M(b, a) = inner(fine_, u[a], u[b]);
                H(a, b) = H(b, a) = M(a, b) + inner(fine_, G[a], G[b]);
            }
        mass_[l] = M;
        h1_[l] = H;
        h1_llt_[l].compute(H);
        if (h1_llt_[l].info() != Eigen::Success)
            throw Error(ErrorKind::ConfigurationError, "dual norm Gram matrix is not positive definite");
    }
}

double ShellDualNorm::operator()(const VecField& riesz) const {
    const auto& s = grid_;
    if (riesz.size() != static_cast<size_t>(s.npts())) throw Error(ErrorKind::ShapeError, "dual norm: field is not on the shell grid");
    const int n = s.nrad, lmax = s.base.lmax, nq = fine_.nrad;
    auto f = resample_radial(s, fine_, riesz);
    std::vector<SphCoeffs> R, A, B;
    analyze_layers(fine_, f, R, A, B);
    VectorXd w2(nq);
    for (int k = 0; k < nq; ++k) w2[k] = fine_.rweights[k] * fine_.rnodes[k] * fine_.rnodes[k];
    double total = 0.0;
    const int nb = n + (n - 2);
    for (int l = 1; l <= lmax; ++l) {
        const double L = l * (l + 1.0);
        for (int m = -l; m <= l; ++m) {
            Eigen::VectorXcd rc(nq), ac(nq), bc(nq);
            for (int k = 0; k < nq; ++k) {
                rc[k] = R[k](l, m);
                ac[k] = A[k](l, m);
                bc[k] = B[k](l, m);
            }
            Eigen::VectorXcd F(nb);
            F.head(n) = -L * tor_.transpose().cast<cplx>() * (w2.cast<cplx>().asDiagonal() * bc);
            F.tail(n - 2) = L * pol_.transpose().cast<cplx>() * (w2.cast<cplx>().asDiagonal() * rc) +
                            L * pol_a_.transpose().cast<cplx>() * (w2.cast<cplx>().asDiagonal() * ac);
            const VectorXd xr = llt_solve(h1_llt_[l], F.real()), xi = llt_solve(h1_llt_[l], F.imag());
            total += F.real().dot(xr) + F.imag().dot(xi);
        }
    }
    return std::sqrt(std::max(0.0, total));
}

double dual_norm_surrogate(const DualForcing& f, const SphereGrid& g) {
    if (f.domain != DualForcing::Domain::Sphere) throw Error(ErrorKind::InvalidParameter, "sphere dual norm of a shell functional");
    if (f.riesz.empty()) return 0.0;
    return dual_norm_sphere(g, f.riesz);
}

double dual_norm_surrogate(const DualForcing& f, const ShellDualNorm& shell) {
    if (f.domain != DualForcing::Domain::Shell) throw Error(ErrorKind::InvalidParameter, "shell dual norm of a sphere functional");
    if (f.riesz.empty()) return 0.0;
    return shell(f.riesz);
}

// ---- difference functionals -------------------------------------------------------

DiffFunctionals compute_diff(const ShellTrajectory& U, const SphereTrajectory& V, double nu) {
    if (!(nu > 0.0)) throw Error(ErrorKind::InvalidParameter, "viscosity must be positive");
    const auto& s = U.grid;
    const auto& g = V.grid;
    if (s.base.lmax != g.lmax || s.base.nlat != g.nlat || s.base.nlon != g.nlon)
        throw Error(ErrorKind::ShapeError, "shell angular grid differs from the sphere grid");
    const size_t K = U.t.size();
    if (K == 0 || V.t.size() != K || U.u.size() != K || V.v.size() != K)
        throw Error(ErrorKind::ShapeError, "trajectories must share their time samples");
    for (size_t k = 0; k < K; ++k)
        if (std::abs(U.t[k] - V.t[k]) > 1e-12 * std::max(1.0, std::abs(U.t[k])))
            throw Error(ErrorKind::ShapeError, "trajectories must share their time samples");
    if (!U.f.empty() && U.f.size() != K) throw Error(ErrorKind::ShapeError, "shell forcing samples");
    if (!V.f.empty() && V.f.size() != K) throw Error(ErrorKind::ShapeError, "sphere forcing samples");
    for (size_t k = 0; k < K; ++k) {
        if (U.u[k].size() != static_cast<size_t>(s.npts())) throw Error(ErrorKind::ShapeError, "shell sample size");
        if (V.v[k].size() != static_cast<size_t>(g.npts())) throw Error(ErrorKind::ShapeError, "sphere sample size");
    }
    const double eps = s.eps;
    const int ns = s.nsph();
    const bool forced = !U.f.empty() || !V.f.empty();
    std::unique_ptr<ShellDualNorm> dual;
    if (forced) dual = std::make_unique<ShellDualNorm>(s);

    std::vector<double> vl2(K), vh1(K), fdual(K, 0.0), hdual(K, 0.0);
    DiffFunctionals out;
    out.eps = eps;
    out.nu = nu;
    out.samples.resize(K);
    double data0 = 0.0;
    for (size_t k = 0; k < K; ++k) {
        auto& d = out.samples[k];
        d.t = U.t[k];
        const auto& u = U.u[k];
        const auto& v = V.v[k];
        auto vbar = extend(s, v, ExtensionMode::Constant);
        auto vE = extend(s, v, ExtensionMode::Weighted);
        VecField diff(s.npts()), w(s.npts()), a(s.npts());
        for (int q = 0; q < s.npts(); ++q) {
            diff[q] = u[q] - vbar[q];
            w[q] = u[q] - vE[q];
        }
        d.sol_l2 = inner(s, diff, diff) / eps;
        if (k == 0) data0 = d.sol_l2;
        auto Gu = full_gradient_shell(s, u);
        auto Gv = tangential_gradient(g, v);
        MatField A(s.npts());
        for (int j = 0; j < s.nrad; ++j)
            for (int i = 0; i < ns; ++i) {
                const int q = s.idx(j, i);
                const Vec3& n = g.pos[i];
                const Mat3 P = Mat3::Identity() - n * n.transpose();
                A[q] = P * Gu[q] - Gv[i];
                a[q] = Gu[q].transpose() * n - vbar[q];
            }
        d.grad_tan = inner(s, A, A);
        d.grad_rad = inner(s, a, a);
        auto Gw = full_gradient_shell(s, w);
        auto GvE = full_gradient_shell(s, vE);
        const double gw = inner(s, Gw, Gw), scale = inner(s, Gu, Gu) + inner(s, GvE, GvE);
        d.split_residual = std::abs(gw - d.grad_tan - d.grad_rad) / (scale > 0.0 ? scale : 1.0);
        VecField avg = average(s, u, 0);
        for (int i = 0; i < ns; ++i) avg[i] -= v[i];
        d.avg_err = l2norm(g, avg);
        vl2[k] = inner(g, v, v);
        vh1[k] = std::pow(h1norm(g, v), 2);
        d.eta_v = 2.0 * nu * l2norm(g, surface_strain(g, v)) + std::sqrt(vl2[k] * vh1[k]);
        if (!V.f.empty()) fdual[k] = std::pow(dual_norm_sphere(g, V.f[k]), 2);
        if (forced) {
            VecField h = U.f.empty() ? VecField(s.npts(), Vec3::Zero()) : U.f[k];
            if (!V.f.empty()) {
                auto fbar = extend_forcing(sphere_forcing(V.f[k]), ExtensionMode::Constant, s).riesz;
                for (int q = 0; q < s.npts(); ++q) h[q] -= fbar[q];
            }
            hdual[k] = std::pow((*dual)(h), 2);
        }
    }

    double int_tan = 0.0, int_rad = 0.0, int_h = 0.0, int_F = 0.0, int_G = 0.0, int_sol = 0.0, int_f = 0.0, int_h1 = 0.0;
    double vmax = 0.0;
    for (size_t k = 0; k < K; ++k) {
        auto& d = out.samples[k];
        if (k > 0) {
            const double h = U.t[k] - U.t[k - 1];
            const auto& p = out.samples[k - 1];
            int_tan += 0.5 * h * (d.grad_tan + p.grad_tan);
            int_rad += 0.5 * h * (d.grad_rad + p.grad_rad);
            int_h += 0.5 * h * (hdual[k] + hdual[k - 1]);
            int_F += 0.5 * h * (2.0 * nu + (vl2[k] * vh1[k] + vl2[k - 1] * vh1[k - 1]) / std::pow(nu, 3));
            int_G += 0.5 * h * (fdual[k] + fdual[k - 1] + (nu * nu + vl2[k]) * vh1[k] + (nu * nu + vl2[k - 1]) * vh1[k - 1]);
            int_sol += 0.5 * h * (d.sol_l2 + p.sol_l2);
            int_f += 0.5 * h * (fdual[k] + fdual[k - 1]);
            int_h1 += 0.5 * h * (vh1[k] + vh1[k - 1]);
        }
        vmax = std::max(vmax, std::sqrt(vl2[k]));
        d.grad_tan_int = nu / eps * int_tan;
        d.grad_rad_int = nu / eps * int_rad;
        d.D_data = data0 + int_h / (eps * nu);
        d.D_sol = d.sol_l2 + d.grad_tan_int + d.grad_rad_int;
        d.F_v = std::exp(int_F);
        d.G_v = vl2[0] + vl2[k] + int_G / nu;
        d.global_extra = nu * int_sol;
    }
    out.E0 = vl2[0] + int_f / nu;
    out.F0 = std::exp(out.E0 * out.E0 / (nu * nu));
    out.G0 = out.E0 + out.E0 * out.E0 / (nu * nu);
    out.sigma = std::sqrt(vmax) * std::pow(int_h1, 0.25);
    return out;
}

// ---- presets ---------------------------------------------------------------------

SweepMode parse_sweep_mode(const std::string& s) {
    if (s == "manufactured") return SweepMode::Manufactured;
    if (s == "timestep") return SweepMode::Timestep;
    throw Error(ErrorKind::InvalidParameter, "unknown mode '" + s + "' (manufactured | timestep)");
}

std::string to_string(SweepMode m) { return m == SweepMode::Manufactured ? "manufactured" : "timestep"; }

DataPreset parse_data_preset(const std::string& s) {
    if (s == "two-mode") return DataPreset::TwoMode;
    if (s == "random") return DataPreset::Random;
    throw Error(ErrorKind::InvalidParameter, "unknown data preset '" + s + "' (two-mode | random)");
}

std::string to_string(DataPreset p) { return p == DataPreset::TwoMode ? "two-mode" : "random"; }

VecField two_mode_velocity(const SphereGrid& g, double nu, double t) {
    if (g.lmax < 3) throw Error(ErrorKind::InvalidParameter, "two-mode data needs lmax >= 3");
    SphCoeffs B(g.lmax);
    B(2, 1) = std::exp(nu * (2.0 - 6.0) * t) * cplx(0.6, -0.3);
    B(3, 2) = std::exp(nu * (2.0 - 12.0) * t) * cplx(0.4, 0.2);
    B.enforce_real();
    return vsh_synthesis(g, SphCoeffs(g.lmax), B);
}

VecField two_mode_forcing(const SphereGrid& g, double nu, double t) {
    auto v = two_mode_velocity(g, nu, t);
    return leray_project_sphere(g, covariant_derivative(g, v, v));
}

namespace {

int sample_count(const SweepConfig& c) {
    const long steps = std::lround(c.t_final / c.dt);
    if (steps < 1 || std::abs(steps * c.dt - c.t_final) > 1e-9 * c.t_final)
        throw Error(ErrorKind::ConfigurationError, "t_final must be a positive multiple of dt");
    if (steps % c.sample_every != 0) throw Error(ErrorKind::ConfigurationError, "sample_every must divide the step count");
    return static_cast<int>(steps / c.sample_every) + 1;
}

void validate(const SweepConfig& c) {
    if (c.lmax < 3) throw Error(ErrorKind::ConfigurationError, "sweep needs lmax >= 3");
    if (c.nrad < 8) throw Error(ErrorKind::ConfigurationError, "sweep needs nrad >= 8");
    if (!(c.nu > 0.0) || !(c.dt > 0.0) || !(c.t_final > 0.0) || c.sample_every < 1)
        throw Error(ErrorKind::ConfigurationError, "nu, dt, t_final and sample_every must be positive");
    for (double e : c.eps_list)
        if (!(e >= 1.0 / 256.0 && e < 1.0)) throw Error(ErrorKind::ConfigurationError, "eps must lie in [1/256, 1)");
    sample_count(c);
}

}  // namespace

SphereTrajectory sphere_reference(const SweepConfig& c) {
    validate(c);
    SphereTrajectory v;
    v.grid = make_sphere_grid(c.lmax);
    const int K = sample_count(c);
    const double h = c.dt * c.sample_every;
    if (c.preset == DataPreset::TwoMode) {
        for (int k = 0; k < K; ++k) {
            const double t = k * h;
            v.t.push_back(t);
            v.v.push_back(two_mode_velocity(v.grid, c.nu, t));
            v.f.push_back(two_mode_forcing(v.grid, c.nu, t));
        }
        return v;
    }
    std::mt19937_64 rng(c.seed);
    auto v0 = remove_rotations(v.grid, random_solenoidal(v.grid, std::min(6, c.lmax), rng));
    const double nv = l2norm(v.grid, v0);
    for (auto& x : v0) x /= nv;
    SphereSolverOptions opt;
    opt.nu = c.nu;
    opt.dt = c.dt;
    auto st = init_sphere_solver(v0, opt, c.lmax);
    v.t.push_back(0.0);
    v.v.push_back(sphere_velocity(st));
    for (int k = 1; k < K; ++k) {
        for (int i = 0; i < c.sample_every; ++i) step(st);
        v.t.push_back(k * h);
        v.v.push_back(sphere_velocity(st));
    }
    return v;
}

SweepEntry run_sweep_entry(const SweepConfig& c, const SphereTrajectory& v, double eps) {
    SweepEntry e;
    e.eps = eps;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        validate(c);
        const auto s = make_shell_grid(c.lmax, eps, c.nrad);
        ShellTrajectory U;
        U.grid = s;
        U.t = v.t;
        if (c.mode == SweepMode::Manufactured) {
            std::vector<SphereSample> traj;
            for (size_t k = 0; k < v.t.size(); ++k) traj.push_back({v.t[k], v.v[k]});
            auto mf = manufacture(traj, c.nu, s);
            U.u = std::move(mf.u);
            U.f = std::move(mf.f);
        } else {
            const auto imode = c.initial == ShellData::Bar ? ExtensionMode::Constant : ExtensionMode::Weighted;
            const auto fmode = c.forcing == ShellData::Bar ? ExtensionMode::Constant : ExtensionMode::Weighted;
            ShellForcingFn forcing;
            if (c.preset == DataPreset::TwoMode) {
                const SphereGrid g = v.grid;
                const double nu = c.nu;
                forcing = [g, nu, fmode, s](double t) {
                    return extend_forcing(sphere_forcing(two_mode_forcing(g, nu, t)), fmode, s).riesz;
                };
            }
            ShellSolverOptions opt;
            opt.nu = c.nu;
            opt.dt = c.dt;
            opt.euler_steps = c.euler_steps;
            auto st = init_shell_solver(extend(s, v.v[0], imode), opt, s, forcing);
            U.u.push_back(shell_velocity(st));
            for (size_t k = 1; k < v.t.size(); ++k) {
                for (int i = 0; i < c.sample_every; ++i) step3d(st);
                U.u.push_back(shell_velocity(st));
            }
            e.steps = st.steps;
            if (forcing)
                for (double t : v.t) U.f.push_back(forcing(t));
        }
        e.diff = compute_diff(U, v, c.nu);
        for (const auto& d : e.diff.samples) {
            e.sup_avg_err = std::max(e.sup_avg_err, d.avg_err);
            const double rhs1 = d.F_v * (d.D_data + eps * eps * d.G_v);
            const double rhs3 = e.diff.F0 * (d.D_data + eps * eps * e.diff.G0);
            if (rhs1 > 0.0) e.c1 = std::max(e.c1, d.D_sol / rhs1);
            if (rhs3 > 0.0) e.c3 = std::max(e.c3, (d.D_sol + d.global_extra) / rhs3);
        }
        e.ok = true;
    } catch (const std::exception& ex) {
        e.ok = false;
        e.error = ex.what();
    }
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return e;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3) throw Error(ErrorKind::ConfigurationError, "slope fit needs at least three points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double n = static_cast<double>(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw Error(ErrorKind::DataError, "slope fit needs positive data");
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

SweepReport run_sweep(const SweepConfig& c) {
    if (c.eps_list.size() < 3) throw Error(ErrorKind::ConfigurationError, "a sweep needs at least three eps values");
    validate(c);
    SweepReport rep;
    rep.config = c;
    const auto v = sphere_reference(c);
    const size_t workers = c.workers > 0 ? c.workers : std::max(1u, std::thread::hardware_concurrency());
    rep.entries.resize(c.eps_list.size());
    for (size_t b = 0; b < c.eps_list.size(); b += workers) {
        std::vector<std::future<SweepEntry>> jobs;
        for (size_t i = b; i < std::min(c.eps_list.size(), b + workers); ++i)
            jobs.push_back(std::async(std::launch::async, [&c, &v, i] { return run_sweep_entry(c, v, c.eps_list[i]); }));
        for (size_t i = 0; i < jobs.size(); ++i) rep.entries[b + i] = jobs[i].get();
    }
    std::vector<double> eps, dsol, avg, extra;
    rep.complete = true;
    for (const auto& e : rep.entries) {
        if (!e.ok) {
            rep.complete = false;
            continue;
        }
        eps.push_back(e.eps);
        dsol.push_back(e.diff.samples.back().D_sol);
        avg.push_back(e.sup_avg_err);
        extra.push_back(e.diff.samples.back().global_extra);
        rep.c1 = std::max(rep.c1, e.c1);
        rep.c3 = std::max(rep.c3, e.c3);
    }
    const double nan = std::nan("");
    auto fit = [&](const std::vector<double>& y) {
        try {
            return eps.size() >= 3 ? loglog_slope(eps, y) : nan;
        } catch (const Error&) {
            return nan;
        }
    };
    rep.slope_D_sol = fit(dsol);
    rep.slope_avg_err = fit(avg);
    rep.slope_global_extra = fit(extra);
    return rep;
}

namespace {

// max_a |(x, r_a)| / (scale ||r_a||) over the sampled data, scale = largest data norm
double orthogonality_defect(const SphereGrid& g, const std::vector<VecField>& xs) {
    double scale = 0.0;
    for (const auto& x : xs) scale = std::max(scale, l2norm(g, x));
    if (scale == 0.0) return 0.0;
    double worst = 0.0;
    for (int a = 0; a < 3; ++a) {
        auto r = rotation_field(g, Vec3::Unit(a));
        for (const auto& x : xs) worst = std::max(worst, std::abs(inner(g, x, r)) / (scale * l2norm(g, r)));
    }
    return worst;
}

GlobalReport sphere_global(const SweepConfig& c, double horizon, const VecField& v0, bool forced) {
    if (!(horizon > 0.0)) throw Error(ErrorKind::ConfigurationError, "horizon must be positive");
    const auto g = make_sphere_grid(c.lmax);
    GlobalReport rep;
    rep.horizon = horizon;
    std::vector<VecField> data{v0};
    SphereForcingFn f;
    if (forced) {
        const double nu = c.nu;
        f = [g, nu](double t) { return two_mode_forcing(g, nu, t); };
        for (double t : {0.0, 0.25 * horizon, horizon}) data.push_back(f(t));
    }
    rep.max_orthogonality = orthogonality_defect(g, data);
    if (rep.max_orthogonality > 1e-10) {
        std::ostringstream msg;
        msg << "data are not orthogonal to the rotation fields (defect " << rep.max_orthogonality << ")";
        throw Error(ErrorKind::PreconditionError, msg.str());
    }
    SphereSolverOptions opt;
    opt.nu = c.nu;
    opt.dt = c.dt * c.sample_every;
    auto st = init_sphere_solver(v0, opt, c.lmax, f);
    const long n = std::lround(horizon / opt.dt);
    std::vector<double> t{0.0}, e{inner(g, v0, v0)}, h1{std::pow(h1norm(g, sphere_velocity(st)), 2)};
    std::vector<double> fd{forced ? std::pow(dual_norm_sphere(g, f(0.0)), 2) : 0.0};
    for (long i = 0; i < n; ++i) {
        step(st);
        auto v = sphere_velocity(st);
        t.push_back(st.t);
        e.push_back(inner(g, v, v));
        h1.push_back(std::pow(h1norm(g, v), 2));
        fd.push_back(forced ? std::pow(dual_norm_sphere(g, f(st.t)), 2) : 0.0);
    }
    double intf = 0.0;
    for (size_t k = 1; k < t.size(); ++k) intf += 0.5 * (t[k] - t[k - 1]) * (fd[k] + fd[k - 1]);
    rep.E0 = e[0] + intf / c.nu;
    double inth = 0.0;
    for (size_t k = 0; k < t.size(); ++k) {
        if (k > 0) inth += 0.5 * (t[k] - t[k - 1]) * (h1[k] + h1[k - 1]);
        if (rep.E0 > 0.0) rep.max_energy_ratio = std::max(rep.max_energy_ratio, (e[k] + c.nu * inth) / rep.E0);
    }
    return rep;
}

}  // namespace

GlobalReport global_mode_check(const SweepConfig& c, double horizon) {
    validate(c);
    if (c.preset != DataPreset::TwoMode) throw Error(ErrorKind::ConfigurationError, "global mode uses the two-mode preset");
    const auto g = make_sphere_grid(c.lmax);
    auto rep = sphere_global(c, horizon, two_mode_velocity(g, c.nu, 0.0), true);
    rep.sweep = run_sweep(c);
    return rep;
}

GlobalReport global_mode_check(const SweepConfig& c, double horizon, const VecField& v0) {
    validate(c);
    return sphere_global(c, horizon, v0, false);
}

// ---- output ----------------------------------------------------------------------

namespace {

std::string num(double x) {
    if (std::isnan(x)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

nlohmann::json json_num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

}  // namespace

std::string sweep_json(const SweepReport& r) {
    nlohmann::json j;
    j["schema"] = "thinshell-sweep";
    j["schema_version"] = 1;
    const auto& c = r.config;
    j["config"] = {{"eps_list", c.eps_list}, {"lmax", c.lmax},          {"nrad", c.nrad},
                   {"nu", c.nu},             {"dt", c.dt},              {"t_final", c.t_final},
                   {"sample_every", c.sample_every}, {"mode", to_string(c.mode)}, {"preset", to_string(c.preset)},
                   {"initial", c.initial == ShellData::Bar ? "bar" : "ext"},
                   {"forcing", c.forcing == ShellData::Bar ? "bar" : "ext"},     {"seed", c.seed}};
    j["slope_D_sol"] = json_num(r.slope_D_sol);
    j["slope_avg_err"] = json_num(r.slope_avg_err);
    j["slope_global_extra"] = json_num(r.slope_global_extra);
    j["C1_fitted"] = json_num(r.c1);
    j["C3_fitted"] = json_num(r.c3);
    j["complete"] = r.complete;
    j["entries"] = nlohmann::json::array();
    for (const auto& e : r.entries) {
        nlohmann::json je{{"eps", e.eps}, {"ok", e.ok}, {"error", e.error}, {"steps", e.steps},
                          {"sup_avg_err", json_num(e.sup_avg_err)}, {"C1", json_num(e.c1)}, {"C3", json_num(e.c3)},
                          {"E0", json_num(e.diff.E0)}, {"F0", json_num(e.diff.F0)}, {"G0", json_num(e.diff.G0)},
                          {"sigma", json_num(e.diff.sigma)}};
        je["samples"] = nlohmann::json::array();
        for (const auto& d : e.diff.samples)
            je["samples"].push_back({{"t", d.t},
                                     {"D_data", json_num(d.D_data)},
                                     {"D_sol", json_num(d.D_sol)},
                                     {"sol_l2", json_num(d.sol_l2)},
                                     {"Dsol_grad_tan", json_num(d.grad_tan_int)},
                                     {"Dsol_grad_rad", json_num(d.grad_rad_int)},
                                     {"split_residual", json_num(d.split_residual)},
                                     {"F_v", json_num(d.F_v)},
                                     {"G_v", json_num(d.G_v)},
                                     {"eta_v", json_num(d.eta_v)},
                                     {"avg_err", json_num(d.avg_err)},
                                     {"global_extra", json_num(d.global_extra)}});
        j["entries"].push_back(je);
    }
    return j.dump(2) + "\n";
}

std::string sweep_csv(const SweepReport& r) {
    std::ostringstream out;
    out << "eps,t_final,D_data,D_sol,Dsol_grad_tan,Dsol_grad_rad,F_v,G_v,sup_avg_err,global_extra,C1,"
           "slope_D_sol,slope_avg_err,slope_global_extra,ok,error\r\n";
    for (const auto& e : r.entries) {
        DiffSample d;
        if (!e.diff.samples.empty()) d = e.diff.samples.back();
        out << num(e.eps) << ',' << num(d.t) << ',' << num(d.D_data) << ',' << num(d.D_sol) << ',' << num(d.grad_tan_int)
            << ',' << num(d.grad_rad_int) << ',' << num(d.F_v) << ',' << num(d.G_v) << ',' << num(e.sup_avg_err) << ','
            << num(d.global_extra) << ',' << num(e.c1) << ',' << num(r.slope_D_sol) << ',' << num(r.slope_avg_err) << ','
            << num(r.slope_global_extra) << ',' << (e.ok ? "true" : "false") << ',' << csv_field(e.error) << "\r\n";
    }
    return out.str();
}

std::string sweep_rate_table(const SweepReport& r) {
    std::ostringstream out;
    out << "# eps t D_data D_sol grad_tan_int grad_rad_int avg_err\n";
    for (const auto& e : r.entries) {
        for (const auto& d : e.diff.samples)
            out << num(e.eps) << ' ' << num(d.t) << ' ' << num(d.D_data) << ' ' << num(d.D_sol) << ' '
                << num(d.grad_tan_int) << ' ' << num(d.grad_rad_int) << ' ' << num(d.avg_err) << '\n';
        out << "\n\n";
    }
    return out.str();
}

}  // namespace thinshell
