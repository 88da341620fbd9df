#include "thinshell/sphere_ns.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "thinshell/errors.hpp"

namespace thinshell {

namespace {

void validate(const SphereSolverOptions& opt) {
    if (!(opt.nu > 0.0)) throw Error(ErrorKind::InvalidParameter, "viscosity must be positive");
    if (!(opt.dt > 0.0)) throw Error(ErrorKind::InvalidParameter, "time step must be positive");
}

SphCoeffs psi_from_omega(const SphCoeffs& omega) {
    SphCoeffs psi(omega.lmax);
    for (int l = 1; l <= omega.lmax; ++l)
        for (int m = -l; m <= l; ++m) psi(l, m) = -omega(l, m) / (l * (l + 1.0));
    return psi;
}

VecField forcing_at(const SolverState2D& s, double t) {
    if (!s.forcing) return {};
    auto f = s.forcing(t);
    if (f.size() != static_cast<size_t>(s.grid.npts())) throw Error(ErrorKind::ShapeError, "forcing has wrong size");
    return f;
}

double courant(const SphereGrid& g, const VecField& v, double dt) {
    double vmax = 0.0;
    for (const auto& x : v) vmax = std::max(vmax, x.norm());
    return dt * vmax * g.lmax;
}

// -v . grad omega + curl f in spectral space; also returns Re sum conj(psi) J for the power diagnostic.
SphCoeffs explicit_term(const SolverState2D& s, const VecField& v, const VecField& f, double& nl_power) {
    const auto& g = s.grid;
    SphCoeffs out(g.lmax);
    nl_power = 0.0;
    if (s.opt.advection) {
        auto gw = vsh_synthesis(g, s.omega, SphCoeffs(g.lmax));
        ScalarField adv(g.npts());
        for (int i = 0; i < g.npts(); ++i) adv[i] = v[i].dot(gw[i]);
        auto J = sht_forward(g, adv);
        for (size_t q = 0; q < J.c.size(); ++q) {
            out.c[q] = -J.c[q];
            nl_power += (std::conj(s.psi.c[q]) * J.c[q]).real();
        }
    }
    if (!f.empty()) {
        SphCoeffs A, B;
        vsh_analysis(g, f, A, B);
        for (int l = 1; l <= g.lmax; ++l)
            for (int m = -l; m <= l; ++m) out(l, m) -= double(l) * (l + 1) * B(l, m);
    }
    out(0, 0) = 0.0;
    return out;
}

struct Sample {
    double energy, diss_rate, power;
    Vec3 momentum;
};

Sample sample(const SolverState2D& s, const VecField& v, const VecField& f) {
    const auto& g = s.grid;
    Sample out;
    out.energy = inner(g, v, v);
    auto D = surface_strain(g, v);
    out.diss_rate = inner(g, D, D);
    out.power = f.empty() ? 0.0 : inner(g, f, v);
    for (int a = 0; a < 3; ++a) out.momentum(a) = inner(g, v, rotation_field(g, Vec3::Unit(a)));
    return out;
}

void record(SolverState2D& s, const Sample& x, double nl_power) {
    auto& L = s.ledger;
    const double nu = s.opt.nu;
    if (L.t.empty()) {
        L.dissipation.push_back(0.0);
        L.work.push_back(0.0);
    } else {
        const double h = s.t - L.t.back();
        L.dissipation.push_back(L.dissipation.back() + 0.5 * h * (L.dissipation_rate.back() + x.diss_rate));
        L.work.push_back(L.work.back() + 0.5 * h * (L.power.back() + x.power));
    }
    L.dissipation_rate.push_back(x.diss_rate);
    L.power.push_back(x.power);
    L.t.push_back(s.t);
    L.energy.push_back(x.energy);
    L.momentum.push_back(x.momentum);
    L.nonlinear_power.push_back(nl_power);
    L.residual.push_back(0.5 * x.energy + 2.0 * nu * L.dissipation.back() - 0.5 * L.energy.front() - L.work.back());
}

}  // namespace

SolverState2D init_sphere_solver_from_vorticity(const SphCoeffs& omega, const SphereSolverOptions& opt,
                                                SphereForcingFn forcing) {
    validate(opt);
    SolverState2D s;
    s.grid = make_sphere_grid(omega.lmax);
    s.opt = opt;
    s.omega = omega;
    s.omega(0, 0) = 0.0;
    s.omega.enforce_real();
    s.psi = psi_from_omega(s.omega);
    s.forcing = std::move(forcing);
    auto v = velocity_from_psi(s.grid, s.psi);
    record(s, sample(s, v, forcing_at(s, 0.0)), 0.0);
    return s;
}

SolverState2D init_sphere_solver(const VecField& v0, const SphereSolverOptions& opt, int lmax,
                                 SphereForcingFn forcing) {
    validate(opt);
    auto g = make_sphere_grid(lmax);
    if (v0.size() != static_cast<size_t>(g.npts())) throw Error(ErrorKind::ShapeError, "initial field has wrong size");
    SphCoeffs A, B;
    vsh_analysis(g, v0, A, B);
    SphCoeffs omega(lmax);
    for (int l = 1; l <= lmax; ++l)
        for (int m = -l; m <= l; ++m) omega(l, m) = -double(l) * (l + 1) * B(l, m);
    const double vn = std::sqrt(std::max(inner(g, v0, v0), 1e-300));
    auto grad = vsh_synthesis(g, A, SphCoeffs(lmax));
    bool projected = l2norm(g, grad) > 1e-10 * vn || !is_tangential(g, v0, 1e-10);
    auto s = init_sphere_solver_from_vorticity(omega, opt, std::move(forcing));
    s.projected_initial = projected;
    return s;
}

VecField velocity_from_psi(const SphereGrid& g, const SphCoeffs& psi) {
    return vsh_synthesis(g, SphCoeffs(psi.lmax), psi);
}

VecField sphere_velocity(const SolverState2D& s) { return velocity_from_psi(s.grid, s.psi); }

void step(SolverState2D& s) {
    const auto& g = s.grid;
    const double dt = s.opt.dt, nu = s.opt.nu;
    auto v = sphere_velocity(s);
    const double c = courant(g, v, dt);
    s.last_courant = c;
    if (s.opt.advection && c > s.opt.max_courant) {
        std::ostringstream msg;
        msg << "Courant number " << c << " exceeds " << s.opt.max_courant << " at t=" << s.t;
        throw Error(ErrorKind::StepRejected, msg.str());
    }
    double nl_power = 0.0;
    auto E = explicit_term(s, v, forcing_at(s, s.t), nl_power);
    SphCoeffs next(g.lmax);
    for (int l = 1; l <= g.lmax; ++l) {
        const double lam = nu * (2.0 - l * (l + 1.0));
        const double a = 1.0 + 0.5 * dt * lam, b = 1.0 - 0.5 * dt * lam;
        for (int m = -l; m <= l; ++m) {
            const int q = lm_index(l, m);
            const cplx ex = s.have_prev ? 1.5 * E.c[q] - 0.5 * s.prev_explicit.c[q] : E.c[q];
            next.c[q] = (a * s.omega.c[q] + dt * ex) / b;
        }
    }
    s.prev_explicit = std::move(E);
    s.have_prev = true;
    s.omega = std::move(next);
    s.omega.enforce_real();
    s.psi = psi_from_omega(s.omega);
    s.t += dt;
    ++s.steps;
    auto vn = sphere_velocity(s);
    record(s, sample(s, vn, forcing_at(s, s.t)), nl_power);
}

EnergySummary2D energy_report(const SolverState2D& s) {
    const auto& L = s.ledger;
    if (L.t.size() < 2) throw Error(ErrorKind::PreconditionError, "energy report needs at least one step");
    EnergySummary2D r;
    r.residual = std::abs(L.residual.back());
    for (size_t i = 0; i < L.t.size(); ++i) {
        r.max_residual = std::max(r.max_residual, std::abs(L.residual[i]));
        if (i > 0 && L.energy[i] > L.energy[i - 1] * (1.0 + 1e-14) + 1e-300) r.energy_nonincreasing = false;
        r.max_momentum_drift = std::max(r.max_momentum_drift, (L.momentum[i] - L.momentum.front()).norm());
    }
    r.momentum0 = L.momentum.front();
    // Forcing part of E0 uses the L2 norm of the Leray-projected Riesz vector (an upper bound of the dual norm).
    double fint = 0.0;
    if (s.forcing) {
        double prev = 0.0;
        for (size_t i = 0; i < L.t.size(); ++i) {
            auto f = leray_project_sphere(s.grid, s.forcing(L.t[i]));
            const double cur = inner(s.grid, f, f);
            if (i > 0) fint += 0.5 * (L.t[i] - L.t[i - 1]) * (prev + cur);
            prev = cur;
        }
    }
    r.E0 = L.energy.front() + fint / s.opt.nu;
    return r;
}

void save_checkpoint(const SolverState2D& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::InvalidParameter, "cannot write checkpoint " + path);
    out << std::setprecision(17);
    out << "thinshell-sphere-checkpoint 1\n";
    out << "t " << s.t << "\nlmax " << s.grid.lmax << "\nnu " << s.opt.nu << "\ndt " << s.opt.dt << "\nsteps " << s.steps
        << "\n";
    for (int l = 0; l <= s.grid.lmax; ++l)
        for (int m = 0; m <= l; ++m) out << l << ' ' << m << ' ' << s.omega(l, m).real() << ' ' << s.omega(l, m).imag() << '\n';
}

SolverState2D load_checkpoint(const std::string& path, SphereForcingFn forcing) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidParameter, "cannot read checkpoint " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "thinshell-sphere-checkpoint" || version != 1) throw Error(ErrorKind::DataError, "not a sphere checkpoint");
    std::string key;
    double t = 0.0;
    int lmax = 0;
    long steps = 0;
    SphereSolverOptions opt;
    in >> key >> t >> key >> lmax >> key >> opt.nu >> key >> opt.dt >> key >> steps;
    if (!in || lmax < 2) throw Error(ErrorKind::DataError, "malformed checkpoint header");
    SphCoeffs omega(lmax);
    int l, m;
    double re, im;
    while (in >> l >> m >> re >> im) {
        if (l < 0 || l > lmax || m < 0 || m > l) throw Error(ErrorKind::DataError, "checkpoint coefficient out of range");
        omega(l, m) = cplx(re, im);
    }
    omega.enforce_real();
    auto s = init_sphere_solver_from_vorticity(omega, opt, std::move(forcing));
    s.t = t;
    s.steps = steps;
    s.ledger.t.front() = t;
    return s;
}

}  // namespace thinshell
