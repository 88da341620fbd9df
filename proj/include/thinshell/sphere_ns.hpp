#pragma once

#include <functional>
#include <string>

#include "thinshell/avgext.hpp"

namespace thinshell {

/// Tangential Riesz vector of the forcing at time t, sampled at the grid nodes.
using SphereForcingFn = std::function<VecField(double t)>;

struct EnergyLedger2D {
    std::vector<double> t;
    std::vector<double> energy;       // ||v||^2
    std::vector<double> dissipation;  // int_0^t ||D_S2 v||^2 ds (trapezoid)
    std::vector<double> work;         // int_0^t <f, v> ds (trapezoid)
    std::vector<double> residual;     // 1/2||v||^2 + 2 nu diss - 1/2||v0||^2 - work
    std::vector<double> dissipation_rate;  // ||D_S2 v||^2
    std::vector<double> power;             // <f, v>
    std::vector<Vec3> momentum;       // (v, r_{e_i})
    std::vector<double> nonlinear_power;  // (grad_v v, v) of the discrete advection term
};

struct SphereSolverOptions {
    double nu = 1.0;
    double dt = 1e-3;
    bool advection = true;
    double max_courant = 1.0;
};

struct SolverState2D {
    SphereGrid grid;
    SphereSolverOptions opt;
    double t = 0.0;
    long steps = 0;
    SphCoeffs omega;  // scalar vorticity, l = 0 mode kept at zero
    SphCoeffs psi;    // streamfunction: v = n x grad psi, Laplace psi = omega
    SphCoeffs prev_explicit;  // explicit term of the previous step (AB2 history)
    bool have_prev = false;
    SphereForcingFn forcing;
    bool projected_initial = false;  // v0 had a gradient or normal part that was removed
    double last_courant = 0.0;
    EnergyLedger2D ledger;
};

/// Initializes from a tangential field. Gradient and normal parts of v0 are projected out.
SolverState2D init_sphere_solver(const VecField& v0, const SphereSolverOptions& opt, int lmax,
                                 SphereForcingFn forcing = {});
SolverState2D init_sphere_solver_from_vorticity(const SphCoeffs& omega, const SphereSolverOptions& opt,
                                                SphereForcingFn forcing = {});

/// One CN/AB2 step (the first step uses forward Euler for the explicit part). Throws step-rejected on
/// a Courant number above opt.max_courant and leaves the state untouched.
void step(SolverState2D& s);

VecField sphere_velocity(const SolverState2D& s);
VecField velocity_from_psi(const SphereGrid& g, const SphCoeffs& psi);

struct EnergySummary2D {
    double residual = 0.0;      // |energy-equality residual| at the last sample
    double max_residual = 0.0;  // over all samples
    double E0 = 0.0;            // ||v0||^2 + (1/nu) int ||f||^2_{V0*}, the forcing part in the L2 surrogate
    bool energy_nonincreasing = true;
    Vec3 momentum0 = Vec3::Zero();
    double max_momentum_drift = 0.0;
};

EnergySummary2D energy_report(const SolverState2D& s);

/// Text checkpoint: header line, then "l m re im" per coefficient of omega.
void save_checkpoint(const SolverState2D& s, const std::string& path);
SolverState2D load_checkpoint(const std::string& path, SphereForcingFn forcing = {});

}  // namespace thinshell
