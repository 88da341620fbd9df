#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>

#include "thinshell/sphere_ns.hpp"

namespace thinshell {

/// Riesz vector of the shell forcing at time t, sampled at the shell nodes.
using ShellForcingFn = std::function<VecField(double t)>;

/// Toroidal/poloidal potentials sampled at the radial nodes:
/// u = curl(T x) + curl curl(P x), T[j], P[j] the angular coefficients at rnodes[j].
using RadialPotential = std::vector<SphCoeffs>;

struct ShellSolverOptions {
    double nu = 1.0;
    double dt = 1e-3;
    bool advection = true;
    double max_courant = 1.0;
    int euler_steps = 1;  // IMEX-Euler steps before switching to CN/AB2
};

struct EnergyLedger3D {
    std::vector<double> t;
    std::vector<double> energy;       // ||u||^2
    std::vector<double> dissipation;  // sum over steps of dt ||D(u)||^2 at the implicit stage
    std::vector<double> work;         // sum over steps of dt <f, u> at the implicit stage
    std::vector<double> residual;     // 1/2||u||^2 + 2 nu diss - 1/2||u0||^2 - work (<= 0 up to tolerance)
    std::vector<Vec3> momentum;       // (u, r_{e_i})
    std::vector<double> nonlinear_power;
    std::vector<double> divergence;       // ||div u||
    std::vector<double> normal_trace;     // max |u.n| over both boundary spheres
    std::vector<double> tangential_stress;  // max |P D(u) n| over both boundary spheres
};

struct ShellOperators;

struct SolverState3D {
    ShellGrid grid;
    ShellSolverOptions opt;
    double t = 0.0;
    long steps = 0;
    RadialPotential T, P;  // always inside the stress-free space
    std::vector<Eigen::VectorXcd> prevFT, prevFP;  // explicit Galerkin loads of the previous step, per (l,m)
    bool have_prev = false;
    ShellForcingFn forcing;
    bool projected_initial = false;
    double last_courant = 0.0;
    EnergyLedger3D ledger;
    std::shared_ptr<const ShellOperators> ops;         // factored radial systems, shared between copies
    MatField last_strain;  // D(u) at the current time on the quadrature grid
};

/// Toroidal/poloidal inversion of u0 after the slip Leray projection, followed by the L2 projection onto
/// the stress-free space; projected_initial records whether u0 changed. Non-finite samples raise data-error.
SolverState3D init_shell_solver(const VecField& u0, const ShellSolverOptions& opt, const ShellGrid& grid,
                                ShellForcingFn forcing = {});
/// Potentials are L2-projected onto the stress-free space.
SolverState3D init_shell_solver_from_potentials(const RadialPotential& T, const RadialPotential& P,
                                                const ShellSolverOptions& opt, const ShellGrid& grid,
                                                ShellForcingFn forcing = {});

/// One IMEX step of the radial Galerkin scheme (stress-free polynomial bases, oversampled radial
/// quadrature). Throws step-rejected before touching the state.
void step3d(SolverState3D& s);

VecField shell_velocity(const SolverState3D& s);
VecField shell_vorticity(const SolverState3D& s);

/// Radial polynomial interpolation of a nodal field onto another grid with the same base sphere.
VecField resample_radial(const ShellGrid& from, const ShellGrid& to, const VecField& u);

/// Potentials of the divergence-free part with zero normal trace (slip Leray projection).
void tp_analysis(const ShellGrid& g, const VecField& u, RadialPotential& T, RadialPotential& P);
VecField leray_project_shell(const ShellGrid& g, const VecField& u);

/// Random solenoidal field that satisfies the stress-free conditions on both walls:
/// T = r (tau0 + tau1 x^2 (3 - 2x)), P = eps pi1 x (1 - 2x^2 + x^3), x = (r - 1)/eps, angular content in [1, band].
VecField random_stress_free(const ShellGrid& g, int band, std::mt19937_64& rng);

struct BoundaryDefect {
    double normal_trace = 0.0;       // max |u.n|
    double tangential_stress = 0.0;  // max |P D(u) n|
};
BoundaryDefect boundary_defect(const ShellGrid& g, const VecField& u);

struct EnergySummary3D {
    double worst_slack = 0.0;  // max over samples of residual / (1/2 ||u0||^2), positive means violated
    Vec3 momentum0 = Vec3::Zero();
    double max_momentum_drift = 0.0;
    double max_divergence = 0.0;
    double max_normal_trace = 0.0;
    double max_tangential_stress = 0.0;
    double max_nonlinear_power = 0.0;
};
EnergySummary3D energy_report(const SolverState3D& s);

void save_checkpoint(const SolverState3D& s, const std::string& path);
SolverState3D load_shell_checkpoint(const std::string& path, ShellForcingFn forcing = {});

/// Extension-exact manufactured solution built from a sphere trajectory.
struct ManufacturedField {
    ShellGrid grid;
    double nu = 1.0;
    std::vector<double> t;
    std::vector<VecField> u;  // v_E at each sample
    std::vector<VecField> f;  // Leray-projected NS operator applied to v_E
    std::vector<VecField> dudt;
    double navier_defect = 0.0;  // max tangential stress of v_E at the boundary, relative to max |grad v_E|
};

struct SphereSample {
    double t;
    VecField v;  // tangential, on the sphere grid
};

/// Samples must be equispaced in time with at least three entries.
ManufacturedField manufacture(const std::vector<SphereSample>& traj, double nu, const ShellGrid& grid);

/// (d_t u, psi) + 2 nu (D u, D psi) + ((u.grad) u, psi) - (f, psi) at sample k, for slip test fields psi.
double weak_form_residual(const ManufacturedField& m, size_t k, const VecField& psi);

}  // namespace thinshell
