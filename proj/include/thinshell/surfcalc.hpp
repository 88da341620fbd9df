#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "thinshell/grid.hpp"

namespace thinshell {

/// Cartesian nodal vector fields; the names only document intent.
using TangentField = VecField;
using VolumeField = VecField;
using SurfaceMatrixField = MatField;

// ---- sphere calculus --------------------------------------------------------

MatField projector(const SphereGrid& g);

/// grad_S2 eta = P grad(eta extended constantly), evaluated spectrally.
VecField tangential_gradient(const SphereGrid& g, const ScalarField& eta);
/// (grad_S2 v)_{ij} = D_i v_j, one scalar gradient per Cartesian component.
MatField tangential_gradient(const SphereGrid& g, const VecField& v);
ScalarField surface_divergence(const SphereGrid& g, const VecField& v);
/// P (grad_S2 v)_S P.
MatField surface_strain(const SphereGrid& g, const VecField& v);
/// P[(w . grad_S2) v] for tangential v, w.
VecField covariant_derivative(const SphereGrid& g, const VecField& w, const VecField& v);
/// v - grad_S2 eta with Laplace(eta) = div v solved diagonally.
VecField leray_project_sphere(const SphereGrid& g, const VecField& v);
/// Scalar vorticity div_S2(v x n) of a tangential field, spectrally.
SphCoeffs surface_vorticity(const SphereGrid& g, const VecField& v);

bool is_tangential(const SphereGrid& g, const VecField& v, double tol = 1e-10);

// ---- shell calculus ---------------------------------------------------------

VecField full_gradient_shell(const ShellGrid& s, const ScalarField& phi);
/// (grad u)_{ij} = d_i u_j assembled as n (x) d_r u + (1/r) grad_S2 u at each radius.
MatField full_gradient_shell(const ShellGrid& s, const VecField& u);
MatField strain_shell(const ShellGrid& s, const VecField& u);
ScalarField divergence_shell(const ShellGrid& s, const VecField& u);
/// d_r along the radial index (collocation).
VecField radial_derivative(const ShellGrid& s, const VecField& u);
ScalarField radial_derivative(const ShellGrid& s, const ScalarField& phi);

/// Toroidal/poloidal synthesis u = curl(T x) + curl curl(P x) with T, P given at the radial nodes.
VecField tp_synthesis(const ShellGrid& s, const std::vector<SphCoeffs>& T, const std::vector<SphCoeffs>& P);

// ---- rotation fields --------------------------------------------------------

VecField rotation_field(const SphereGrid& g, const Vec3& a);
VecField rotation_field(const ShellGrid& s, const Vec3& a);

// ---- inner products and norms ----------------------------------------------

double inner(const SphereGrid& g, const ScalarField& a, const ScalarField& b);
double inner(const SphereGrid& g, const VecField& a, const VecField& b);
double inner(const SphereGrid& g, const MatField& a, const MatField& b);
double inner(const ShellGrid& s, const ScalarField& a, const ScalarField& b);
double inner(const ShellGrid& s, const VecField& a, const VecField& b);
double inner(const ShellGrid& s, const MatField& a, const MatField& b);

template <class G, class F>
double l2norm(const G& g, const F& f) {
    return std::sqrt(std::max(0.0, inner(g, f, f)));
}

double h1norm(const SphereGrid& g, const ScalarField& eta);
double h1norm(const SphereGrid& g, const VecField& v);
double h1norm(const ShellGrid& s, const ScalarField& phi);
double h1norm(const ShellGrid& s, const VecField& u);

/// Removes the L2 projection onto span{r_e1, r_e2, r_e3}.
VecField remove_rotations(const SphereGrid& g, const VecField& v);
VecField remove_rotations(const ShellGrid& s, const VecField& u);

// ---- random fields ----------------------------------------------------------

/// Thin: radial profiles are polynomials in s = (r-1)/eps; Fixed: polynomials in r-1.
enum class RadialScale { Thin, Fixed };

ScalarField random_scalar(const SphereGrid& g, int band, std::mt19937_64& rng);
VecField random_tangent(const SphereGrid& g, int band, std::mt19937_64& rng);
VecField random_solenoidal(const SphereGrid& g, int band, std::mt19937_64& rng);
ScalarField random_shell_scalar(const ShellGrid& s, int band, int rdeg, RadialScale scale, std::mt19937_64& rng);
/// General field with u . n_eps = 0 on both boundary spheres.
VecField random_shell_slip(const ShellGrid& s, int band, int rdeg, RadialScale scale, std::mt19937_64& rng);
/// Solenoidal field with u . n_eps = 0 (toroidal + poloidal with P = 0 at both walls).
VecField random_shell_solenoidal(const ShellGrid& s, int band, int rdeg, RadialScale scale, std::mt19937_64& rng);

// ---- inequality probes ------------------------------------------------------

enum class ProbeKind { KornSphere, KornShellUniform, Ladyzhenskaya, ProductThin, NormalTrace };

ProbeKind parse_probe_kind(const std::string& name);
std::string to_string(ProbeKind k);

struct ProbeOptions {
    int lmax = 10;
    int band = 6;
    int nrad = 8;
    int rdeg = 3;
    int samples = 50;
    bool orthogonalize = true;  // project samples orthogonal to all r_a
    bool include_killing = false;  // add r_{e3} itself as a sample
    std::vector<double> eps_list{0.2, 0.1, 0.05};
    std::uint64_t seed = 1;
};

struct ProbeEntry {
    double eps = 0.0;  // 0 for sphere-only inequalities
    double max_ratio = 0.0;
    double min_ratio = 0.0;
    int used = 0;
    int skipped = 0;  // RHS numerically zero
    bool infinite = false;  // a skipped sample had nonzero LHS
};

struct ProbeReport {
    ProbeKind kind{};
    std::vector<ProbeEntry> entries;
    double constant = 0.0;  // max ratio over all entries
    double spread = 1.0;    // max/min of per-entry max ratios
    bool killing_flagged = false;
};

/// Ratio LHS/RHS of the named inequality over random samples.
ProbeReport probe_inequality(ProbeKind kind, const ProbeOptions& opt);

}  // namespace thinshell
