#pragma once

#include "thinshell/surfcalc.hpp"

namespace thinshell {

// ---- averages -----------------------------------------------------------------

/// M^k phi(y) = (1/eps) int_1^{1+eps} phi(r y) r^k dr, by the shell's radial quadrature.
ScalarField average(const ShellGrid& s, const ScalarField& phi, int k);
VecField average(const ShellGrid& s, const VecField& u, int k);
/// P M^k u.
VecField average_tangential(const ShellGrid& s, const VecField& u, int k);

/// Relative residuals of the averaged gradient / divergence identities.
struct AvgIdentityResidual {
    double gradient = 0.0;        // grad_S2 M^k phi vs P M^{k+1} grad phi
    double divergence = 0.0;      // div_S2 M^k u vs M^{k+1} div u + (k+1) M^k(u.n)
    double divergence_tan = 0.0;  // div_S2 M^k_tau u vs M^{k+1} div u + (k-1) M^k(u.n)
};

/// `u` must satisfy u.n = 0 on both walls for the divergence identities.
AvgIdentityResidual avg_gradient_identity_check(const ShellGrid& s, const ScalarField& phi, const VecField& u, int k);

// ---- extensions ---------------------------------------------------------------

enum class ExtensionMode { Constant, Weighted };

/// Constant: eta(x/|x|). Weighted: |x| eta(x/|x|).
ScalarField extend(const ShellGrid& s, const ScalarField& eta, ExtensionMode mode);
VecField extend(const ShellGrid& s, const VecField& v, ExtensionMode mode);

/// L_eps psi = L_0 M^3_tau psi.
VecField L_eps(const ShellGrid& s, const VecField& psi);

// ---- functionals -------------------------------------------------------------

/// A forcing functional carried by an L2 Riesz vector on either the sphere or the shell.
struct DualForcing {
    enum class Domain { Sphere, Shell };
    Domain domain = Domain::Sphere;
    VecField riesz;
    // Set on shell functionals produced by extend_forcing.
    bool extended = false;
    ExtensionMode mode = ExtensionMode::Constant;
    VecField source;  // sphere Riesz vector the extension was built from
    double eps = 0.0;
};

DualForcing sphere_forcing(VecField riesz);
DualForcing shell_forcing(VecField riesz);

/// <f, zeta> on the sphere / <f, psi> on the shell as L2 pairings with the Riesz vector.
double pair(const SphereGrid& g, const DualForcing& f, const VecField& zeta);
double pair(const ShellGrid& s, const DualForcing& f, const VecField& psi);

/// Constant: <fbar, psi> = eps <f, L_0 M^2_tau psi>; weighted: eps <f, L_0 M^3_tau psi>.
/// The Riesz vector is the matching extension of L_0 of the sphere Riesz vector.
DualForcing extend_forcing(const DualForcing& f, ExtensionMode mode, const ShellGrid& s);

/// eps <f, L_0 M^k_tau psi> evaluated directly from the definition, for an extended functional.
double pair_by_definition(const ShellGrid& s, const DualForcing& f_ext, const VecField& psi);

/// |(v_E, psi) - eps (v, L_eps psi)|. Throws invariant-violation unless v is solenoidal.
double unfold_pairing_check(const ShellGrid& s, const VecField& v, const VecField& psi);

}  // namespace thinshell
