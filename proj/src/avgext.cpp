#include "thinshell/avgext.hpp"

#include "thinshell/errors.hpp"

namespace thinshell {

namespace {

void require_shell(const ShellGrid& s, size_t n, const char* what) {
    if (n != static_cast<size_t>(s.npts())) throw Error(ErrorKind::ShapeError, std::string(what) + ": field is not on the shell grid");
}

void require_sphere(const SphereGrid& g, size_t n, const char* what) {
    if (n != static_cast<size_t>(g.npts())) throw Error(ErrorKind::ShapeError, std::string(what) + ": field is not on the sphere grid");
}

template <class T>
std::vector<T> average_impl(const ShellGrid& s, const std::vector<T>& phi, int k, T zero) {
    if (k < 0) throw Error(ErrorKind::InvalidParameter, "average weight exponent must be >= 0");
    const int ns = s.nsph();
    std::vector<T> out(ns, zero);
    for (int j = 0; j < s.nrad; ++j) {
        const double w = s.rweights[j] * std::pow(s.rnodes[j], k) / s.eps;
        for (int i = 0; i < ns; ++i) out[i] += w * phi[j * ns + i];
    }
    return out;
}

template <class T>
std::vector<T> extend_impl(const ShellGrid& s, const std::vector<T>& v, ExtensionMode mode) {
    const int ns = s.nsph();
    std::vector<T> out(s.npts());
    for (int j = 0; j < s.nrad; ++j) {
        const double w = mode == ExtensionMode::Weighted ? s.rnodes[j] : 1.0;
        for (int i = 0; i < ns; ++i) out[j * ns + i] = w * v[i];
    }
    return out;
}

double rel(double num, double den) { return num / std::max(den, 1e-300); }

}  // namespace

ScalarField average(const ShellGrid& s, const ScalarField& phi, int k) {
    require_shell(s, phi.size(), "average");
    return average_impl(s, phi, k, 0.0);
}

VecField average(const ShellGrid& s, const VecField& u, int k) {
    require_shell(s, u.size(), "average");
    return average_impl<Vec3>(s, u, k, Vec3::Zero());
}

VecField average_tangential(const ShellGrid& s, const VecField& u, int k) {
    auto m = average(s, u, k);
    for (int i = 0; i < s.nsph(); ++i) m[i] -= s.base.pos[i] * s.base.pos[i].dot(m[i]);
    return m;
}

AvgIdentityResidual avg_gradient_identity_check(const ShellGrid& s, const ScalarField& phi, const VecField& u, int k) {
    const auto& g = s.base;
    AvgIdentityResidual r;

    const auto mphi = average(s, phi, k);
    auto lhs_g = tangential_gradient(g, mphi);
    auto rhs_g = average(s, full_gradient_shell(s, phi), k + 1);
    VecField dg(g.npts());
    for (int i = 0; i < g.npts(); ++i) dg[i] = lhs_g[i] - (rhs_g[i] - g.pos[i] * g.pos[i].dot(rhs_g[i]));
    r.gradient = rel(l2norm(g, dg), std::max({l2norm(g, lhs_g), l2norm(g, rhs_g), l2norm(g, mphi)}));

    auto divu = average(s, divergence_shell(s, u), k + 1);
    ScalarField un(s.npts());
    for (int j = 0; j < s.nrad; ++j)
        for (int i = 0; i < s.nsph(); ++i) un[s.idx(j, i)] = u[s.idx(j, i)].dot(g.pos[i]);
    auto mun = average(s, un, k);

    const auto mu = average(s, u, k);
    const double uscale = l2norm(g, mu);
    auto lhs_d = surface_divergence(g, mu);
    ScalarField dd(g.npts());
    for (int i = 0; i < g.npts(); ++i) dd[i] = lhs_d[i] - divu[i] - (k + 1.0) * mun[i];
    r.divergence = rel(l2norm(g, dd), std::max({l2norm(g, lhs_d), l2norm(g, divu), l2norm(g, mun), uscale}));

    auto lhs_t = surface_divergence(g, average_tangential(s, u, k));
    for (int i = 0; i < g.npts(); ++i) dd[i] = lhs_t[i] - divu[i] - (k - 1.0) * mun[i];
    r.divergence_tan = rel(l2norm(g, dd), std::max({l2norm(g, lhs_t), l2norm(g, divu), l2norm(g, mun), uscale}));
    return r;
}

ScalarField extend(const ShellGrid& s, const ScalarField& eta, ExtensionMode mode) {
    require_sphere(s.base, eta.size(), "extend");
    return extend_impl(s, eta, mode);
}

VecField extend(const ShellGrid& s, const VecField& v, ExtensionMode mode) {
    require_sphere(s.base, v.size(), "extend");
    return extend_impl(s, v, mode);
}

VecField L_eps(const ShellGrid& s, const VecField& psi) {
    return leray_project_sphere(s.base, average_tangential(s, psi, 3));
}

DualForcing sphere_forcing(VecField riesz) {
    DualForcing f;
    f.domain = DualForcing::Domain::Sphere;
    f.riesz = std::move(riesz);
    return f;
}

DualForcing shell_forcing(VecField riesz) {
    DualForcing f;
    f.domain = DualForcing::Domain::Shell;
    f.riesz = std::move(riesz);
    return f;
}

double pair(const SphereGrid& g, const DualForcing& f, const VecField& zeta) {
    if (f.domain != DualForcing::Domain::Sphere) throw Error(ErrorKind::ShapeError, "functional lives on the shell");
    if (f.riesz.empty()) return 0.0;
    return inner(g, f.riesz, zeta);
}

double pair(const ShellGrid& s, const DualForcing& f, const VecField& psi) {
    if (f.domain != DualForcing::Domain::Shell) throw Error(ErrorKind::ShapeError, "functional lives on the sphere");
    if (f.riesz.empty()) return 0.0;
    return inner(s, f.riesz, psi);
}

DualForcing extend_forcing(const DualForcing& f, ExtensionMode mode, const ShellGrid& s) {
    if (f.domain != DualForcing::Domain::Sphere) throw Error(ErrorKind::InvalidParameter, "only sphere functionals can be extended");
    const VecField src = f.riesz.empty() ? VecField(s.nsph(), Vec3::Zero()) : f.riesz;
    require_sphere(s.base, src.size(), "extend_forcing");
    // (fbar, psi) = eps (L0 f, M^2 psi) = (const-ext of L0 f, psi); the weighted case uses M^3 and |x|.
    DualForcing out = shell_forcing(extend(s, leray_project_sphere(s.base, src), mode));
    out.extended = true;
    out.mode = mode;
    out.source = src;
    out.eps = s.eps;
    return out;
}

double pair_by_definition(const ShellGrid& s, const DualForcing& f_ext, const VecField& psi) {
    if (!f_ext.extended) throw Error(ErrorKind::InvalidParameter, "functional was not built by extend_forcing");
    const int k = f_ext.mode == ExtensionMode::Weighted ? 3 : 2;
    auto w = leray_project_sphere(s.base, average_tangential(s, psi, k));
    return s.eps * inner(s.base, f_ext.source, w);
}

double unfold_pairing_check(const ShellGrid& s, const VecField& v, const VecField& psi) {
    require_sphere(s.base, v.size(), "unfold_pairing_check");
    require_shell(s, psi.size(), "unfold_pairing_check");
    const double vn = l2norm(s.base, v);
    if (vn > 0.0) {
        if (!is_tangential(s.base, v, 1e-9) || l2norm(s.base, surface_divergence(s.base, v)) > 1e-8 * h1norm(s.base, v))
            throw Error(ErrorKind::InvariantViolation, "unfolding needs a solenoidal tangential field");
    }
    const double lhs = inner(s, extend(s, v, ExtensionMode::Weighted), psi);
    const double rhs = s.eps * inner(s.base, v, L_eps(s, psi));
    return std::abs(lhs - rhs);
}

}  // namespace thinshell
