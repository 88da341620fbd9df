#include <algorithm>
#include <cmath>
#include <functional>

#include "thinshell/errors.hpp"
#include "thinshell/harness.hpp"

namespace thinshell {

namespace {

double rel(double diff2, double a2, double b2) {
    const double scale = std::max(a2, b2);
    return scale > 0.0 ? std::sqrt(diff2 / scale) : std::sqrt(diff2);
}

template <class G, class F>
double rel_field(const G& g, const F& a, const F& b) {
    F d = a;
    for (size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
    return rel(inner(g, d, d), inner(g, a, a), inner(g, b, b));
}

ScalarField dots(const VecField& a, const VecField& b) {
    ScalarField out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i].dot(b[i]);
    return out;
}

// n at every shell node and |x|.
void shell_geometry(const ShellGrid& s, VecField& nbar, std::vector<double>& r) {
    nbar.resize(s.npts());
    r.resize(s.npts());
    for (int j = 0; j < s.nrad; ++j)
        for (int i = 0; i < s.nsph(); ++i) {
            nbar[s.idx(j, i)] = s.base.pos[i];
            r[s.idx(j, i)] = s.rnodes[j];
        }
}

MatField extend_const(const ShellGrid& s, const MatField& m) {
    MatField out(s.npts());
    for (int j = 0; j < s.nrad; ++j)
        for (int i = 0; i < s.nsph(); ++i) out[s.idx(j, i)] = m[i];
    return out;
}

// Tangential field plus a normal component.
VecField random_ambient(const SphereGrid& g, int band, std::mt19937_64& rng) {
    auto v = random_tangent(g, band, rng);
    auto eta = random_scalar(g, band, rng);
    for (int i = 0; i < g.npts(); ++i) v[i] += eta[i] * g.pos[i];
    return v;
}

// Poloidal field with P = r s(1-s), s = (r-1)/eps, at the single degree l and random orders. Its radial
// component is forced by div_S2 of the tangential part, which is the extremal case of the averaged
// divergence bounds once l is of order 1/eps.
VecField thin_poloidal_mode(const ShellGrid& s, int l, std::mt19937_64& rng) {
    std::normal_distribution<double> N;
    std::vector<cplx> cm(l + 1);
    for (auto& x : cm) x = cplx(N(rng), N(rng));
    cm[0] = cm[0].real();
    std::vector<SphCoeffs> T(s.nrad, SphCoeffs(s.base.lmax)), P = T;
    for (int j = 0; j < s.nrad; ++j) {
        const double r = s.rnodes[j], q = (r - 1.0) / s.eps;
        for (int m = 0; m <= l; ++m) P[j](l, m) = r * q * (1.0 - q) * cm[m];
        P[j].enforce_real();
    }
    return tp_synthesis(s, T, P);
}

int mode_degree(double eps) { return static_cast<int>(std::ceil(1.0 / eps - 1e-9)); }

}  // namespace

std::vector<IdentityResult> identity_suite(int lmax, int nrad, double eps, std::uint64_t seed) {
    if (lmax < 6) throw Error(ErrorKind::ConfigurationError, "identity suite needs lmax >= 6");
    const auto s = make_shell_grid(lmax, eps, nrad);
    const auto& g = s.base;
    const int band = std::max(2, lmax / 3);
    const int np = g.npts();
    std::mt19937_64 rng(seed);
    const auto P = projector(g);
    std::vector<IdentityResult> out;

    {
        auto Gn = tangential_gradient(g, g.pos);
        auto dn = surface_divergence(g, g.pos);
        ScalarField two(np, 2.0);
        out.push_back({"TGr_Nor", std::max(rel_field(g, Gn, P), rel_field(g, dn, two))});
    }
    const auto v = random_ambient(g, band, rng);
    VecField vt(np);
    for (int i = 0; i < np; ++i) vt[i] = P[i] * v[i];
    {
        auto lhs = tangential_gradient(g, vt);
        auto Gv = tangential_gradient(g, v);
        MatField rhs(np);
        for (int i = 0; i < np; ++i)
            rhs[i] = Gv[i] * P[i] - vt[i] * g.pos[i].transpose() - v[i].dot(g.pos[i]) * P[i];
        out.push_back({"Vec_Tan", rel_field(g, lhs, rhs)});
    }
    {
        auto lhs = surface_strain(g, vt);
        auto Dv = surface_strain(g, v);
        MatField rhs(np);
        for (int i = 0; i < np; ++i) rhs[i] = Dv[i] - v[i].dot(g.pos[i]) * P[i];
        out.push_back({"VT_str", rel_field(g, lhs, rhs)});
    }
    const auto a = random_tangent(g, band, rng);
    const auto b = random_tangent(g, band, rng);
    {
        auto Gb = tangential_gradient(g, b);
        auto cov = covariant_derivative(g, a, b);
        VecField lhs(np), rhs(np);
        for (int i = 0; i < np; ++i) {
            lhs[i] = Gb[i].transpose() * a[i];
            rhs[i] = cov[i] - b[i].dot(a[i]) * g.pos[i];
        }
        out.push_back({"Gauss", rel_field(g, lhs, rhs)});
        MatField dec(np);
        for (int i = 0; i < np; ++i) dec[i] = P[i] * Gb[i] * P[i] - b[i] * g.pos[i].transpose();
        out.push_back({"TGr_Dec", rel_field(g, Gb, dec)});
    }
    VecField nbar;
    std::vector<double> r;
    shell_geometry(s, nbar, r);
    {
        auto eta = random_scalar(g, band, rng);
        auto lhs = full_gradient_shell(s, extend(s, eta, ExtensionMode::Constant));
        auto rhs = extend(s, tangential_gradient(g, eta), ExtensionMode::Constant);
        for (int q = 0; q < s.npts(); ++q) rhs[q] /= r[q];
        out.push_back({"Const", rel_field(s, lhs, rhs)});
    }
    {
        const auto c = random_tangent(g, band, rng);
        auto A = tangential_gradient(g, a), B = tangential_gradient(g, b), C = tangential_gradient(g, c);
        MatField At(np), Bt(np), AB(np), AtC(np), CBt(np);
        for (int i = 0; i < np; ++i) {
            At[i] = A[i].transpose();
            Bt[i] = B[i].transpose();
            AB[i] = A[i] * B[i];
            AtC[i] = A[i].transpose() * C[i];
            CBt[i] = C[i] * B[i].transpose();
        }
        const double x0 = inner(g, A, B), x1 = inner(g, At, Bt);
        const double y0 = inner(g, AB, C), y1 = inner(g, B, AtC), y2 = inner(g, A, CBt);
        const double sx = std::max(std::abs(x0), 1e-300), sy = std::max(std::abs(y0), 1e-300);
        out.push_back({"Mat_Inn", std::max({std::abs(x0 - x1) / sx, std::abs(y0 - y1) / sy, std::abs(y0 - y2) / sy})});
    }
    {
        const auto phi = random_shell_scalar(s, band, 3, RadialScale::Fixed, rng);
        const auto u = random_shell_slip(s, band, 3, RadialScale::Fixed, rng);
        AvgIdentityResidual worst;
        for (int k = 0; k <= 3; ++k) {
            auto res = avg_gradient_identity_check(s, phi, u, k);
            worst.gradient = std::max(worst.gradient, res.gradient);
            worst.divergence = std::max(worst.divergence, res.divergence);
            worst.divergence_tan = std::max(worst.divergence_tan, res.divergence_tan);
        }
        out.push_back({"Ave_TGr", worst.gradient});
        out.push_back({"Ave_div", worst.divergence});
        out.push_back({"Atan_div", worst.divergence_tan});
    }
    {
        auto vE = extend(s, v, ExtensionMode::Weighted);
        auto vbar = extend(s, v, ExtensionMode::Constant);
        auto lhs = full_gradient_shell(s, vE);
        auto rhs = extend_const(s, tangential_gradient(g, v));
        for (int q = 0; q < s.npts(); ++q) rhs[q] += nbar[q] * vbar[q].transpose();
        out.push_back({"Ext_Grad", rel_field(s, lhs, rhs)});
        auto dl = divergence_shell(s, vE);
        auto dr = extend(s, surface_divergence(g, v), ExtensionMode::Constant);
        for (int q = 0; q < s.npts(); ++q) dr[q] += nbar[q].dot(vbar[q]);
        out.push_back({"Ext_div", rel_field(s, dl, dr)});
    }
    {
        auto aE = extend(s, a, ExtensionMode::Weighted);
        auto abar = extend(s, a, ExtensionMode::Constant);
        auto lhs = strain_shell(s, aE);
        auto rhs = extend_const(s, surface_strain(g, a));
        out.push_back({"Ext_str", rel_field(s, lhs, rhs)});
        auto GaE = full_gradient_shell(s, aE);
        auto cov = extend(s, covariant_derivative(g, a, a), ExtensionMode::Constant);
        VecField cl(s.npts()), cr(s.npts());
        for (int q = 0; q < s.npts(); ++q) {
            cl[q] = GaE[q].transpose() * aE[q];
            cr[q] = r[q] * (cov[q] - abar[q].squaredNorm() * nbar[q]);
        }
        out.push_back({"Ext_CoDe", rel_field(s, cl, cr)});
    }
    {
        const auto w = random_solenoidal(g, band, rng);
        const auto psi = random_shell_slip(s, band, 3, RadialScale::Fixed, rng);
        auto wE = extend(s, w, ExtensionMode::Weighted);
        const double scale = l2norm(s, wE) * l2norm(s, psi);
        out.push_back({"ExAv_L2", unfold_pairing_check(s, w, psi) / scale});
    }
    return out;
}

std::vector<ScalingResult> scaling_suite(const std::vector<double>& eps_list, int lmax, int nrad, int samples,
                                         std::uint64_t seed) {
    if (eps_list.size() < 3) throw Error(ErrorKind::ConfigurationError, "scaling suite needs at least three eps values");
    if (samples < 1) throw Error(ErrorKind::ConfigurationError, "scaling suite needs samples >= 1");
    const int band = std::min(6, lmax / 2);
    const int rdeg = 3;
    const int k = 2;  // k = 1 makes div_S2 M^k_tau u vanish identically for solenoidal u

    // One probe returns LHS / (norms) for a sample; the eps power is divided out afterwards.
    using Probe = std::function<double(const ShellGrid&, std::mt19937_64&)>;
    struct Row {
        std::string name;
        double power;
        Probe probe;
        bool eps_degree = false;  // probe runs on a grid with lmax >= 1/eps
    };
    std::vector<Row> rows;
    rows.push_back({"Ave_L2", -0.5, [&](const ShellGrid& s, std::mt19937_64& rng) {
                        auto phi = random_shell_scalar(s, band, rdeg, RadialScale::Thin, rng);
                        return l2norm(s.base, average(s, phi, k)) / l2norm(s, phi);
                    }});
    rows.push_back({"AvDf_L2", 0.5, [&](const ShellGrid& s, std::mt19937_64& rng) {
                        auto phi = random_shell_scalar(s, band, rdeg, RadialScale::Thin, rng);
                        auto a = average(s, phi, 0), b = average(s, phi, 3);
                        for (size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
                        return l2norm(s.base, a) / l2norm(s, phi);
                    }});
    rows.push_back({"AvCo_Df", 1.0, [&](const ShellGrid& s, std::mt19937_64& rng) {
                        auto phi = random_shell_scalar(s, band, rdeg, RadialScale::Thin, rng);
                        auto m = extend(s, average(s, phi, k), ExtensionMode::Constant);
                        for (size_t i = 0; i < m.size(); ++i) m[i] = phi[i] - m[i];
                        return l2norm(s, m) / h1norm(s, phi);
                    }});
    rows.push_back({"Ave_NC", 0.5, [&](const ShellGrid& s, std::mt19937_64& rng) {
                        auto u = random_shell_slip(s, band, rdeg, RadialScale::Thin, rng);
                        VecField nbar;
                        std::vector<double> r;
                        shell_geometry(s, nbar, r);
                        return l2norm(s.base, average(s, dots(u, nbar), k)) / h1norm(s, u);
                    }});
    rows.push_back({"Atan_Con", 1.0, [&](const ShellGrid& s, std::mt19937_64& rng) {
                        auto u = random_shell_slip(s, band, rdeg, RadialScale::Thin, rng);
                        auto m = extend(s, average_tangential(s, u, k), ExtensionMode::Constant);
                        for (size_t i = 0; i < m.size(); ++i) m[i] = u[i] - m[i];
                        return l2norm(s, m) / h1norm(s, u);
                    }});
    rows.push_back({"Atdiv_L2", 0.5, [&](const ShellGrid& s, std::mt19937_64& rng) {
                        auto u = thin_poloidal_mode(s, mode_degree(s.eps), rng);
                        return l2norm(s.base, surface_divergence(s.base, average_tangential(s, u, k))) / h1norm(s, u);
                    }, true});
    rows.push_back({"Ave_HL", 0.5, [&](const ShellGrid& s, std::mt19937_64& rng) {
                        auto u = thin_poloidal_mode(s, mode_degree(s.eps), rng);
                        auto m = average_tangential(s, u, k);
                        auto lm = leray_project_sphere(s.base, m);
                        for (size_t i = 0; i < m.size(); ++i) m[i] -= lm[i];
                        return h1norm(s.base, m) / h1norm(s, u);
                    }, true});
    // Dual norms of the extended functionals; the shell Gram matrices are built once per eps.
    std::vector<std::unique_ptr<ShellDualNorm>> duals(eps_list.size());
    auto dual_for = [&](const ShellGrid& s) -> const ShellDualNorm& {
        for (size_t i = 0; i < eps_list.size(); ++i)
            if (eps_list[i] == s.eps) {
                if (!duals[i]) duals[i] = std::make_unique<ShellDualNorm>(s);
                return *duals[i];
            }
        throw Error(ErrorKind::InvariantViolation, "eps not in the sweep list");
    };
    auto func_ext = [&](int which) {
        return [&, which](const ShellGrid& s, std::mt19937_64& rng) {
            const auto& dn = dual_for(s);
            auto f = random_solenoidal(s.base, band, rng);
            auto fbar = extend_forcing(sphere_forcing(f), ExtensionMode::Constant, s).riesz;
            auto fE = extend_forcing(sphere_forcing(f), ExtensionMode::Weighted, s).riesz;
            VecField x = which == 0 ? fbar : fE;
            if (which == 2)
                for (size_t i = 0; i < x.size(); ++i) x[i] -= fbar[i];
            return dn(x) / dual_norm_sphere(s.base, f);
        };
    };
    rows.push_back({"Func_Ext.bar", 0.5, func_ext(0)});
    rows.push_back({"Func_Ext.E", 0.5, func_ext(1)});
    rows.push_back({"Func_Ext.diff", 1.5, func_ext(2)});
    rows.push_back({"InTr_v2", 0.25, [&](const ShellGrid& s, std::mt19937_64& rng) {
                        const auto& g = s.base;
                        auto v = random_solenoidal(g, band / 2 + 1, rng);
                        auto psi = random_shell_slip(s, band / 2 + 1, rdeg, RadialScale::Fixed, rng);
                        auto vE = extend(s, v, ExtensionMode::Weighted);
                        auto G = full_gradient_shell(s, vE);
                        VecField adv(s.npts());
                        for (int q = 0; q < s.npts(); ++q) adv[q] = G[q].transpose() * vE[q];
                        return std::abs(inner(s, adv, psi)) / (l2norm(g, v) * h1norm(g, v) * h1norm(s, psi));
                    }});
    rows.push_back({"Quad_Thin", 0.0, [&](const ShellGrid& s, std::mt19937_64& rng) {
                        const auto& g = s.base;
                        auto eta = random_scalar(g, band / 2 + 1, rng);
                        auto phi = random_shell_scalar(s, band / 2 + 1, rdeg, RadialScale::Fixed, rng);
                        auto prod = extend(s, eta, ExtensionMode::Constant);
                        for (size_t i = 0; i < prod.size(); ++i) prod[i] *= phi[i];
                        return l2norm(s, prod) / std::sqrt(l2norm(g, eta) * h1norm(g, eta) * l2norm(s, phi) * h1norm(s, phi));
                    }});
    rows.push_back({"Nor_Thin", 1.0, [&](const ShellGrid& s, std::mt19937_64& rng) {
                        auto u = random_shell_slip(s, band, rdeg, RadialScale::Thin, rng);
                        VecField nbar;
                        std::vector<double> r;
                        shell_geometry(s, nbar, r);
                        return l2norm(s, dots(u, nbar)) / h1norm(s, u);
                    }});

    std::vector<ScalingResult> out;
    for (const auto& row : rows) {
        ScalingResult res;
        res.name = row.name;
        res.power = row.power;
        res.eps = eps_list;
        for (double eps : eps_list) {
            const auto s = make_shell_grid(row.eps_degree ? std::max(lmax, mode_degree(eps)) : lmax, eps, nrad);
            std::mt19937_64 rng(seed);
            double worst = 0.0;
            for (int n = 0; n < samples; ++n) worst = std::max(worst, row.probe(s, rng));
            res.ratio.push_back(worst / std::pow(eps, row.power));
        }
        const auto [lo, hi] = std::minmax_element(res.ratio.begin(), res.ratio.end());
        res.spread = *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
        res.trend = loglog_slope(res.eps, res.ratio);
        out.push_back(res);
    }
    return out;
}

ConstantBoundResult constant_bounds(const std::vector<double>& eps_list, int lmax, int nrad, int samples,
                                    std::uint64_t seed) {
    ConstantBoundResult out;
    std::mt19937_64 rng(seed);
    const int band = std::min(8, lmax);
    for (double eps : eps_list) {
        const auto s = make_shell_grid(lmax, eps, nrad);
        const auto& g = s.base;
        for (int n = 0; n < samples; ++n) {
            auto eta = random_scalar(g, band, rng);
            const double bar = l2norm(s, extend(s, eta, ExtensionMode::Constant)) / (std::sqrt(eps) * l2norm(g, eta));
            auto v = random_ambient(g, band, rng);
            auto d = extend(s, v, ExtensionMode::Weighted);
            auto vbar = extend(s, v, ExtensionMode::Constant);
            for (size_t i = 0; i < d.size(); ++i) d[i] -= vbar[i];
            const double ext = l2norm(s, d) / (std::pow(eps, 1.5) * l2norm(g, v));
            ++out.samples;
            if (bar > 2.0) ++out.violations_bar;
            if (ext > 2.0) ++out.violations_ext;
            out.worst_bar = std::max(out.worst_bar, bar);
            out.worst_ext = std::max(out.worst_ext, ext);
        }
    }
    return out;
}

}  // namespace thinshell
