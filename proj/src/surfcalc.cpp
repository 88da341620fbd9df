#include "thinshell/surfcalc.hpp"

#include <limits>

#include "thinshell/errors.hpp"

namespace thinshell {

namespace {

void require_size(size_t n, size_t expect, const char* what) {
    if (n != expect) throw Error(ErrorKind::ShapeError, std::string(what) + ": field size mismatch");
}

void require_finite(const VecField& v) {
    for (const auto& x : v)
        if (!x.allFinite()) throw Error(ErrorKind::DataError, "non-finite value in field");
}

void require_finite(const ScalarField& v) {
    for (double x : v)
        if (!std::isfinite(x)) throw Error(ErrorKind::DataError, "non-finite value in field");
}

ScalarField component(const VecField& v, int c, size_t off, size_t n) {
    ScalarField out(n);
    for (size_t i = 0; i < n; ++i) out[i] = v[off + i](c);
    return out;
}

SphCoeffs random_coeffs(int lmax, int band, int lmin, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    SphCoeffs c(lmax);
    for (int l = lmin; l <= std::min(band, lmax); ++l) {
        const double amp = 1.0 / (1.0 + l);
        for (int m = 0; m <= l; ++m) c(l, m) = amp * (m == 0 ? cplx(nd(rng), 0.0) : cplx(nd(rng), nd(rng)));
    }
    c.enforce_real();
    return c;
}

// Random radial polynomial coefficients q_0..q_rdeg evaluated at r.
double radial_poly(const std::vector<double>& q, double r, double eps, RadialScale scale) {
    const double x = scale == RadialScale::Thin ? (r - 1.0) / eps : (r - 1.0);
    double s = 0.0, p = 1.0;
    for (double c : q) {
        s += c * p;
        p *= x;
    }
    return s;
}

// Vanishes at both walls: s(1-s) for thin profiles, (r-1)(1+eps-r) for fixed ones.
double wall_factor(double r, double eps, RadialScale scale) {
    const double s = (r - 1.0) / eps;
    return scale == RadialScale::Thin ? s * (1.0 - s) : (r - 1.0) * (1.0 + eps - r);
}

std::vector<double> random_profile(int rdeg, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    std::vector<double> q(rdeg + 1);
    for (auto& c : q) c = nd(rng);
    return q;
}

}  // namespace

// ---- sphere ----------------------------------------------------------------

MatField projector(const SphereGrid& g) {
    MatField P(g.npts());
    for (int i = 0; i < g.npts(); ++i) P[i] = Mat3::Identity() - g.pos[i] * g.pos[i].transpose();
    return P;
}

VecField tangential_gradient(const SphereGrid& g, const ScalarField& eta) {
    require_size(eta.size(), g.npts(), "tangential_gradient");
    require_finite(eta);
    return vsh_synthesis(g, sht_forward(g, eta, g.ltab), SphCoeffs(g.ltab));
}

MatField tangential_gradient(const SphereGrid& g, const VecField& v) {
    require_size(v.size(), g.npts(), "tangential_gradient");
    require_finite(v);
    MatField M(g.npts(), Mat3::Zero());
    const SphCoeffs zero(g.ltab);
    for (int c = 0; c < 3; ++c) {
        auto grad = vsh_synthesis(g, sht_forward(g, component(v, c, 0, g.npts()), g.ltab), zero);
        for (int i = 0; i < g.npts(); ++i) M[i].col(c) = grad[i];
    }
    return M;
}

ScalarField surface_divergence(const SphereGrid& g, const VecField& v) {
    auto M = tangential_gradient(g, v);
    ScalarField d(g.npts());
    for (int i = 0; i < g.npts(); ++i) d[i] = M[i].trace();
    return d;
}

MatField surface_strain(const SphereGrid& g, const VecField& v) {
    auto M = tangential_gradient(g, v);
    for (int i = 0; i < g.npts(); ++i) {
        const Mat3 P = Mat3::Identity() - g.pos[i] * g.pos[i].transpose();
        M[i] = P * (0.5 * (M[i] + M[i].transpose())) * P;
    }
    return M;
}

bool is_tangential(const SphereGrid& g, const VecField& v, double tol) {
    double vmax = 0.0, nmax = 0.0;
    for (int i = 0; i < g.npts(); ++i) {
        vmax = std::max(vmax, v[i].norm());
        nmax = std::max(nmax, std::abs(v[i].dot(g.pos[i])));
    }
    return nmax <= tol * std::max(1.0, vmax);
}

VecField covariant_derivative(const SphereGrid& g, const VecField& w, const VecField& v) {
    require_size(w.size(), g.npts(), "covariant_derivative");
    require_size(v.size(), g.npts(), "covariant_derivative");
    if (!is_tangential(g, w) || !is_tangential(g, v))
        throw Error(ErrorKind::InvariantViolation, "covariant_derivative needs tangential inputs");
    auto M = tangential_gradient(g, v);
    VecField out(g.npts());
    for (int i = 0; i < g.npts(); ++i) {
        const Vec3 d = M[i].transpose() * w[i];
        out[i] = d - g.pos[i] * g.pos[i].dot(d);
    }
    return out;
}

VecField leray_project_sphere(const SphereGrid& g, const VecField& v) {
    require_size(v.size(), g.npts(), "leray_project_sphere");
    SphCoeffs A, B;
    vsh_analysis(g, v, A, B);
    auto grad = vsh_synthesis(g, A, SphCoeffs(g.lmax));
    VecField out(g.npts());
    for (int i = 0; i < g.npts(); ++i) {
        const Vec3 t = v[i] - g.pos[i] * g.pos[i].dot(v[i]);
        out[i] = t - grad[i];
    }
    return out;
}

SphCoeffs surface_vorticity(const SphereGrid& g, const VecField& v) {
    SphCoeffs A, B;
    vsh_analysis(g, v, A, B);
    for (int l = 0; l <= g.lmax; ++l)
        for (int m = -l; m <= l; ++m) B(l, m) *= -double(l) * (l + 1);
    return B;
}

// ---- shell ------------------------------------------------------------------

VecField radial_derivative(const ShellGrid& s, const VecField& u) {
    require_size(u.size(), s.npts(), "radial_derivative");
    const int ns = s.nsph();
    VecField d(s.npts(), Vec3::Zero());
    for (int j = 0; j < s.nrad; ++j)
        for (int k = 0; k < s.nrad; ++k) {
            const double c = s.Dr(j, k);
            if (c == 0.0) continue;
            for (int i = 0; i < ns; ++i) d[j * ns + i] += c * u[k * ns + i];
        }
    return d;
}

ScalarField radial_derivative(const ShellGrid& s, const ScalarField& phi) {
    require_size(phi.size(), s.npts(), "radial_derivative");
    const int ns = s.nsph();
    ScalarField d(s.npts(), 0.0);
    for (int j = 0; j < s.nrad; ++j)
        for (int k = 0; k < s.nrad; ++k) {
            const double c = s.Dr(j, k);
            for (int i = 0; i < ns; ++i) d[j * ns + i] += c * phi[k * ns + i];
        }
    return d;
}

VecField full_gradient_shell(const ShellGrid& s, const ScalarField& phi) {
    require_size(phi.size(), s.npts(), "full_gradient_shell");
    const int ns = s.nsph();
    auto dr = radial_derivative(s, phi);
    VecField out(s.npts());
    const SphCoeffs zero(s.base.ltab);
    for (int j = 0; j < s.nrad; ++j) {
        ScalarField layer(phi.begin() + j * ns, phi.begin() + (j + 1) * ns);
        auto grad = vsh_synthesis(s.base, sht_forward(s.base, layer, s.base.ltab), zero);
        const double ir = 1.0 / s.rnodes[j];
        for (int i = 0; i < ns; ++i) out[j * ns + i] = ir * grad[i] + s.base.pos[i] * dr[j * ns + i];
    }
    return out;
}

MatField full_gradient_shell(const ShellGrid& s, const VecField& u) {
    require_size(u.size(), s.npts(), "full_gradient_shell");
    const int ns = s.nsph();
    auto dr = radial_derivative(s, u);
    MatField out(s.npts());
    const SphCoeffs zero(s.base.ltab);
    for (int j = 0; j < s.nrad; ++j) {
        const double ir = 1.0 / s.rnodes[j];
        for (int i = 0; i < ns; ++i) out[j * ns + i] = s.base.pos[i] * dr[j * ns + i].transpose();
        for (int c = 0; c < 3; ++c) {
            auto grad = vsh_synthesis(s.base, sht_forward(s.base, component(u, c, j * ns, ns), s.base.ltab), zero);
            for (int i = 0; i < ns; ++i) out[j * ns + i].col(c) += ir * grad[i];
        }
    }
    return out;
}

MatField strain_shell(const ShellGrid& s, const VecField& u) {
    auto M = full_gradient_shell(s, u);
    for (auto& m : M) m = 0.5 * (m + m.transpose()).eval();
    return M;
}

ScalarField divergence_shell(const ShellGrid& s, const VecField& u) {
    auto M = full_gradient_shell(s, u);
    ScalarField d(s.npts());
    for (int q = 0; q < s.npts(); ++q) d[q] = M[q].trace();
    return d;
}

VecField tp_synthesis(const ShellGrid& s, const std::vector<SphCoeffs>& T, const std::vector<SphCoeffs>& P) {
    if (T.size() != static_cast<size_t>(s.nrad) || P.size() != static_cast<size_t>(s.nrad))
        throw Error(ErrorKind::ShapeError, "tp_synthesis needs one coefficient set per radial node");
    const int lmax = s.base.lmax, nl = n_lm(lmax), ns = s.nsph();
    VecField u(s.npts());
    for (int j = 0; j < s.nrad; ++j) {
        const double r = s.rnodes[j];
        SphCoeffs ur(lmax), A(lmax), B(lmax);
        for (int q = 0; q < nl; ++q) {
            cplx dp(0.0, 0.0);
            for (int k = 0; k < s.nrad; ++k) dp += s.Dr(j, k) * P[k].c[q];
            A.c[q] = (P[j].c[q] + r * dp) / r;
            B.c[q] = -T[j].c[q];
        }
        for (int l = 0; l <= lmax; ++l)
            for (int m = -l; m <= l; ++m) ur(l, m) = double(l) * (l + 1) * P[j](l, m) / r;
        auto radial = sht_inverse(s.base, ur);
        auto tan = vsh_synthesis(s.base, A, B);
        for (int i = 0; i < ns; ++i) u[j * ns + i] = radial[i] * s.base.pos[i] + tan[i];
    }
    return u;
}

// ---- rotations --------------------------------------------------------------

VecField rotation_field(const SphereGrid& g, const Vec3& a) {
    VecField v(g.npts());
    for (int i = 0; i < g.npts(); ++i) v[i] = a.cross(g.pos[i]);
    return v;
}

VecField rotation_field(const ShellGrid& s, const Vec3& a) {
    VecField v(s.npts());
    const int ns = s.nsph();
    for (int j = 0; j < s.nrad; ++j)
        for (int i = 0; i < ns; ++i) v[j * ns + i] = a.cross(s.rnodes[j] * s.base.pos[i]);
    return v;
}

// ---- inner products ----------------------------------------------------------

namespace {

template <class F>
double sphere_sum(const SphereGrid& g, size_t na, size_t nb, F&& f) {
    require_size(na, g.npts(), "inner");
    require_size(nb, g.npts(), "inner");
    double s = 0.0;
    for (int i = 0; i < g.npts(); ++i) s += g.weights[i] * f(i);
    return s;
}

template <class F>
double shell_sum(const ShellGrid& s, size_t na, size_t nb, F&& f) {
    require_size(na, s.npts(), "inner");
    require_size(nb, s.npts(), "inner");
    const int ns = s.nsph();
    double total = 0.0;
    for (int j = 0; j < s.nrad; ++j) {
        double sj = 0.0;
        for (int i = 0; i < ns; ++i) sj += s.base.weights[i] * f(j * ns + i);
        total += s.rweights[j] * s.rnodes[j] * s.rnodes[j] * sj;
    }
    return total;
}

}  // namespace

double inner(const SphereGrid& g, const ScalarField& a, const ScalarField& b) {
    return sphere_sum(g, a.size(), b.size(), [&](int i) { return a[i] * b[i]; });
}
double inner(const SphereGrid& g, const VecField& a, const VecField& b) {
    return sphere_sum(g, a.size(), b.size(), [&](int i) { return a[i].dot(b[i]); });
}
double inner(const SphereGrid& g, const MatField& a, const MatField& b) {
    return sphere_sum(g, a.size(), b.size(), [&](int i) { return a[i].cwiseProduct(b[i]).sum(); });
}
double inner(const ShellGrid& s, const ScalarField& a, const ScalarField& b) {
    return shell_sum(s, a.size(), b.size(), [&](int q) { return a[q] * b[q]; });
}
double inner(const ShellGrid& s, const VecField& a, const VecField& b) {
    return shell_sum(s, a.size(), b.size(), [&](int q) { return a[q].dot(b[q]); });
}
double inner(const ShellGrid& s, const MatField& a, const MatField& b) {
    return shell_sum(s, a.size(), b.size(), [&](int q) { return a[q].cwiseProduct(b[q]).sum(); });
}

double h1norm(const SphereGrid& g, const ScalarField& eta) {
    auto grad = tangential_gradient(g, eta);
    return std::sqrt(inner(g, eta, eta) + inner(g, grad, grad));
}
double h1norm(const SphereGrid& g, const VecField& v) {
    auto grad = tangential_gradient(g, v);
    return std::sqrt(inner(g, v, v) + inner(g, grad, grad));
}
double h1norm(const ShellGrid& s, const ScalarField& phi) {
    auto grad = full_gradient_shell(s, phi);
    return std::sqrt(inner(s, phi, phi) + inner(s, grad, grad));
}
double h1norm(const ShellGrid& s, const VecField& u) {
    auto grad = full_gradient_shell(s, u);
    return std::sqrt(inner(s, u, u) + inner(s, grad, grad));
}

namespace {

template <class G>
VecField remove_rotations_impl(const G& g, const VecField& v) {
    VecField r[3] = {rotation_field(g, Vec3::UnitX()), rotation_field(g, Vec3::UnitY()), rotation_field(g, Vec3::UnitZ())};
    Eigen::Matrix3d gram;
    Eigen::Vector3d rhs;
    for (int a = 0; a < 3; ++a) {
        rhs(a) = inner(g, v, r[a]);
        for (int b = 0; b < 3; ++b) gram(a, b) = inner(g, r[a], r[b]);
    }
    const Eigen::Vector3d c = gram.ldlt().solve(rhs);
    VecField out = v;
    for (size_t q = 0; q < out.size(); ++q) out[q] -= c(0) * r[0][q] + c(1) * r[1][q] + c(2) * r[2][q];
    return out;
}

}  // namespace

VecField remove_rotations(const SphereGrid& g, const VecField& v) { return remove_rotations_impl(g, v); }
VecField remove_rotations(const ShellGrid& s, const VecField& u) { return remove_rotations_impl(s, u); }

// ---- random fields -------------------------------------------------------------

ScalarField random_scalar(const SphereGrid& g, int band, std::mt19937_64& rng) {
    return sht_inverse(g, random_coeffs(g.lmax, band, 0, rng));
}

VecField random_tangent(const SphereGrid& g, int band, std::mt19937_64& rng) {
    auto A = random_coeffs(g.lmax, band, 1, rng);
    auto B = random_coeffs(g.lmax, band, 1, rng);
    return vsh_synthesis(g, A, B);
}

VecField random_solenoidal(const SphereGrid& g, int band, std::mt19937_64& rng) {
    auto B = random_coeffs(g.lmax, band, 1, rng);
    return vsh_synthesis(g, SphCoeffs(g.lmax), B);
}

ScalarField random_shell_scalar(const ShellGrid& s, int band, int rdeg, RadialScale scale, std::mt19937_64& rng) {
    const int ns = s.nsph();
    ScalarField out(s.npts(), 0.0);
    for (int k = 0; k <= rdeg; ++k) {
        auto eta = random_scalar(s.base, band, rng);
        for (int j = 0; j < s.nrad; ++j) {
            const double x = scale == RadialScale::Thin ? (s.rnodes[j] - 1.0) / s.eps : s.rnodes[j] - 1.0;
            const double w = std::pow(x, k);
            for (int i = 0; i < ns; ++i) out[j * ns + i] += w * eta[i];
        }
    }
    return out;
}

VecField random_shell_slip(const ShellGrid& s, int band, int rdeg, RadialScale scale, std::mt19937_64& rng) {
    const int ns = s.nsph();
    VecField out(s.npts(), Vec3::Zero());
    for (int k = 0; k <= rdeg; ++k) {
        auto v = random_tangent(s.base, band, rng);
        for (int j = 0; j < s.nrad; ++j) {
            const double x = scale == RadialScale::Thin ? (s.rnodes[j] - 1.0) / s.eps : s.rnodes[j] - 1.0;
            const double w = std::pow(x, k);
            for (int i = 0; i < ns; ++i) out[j * ns + i] += w * v[i];
        }
    }
    auto g = random_scalar(s.base, band, rng);
    auto q = random_profile(rdeg, rng);
    for (int j = 0; j < s.nrad; ++j) {
        const double b = wall_factor(s.rnodes[j], s.eps, scale) * radial_poly(q, s.rnodes[j], s.eps, scale);
        for (int i = 0; i < ns; ++i) out[j * ns + i] += b * g[i] * s.base.pos[i];
    }
    return out;
}

VecField random_shell_solenoidal(const ShellGrid& s, int band, int rdeg, RadialScale scale, std::mt19937_64& rng) {
    const int lmax = s.base.lmax;
    std::vector<SphCoeffs> T(s.nrad, SphCoeffs(lmax)), P(s.nrad, SphCoeffs(lmax));
    for (int k = 0; k <= rdeg; ++k) {
        auto tau = random_coeffs(lmax, band, 1, rng);
        auto pi = random_coeffs(lmax, band, 1, rng);
        for (int j = 0; j < s.nrad; ++j) {
            const double r = s.rnodes[j];
            const double x = scale == RadialScale::Thin ? (r - 1.0) / s.eps : r - 1.0;
            const double w = std::pow(x, k);
            // Thin poloidal potentials carry a factor eps so that tangential velocities stay O(1).
            const double b = wall_factor(r, s.eps, scale) * (scale == RadialScale::Thin ? s.eps : 1.0);
            for (size_t q = 0; q < tau.c.size(); ++q) {
                T[j].c[q] += w * tau.c[q];
                P[j].c[q] += w * b * pi.c[q];
            }
        }
    }
    return tp_synthesis(s, T, P);
}

// ---- probes -------------------------------------------------------------------

ProbeKind parse_probe_kind(const std::string& name) {
    if (name == "korn_sphere") return ProbeKind::KornSphere;
    if (name == "korn_shell_uniform") return ProbeKind::KornShellUniform;
    if (name == "ladyzhenskaya") return ProbeKind::Ladyzhenskaya;
    if (name == "product_thin") return ProbeKind::ProductThin;
    if (name == "normal_trace") return ProbeKind::NormalTrace;
    throw Error(ErrorKind::InvalidParameter, "unknown probe kind '" + name + "'");
}

std::string to_string(ProbeKind k) {
    switch (k) {
        case ProbeKind::KornSphere: return "korn_sphere";
        case ProbeKind::KornShellUniform: return "korn_shell_uniform";
        case ProbeKind::Ladyzhenskaya: return "ladyzhenskaya";
        case ProbeKind::ProductThin: return "product_thin";
        case ProbeKind::NormalTrace: return "normal_trace";
    }
    return "unknown";
}

namespace {

struct RatioAccumulator {
    ProbeEntry e;
    void add(double lhs, double rhs) {
        if (rhs <= 1e-12 * std::max(1.0, std::abs(lhs))) {
            ++e.skipped;
            if (lhs > 1e-10) e.infinite = true;
            return;
        }
        const double r = lhs / rhs;
        if (e.used == 0) e.min_ratio = e.max_ratio = r;
        e.max_ratio = std::max(e.max_ratio, r);
        e.min_ratio = std::min(e.min_ratio, r);
        ++e.used;
    }
};

double l4norm(const SphereGrid& g, const ScalarField& f) {
    double s = 0.0;
    for (int i = 0; i < g.npts(); ++i) s += g.weights[i] * std::pow(f[i], 4);
    return std::pow(s, 0.25);
}

}  // namespace

ProbeReport probe_inequality(ProbeKind kind, const ProbeOptions& opt) {
    if (opt.samples < 1) throw Error(ErrorKind::InvalidParameter, "probe needs at least one sample");
    ProbeReport rep;
    rep.kind = kind;
    const bool sphere_only = kind == ProbeKind::KornSphere || kind == ProbeKind::Ladyzhenskaya;

    if (sphere_only) {
        const auto g = make_sphere_grid(opt.lmax);
        std::mt19937_64 rng(opt.seed);
        RatioAccumulator acc;
        for (int n = 0; n < opt.samples; ++n) {
            if (kind == ProbeKind::KornSphere) {
                auto v = random_tangent(g, opt.band, rng);
                if (opt.orthogonalize) v = remove_rotations(g, v);
                acc.add(h1norm(g, v), l2norm(g, surface_strain(g, v)));
            } else {
                auto eta = random_scalar(g, opt.band, rng);
                acc.add(l4norm(g, eta), std::sqrt(l2norm(g, eta) * h1norm(g, eta)));
            }
        }
        if (opt.include_killing && kind == ProbeKind::KornSphere) {
            auto v = rotation_field(g, Vec3::UnitZ());
            if (opt.orthogonalize) v = remove_rotations(g, v);
            acc.add(h1norm(g, v), l2norm(g, surface_strain(g, v)));
        }
        rep.entries.push_back(acc.e);
    } else {
        for (double eps : opt.eps_list) {
            const auto s = make_shell_grid(opt.lmax, eps, opt.nrad);
            std::mt19937_64 rng(opt.seed);
            RatioAccumulator acc;
            acc.e.eps = eps;
            for (int n = 0; n < opt.samples; ++n) {
                const RadialScale scale = (n % 2 == 0) ? RadialScale::Thin : RadialScale::Fixed;
                if (kind == ProbeKind::KornShellUniform) {
                    auto u = random_shell_slip(s, opt.band, opt.rdeg, scale, rng);
                    if (opt.orthogonalize) u = remove_rotations(s, u);
                    acc.add(h1norm(s, u), l2norm(s, strain_shell(s, u)));
                } else if (kind == ProbeKind::NormalTrace) {
                    auto u = random_shell_slip(s, opt.band, opt.rdeg, scale, rng);
                    ScalarField un(s.npts());
                    for (int j = 0; j < s.nrad; ++j)
                        for (int i = 0; i < s.nsph(); ++i) un[s.idx(j, i)] = u[s.idx(j, i)].dot(s.base.pos[i]);
                    acc.add(l2norm(s, un), eps * h1norm(s, u));
                } else {
                    auto eta = random_scalar(s.base, opt.band, rng);
                    auto phi = random_shell_scalar(s, opt.band, opt.rdeg, scale, rng);
                    ScalarField prod(s.npts());
                    for (int j = 0; j < s.nrad; ++j)
                        for (int i = 0; i < s.nsph(); ++i) prod[s.idx(j, i)] = eta[i] * phi[s.idx(j, i)];
                    acc.add(l2norm(s, prod), std::sqrt(std::sqrt(l2norm(s.base, eta) * h1norm(s.base, eta)) *
                                                       std::sqrt(l2norm(s, phi) * h1norm(s, phi))));
                }
            }
            if (opt.include_killing && kind == ProbeKind::KornShellUniform) {
                auto u = rotation_field(s, Vec3::UnitZ());
                if (opt.orthogonalize) u = remove_rotations(s, u);
                acc.add(h1norm(s, u), l2norm(s, strain_shell(s, u)));
            }
            rep.entries.push_back(acc.e);
        }
    }

    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& e : rep.entries) {
        rep.killing_flagged = rep.killing_flagged || e.infinite;
        if (e.used == 0) continue;
        hi = std::max(hi, e.max_ratio);
        lo = std::min(lo, e.max_ratio);
    }
    rep.constant = hi;
    rep.spread = (hi > 0.0 && std::isfinite(lo)) ? hi / lo : 1.0;
    return rep;
}

}  // namespace thinshell
