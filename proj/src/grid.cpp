#include "thinshell/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "thinshell/errors.hpp"

namespace thinshell {

namespace {

constexpr double kPi = std::numbers::pi;

void legendre_row(int lmax, double x, double s, double* p, double* dp) {
    double pmm = 1.0 / std::sqrt(4.0 * kPi);
    for (int m = 0; m <= lmax; ++m) {
        if (m > 0) pmm *= -std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s;
        p[tri_index(m, m)] = pmm;
        if (m + 1 <= lmax) p[tri_index(m + 1, m)] = std::sqrt(2.0 * m + 3.0) * x * pmm;
        for (int l = m + 2; l <= lmax; ++l) {
            const double ll = l, mm = m;
            const double a = std::sqrt((4.0 * ll * ll - 1.0) / (ll * ll - mm * mm));
            const double b = std::sqrt(((ll - 1.0) * (ll - 1.0) - mm * mm) / (4.0 * (ll - 1.0) * (ll - 1.0) - 1.0));
            p[tri_index(l, m)] = a * (x * p[tri_index(l - 1, m)] - b * p[tri_index(l - 2, m)]);
        }
    }
    // sin(t) dP_l^m/dt = l cos(t) P_l^m - sqrt((2l+1)/(2l-1) (l^2-m^2)) P_{l-1}^m
    for (int m = 0; m <= lmax; ++m) {
        for (int l = m; l <= lmax; ++l) {
            double v = l * x * p[tri_index(l, m)];
            if (l - 1 >= m) {
                const double ll = l, mm = m;
                v -= std::sqrt((2.0 * ll + 1.0) / (2.0 * ll - 1.0) * (ll * ll - mm * mm)) * p[tri_index(l - 1, m)];
            }
            dp[tri_index(l, m)] = v / s;
        }
    }
}

// Fourier coefficients (2 pi / nlon) sum_k f_k e^{-i m phi_k} for m = 0..mmax at one latitude.
void fourier_forward(const SphereGrid& g, int mmax, const double* f, cplx* out) {
    const double scale = 2.0 * kPi / g.nlon;
    for (int m = 0; m <= mmax; ++m) {
        const double* cm = &g.cosm[m * g.nlon];
        const double* sm = &g.sinm[m * g.nlon];
        double re = 0.0, im = 0.0;
        for (int k = 0; k < g.nlon; ++k) {
            re += f[k] * cm[k];
            im -= f[k] * sm[k];
        }
        out[m] = cplx(re * scale, im * scale);
    }
}

// f_k = sum_{m>=0} (2 - delta_m0) Re(G_m e^{i m phi_k}).
void fourier_inverse(const SphereGrid& g, int mmax, const cplx* G, double* f) {
    for (int k = 0; k < g.nlon; ++k) f[k] = G[0].real();
    for (int m = 1; m <= mmax; ++m) {
        const double* cm = &g.cosm[m * g.nlon];
        const double* sm = &g.sinm[m * g.nlon];
        const double re = 2.0 * G[m].real(), im = 2.0 * G[m].imag();
        for (int k = 0; k < g.nlon; ++k) f[k] += re * cm[k] - im * sm[k];
    }
}

void check_grid_size(const SphereGrid& g, size_t n) {
    if (n != static_cast<size_t>(g.npts()))
        throw Error(ErrorKind::ShapeError, "nodal field has " + std::to_string(n) + " values, grid has " +
                                               std::to_string(g.npts()));
}

int resolve_degree(const SphereGrid& g, int L) {
    if (L < 0) return g.lmax;
    if (L > g.ltab) throw Error(ErrorKind::InvalidParameter, "transform degree exceeds grid tables");
    return L;
}

}  // namespace

void SphCoeffs::enforce_real() {
    for (int l = 0; l <= lmax; ++l) {
        (*this)(l, 0) = cplx((*this)(l, 0).real(), 0.0);
        for (int m = 1; m <= l; ++m) {
            const double sgn = (m % 2 == 0) ? 1.0 : -1.0;
            (*this)(l, -m) = sgn * std::conj((*this)(l, m));
        }
    }
}

double SphCoeffs::norm2() const {
    double s = 0.0;
    for (const auto& z : c) s += std::norm(z);
    return s;
}

void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    auto legendre = [n](double z, double& pn, double& dpn) {
        double p0 = 1.0, p1 = z;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        if (n == 1) p0 = 1.0;
        pn = p1;
        dpn = n * (z * p1 - p0) / (z * z - 1.0);
    };
    for (int i = 0; i < n; ++i) {
        double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double pn = 0.0, dpn = 1.0;
        for (int it = 0; it < 100; ++it) {
            legendre(z, pn, dpn);
            const double dz = pn / dpn;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        legendre(z, pn, dpn);
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dpn * dpn);
    }
}

SphereGrid make_sphere_grid(int lmax) {
    if (lmax < 2) throw Error(ErrorKind::InvalidParameter, "lmax must be >= 2, got " + std::to_string(lmax));
    SphereGrid g;
    g.lmax = lmax;
    g.ltab = lmax + 1;
    g.nlat = (3 * lmax + 5) / 2;
    g.nlon = 3 * lmax + 4;

    std::vector<double> x, w;
    gauss_legendre(g.nlat, x, w);
    g.costh = x;
    g.wlat = w;
    g.theta.resize(g.nlat);
    g.sinth.resize(g.nlat);
    for (int i = 0; i < g.nlat; ++i) {
        g.theta[i] = std::acos(x[i]);
        g.sinth[i] = std::sqrt((1.0 - x[i]) * (1.0 + x[i]));
    }
    g.phi.resize(g.nlon);
    for (int k = 0; k < g.nlon; ++k) g.phi[k] = 2.0 * kPi * k / g.nlon;

    const int np = g.npts();
    g.weights.resize(np);
    g.pos.resize(np);
    g.e_theta.resize(np);
    g.e_phi.resize(np);
    for (int i = 0; i < g.nlat; ++i) {
        const double ct = g.costh[i], st = g.sinth[i];
        for (int k = 0; k < g.nlon; ++k) {
            const double cp = std::cos(g.phi[k]), sp = std::sin(g.phi[k]);
            const int n = i * g.nlon + k;
            g.weights[n] = g.wlat[i] * 2.0 * kPi / g.nlon;
            g.pos[n] = Vec3(st * cp, st * sp, ct);
            g.e_theta[n] = Vec3(ct * cp, ct * sp, -st);
            g.e_phi[n] = Vec3(-sp, cp, 0.0);
        }
    }

    const int nt = n_tri(g.ltab);
    g.plm.resize(static_cast<size_t>(g.nlat) * nt);
    g.dplm.resize(static_cast<size_t>(g.nlat) * nt);
    for (int i = 0; i < g.nlat; ++i)
        legendre_row(g.ltab, g.costh[i], g.sinth[i], &g.plm[i * nt], &g.dplm[i * nt]);

    g.cosm.resize(static_cast<size_t>(g.ltab + 1) * g.nlon);
    g.sinm.resize(static_cast<size_t>(g.ltab + 1) * g.nlon);
    for (int m = 0; m <= g.ltab; ++m)
        for (int k = 0; k < g.nlon; ++k) {
            g.cosm[m * g.nlon + k] = std::cos(m * g.phi[k]);
            g.sinm[m * g.nlon + k] = std::sin(m * g.phi[k]);
        }
    return g;
}

std::vector<cplx> ylm_nodal(const SphereGrid& g, int l, int m) {
    if (l < 0 || l > g.ltab || std::abs(m) > l)
        throw Error(ErrorKind::InvalidParameter, "Y_l^m index out of range");
    std::vector<cplx> out(g.npts());
    const int am = std::abs(m);
    const double sgn = (m < 0 && am % 2 == 1) ? -1.0 : 1.0;
    for (int i = 0; i < g.nlat; ++i)
        for (int k = 0; k < g.nlon; ++k)
            out[i * g.nlon + k] = sgn * g.p(i, l, am) * std::polar(1.0, m * g.phi[k]);
    return out;
}

double sphere_quadrature(const SphereGrid& g, const ScalarField& f) {
    check_grid_size(g, f.size());
    double s = 0.0;
    for (int n = 0; n < g.npts(); ++n) s += g.weights[n] * f[n];
    return s;
}

SphCoeffs sht_forward(const SphereGrid& g, const ScalarField& f, int L) {
    check_grid_size(g, f.size());
    L = resolve_degree(g, L);
    SphCoeffs out(L);
    std::vector<cplx> F(L + 1);
    for (int i = 0; i < g.nlat; ++i) {
        fourier_forward(g, L, &f[i * g.nlon], F.data());
        for (int m = 0; m <= L; ++m) {
            const cplx Fm = F[m] * g.wlat[i];
            for (int l = m; l <= L; ++l) out(l, m) += Fm * g.p(i, l, m);
        }
    }
    out.enforce_real();
    return out;
}

ScalarField sht_inverse(const SphereGrid& g, const SphCoeffs& c) {
    if (c.lmax > g.ltab || c.lmax < 0) throw Error(ErrorKind::ShapeError, "coefficient lmax does not match grid");
    const int L = c.lmax;
    ScalarField f(g.npts());
    std::vector<cplx> G(L + 1);
    for (int i = 0; i < g.nlat; ++i) {
        for (int m = 0; m <= L; ++m) {
            cplx s(0.0, 0.0);
            for (int l = m; l <= L; ++l) s += c(l, m) * g.p(i, l, m);
            G[m] = s;
        }
        fourier_inverse(g, L, G.data(), &f[i * g.nlon]);
    }
    return f;
}

void vsh_analysis(const SphereGrid& g, const VecField& w, SphCoeffs& A, SphCoeffs& B, int L) {
    check_grid_size(g, w.size());
    L = resolve_degree(g, L);
    A = SphCoeffs(L);
    B = SphCoeffs(L);
    std::vector<double> wt(g.nlon), wp(g.nlon);
    std::vector<cplx> Ft(L + 1), Fp(L + 1);
    const cplx I(0.0, 1.0);
    for (int i = 0; i < g.nlat; ++i) {
        for (int k = 0; k < g.nlon; ++k) {
            const int n = i * g.nlon + k;
            wt[k] = w[n].dot(g.e_theta[n]);
            wp[k] = w[n].dot(g.e_phi[n]);
        }
        fourier_forward(g, L, wt.data(), Ft.data());
        fourier_forward(g, L, wp.data(), Fp.data());
        const double s = g.sinth[i], wl = g.wlat[i];
        for (int m = 0; m <= L; ++m) {
            const cplx ims = I * (double(m) / s);
            for (int l = std::max(m, 1); l <= L; ++l) {
                const double P = g.p(i, l, m), dP = g.dp(i, l, m);
                A(l, m) += wl * (Ft[m] * dP - ims * Fp[m] * P);
                B(l, m) += wl * (Fp[m] * dP + ims * Ft[m] * P);
            }
        }
    }
    for (int l = 1; l <= L; ++l) {
        const double inv = 1.0 / (l * (l + 1.0));
        for (int m = 0; m <= l; ++m) {
            A(l, m) *= inv;
            B(l, m) *= inv;
        }
    }
    A.enforce_real();
    B.enforce_real();
}

VecField vsh_synthesis(const SphereGrid& g, const SphCoeffs& A, const SphCoeffs& B) {
    if (A.lmax != B.lmax || A.lmax > g.ltab) throw Error(ErrorKind::ShapeError, "potential lmax does not match grid");
    const int L = A.lmax;
    VecField w(g.npts());
    std::vector<cplx> Gt(L + 1), Gp(L + 1);
    std::vector<double> wt(g.nlon), wp(g.nlon);
    const cplx I(0.0, 1.0);
    for (int i = 0; i < g.nlat; ++i) {
        const double s = g.sinth[i];
        for (int m = 0; m <= L; ++m) {
            const cplx ims = I * (double(m) / s);
            cplx st(0.0, 0.0), sp(0.0, 0.0);
            for (int l = std::max(m, 1); l <= L; ++l) {
                const double P = g.p(i, l, m), dP = g.dp(i, l, m);
                st += A(l, m) * dP - ims * B(l, m) * P;
                sp += ims * A(l, m) * P + B(l, m) * dP;
            }
            Gt[m] = st;
            Gp[m] = sp;
        }
        fourier_inverse(g, L, Gt.data(), wt.data());
        fourier_inverse(g, L, Gp.data(), wp.data());
        for (int k = 0; k < g.nlon; ++k) {
            const int n = i * g.nlon + k;
            w[n] = wt[k] * g.e_theta[n] + wp[k] * g.e_phi[n];
        }
    }
    return w;
}

ShellGrid make_shell_grid(int lmax, double eps, int nrad) {
    if (!(eps > 0.0 && eps < 1.0)) throw Error(ErrorKind::InvalidParameter, "eps must lie in (0,1)");
    if (nrad < 2) throw Error(ErrorKind::InvalidParameter, "nrad must be >= 2");
    ShellGrid g;
    g.base = make_sphere_grid(lmax);
    g.eps = eps;
    g.nrad = nrad;
    const int N = nrad - 1;

    std::vector<double> x(nrad);
    for (int j = 0; j < nrad; ++j) x[j] = -std::cos(kPi * j / N);
    x[0] = -1.0;
    x[N] = 1.0;

    // Clenshaw-Curtis weights on [-1,1].
    std::vector<double> wcc(nrad, 0.0);
    {
        std::vector<double> th(nrad);
        for (int j = 0; j < nrad; ++j) th[j] = kPi * j / N;
        if (N % 2 == 0) {
            wcc[0] = wcc[N] = 1.0 / (N * N - 1.0);
        } else {
            wcc[0] = wcc[N] = 1.0 / (double(N) * N);
        }
        for (int j = 1; j < N; ++j) {
            double v = 1.0;
            if (N % 2 == 0) {
                for (int k = 1; k < N / 2; ++k) v -= 2.0 * std::cos(2.0 * k * th[j]) / (4.0 * k * k - 1.0);
                v -= std::cos(N * th[j]) / (N * N - 1.0);
            } else {
                for (int k = 1; k <= (N - 1) / 2; ++k) v -= 2.0 * std::cos(2.0 * k * th[j]) / (4.0 * k * k - 1.0);
            }
            wcc[j] = 2.0 * v / N;
        }
    }

    g.rnodes.resize(nrad);
    g.rweights.resize(nrad);
    for (int j = 0; j < nrad; ++j) {
        g.rnodes[j] = 1.0 + 0.5 * eps * (x[j] + 1.0);
        g.rweights[j] = 0.5 * eps * wcc[j];
    }
    g.rnodes[0] = 1.0;
    g.rnodes[N] = 1.0 + eps;

    // Barycentric differentiation matrix for Chebyshev-Gauss-Lobatto points.
    std::vector<double> bw(nrad);
    for (int j = 0; j < nrad; ++j) bw[j] = ((j % 2 == 0) ? 1.0 : -1.0) * ((j == 0 || j == N) ? 0.5 : 1.0);
    g.Dr = Eigen::MatrixXd::Zero(nrad, nrad);
    for (int i = 0; i < nrad; ++i) {
        double diag = 0.0;
        for (int j = 0; j < nrad; ++j) {
            if (i == j) continue;
            const double d = (bw[j] / bw[i]) / (x[i] - x[j]);
            g.Dr(i, j) = d;
            diag -= d;
        }
        g.Dr(i, i) = diag;
    }
    g.Dr *= 2.0 / eps;

    g.from_cheb.resize(nrad, nrad);
    for (int j = 0; j < nrad; ++j)
        for (int k = 0; k < nrad; ++k) g.from_cheb(j, k) = std::cos(k * std::acos(std::clamp(x[j], -1.0, 1.0)));
    g.to_cheb = g.from_cheb.inverse();
    return g;
}

double shell_quadrature(const ShellGrid& g, const ScalarField& phi) {
    if (phi.size() != static_cast<size_t>(g.npts()))
        throw Error(ErrorKind::ShapeError, "volume field size does not match shell grid");
    const int ns = g.nsph();
    double s = 0.0;
    for (int j = 0; j < g.nrad; ++j) {
        const double rw = g.rweights[j] * g.rnodes[j] * g.rnodes[j];
        double sj = 0.0;
        for (int i = 0; i < ns; ++i) sj += g.base.weights[i] * phi[j * ns + i];
        s += rw * sj;
    }
    return s;
}

RadialSphCoeffs shell_forward(const ShellGrid& g, const ScalarField& f) {
    if (f.size() != static_cast<size_t>(g.npts()))
        throw Error(ErrorKind::ShapeError, "volume field size does not match shell grid");
    const int ns = g.nsph(), nl = n_lm(g.base.lmax);
    std::vector<SphCoeffs> layers(g.nrad);
    for (int j = 0; j < g.nrad; ++j) {
        ScalarField fj(f.begin() + j * ns, f.begin() + (j + 1) * ns);
        layers[j] = sht_forward(g.base, fj);
    }
    RadialSphCoeffs out(g.base.lmax, g.nrad, g.eps);
    for (int k = 0; k < g.nrad; ++k)
        for (int q = 0; q < nl; ++q) {
            cplx s(0.0, 0.0);
            for (int j = 0; j < g.nrad; ++j) s += g.to_cheb(k, j) * layers[j].c[q];
            out.c[k * nl + q] = s;
        }
    return out;
}

ScalarField shell_inverse(const ShellGrid& g, const RadialSphCoeffs& c) {
    if (c.lmax != g.base.lmax || c.nrad != g.nrad) throw Error(ErrorKind::ShapeError, "coefficients do not match shell grid");
    const int ns = g.nsph(), nl = n_lm(g.base.lmax);
    ScalarField f(g.npts());
    SphCoeffs layer(g.base.lmax);
    for (int j = 0; j < g.nrad; ++j) {
        for (int q = 0; q < nl; ++q) {
            cplx s(0.0, 0.0);
            for (int k = 0; k < g.nrad; ++k) s += g.from_cheb(j, k) * c.c[k * nl + q];
            layer.c[q] = s;
        }
        ScalarField fj = sht_inverse(g.base, layer);
        std::copy(fj.begin(), fj.end(), f.begin() + j * ns);
    }
    return f;
}

RadialSphCoeffs chebyshev_diff(const RadialSphCoeffs& c) {
    if (c.nrad < 4) throw Error(ErrorKind::InvalidParameter, "chebyshev_diff needs nrad >= 4");
    const int nl = n_lm(c.lmax), N = c.nrad - 1;
    RadialSphCoeffs d(c.lmax, c.nrad, c.eps);
    const double scale = 2.0 / c.eps;
    for (int q = 0; q < nl; ++q) {
        // b_{k-1} = b_{k+1} + 2 k a_k, with b_N = b_{N+1} = 0 and b_0 halved.
        std::vector<cplx> b(c.nrad + 1, cplx(0.0, 0.0));
        for (int k = N; k >= 1; --k) b[k - 1] = b[k + 1] + 2.0 * k * c.c[k * nl + q];
        b[0] *= 0.5;
        for (int k = 0; k < c.nrad; ++k) d.c[k * nl + q] = scale * b[k];
    }
    return d;
}

}  // namespace thinshell
