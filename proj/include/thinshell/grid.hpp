#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace thinshell {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Nodal fields. On a sphere grid the index is `ilat * nlon + ilon`; on a shell
/// grid it is `j * npts_sphere + i` with j the radial node.
using ScalarField = std::vector<double>;
using VecField = std::vector<Vec3>;
using MatField = std::vector<Mat3>;

inline int lm_index(int l, int m) { return l * l + l + m; }
inline int n_lm(int lmax) { return (lmax + 1) * (lmax + 1); }
inline int tri_index(int l, int m) { return l * (l + 1) / 2 + m; }
inline int n_tri(int lmax) { return (lmax + 1) * (lmax + 2) / 2; }

/// Orthonormal complex spherical-harmonic coefficients c_{l,m}, |m| <= l <= lmax.
struct SphCoeffs {
    int lmax = 0;
    std::vector<cplx> c;

    SphCoeffs() = default;
    explicit SphCoeffs(int lmax_) : lmax(lmax_), c(n_lm(lmax_), cplx(0.0, 0.0)) {}

    cplx& operator()(int l, int m) { return c[lm_index(l, m)]; }
    const cplx& operator()(int l, int m) const { return c[lm_index(l, m)]; }

    /// Overwrites the m < 0 entries with (-1)^m conj(c_{l,|m|}).
    void enforce_real();
    double norm2() const;
};

struct SphereGrid {
    int lmax = 0;
    int ltab = 0;  // Legendre tables run to lmax+1 so Cartesian components of degree-lmax fields transform exactly
    int nlat = 0;
    int nlon = 0;
    std::vector<double> theta, costh, sinth, wlat;  // per latitude; wlat sums to 2
    std::vector<double> phi;                        // per longitude
    std::vector<double> weights;                    // per node; sums to 4*pi
    VecField pos, e_theta, e_phi;                   // per node
    std::vector<double> plm, dplm;                  // [ilat * n_tri + tri(l,m)], m >= 0
    std::vector<double> cosm, sinm;                 // [m * nlon + ilon]

    int npts() const { return nlat * nlon; }
    double p(int ilat, int l, int m) const { return plm[ilat * n_tri(ltab) + tri_index(l, m)]; }
    double dp(int ilat, int l, int m) const { return dplm[ilat * n_tri(ltab) + tri_index(l, m)]; }
};

/// Gauss-Legendre x equispaced grid sized by the 3/2 rule applied to lmax+1.
SphereGrid make_sphere_grid(int lmax);

/// Y_l^m evaluated at every node (Condon-Shortley phase, orthonormal).
std::vector<cplx> ylm_nodal(const SphereGrid& g, int l, int m);

/// Forward transform truncated at degree L (default g.lmax, at most g.ltab).
SphCoeffs sht_forward(const SphereGrid& g, const ScalarField& f, int L = -1);
/// Accepts coefficients of any degree up to g.ltab.
ScalarField sht_inverse(const SphereGrid& g, const SphCoeffs& c);

/// Helmholtz potentials of the tangential part of w: w_tan = grad A + n x grad B.
void vsh_analysis(const SphereGrid& g, const VecField& w, SphCoeffs& A, SphCoeffs& B, int L = -1);
VecField vsh_synthesis(const SphereGrid& g, const SphCoeffs& A, const SphCoeffs& B);

/// Sphere quadrature of a nodal scalar.
double sphere_quadrature(const SphereGrid& g, const ScalarField& f);

struct ShellGrid {
    SphereGrid base;
    double eps = 0.0;
    int nrad = 0;
    std::vector<double> rnodes;    // increasing, rnodes.front()=1, rnodes.back()=1+eps
    std::vector<double> rweights;  // Clenshaw-Curtis weights for int dr
    Eigen::MatrixXd Dr;            // collocation d/dr
    Eigen::MatrixXd from_cheb;     // nodal = from_cheb * chebyshev coefficients
    Eigen::MatrixXd to_cheb;

    int nsph() const { return base.npts(); }
    int npts() const { return nrad * base.npts(); }
    int idx(int j, int i) const { return j * base.npts() + i; }
    bool same_shape(const ShellGrid& o) const {
        return base.lmax == o.base.lmax && nrad == o.nrad && eps == o.eps;
    }
};

ShellGrid make_shell_grid(int lmax, double eps, int nrad);

/// int_{S2} int_1^{1+eps} phi(r y) r^2 dr dH2(y).
double shell_quadrature(const ShellGrid& g, const ScalarField& phi);

/// Spherical harmonics in angle, Chebyshev polynomials of the mapped variable in r.
struct RadialSphCoeffs {
    int lmax = 0;
    int nrad = 0;
    double eps = 0.0;
    std::vector<cplx> c;  // [k * n_lm + lm_index(l,m)]

    RadialSphCoeffs() = default;
    RadialSphCoeffs(int lmax_, int nrad_, double eps_)
        : lmax(lmax_), nrad(nrad_), eps(eps_), c(static_cast<size_t>(nrad_) * n_lm(lmax_)) {}

    cplx& operator()(int l, int m, int k) { return c[k * n_lm(lmax) + lm_index(l, m)]; }
    const cplx& operator()(int l, int m, int k) const { return c[k * n_lm(lmax) + lm_index(l, m)]; }
};

RadialSphCoeffs shell_forward(const ShellGrid& g, const ScalarField& f);
ScalarField shell_inverse(const ShellGrid& g, const RadialSphCoeffs& c);
RadialSphCoeffs chebyshev_diff(const RadialSphCoeffs& c);

/// Gauss-Legendre nodes on [-1,1] in decreasing order, with weights.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w);

}  // namespace thinshell
