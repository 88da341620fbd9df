#include "thinshell/shell_ns.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "thinshell/errors.hpp"

namespace thinshell {

// Radial unknowns are T and the reduced poloidal potential p = P / r. Both are polynomials in r on
// the collocation nodes, which keeps every velocity component polynomial. With L = l(l+1) and
// g = r D_l P = r^2 p'' + 4 r p' + (2 - L) p:
//   u:     u_r = L p,       A = 2 p + r p',   B = -T
//   curl:  R = L T / r,     A = T / r + T',   B = g / r
// The time stepper is a radial Galerkin scheme. T and p are expanded in orthonormal bases of the
// polynomials that satisfy the stress-free conditions (r T' = T; p = 0 and 2 p' + r p'' = 0 on both
// walls) and every inner product is evaluated on an oversampled Clenshaw-Curtis grid.
struct ShellOperators {
    // Index [l] for l = 1..lmax; [0] unused.
    std::vector<Eigen::MatrixXd> Dl;  // D_l on T (collocation)
    std::vector<Eigen::MatrixXd> G;   // p -> g (collocation)
    std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> dirichlet;  // G with p = 0 at both walls

    ShellGrid fine;     // quadrature grid, nq = 2 nrad + 4 radial nodes
    Eigen::MatrixXd E;  // coarse nodal values -> fine nodal values
    std::vector<Eigen::MatrixXd> Phi, Psi;  // stress-free bases for T and p (coarse nodal columns)
    std::vector<Eigen::MatrixXd> MT, KT, MP, KP;
    std::vector<Eigen::MatrixXd> WT;        // fine B_N -> toroidal load
    std::vector<Eigen::MatrixXd> WR, WA;    // fine R_N, A_N -> poloidal load
    std::vector<Eigen::MatrixXd> PT, PP;    // coarse nodal T, p -> L2 projection loads
    std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> massT, massP;
    std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> tor_euler, tor_cn, pol_euler, pol_cn;
};

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void validate(const ShellSolverOptions& opt, const ShellGrid& g) {
    if (!(opt.nu > 0.0)) throw Error(ErrorKind::InvalidParameter, "viscosity must be positive");
    if (!(opt.dt > 0.0)) throw Error(ErrorKind::InvalidParameter, "time step must be positive");
    if (opt.euler_steps < 0) throw Error(ErrorKind::InvalidParameter, "euler_steps must be >= 0");
    if (g.nrad < 8) throw Error(ErrorKind::ConfigurationError, "shell solver needs nrad >= 8");
}

Eigen::PartialPivLU<MatrixXd> factor(const MatrixXd& M, const char* what, int l) {
    Eigen::PartialPivLU<MatrixXd> lu(M);
    if (!(lu.rcond() > 1e-14)) {
        std::ostringstream msg;
        msg << what << " system for l=" << l << " is singular (rcond " << lu.rcond() << "); increase nrad";
        throw Error(ErrorKind::ConfigurationError, msg.str());
    }
    return lu;
}

VectorXd radii(const ShellGrid& g) { return Eigen::Map<const VectorXd>(g.rnodes.data(), g.nrad); }

// Values at the nodes of `to` of the polynomial interpolating nodal data on `from`.
MatrixXd interp_matrix(const ShellGrid& from, const ShellGrid& to) {
    MatrixXd C(to.nrad, from.nrad);
    for (int k = 0; k < to.nrad; ++k) {
        const double x = std::clamp(2.0 * (to.rnodes[k] - 1.0) / from.eps - 1.0, -1.0, 1.0);
        for (int m = 0; m < from.nrad; ++m) C(k, m) = std::cos(m * std::acos(x));
    }
    return C * from.to_cheb;
}

// Orthonormal basis of the null space of the constraint rows C.
MatrixXd null_space(const MatrixXd& C) {
    Eigen::JacobiSVD<MatrixXd> svd(C, Eigen::ComputeFullV);
    const int k = static_cast<int>(C.rows());
    return svd.matrixV().rightCols(C.cols() - k);
}

// Operators that do not depend on the time step.
void build_static(const ShellGrid& g, ShellOperators& ops) {
    const int n = g.nrad, lmax = g.base.lmax;
    const MatrixXd I = MatrixXd::Identity(n, n);
    const MatrixXd D2 = g.Dr * g.Dr;
    const VectorXd r = radii(g);
    const VectorXd r2 = r.array().square();
    ops.Dl.assign(lmax + 1, MatrixXd());
    ops.G.assign(lmax + 1, MatrixXd());
    ops.dirichlet.resize(lmax + 1);
    for (int l = 1; l <= lmax; ++l) {
        const double L = l * (l + 1.0);
        ops.Dl[l] = D2 + r.cwiseInverse().asDiagonal() * (2.0 * g.Dr);
        ops.Dl[l].diagonal() -= L * r2.cwiseInverse();
        ops.G[l] = r2.asDiagonal() * D2 + r.asDiagonal() * (4.0 * g.Dr) + (2.0 - L) * I;
        MatrixXd Md = ops.G[l];
        Md.row(0) = I.row(0);
        Md.row(n - 1) = I.row(n - 1);
        ops.dirichlet[l] = factor(Md, "Dirichlet", l);
    }
}

std::shared_ptr<const ShellOperators> build_operators(const ShellGrid& g, const ShellSolverOptions& opt) {
    auto ops = std::make_shared<ShellOperators>();
    build_static(g, *ops);
    const int n = g.nrad, lmax = g.base.lmax;
    const double nu = opt.nu, dt = opt.dt;
    ops->fine = make_shell_grid(lmax, g.eps, 2 * n + 4);
    const auto& f = ops->fine;
    ops->E = interp_matrix(g, f);
    const MatrixXd& E = ops->E;
    const MatrixXd D1 = g.Dr, D2 = g.Dr * g.Dr;
    const VectorXd rf = radii(f);
    const VectorXd wq = Eigen::Map<const VectorXd>(f.rweights.data(), f.nrad);
    const VectorXd w2 = wq.cwiseProduct(rf.array().square().matrix());
    const VectorXd w1 = wq.cwiseProduct(rf);
    const MatrixXd I = MatrixXd::Identity(n, n);

    auto grow = [&](std::vector<MatrixXd>& v) { v.assign(lmax + 1, MatrixXd()); };
    for (auto* v : {&ops->Phi, &ops->Psi, &ops->MT, &ops->KT, &ops->MP, &ops->KP, &ops->WT, &ops->WR, &ops->WA,
                    &ops->PT, &ops->PP})
        grow(*v);
    for (auto* v : {&ops->massT, &ops->massP, &ops->tor_euler, &ops->tor_cn, &ops->pol_euler, &ops->pol_cn})
        v->resize(lmax + 1);

    MatrixXd CT(2, n), CP(4, n);
    CT.row(0) = g.rnodes[0] * D1.row(0) - I.row(0);
    CT.row(1) = g.rnodes[n - 1] * D1.row(n - 1) - I.row(n - 1);
    CP.row(0) = I.row(0);
    CP.row(1) = I.row(n - 1);
    CP.row(2) = 2.0 * D1.row(0) + g.rnodes[0] * D2.row(0);
    CP.row(3) = 2.0 * D1.row(n - 1) + g.rnodes[n - 1] * D2.row(n - 1);
    const MatrixXd Phi = null_space(CT), Psi = null_space(CP);
    // A = 2 p + r p' as a map from coarse nodal p to fine values.
    const MatrixXd Amap = 2.0 * E + rf.asDiagonal() * (E * D1);

    for (int l = 1; l <= lmax; ++l) {
        const double L = l * (l + 1.0);
        ops->Phi[l] = Phi;
        ops->Psi[l] = Psi;
        const MatrixXd Tf = E * Phi;
        const MatrixXd DlTf = E * (ops->Dl[l] * Phi);
        ops->MT[l] = Tf.transpose() * w2.asDiagonal() * Tf;
        ops->KT[l] = -Tf.transpose() * w2.asDiagonal() * DlTf;
        ops->WT[l] = -Tf.transpose() * w2.asDiagonal();
        ops->PT[l] = Tf.transpose() * w2.asDiagonal() * E;

        const MatrixXd pf = E * Psi, Af = Amap * Psi;
        const MatrixXd gc = ops->G[l] * Psi;
        const MatrixXd gf = E * gc, dgf = E * (D1 * gc);
        ops->MP[l] = L * L * pf.transpose() * w2.asDiagonal() * pf + L * Af.transpose() * w2.asDiagonal() * Af;
        ops->KP[l] = -(L * L * pf.transpose() * wq.asDiagonal() * gf + L * Af.transpose() * w1.asDiagonal() * dgf);
        ops->WR[l] = L * pf.transpose() * w2.asDiagonal();
        ops->WA[l] = L * Af.transpose() * w2.asDiagonal();
        ops->PP[l] = L * L * pf.transpose() * w2.asDiagonal() * E + L * Af.transpose() * w2.asDiagonal() * Amap;

        ops->massT[l] = factor(ops->MT[l], "toroidal mass", l);
        ops->massP[l] = factor(ops->MP[l], "poloidal mass", l);
        for (double theta : {1.0, 0.5}) {
            (theta == 1.0 ? ops->tor_euler : ops->tor_cn)[l] =
                factor(ops->MT[l] + theta * dt * nu * ops->KT[l], "toroidal", l);
            (theta == 1.0 ? ops->pol_euler : ops->pol_cn)[l] =
                factor(ops->MP[l] + theta * dt * nu * ops->KP[l], "poloidal", l);
        }
    }
    return ops;
}

Eigen::VectorXcd column(const RadialPotential& X, int q) {
    Eigen::VectorXcd c(X.size());
    for (size_t j = 0; j < X.size(); ++j) c[j] = X[j].c[q];
    return c;
}

void set_column(RadialPotential& X, int q, const Eigen::VectorXcd& c) {
    for (size_t j = 0; j < X.size(); ++j) X[j].c[q] = c[j];
}

RadialPotential zeros(const ShellGrid& g) { return RadialPotential(g.nrad, SphCoeffs(g.base.lmax)); }

// Applies the per-l radial matrix family M[l] to every (l,m) column.
RadialPotential apply(const ShellGrid& g, const std::vector<MatrixXd>& M, const RadialPotential& X) {
    auto out = zeros(g);
    for (int l = 1; l <= g.base.lmax; ++l)
        for (int m = -l; m <= l; ++m) {
            const int q = lm_index(l, m);
            set_column(out, q, M[l].cast<cplx>() * column(X, q));
        }
    return out;
}

RadialPotential derivative(const ShellGrid& g, const RadialPotential& X) {
    auto out = zeros(g);
    const int nl = n_lm(g.base.lmax);
    for (int q = 0; q < nl; ++q) set_column(out, q, g.Dr.cast<cplx>() * column(X, q));
    return out;
}

RadialPotential reduce(const ShellGrid& g, const RadialPotential& P) {
    auto p = P;
    for (int j = 0; j < g.nrad; ++j)
        for (auto& x : p[j].c) x /= g.rnodes[j];
    return p;
}

RadialPotential unreduce(const ShellGrid& g, const RadialPotential& p) {
    auto P = p;
    for (int j = 0; j < g.nrad; ++j)
        for (auto& x : P[j].c) x *= g.rnodes[j];
    return P;
}

Eigen::VectorXcd lu_solve(const Eigen::PartialPivLU<MatrixXd>& lu, const Eigen::VectorXcd& b) {
    Eigen::VectorXcd x(b.size());
    x.real() = lu.solve(b.real());
    x.imag() = lu.solve(b.imag());
    return x;
}

// Applies one radial matrix to every angular column; M.rows() sets the output layer count.
RadialPotential map_columns(const MatrixXd& M, const RadialPotential& X, int lmax) {
    RadialPotential out(M.rows(), SphCoeffs(lmax));
    const Eigen::MatrixXcd Mc = M.cast<cplx>();
    const int nl = n_lm(lmax);
    for (int q = 0; q < nl; ++q) set_column(out, q, Mc * column(X, q));
    return out;
}

VecField resample(const ShellGrid& from, const ShellGrid& to, const MatrixXd& E, const VecField& u) {
    const int ns = from.nsph();
    VecField out(to.npts(), Vec3::Zero());
    for (int k = 0; k < to.nrad; ++k)
        for (int j = 0; j < from.nrad; ++j) {
            const double e = E(k, j);
            if (e == 0.0) continue;
            for (int i = 0; i < ns; ++i) out[k * ns + i] += e * u[j * ns + i];
        }
    return out;
}

// Solves G p = rhs with p = 0 at both walls.
RadialPotential solve_dirichlet(const ShellGrid& g, const ShellOperators& ops, const RadialPotential& rhs) {
    auto out = zeros(g);
    const int n = g.nrad;
    for (int l = 1; l <= g.base.lmax; ++l)
        for (int m = -l; m <= l; ++m) {
            const int q = lm_index(l, m);
            Eigen::VectorXcd b = column(rhs, q);
            b[0] = 0.0;
            b[n - 1] = 0.0;
            set_column(out, q, lu_solve(ops.dirichlet[l], b));
        }
    return out;
}

// Nodal field with radial coefficients R, tangential Helmholtz potentials A, B on each layer.
VecField layer_synthesis(const ShellGrid& g, const RadialPotential& R, const RadialPotential& A, const RadialPotential& B) {
    const int ns = g.nsph();
    VecField u(g.npts());
    for (int j = 0; j < g.nrad; ++j) {
        auto radial = sht_inverse(g.base, R[j]);
        auto tan = vsh_synthesis(g.base, A[j], B[j]);
        for (int i = 0; i < ns; ++i) u[j * ns + i] = radial[i] * g.base.pos[i] + tan[i];
    }
    return u;
}

// u = curl(T x) + curl curl(r p x): u_r = L p, A = 2 p + r p', B = -T.
VecField synthesize(const ShellGrid& g, const RadialPotential& T, const RadialPotential& p) {
    auto R = zeros(g), A = zeros(g), B = zeros(g);
    auto dp = derivative(g, p);
    for (int j = 0; j < g.nrad; ++j) {
        const double r = g.rnodes[j];
        for (int l = 0; l <= g.base.lmax; ++l)
            for (int m = -l; m <= l; ++m) {
                const int q = lm_index(l, m);
                R[j].c[q] = l * (l + 1.0) * p[j].c[q];
                A[j].c[q] = 2.0 * p[j].c[q] + r * dp[j].c[q];
                B[j].c[q] = -T[j].c[q];
            }
    }
    return layer_synthesis(g, R, A, B);
}

// Potentials of the curl: poloidal T, toroidal -D_l P = -g / r.
VecField vorticity(const ShellGrid& g, const ShellOperators& ops, const RadialPotential& T, const RadialPotential& p) {
    auto R = zeros(g), A = zeros(g), B = zeros(g);
    auto dT = derivative(g, T);
    auto gp = apply(g, ops.G, p);
    for (int j = 0; j < g.nrad; ++j) {
        const double r = g.rnodes[j];
        for (int l = 0; l <= g.base.lmax; ++l)
            for (int m = -l; m <= l; ++m) {
                const int q = lm_index(l, m);
                R[j].c[q] = l * (l + 1.0) * T[j].c[q] / r;
                A[j].c[q] = T[j].c[q] / r + dT[j].c[q];
                B[j].c[q] = gp[j].c[q] / r;
            }
    }
    return layer_synthesis(g, R, A, B);
}

struct FineFields {
    VecField u, w;
};

// Velocity (and curl) of the coarse potentials evaluated on the quadrature grid.
FineFields fine_fields(const ShellGrid& g, const ShellOperators& ops, const RadialPotential& T, const RadialPotential& p,
                       bool with_curl) {
    const auto& f = ops.fine;
    const int lmax = g.base.lmax;
    const MatrixXd ED = ops.E * g.Dr;
    const auto Tf = map_columns(ops.E, T, lmax), pf = map_columns(ops.E, p, lmax), dpf = map_columns(ED, p, lmax);
    auto R = zeros(f), A = zeros(f), B = zeros(f);
    for (int k = 0; k < f.nrad; ++k) {
        const double r = f.rnodes[k];
        for (int l = 0; l <= lmax; ++l)
            for (int m = -l; m <= l; ++m) {
                const int q = lm_index(l, m);
                R[k].c[q] = l * (l + 1.0) * pf[k].c[q];
                A[k].c[q] = 2.0 * pf[k].c[q] + r * dpf[k].c[q];
                B[k].c[q] = -Tf[k].c[q];
            }
    }
    FineFields out;
    out.u = layer_synthesis(f, R, A, B);
    if (!with_curl) return out;
    const auto dTf = map_columns(ED, T, lmax);
    const auto gf = map_columns(ops.E, apply(g, ops.G, p), lmax);
    for (int k = 0; k < f.nrad; ++k) {
        const double r = f.rnodes[k];
        for (int l = 0; l <= lmax; ++l)
            for (int m = -l; m <= l; ++m) {
                const int q = lm_index(l, m);
                R[k].c[q] = l * (l + 1.0) * Tf[k].c[q] / r;
                A[k].c[q] = Tf[k].c[q] / r + dTf[k].c[q];
                B[k].c[q] = gf[k].c[q] / r;
            }
    }
    out.w = layer_synthesis(f, R, A, B);
    return out;
}

// Angular analysis of a shell field: tangential Helmholtz potentials and radial component per layer.
void layer_analysis(const ShellGrid& g, const VecField& u, RadialPotential& A, RadialPotential& B, RadialPotential& R) {
    const int ns = g.nsph();
    A = zeros(g);
    B = zeros(g);
    R = zeros(g);
    for (int j = 0; j < g.nrad; ++j) {
        VecField layer(u.begin() + j * ns, u.begin() + (j + 1) * ns);
        ScalarField ur(ns);
        for (int i = 0; i < ns; ++i) ur[i] = layer[i].dot(g.base.pos[i]);
        vsh_analysis(g.base, layer, A[j], B[j]);
        R[j] = sht_forward(g.base, ur);
    }
}

// Projections of a field N onto the toroidal and poloidal equations: ET = -B_N and EP = (r A_N)' - N_r,
// so that the solenoidal slip part of N has potentials (ET, r p) with G p = EP.
void curl_projections(const ShellGrid& g, const VecField& N, RadialPotential& ET, RadialPotential& EP) {
    RadialPotential A, B, R;
    layer_analysis(g, N, A, B, R);
    ET = zeros(g);
    EP = zeros(g);
    const int nl = n_lm(g.base.lmax);
    for (int q = 0; q < nl; ++q) {
        Eigen::VectorXcd rA(g.nrad);
        for (int j = 0; j < g.nrad; ++j) rA[j] = g.rnodes[j] * A[j].c[q];
        Eigen::VectorXcd d = g.Dr.cast<cplx>() * rA;
        for (int j = 0; j < g.nrad; ++j) {
            ET[j].c[q] = -B[j].c[q];
            EP[j].c[q] = d[j] - R[j].c[q];
        }
    }
    for (int j = 0; j < g.nrad; ++j) {
        ET[j](0, 0) = 0.0;
        EP[j](0, 0) = 0.0;
    }
}

// Galerkin loads (N, psi) of a field on the quadrature grid, per (l,m); l = 0 stays empty.
struct Loads {
    std::vector<Eigen::VectorXcd> T, P;
};

Loads galerkin_loads(const ShellGrid& g, const ShellOperators& ops, const VecField& N) {
    RadialPotential A, B, R;
    layer_analysis(ops.fine, N, A, B, R);
    const int nl = n_lm(g.base.lmax);
    Loads out;
    out.T.assign(nl, Eigen::VectorXcd());
    out.P.assign(nl, Eigen::VectorXcd());
    for (int l = 1; l <= g.base.lmax; ++l)
        for (int m = -l; m <= l; ++m) {
            const int q = lm_index(l, m);
            out.T[q] = ops.WT[l].cast<cplx>() * column(B, q);
            out.P[q] = ops.WR[l].cast<cplx>() * column(R, q) + ops.WA[l].cast<cplx>() * column(A, q);
        }
    return out;
}

// Projects T and p onto the stress-free space in the energy inner product.
void project_stress_free(const ShellGrid& g, const ShellOperators& ops, RadialPotential& T, RadialPotential& p) {
    for (int l = 1; l <= g.base.lmax; ++l)
        for (int m = -l; m <= l; ++m) {
            const int q = lm_index(l, m);
            const Eigen::VectorXcd a = lu_solve(ops.massT[l], ops.PT[l].cast<cplx>() * column(T, q));
            const Eigen::VectorXcd b = lu_solve(ops.massP[l], ops.PP[l].cast<cplx>() * column(p, q));
            set_column(T, q, ops.Phi[l].cast<cplx>() * a);
            set_column(p, q, ops.Psi[l].cast<cplx>() * b);
        }
    for (int j = 0; j < g.nrad; ++j) {
        T[j](0, 0) = 0.0;
        p[j](0, 0) = 0.0;
    }
}

void check_finite(const VecField& u, const char* what) {
    for (const auto& x : u)
        if (!x.allFinite()) throw Error(ErrorKind::DataError, std::string(what) + " has non-finite entries");
}

VecField forcing_at(const SolverState3D& s, double t) {
    if (!s.forcing) return {};
    auto f = s.forcing(t);
    if (f.size() != static_cast<size_t>(s.grid.npts())) throw Error(ErrorKind::ShapeError, "forcing has wrong size");
    return f;
}

double courant(const ShellGrid& g, const VecField& u, double dt) {
    double hmin = 1e300;
    for (int j = 1; j < g.nrad; ++j) hmin = std::min(hmin, g.rnodes[j] - g.rnodes[j - 1]);
    const int ns = g.nsph();
    double c = 0.0;
    for (int j = 0; j < g.nrad; ++j)
        for (int i = 0; i < ns; ++i) {
            const Vec3& x = u[j * ns + i];
            const double ur = x.dot(g.base.pos[i]);
            const double ut = (x - ur * g.base.pos[i]).norm();
            c = std::max(c, ut * g.base.lmax / g.rnodes[j] + std::abs(ur) / hmin);
        }
    return dt * c;
}

BoundaryDefect defect_from_strain(const ShellGrid& g, const VecField& u, const MatField& D) {
    BoundaryDefect b;
    const int ns = g.nsph();
    for (int j : {0, g.nrad - 1})
        for (int i = 0; i < ns; ++i) {
            const Vec3& n = g.base.pos[i];
            const int q = j * ns + i;
            b.normal_trace = std::max(b.normal_trace, std::abs(u[q].dot(n)));
            Vec3 t = D[q] * n;
            t -= n * n.dot(t);
            b.tangential_stress = std::max(b.tangential_stress, t.norm());
        }
    return b;
}

Vec3 momenta(const ShellGrid& g, const VecField& u) {
    Vec3 m;
    for (int a = 0; a < 3; ++a) m(a) = inner(g, u, rotation_field(g, Vec3::Unit(a)));
    return m;
}

// u and D live on the quadrature grid.
void record_sample(SolverState3D& s, const VecField& u, const MatField& D, double ddiss, double dwork, double nl_power) {
    auto& L = s.ledger;
    const auto& g = s.ops->fine;
    L.t.push_back(s.t);
    L.energy.push_back(inner(g, u, u));
    L.dissipation.push_back((L.dissipation.empty() ? 0.0 : L.dissipation.back()) + ddiss);
    L.work.push_back((L.work.empty() ? 0.0 : L.work.back()) + dwork);
    L.residual.push_back(0.5 * L.energy.back() + 2.0 * s.opt.nu * L.dissipation.back() - 0.5 * L.energy.front() -
                         L.work.back());
    L.momentum.push_back(momenta(g, u));
    L.nonlinear_power.push_back(nl_power);
    ScalarField dv(g.npts());
    for (int q = 0; q < g.npts(); ++q) dv[q] = D[q].trace();
    L.divergence.push_back(l2norm(g, dv));
    const auto b = defect_from_strain(g, u, D);
    L.normal_trace.push_back(b.normal_trace);
    L.tangential_stress.push_back(b.tangential_stress);
}

}  // namespace

VecField shell_velocity(const SolverState3D& s) { return synthesize(s.grid, s.T, reduce(s.grid, s.P)); }

VecField shell_vorticity(const SolverState3D& s) { return vorticity(s.grid, *s.ops, s.T, reduce(s.grid, s.P)); }

void tp_analysis(const ShellGrid& g, const VecField& u, RadialPotential& T, RadialPotential& P) {
    if (u.size() != static_cast<size_t>(g.npts())) throw Error(ErrorKind::ShapeError, "tp_analysis: field is not on the shell grid");
    check_finite(u, "tp_analysis input");
    if (g.nrad < 3) throw Error(ErrorKind::ConfigurationError, "tp_analysis needs nrad >= 3");
    ShellOperators ops;
    build_static(g, ops);
    RadialPotential EP;
    curl_projections(g, u, T, EP);
    P = unreduce(g, solve_dirichlet(g, ops, EP));
}

VecField leray_project_shell(const ShellGrid& g, const VecField& u) {
    RadialPotential T, P;
    tp_analysis(g, u, T, P);
    return synthesize(g, T, reduce(g, P));
}

VecField random_stress_free(const ShellGrid& g, int band, std::mt19937_64& rng) {
    const int lmax = g.base.lmax;
    if (band < 1 || band > lmax) throw Error(ErrorKind::InvalidParameter, "band must lie in [1, lmax]");
    std::normal_distribution<double> nd;
    auto draw = [&] {
        SphCoeffs c(lmax);
        for (int l = 1; l <= band; ++l)
            for (int m = 0; m <= l; ++m) c(l, m) = (m == 0 ? cplx(nd(rng), 0.0) : cplx(nd(rng), nd(rng))) / (1.0 + l);
        c.enforce_real();
        return c;
    };
    const auto tau0 = draw(), tau1 = draw(), pi1 = draw();
    auto T = zeros(g), p = zeros(g);
    for (int j = 0; j < g.nrad; ++j) {
        const double r = g.rnodes[j], x = (r - 1.0) / g.eps;
        const double bump = x * x * (3.0 - 2.0 * x), s = g.eps * x * (1.0 - 2.0 * x * x + x * x * x) / r;
        for (size_t q = 0; q < T[j].c.size(); ++q) {
            T[j].c[q] = r * (tau0.c[q] + bump * tau1.c[q]);
            p[j].c[q] = s * pi1.c[q];
        }
    }
    return synthesize(g, T, p);
}

BoundaryDefect boundary_defect(const ShellGrid& g, const VecField& u) {
    if (u.size() != static_cast<size_t>(g.npts())) throw Error(ErrorKind::ShapeError, "boundary_defect: field is not on the shell grid");
    return defect_from_strain(g, u, strain_shell(g, u));
}

SolverState3D init_shell_solver_from_potentials(const RadialPotential& T, const RadialPotential& P,
                                                const ShellSolverOptions& opt, const ShellGrid& grid,
                                                ShellForcingFn forcing) {
    validate(opt, grid);
    if (T.size() != static_cast<size_t>(grid.nrad) || P.size() != static_cast<size_t>(grid.nrad))
        throw Error(ErrorKind::ShapeError, "potentials need one coefficient set per radial node");
    SolverState3D s;
    s.grid = grid;
    s.opt = opt;
    s.T = T;
    s.P = P;
    for (int j = 0; j < grid.nrad; ++j) {
        if (T[j].lmax != grid.base.lmax || P[j].lmax != grid.base.lmax)
            throw Error(ErrorKind::ShapeError, "potential degree does not match the grid");
        s.T[j](0, 0) = 0.0;
        s.P[j](0, 0) = 0.0;
        s.T[j].enforce_real();
        s.P[j].enforce_real();
    }
    s.forcing = std::move(forcing);
    s.ops = build_operators(grid, opt);
    auto p = reduce(grid, s.P);
    project_stress_free(grid, *s.ops, s.T, p);
    s.P = unreduce(grid, p);
    for (int j = 0; j < grid.nrad; ++j) {
        s.T[j].enforce_real();
        s.P[j].enforce_real();
    }
    auto u = fine_fields(grid, *s.ops, s.T, p, false).u;
    s.last_strain = strain_shell(s.ops->fine, u);
    record_sample(s, u, s.last_strain, 0.0, 0.0, 0.0);
    return s;
}

SolverState3D init_shell_solver(const VecField& u0, const ShellSolverOptions& opt, const ShellGrid& grid,
                                ShellForcingFn forcing) {
    validate(opt, grid);
    RadialPotential T, P;
    tp_analysis(grid, u0, T, P);
    auto s = init_shell_solver_from_potentials(T, P, opt, grid, std::move(forcing));
    auto u = shell_velocity(s);
    VecField d(u.size());
    for (size_t q = 0; q < u.size(); ++q) d[q] = u[q] - u0[q];
    s.projected_initial = l2norm(grid, d) > 1e-10 * std::max(l2norm(grid, u0), 1e-300);
    return s;
}

void step3d(SolverState3D& s) {
    const auto& g = s.grid;
    const auto& ops = *s.ops;
    const auto& fg = ops.fine;
    const double dt = s.opt.dt, nu = s.opt.nu;
    const int lmax = g.base.lmax;
    const auto p = reduce(g, s.P);
    const auto ff = fine_fields(g, ops, s.T, p, s.opt.advection);
    const double c = courant(fg, ff.u, dt);
    s.last_courant = c;
    if (s.opt.advection && c > s.opt.max_courant) {
        std::ostringstream msg;
        msg << "Courant number " << c << " exceeds " << s.opt.max_courant << " at t=" << s.t;
        throw Error(ErrorKind::StepRejected, msg.str());
    }

    const int nl = n_lm(lmax);
    Loads F;
    F.T.assign(nl, Eigen::VectorXcd());
    F.P.assign(nl, Eigen::VectorXcd());
    std::vector<Eigen::VectorXcd> a0(nl), b0(nl);
    for (int l = 1; l <= lmax; ++l)
        for (int m = -l; m <= l; ++m) {
            const int q = lm_index(l, m);
            a0[q] = ops.Phi[l].transpose().cast<cplx>() * column(s.T, q);
            b0[q] = ops.Psi[l].transpose().cast<cplx>() * column(p, q);
            F.T[q] = Eigen::VectorXcd::Zero(ops.Phi[l].cols());
            F.P[q] = Eigen::VectorXcd::Zero(ops.Psi[l].cols());
        }
    double nl_power = 0.0;
    if (s.opt.advection) {
        VecField adv(fg.npts());
        for (int q = 0; q < fg.npts(); ++q) adv[q] = ff.u[q].cross(ff.w[q]);
        auto A = galerkin_loads(g, ops, adv);
        for (int l = 1; l <= lmax; ++l)
            for (int m = -l; m <= l; ++m) {
                const int q = lm_index(l, m);
                nl_power += l * (l + 1.0) * a0[q].dot(A.T[q]).real() + b0[q].dot(A.P[q]).real();
                F.T[q] += A.T[q];
                F.P[q] += A.P[q];
            }
    }
    if (s.forcing) {
        auto ld = galerkin_loads(g, ops, resample(g, fg, ops.E, forcing_at(s, s.t)));
        for (int q = 1; q < nl; ++q) {
            F.T[q] += ld.T[q];
            F.P[q] += ld.P[q];
        }
    }

    const bool euler = s.steps < s.opt.euler_steps || !s.have_prev;
    const double theta = euler ? 1.0 : 0.5;
    auto Tn = zeros(g), pn = zeros(g);
    for (int l = 1; l <= lmax; ++l) {
        const Eigen::MatrixXcd Rt = (ops.MT[l] - (1.0 - theta) * dt * nu * ops.KT[l]).cast<cplx>();
        const Eigen::MatrixXcd Rp = (ops.MP[l] - (1.0 - theta) * dt * nu * ops.KP[l]).cast<cplx>();
        const auto& lt = euler ? ops.tor_euler[l] : ops.tor_cn[l];
        const auto& lp = euler ? ops.pol_euler[l] : ops.pol_cn[l];
        for (int m = -l; m <= l; ++m) {
            const int q = lm_index(l, m);
            Eigen::VectorXcd ft = F.T[q], fp = F.P[q];
            if (!euler) {
                ft = 1.5 * ft - 0.5 * s.prevFT[q];
                fp = 1.5 * fp - 0.5 * s.prevFP[q];
            }
            const Eigen::VectorXcd a = lu_solve(lt, Rt * a0[q] + dt * ft);
            const Eigen::VectorXcd b = lu_solve(lp, Rp * b0[q] + dt * fp);
            set_column(Tn, q, ops.Phi[l].cast<cplx>() * a);
            set_column(pn, q, ops.Psi[l].cast<cplx>() * b);
        }
    }
    auto Pn = unreduce(g, pn);
    for (int j = 0; j < g.nrad; ++j) {
        Tn[j].enforce_real();
        Pn[j].enforce_real();
    }

    s.prevFT = std::move(F.T);
    s.prevFP = std::move(F.P);
    s.have_prev = true;
    s.T = std::move(Tn);
    s.P = std::move(Pn);
    const double t_old = s.t;
    s.t += dt;
    ++s.steps;

    auto un = fine_fields(g, ops, s.T, reduce(g, s.P), false).u;
    auto Dn = strain_shell(fg, un);
    // Dissipation and work at the implicit stage u_theta = theta u^{n+1} + (1 - theta) u^n.
    MatField Dth(fg.npts());
    VecField uth(fg.npts());
    for (int q = 0; q < fg.npts(); ++q) {
        Dth[q] = theta * Dn[q] + (1.0 - theta) * s.last_strain[q];
        uth[q] = theta * un[q] + (1.0 - theta) * ff.u[q];
    }
    const double ddiss = dt * inner(fg, Dth, Dth);
    double dwork = 0.0;
    if (s.forcing) dwork = dt * inner(fg, resample(g, fg, ops.E, forcing_at(s, t_old + theta * dt)), uth);
    s.last_strain = std::move(Dn);
    record_sample(s, un, s.last_strain, ddiss, dwork, nl_power);
}

VecField resample_radial(const ShellGrid& from, const ShellGrid& to, const VecField& u) {
    if (from.base.lmax != to.base.lmax || from.eps != to.eps)
        throw Error(ErrorKind::ShapeError, "resample_radial: grids differ in angle or thickness");
    if (u.size() != static_cast<size_t>(from.npts())) throw Error(ErrorKind::ShapeError, "resample_radial: field size");
    return resample(from, to, interp_matrix(from, to), u);
}

EnergySummary3D energy_report(const SolverState3D& s) {
    const auto& L = s.ledger;
    if (L.t.size() < 2) throw Error(ErrorKind::PreconditionError, "energy report needs at least one step");
    EnergySummary3D r;
    const double e0 = std::max(0.5 * L.energy.front(), 1e-300);
    r.worst_slack = -1e300;
    r.momentum0 = L.momentum.front();
    for (size_t i = 0; i < L.t.size(); ++i) {
        r.worst_slack = std::max(r.worst_slack, L.residual[i] / e0);
        r.max_momentum_drift = std::max(r.max_momentum_drift, (L.momentum[i] - L.momentum.front()).norm());
        r.max_divergence = std::max(r.max_divergence, L.divergence[i]);
        r.max_normal_trace = std::max(r.max_normal_trace, L.normal_trace[i]);
        if (i > 0) r.max_tangential_stress = std::max(r.max_tangential_stress, L.tangential_stress[i]);
        r.max_nonlinear_power = std::max(r.max_nonlinear_power, std::abs(L.nonlinear_power[i]));
    }
    return r;
}

void save_checkpoint(const SolverState3D& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::InvalidParameter, "cannot write checkpoint " + path);
    out << std::setprecision(17);
    out << "thinshell-shell-checkpoint 1\n";
    out << "t " << s.t << "\nlmax " << s.grid.base.lmax << "\nnrad " << s.grid.nrad << "\neps " << s.grid.eps << "\nnu "
        << s.opt.nu << "\ndt " << s.opt.dt << "\nsteps " << s.steps << "\n";
    for (const char* name : {"T", "P"}) {
        const auto& X = name[0] == 'T' ? s.T : s.P;
        for (int j = 0; j < s.grid.nrad; ++j)
            for (int l = 0; l <= s.grid.base.lmax; ++l)
                for (int m = 0; m <= l; ++m)
                    out << name << ' ' << j << ' ' << l << ' ' << m << ' ' << X[j](l, m).real() << ' ' << X[j](l, m).imag()
                        << '\n';
    }
}

SolverState3D load_shell_checkpoint(const std::string& path, ShellForcingFn forcing) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidParameter, "cannot read checkpoint " + path);
    std::string magic, key;
    int version = 0;
    in >> magic >> version;
    if (magic != "thinshell-shell-checkpoint" || version != 1) throw Error(ErrorKind::DataError, "not a shell checkpoint");
    double t = 0.0, eps = 0.0;
    int lmax = 0, nrad = 0;
    long steps = 0;
    ShellSolverOptions opt;
    in >> key >> t >> key >> lmax >> key >> nrad >> key >> eps >> key >> opt.nu >> key >> opt.dt >> key >> steps;
    if (!in || lmax < 1 || nrad < 2 || !(eps > 0.0)) throw Error(ErrorKind::DataError, "malformed checkpoint header");
    auto g = make_shell_grid(lmax, eps, nrad);
    auto T = zeros(g), P = zeros(g);
    std::string name;
    int j, l, m;
    double re, im;
    while (in >> name >> j >> l >> m >> re >> im) {
        if ((name != "T" && name != "P") || j < 0 || j >= nrad || l < 0 || l > lmax || m < 0 || m > l)
            throw Error(ErrorKind::DataError, "checkpoint entry out of range");
        (name == "T" ? T : P)[j](l, m) = cplx(re, im);
    }
    auto s = init_shell_solver_from_potentials(T, P, opt, g, std::move(forcing));
    s.t = t;
    s.steps = steps;
    s.ledger.t.front() = t;
    return s;
}

ManufacturedField manufacture(const std::vector<SphereSample>& traj, double nu, const ShellGrid& grid) {
    if (traj.size() < 3) throw Error(ErrorKind::DataError, "manufactured field needs at least three trajectory samples");
    const double h = traj[1].t - traj[0].t;
    if (!(h > 0.0)) throw Error(ErrorKind::DataError, "trajectory times must increase");
    for (size_t k = 1; k < traj.size(); ++k)
        if (std::abs(traj[k].t - traj[k - 1].t - h) > 1e-9 * h) throw Error(ErrorKind::DataError, "trajectory must be equispaced");
    ManufacturedField mf;
    mf.grid = grid;
    mf.nu = nu;
    const size_t K = traj.size();
    for (const auto& smp : traj) {
        if (smp.v.size() != static_cast<size_t>(grid.nsph())) throw Error(ErrorKind::ShapeError, "trajectory sample is not on the base grid");
        check_finite(smp.v, "trajectory sample");
        mf.t.push_back(smp.t);
        mf.u.push_back(extend(grid, smp.v, ExtensionMode::Weighted));
    }
    // Second-order differences, one-sided at the ends.
    for (size_t k = 0; k < K; ++k) {
        VecField d(grid.npts());
        for (int q = 0; q < grid.npts(); ++q) {
            if (k == 0)
                d[q] = (-3.0 * mf.u[0][q] + 4.0 * mf.u[1][q] - mf.u[2][q]) / (2.0 * h);
            else if (k == K - 1)
                d[q] = (3.0 * mf.u[K - 1][q] - 4.0 * mf.u[K - 2][q] + mf.u[K - 3][q]) / (2.0 * h);
            else
                d[q] = (mf.u[k + 1][q] - mf.u[k - 1][q]) / (2.0 * h);
        }
        mf.dudt.push_back(std::move(d));
    }
    ShellOperators ops;
    build_static(grid, ops);
    double defect = 0.0;
    for (size_t k = 0; k < K; ++k) {
        const auto& u = mf.u[k];
        // u = v_E is toroidal; Delta u = -curl omega and grad(|u|^2/2) + pressure drop out under projection.
        RadialPotential T, P;
        tp_analysis(grid, u, T, P);
        const auto p = reduce(grid, P);
        // Delta u has toroidal potential D_l T and poloidal potential D_l P = g / r.
        auto DT = apply(grid, ops.Dl, T);
        auto gp = apply(grid, ops.G, p);
        auto dg = derivative(grid, gp);
        auto R = zeros(grid), A = zeros(grid), B = zeros(grid);
        for (int j = 0; j < grid.nrad; ++j) {
            const double r = grid.rnodes[j];
            for (int l = 0; l <= grid.base.lmax; ++l)
                for (int m = -l; m <= l; ++m) {
                    const int q = lm_index(l, m);
                    R[j].c[q] = l * (l + 1.0) * gp[j].c[q] / (r * r);
                    A[j].c[q] = dg[j].c[q] / r;
                    B[j].c[q] = -DT[j].c[q];
                }
        }
        auto lap = layer_synthesis(grid, R, A, B);
        auto w = vorticity(grid, ops, T, p);
        VecField raw(grid.npts());
        for (int q = 0; q < grid.npts(); ++q) raw[q] = mf.dudt[k][q] - nu * lap[q] - u[q].cross(w[q]);
        mf.f.push_back(leray_project_shell(grid, raw));
        auto G = full_gradient_shell(grid, u);
        double gmax = 0.0;
        for (const auto& x : G) gmax = std::max(gmax, x.norm());
        MatField D(G.size());
        for (size_t q = 0; q < G.size(); ++q) D[q] = 0.5 * (G[q] + G[q].transpose());
        const auto b = defect_from_strain(grid, u, D);
        if (gmax > 0.0) defect = std::max(defect, b.tangential_stress / gmax);
    }
    mf.navier_defect = defect;
    return mf;
}

double weak_form_residual(const ManufacturedField& m, size_t k, const VecField& psi) {
    if (k >= m.u.size()) throw Error(ErrorKind::InvalidParameter, "sample index out of range");
    const auto& g = m.grid;
    if (psi.size() != static_cast<size_t>(g.npts())) throw Error(ErrorKind::ShapeError, "test field is not on the shell grid");
    const auto& u = m.u[k];
    auto G = full_gradient_shell(g, u);
    MatField D(G.size());
    VecField adv(G.size());
    for (size_t q = 0; q < G.size(); ++q) {
        D[q] = 0.5 * (G[q] + G[q].transpose());
        adv[q] = G[q].transpose() * u[q];
    }
    auto Dpsi = strain_shell(g, psi);
    return inner(g, m.dudt[k], psi) + 2.0 * m.nu * inner(g, D, Dpsi) + inner(g, adv, psi) - inner(g, m.f[k], psi);
}

}  // namespace thinshell
