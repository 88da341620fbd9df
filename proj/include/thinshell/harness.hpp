#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "thinshell/shell_ns.hpp"

namespace thinshell {

// ---- dual norms ---------------------------------------------------------------

/// sqrt(sum |g_lm|^2 / (1 + lambda_l)) over the solenoidal tangential harmonics, lambda_l the H1 form.
double dual_norm_sphere(const SphereGrid& g, const VecField& riesz);

/// Riesz dual norm over the discrete solenoidal slip space of the shell: toroidal T of degree < nrad and
/// poloidal p = P/r of degree < nrad vanishing on both walls. Gram matrices per degree l are assembled once.
class ShellDualNorm {
public:
    explicit ShellDualNorm(const ShellGrid& s);
    double operator()(const VecField& riesz) const;
    const ShellGrid& grid() const { return grid_; }
    /// L2 and H1 Gram matrices of degree l (toroidal block first), for tests.
    const Eigen::MatrixXd& mass(int l) const { return mass_[l]; }
    const Eigen::MatrixXd& h1(int l) const { return h1_[l]; }

private:
    ShellGrid grid_, fine_;
    Eigen::MatrixXd interp_;                 // coarse nodal -> fine nodal
    Eigen::MatrixXd tor_, pol_, pol_a_;      // basis values on the fine nodes: T_k, p_k, 2 p_k + r p_k'
    std::vector<Eigen::MatrixXd> mass_, h1_;
    std::vector<Eigen::LLT<Eigen::MatrixXd>> h1_llt_;
};

double dual_norm_surrogate(const DualForcing& f, const SphereGrid& g);
double dual_norm_surrogate(const DualForcing& f, const ShellDualNorm& shell);

// ---- trajectories and difference functionals ----------------------------------

struct ShellTrajectory {
    ShellGrid grid;
    std::vector<double> t;
    std::vector<VecField> u;
    std::vector<VecField> f;  // Riesz vectors of f^eps at t; empty means zero forcing
};

struct SphereTrajectory {
    SphereGrid grid;
    std::vector<double> t;
    std::vector<VecField> v;
    std::vector<VecField> f;  // Riesz vectors of f at t; empty means zero forcing
};

struct DiffSample {
    double t = 0.0;
    double D_data = 0.0;
    double D_sol = 0.0;
    double sol_l2 = 0.0;         // (1/eps) ||u - vbar||^2
    double grad_tan = 0.0;       // ||Pbar grad u - bar(grad_S2 v)||^2 at t
    double grad_rad = 0.0;       // ||d_n u - vbar||^2 at t
    double grad_tan_int = 0.0;   // (nu/eps) int_0^t grad_tan
    double grad_rad_int = 0.0;   // (nu/eps) int_0^t grad_rad
    double split_residual = 0.0; // | ||grad w||^2 - grad_tan - grad_rad | / (||grad u||^2 + ||grad v_E||^2), w = u - v_E
    double F_v = 1.0;
    double G_v = 0.0;
    double eta_v = 0.0;
    double avg_err = 0.0;        // ||M^0 u - v||_{L2(S2)}
    double global_extra = 0.0;   // (nu/eps) int_0^t ||u - vbar||^2
};

struct DiffFunctionals {
    double eps = 0.0;
    double nu = 1.0;
    std::vector<DiffSample> samples;
    double E0 = 0.0;  // ||v0||^2 + (1/nu) int ||f||^2_{V0*} over the sampled horizon
    double F0 = 1.0;  // exp(E0^2 / nu^2)
    double G0 = 0.0;  // E0 + E0^2 / nu^2
    double sigma = 0.0;  // ||v||_{Linf L2}^{1/2} ||v||_{L2 H1}^{1/2}
};

/// Trajectories must share the time samples and the angular grid. Time integrals use the trapezoid rule.
DiffFunctionals compute_diff(const ShellTrajectory& u, const SphereTrajectory& v, double nu);

// ---- sweeps ---------------------------------------------------------------------

enum class SweepMode { Manufactured, Timestep };
enum class DataPreset { TwoMode, Random };
enum class ShellData { Bar, Ext };  // u0 = bar(v0) or [v0]_E; f^eps = bar(f) or f_E

SweepMode parse_sweep_mode(const std::string& s);
std::string to_string(SweepMode m);
DataPreset parse_data_preset(const std::string& s);
std::string to_string(DataPreset p);

struct SweepConfig {
    std::vector<double> eps_list{0.2, 0.1, 0.05, 0.025};
    int lmax = 8;
    int nrad = 8;
    double nu = 1.0;
    double dt = 1e-3;
    double t_final = 0.5;
    int sample_every = 10;  // steps between stored samples
    int euler_steps = 1;    // implicit-Euler startup steps of the shell solver
    SweepMode mode = SweepMode::Manufactured;
    DataPreset preset = DataPreset::TwoMode;
    ShellData initial = ShellData::Bar;
    ShellData forcing = ShellData::Bar;
    std::uint64_t seed = 1;
    int workers = 0;  // 0: hardware concurrency
};

struct SweepEntry {
    double eps = 0.0;
    bool ok = false;
    std::string error;
    DiffFunctionals diff;
    double sup_avg_err = 0.0;
    double c1 = 0.0;  // max_t D_sol / (F_v (D_data + eps^2 G_v))
    double c3 = 0.0;  // max_t (D_sol + extra) / (F_0 (D_data + eps^2 G_0))
    long steps = 0;
    double seconds = 0.0;
};

struct SweepReport {
    SweepConfig config;
    std::vector<SweepEntry> entries;
    double slope_D_sol = 0.0;
    double slope_avg_err = 0.0;
    double slope_global_extra = 0.0;
    double c1 = 0.0;
    double c3 = 0.0;
    bool complete = false;  // every entry succeeded
};

/// Least-squares slope of log y against log x; needs at least three points.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// The exact sphere solution used by the two-mode preset: decaying l = 2 and l = 3 modes driven by
/// f = L_0 grad_v v, so v(t) = e^{lambda_2 t} a + e^{lambda_3 t} b with lambda_l = nu (2 - l(l+1)).
VecField two_mode_velocity(const SphereGrid& g, double nu, double t);
VecField two_mode_forcing(const SphereGrid& g, double nu, double t);

/// Sphere trajectory for a preset at the sweep's sample times.
SphereTrajectory sphere_reference(const SweepConfig& c);

SweepEntry run_sweep_entry(const SweepConfig& c, const SphereTrajectory& v, double eps);
SweepReport run_sweep(const SweepConfig& c);

struct GlobalReport {
    double horizon = 0.0;
    double E0 = 0.0;
    double max_energy_ratio = 0.0;  // max_t (||v||^2 + nu int ||v||_{H1}^2) / E0
    double max_orthogonality = 0.0; // max |(v0, r_a)|, |<f, r_a>| relative to the data size
    SweepReport sweep;
};

/// Long-horizon sphere energy bound and the shell sweep with the extra dissipation term.
/// Throws precondition-error unless the data are orthogonal to every r_a to 1e-10.
GlobalReport global_mode_check(const SweepConfig& c, double horizon);
/// Same, with explicit initial data for the sphere (forcing zero); used for the orthogonality precondition.
GlobalReport global_mode_check(const SweepConfig& c, double horizon, const VecField& v0);

// ---- operator suites --------------------------------------------------------------

struct IdentityResult {
    std::string name;
    double residual = 0.0;  // relative
};

/// Pointwise identities of the tangential and shell calculus, averages and extensions.
std::vector<IdentityResult> identity_suite(int lmax, int nrad, double eps, std::uint64_t seed);

struct ScalingResult {
    std::string name;
    double power = 0.0;  // stated eps power
    std::vector<double> eps;
    std::vector<double> ratio;  // max over samples of LHS / (eps^power x norms)
    double spread = 0.0;        // max / min ratio
    double trend = 0.0;         // loglog slope of ratio against eps; negative means growth as eps -> 0
};

std::vector<ScalingResult> scaling_suite(const std::vector<double>& eps_list, int lmax, int nrad, int samples,
                                         std::uint64_t seed);

struct ConstantBoundResult {
    int samples = 0;
    int violations_bar = 0;  // ||bar eta|| > 2 eps^{1/2} ||eta||
    int violations_ext = 0;  // ||v_E - vbar|| > 2 eps^{3/2} ||v||
    double worst_bar = 0.0;  // max of LHS / (eps^{1/2} ||eta||)
    double worst_ext = 0.0;  // max of LHS / (eps^{3/2} ||v||)
};

ConstantBoundResult constant_bounds(const std::vector<double>& eps_list, int lmax, int nrad, int samples,
                                    std::uint64_t seed);

// ---- output ---------------------------------------------------------------------------

std::string sweep_json(const SweepReport& r);
/// RFC-4180 CSV, one row per eps at the final time.
std::string sweep_csv(const SweepReport& r);
/// Per-sample table for plotting: eps t D_data D_sol grad_tan_int grad_rad_int avg_err.
std::string sweep_rate_table(const SweepReport& r);

}  // namespace thinshell
