// Command-line driver: ops-check, solve-sphere, solve-shell, diff-study, korn-probe.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "json.hpp"
#include "thinshell/errors.hpp"
#include "thinshell/harness.hpp"

#ifndef THINSHELL_VERSION
#define THINSHELL_VERSION "unknown"
#endif

using namespace thinshell;
namespace fs = std::filesystem;

namespace {

// Settings from the config file, overridden by flags. Keys use underscores.
class Settings {
public:
    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::InvalidParameter, "cannot read config file " + path);
        std::string line;
        int n = 0;
        while (std::getline(in, line)) {
            ++n;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            if (trim(line).empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw Error(ErrorKind::InvalidParameter, path + ":" + std::to_string(n) + ": expected key = value");
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }

    void set(std::string key, const std::string& value) {
        std::replace(key.begin(), key.end(), '-', '_');
        kv_[key] = value;
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string str(const std::string& key, const std::string& def) {
        used_[key] = has(key) ? kv_.at(key) : def;
        return used_[key];
    }

    int integer(const std::string& key, int def) {
        const auto s = str(key, std::to_string(def));
        try {
            size_t pos = 0;
            const int v = std::stoi(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw Error(ErrorKind::InvalidParameter, key + ": not an integer: " + s);
        }
    }

    double real(const std::string& key, double def) { return parse_real(key, str(key, fmt(def))); }

    std::vector<double> list(const std::string& key, const std::vector<double>& def) {
        std::string joined;
        for (size_t i = 0; i < def.size(); ++i) joined += (i ? "," : "") + fmt(def[i]);
        const auto s = str(key, joined);
        std::vector<double> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(parse_real(key, trim(item)));
        if (out.empty()) throw Error(ErrorKind::InvalidParameter, key + ": empty list");
        return out;
    }

    bool flag(const std::string& key) {
        const auto s = str(key, "false");
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw Error(ErrorKind::InvalidParameter, key + ": not a boolean: " + s);
    }

    // Every setting read by the command, with the value used.
    const std::map<std::string, std::string>& used() const { return used_; }

private:
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        return s.substr(a, s.find_last_not_of(" \t\r\n") - a + 1);
    }
    static std::string fmt(double x) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", x);
        return buf;
    }
    static double parse_real(const std::string& key, const std::string& s) {
        try {
            size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw Error(ErrorKind::InvalidParameter, key + ": not a number: " + s);
        }
    }

    std::map<std::string, std::string> kv_;
    std::map<std::string, std::string> used_;
};

struct Output {
    fs::path dir;
    std::vector<std::string> files;

    void write(const std::string& name, const std::string& text) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw Error(ErrorKind::DataError, "cannot write " + (dir / name).string());
        out << text;
        files.push_back(name);
    }
};

Output open_output(Settings& s) {
    Output o;
    o.dir = s.str("out", "out");
    fs::create_directories(o.dir);
    return o;
}

void write_manifest(Output& o, const std::string& command, const Settings& s, int exit_code) {
    std::ostringstream m;
    m << "command = " << command << "\n";
    m << "thinshell_version = " << THINSHELL_VERSION << "\n";
    m << "eigen_version = " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "." << EIGEN_MINOR_VERSION << "\n";
    m << "exit_code = " << exit_code << "\n";
    m << "\n# configuration\n";
    for (const auto& [k, v] : s.used()) m << k << " = " << v << "\n";
    m << "\n# artifacts\n";
    for (const auto& f : o.files) m << f << "\n";
    std::ofstream out(o.dir / "manifest.txt", std::ios::binary);
    out << m.str();
}

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// ---- commands -------------------------------------------------------------------

int cmd_ops_check(Settings& s) {
    const int lmax = s.integer("lmax", 12);
    const int nrad = s.integer("nrad", 10);
    const auto eps = s.list("eps", {0.1});
    const double tol = s.real("tol", 1e-8);
    const auto seed = static_cast<std::uint64_t>(s.integer("seed", 1));
    const bool scaling = s.flag("scaling");
    if (lmax < 6) throw Error(ErrorKind::ConfigurationError, "ops-check needs lmax >= 6");
    if (nrad < 4) throw Error(ErrorKind::ConfigurationError, "ops-check needs nrad >= 4");
    if (!(tol > 0.0)) throw Error(ErrorKind::InvalidParameter, "tol must be positive");
    auto out = open_output(s);

    nlohmann::json j;
    j["tolerance"] = tol;
    int failures = 0;
    for (double e : eps) {
        if (!(e > 0.0 && e < 1.0)) throw Error(ErrorKind::InvalidParameter, "eps must lie in (0, 1)");
        for (const auto& r : identity_suite(lmax, nrad, e, seed)) {
            const bool ok = r.residual <= tol;
            if (!ok) ++failures;
            j["identities"].push_back({{"name", r.name}, {"eps", e}, {"residual", r.residual}, {"pass", ok}});
            std::printf("%-10s eps=%-6g residual=%.3e %s\n", r.name.c_str(), e, r.residual, ok ? "ok" : "FAIL");
        }
    }
    if (scaling) {
        const auto list = s.list("scaling_eps", {0.2, 0.1, 0.05, 0.025});
        const int samples = s.integer("samples", 5);
        for (const auto& r : scaling_suite(list, std::min(lmax, 8), 8, samples, seed)) {
            const bool ok = r.spread < 4.0 && r.trend > -0.25;
            if (!ok) ++failures;
            j["scaling"].push_back({{"name", r.name}, {"power", r.power}, {"eps", r.eps}, {"ratio", r.ratio},
                                    {"spread", r.spread}, {"trend", r.trend}, {"pass", ok}});
            std::printf("%-14s spread=%.3f trend=%+.3f %s\n", r.name.c_str(), r.spread, r.trend, ok ? "ok" : "FAIL");
        }
    }
    j["failures"] = failures;
    out.write("ops_check.json", j.dump(2) + "\n");
    const int code = failures ? 1 : 0;
    write_manifest(out, "ops-check", s, code);
    return code;
}

std::string sphere_ledger_csv(const EnergyLedger2D& l) {
    std::ostringstream o;
    o << "t,energy,dissipation,work,residual,momentum_x,momentum_y,momentum_z,nonlinear_power\r\n";
    for (size_t i = 0; i < l.t.size(); ++i)
        o << num(l.t[i]) << ',' << num(l.energy[i]) << ',' << num(l.dissipation[i]) << ',' << num(l.work[i]) << ','
          << num(l.residual[i]) << ',' << num(l.momentum[i].x()) << ',' << num(l.momentum[i].y()) << ','
          << num(l.momentum[i].z()) << ',' << num(l.nonlinear_power[i]) << "\r\n";
    return o.str();
}

std::string shell_ledger_csv(const EnergyLedger3D& l) {
    std::ostringstream o;
    o << "t,energy,dissipation,work,residual,momentum_x,momentum_y,momentum_z,nonlinear_power,divergence,"
         "normal_trace,tangential_stress\r\n";
    for (size_t i = 0; i < l.t.size(); ++i)
        o << num(l.t[i]) << ',' << num(l.energy[i]) << ',' << num(l.dissipation[i]) << ',' << num(l.work[i]) << ','
          << num(l.residual[i]) << ',' << num(l.momentum[i].x()) << ',' << num(l.momentum[i].y()) << ','
          << num(l.momentum[i].z()) << ',' << num(l.nonlinear_power[i]) << ',' << num(l.divergence[i]) << ','
          << num(l.normal_trace[i]) << ',' << num(l.tangential_stress[i]) << "\r\n";
    return o.str();
}

long step_count(double tfinal, double dt) {
    if (!(dt > 0.0) || !(tfinal >= 0.0)) throw Error(ErrorKind::InvalidParameter, "dt must be positive and tfinal >= 0");
    return std::lround(tfinal / dt);
}

int cmd_solve_sphere(Settings& s) {
    const int lmax = s.integer("lmax", 8);
    SphereSolverOptions opt;
    opt.nu = s.real("nu", 1.0);
    opt.dt = s.real("dt", 1e-3);
    const double tfinal = s.real("tfinal", 1.0);
    const auto preset = s.str("preset", "rotation");
    const auto seed = static_cast<std::uint64_t>(s.integer("seed", 1));
    if (lmax < 2) throw Error(ErrorKind::ConfigurationError, "solve-sphere needs lmax >= 2");
    const long n = step_count(tfinal, opt.dt);
    const auto g = make_sphere_grid(lmax);
    VecField v0;
    SphereForcingFn f;
    if (preset == "rotation") {
        v0 = rotation_field(g, Vec3::UnitZ());
    } else if (preset == "two-mode") {
        v0 = two_mode_velocity(g, opt.nu, 0.0);
        const double nu = opt.nu;
        f = [g, nu](double t) { return two_mode_forcing(g, nu, t); };
    } else if (preset == "random") {
        std::mt19937_64 rng(seed);
        v0 = remove_rotations(g, random_solenoidal(g, std::min(6, lmax), rng));
    } else if (preset == "zero") {
        v0.assign(g.npts(), Vec3::Zero());
    } else {
        throw Error(ErrorKind::InvalidParameter, "unknown preset '" + preset + "' (rotation | two-mode | random | zero)");
    }
    auto out = open_output(s);
    auto st = init_sphere_solver(v0, opt, lmax, f);
    int code = 0;
    try {
        for (long i = 0; i < n; ++i) step(st);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::StepRejected) throw;
        std::fprintf(stderr, "step rejected at t=%.6g: %s\n", st.t, e.what());
        code = 1;
    }
    out.write("ledger.csv", sphere_ledger_csv(st.ledger));
    save_checkpoint(st, (out.dir / "sphere.ckpt").string());
    out.files.push_back("sphere.ckpt");
    if (st.steps > 0) {
        const auto rep = energy_report(st);
        std::printf("t=%.6g energy=%.12e max_residual=%.3e momentum_drift=%.3e\n", st.t, st.ledger.energy.back(),
                    rep.max_residual, rep.max_momentum_drift);
    }
    write_manifest(out, "solve-sphere", s, code);
    return code;
}

int cmd_solve_shell(Settings& s) {
    const int lmax = s.integer("lmax", 8);
    const int nrad = s.integer("nrad", 8);
    const auto eps = s.list("eps", {0.1});
    ShellSolverOptions opt;
    opt.nu = s.real("nu", 1.0);
    opt.dt = s.real("dt", 1e-3);
    const double tfinal = s.real("tfinal", 0.1);
    const auto preset = s.str("preset", "random");
    const auto seed = static_cast<std::uint64_t>(s.integer("seed", 1));
    if (lmax < 2) throw Error(ErrorKind::ConfigurationError, "solve-shell needs lmax >= 2");
    if (eps.size() != 1) throw Error(ErrorKind::ConfigurationError, "solve-shell takes a single eps");
    const long n = step_count(tfinal, opt.dt);
    const auto grid = make_shell_grid(lmax, eps[0], nrad);
    VecField u0;
    ShellForcingFn f;
    if (preset == "rotation") {
        u0 = rotation_field(grid, Vec3::UnitZ());
    } else if (preset == "two-mode") {
        u0 = extend(grid, two_mode_velocity(grid.base, opt.nu, 0.0), ExtensionMode::Weighted);
        const double nu = opt.nu;
        f = [grid, nu](double t) {
            return extend_forcing(sphere_forcing(two_mode_forcing(grid.base, nu, t)), ExtensionMode::Weighted, grid).riesz;
        };
    } else if (preset == "random") {
        std::mt19937_64 rng(seed);
        u0 = remove_rotations(grid, random_stress_free(grid, std::min(6, lmax), rng));
    } else if (preset == "zero") {
        u0.assign(grid.npts(), Vec3::Zero());
    } else {
        throw Error(ErrorKind::InvalidParameter, "unknown preset '" + preset + "' (rotation | two-mode | random | zero)");
    }
    auto out = open_output(s);
    auto st = init_shell_solver(u0, opt, grid, f);
    int code = 0;
    try {
        for (long i = 0; i < n; ++i) step3d(st);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::StepRejected) throw;
        std::fprintf(stderr, "step rejected at t=%.6g (step %ld, courant %.3g, limit %.3g): %s\n", st.t, st.steps,
                     st.last_courant, opt.max_courant, e.what());
        code = 1;
    }
    out.write("ledger.csv", shell_ledger_csv(st.ledger));
    save_checkpoint(st, (out.dir / "shell.ckpt").string());
    out.files.push_back("shell.ckpt");
    if (st.steps > 0) {
        const auto rep = energy_report(st);
        std::printf("t=%.6g energy=%.12e worst_slack=%.3e divergence=%.3e momentum_drift=%.3e\n", st.t,
                    st.ledger.energy.back(), rep.worst_slack, rep.max_divergence, rep.max_momentum_drift);
    }
    write_manifest(out, "solve-shell", s, code);
    return code;
}

int cmd_diff_study(Settings& s) {
    SweepConfig c;
    if (!s.has("eps")) throw Error(ErrorKind::ConfigurationError, "diff-study needs --eps (at least three values)");
    c.eps_list = s.list("eps", {});
    c.lmax = s.integer("lmax", c.lmax);
    c.nrad = s.integer("nrad", c.nrad);
    c.nu = s.real("nu", c.nu);
    c.dt = s.real("dt", c.dt);
    c.t_final = s.real("tfinal", c.t_final);
    c.sample_every = s.integer("sample_every", c.sample_every);
    c.mode = parse_sweep_mode(s.str("mode", to_string(c.mode)));
    c.preset = parse_data_preset(s.str("preset", to_string(c.preset)));
    auto data = [](const std::string& x) {
        if (x == "bar") return ShellData::Bar;
        if (x == "ext") return ShellData::Ext;
        throw Error(ErrorKind::InvalidParameter, "shell data must be bar or ext");
    };
    c.initial = data(s.str("initial", "bar"));
    c.forcing = data(s.str("forcing", "bar"));
    c.euler_steps = s.integer("euler_steps", c.euler_steps);
    c.seed = static_cast<std::uint64_t>(s.integer("seed", 1));
    c.workers = s.integer("workers", 0);
    const bool global = s.flag("global");
    const double horizon = s.real("horizon", 50.0 / c.nu);
    const double pollute = s.real("pollute", 0.0);
    if (c.eps_list.size() < 3) throw Error(ErrorKind::ConfigurationError, "diff-study needs at least three eps values");

    SweepReport rep;
    nlohmann::json gj;
    if (global) {
        GlobalReport g;
        if (pollute != 0.0) {
            const auto sg = make_sphere_grid(c.lmax);
            auto v0 = two_mode_velocity(sg, c.nu, 0.0);
            const auto r = rotation_field(sg, Vec3::UnitZ());
            for (size_t i = 0; i < v0.size(); ++i) v0[i] += pollute * r[i];
            g = global_mode_check(c, horizon, v0);
        } else {
            g = global_mode_check(c, horizon);
        }
        rep = g.sweep;
        gj = {{"horizon", g.horizon}, {"E0", g.E0}, {"max_energy_ratio", g.max_energy_ratio},
              {"max_orthogonality", g.max_orthogonality}};
        std::printf("global: horizon=%g E0=%.6e max_energy_ratio=%.6f\n", g.horizon, g.E0, g.max_energy_ratio);
    } else {
        rep = run_sweep(c);
    }
    auto out = open_output(s);
    out.write("sweep.json", sweep_json(rep));
    out.write("sweep.csv", sweep_csv(rep));
    out.write("rates.dat", sweep_rate_table(rep));
    if (global) out.write("global.json", gj.dump(2) + "\n");
    for (const auto& e : rep.entries) {
        if (e.ok)
            std::printf("eps=%-7g D_sol=%.6e sup_avg_err=%.6e\n", e.eps, e.diff.samples.back().D_sol, e.sup_avg_err);
        else
            std::printf("eps=%-7g FAILED: %s\n", e.eps, e.error.c_str());
    }
    std::printf("slope D_sol=%.4f  slope avg_err=%.4f  slope extra=%.4f\n", rep.slope_D_sol, rep.slope_avg_err,
                rep.slope_global_extra);
    const int code = rep.complete ? 0 : 1;
    write_manifest(out, "diff-study", s, code);
    return code;
}

int cmd_korn_probe(Settings& s) {
    ProbeOptions o;
    o.lmax = s.integer("lmax", o.lmax);
    o.nrad = s.integer("nrad", o.nrad);
    o.samples = s.integer("samples", o.samples);
    o.eps_list = s.list("eps", o.eps_list);
    o.seed = static_cast<std::uint64_t>(s.integer("seed", 1));
    o.include_killing = s.flag("killing");
    o.band = std::min(o.band, o.lmax);
    const auto kinds = s.str("kind", "korn_sphere,korn_shell_uniform");
    auto out = open_output(s);
    nlohmann::json j;
    std::stringstream ss(kinds);
    std::string name;
    while (std::getline(ss, name, ',')) {
        const auto rep = probe_inequality(parse_probe_kind(name), o);
        nlohmann::json jr{{"kind", to_string(rep.kind)}, {"constant", rep.constant}, {"spread", rep.spread},
                          {"killing_flagged", rep.killing_flagged}};
        for (const auto& e : rep.entries)
            jr["entries"].push_back({{"eps", e.eps}, {"max_ratio", e.max_ratio}, {"min_ratio", e.min_ratio},
                                     {"used", e.used}, {"skipped", e.skipped}, {"infinite", e.infinite}});
        j["probes"].push_back(jr);
        std::printf("%-20s constant=%.6f spread=%.4f killing_flagged=%s\n", to_string(rep.kind).c_str(), rep.constant,
                    rep.spread, rep.killing_flagged ? "yes" : "no");
    }
    out.write("korn.json", j.dump(2) + "\n");
    write_manifest(out, "korn-probe", s, 0);
    return 0;
}

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::InvalidParameter:
        case ErrorKind::ConfigurationError:
        case ErrorKind::PreconditionError:
        case ErrorKind::ShapeError:
            return 2;
        default:
            return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Thin spherical shell Navier-Stokes: operators, solvers and difference studies"};
    app.require_subcommand(1);

    struct Flag {
        const char* name;
        const char* help;
        bool boolean;
    };
    const std::vector<Flag> flags{
        {"lmax", "angular truncation degree", false},
        {"nrad", "radial nodes", false},
        {"eps", "shell thickness, comma-separated list", false},
        {"nu", "viscosity", false},
        {"dt", "time step", false},
        {"tfinal", "final time", false},
        {"mode", "manufactured | timestep", false},
        {"preset", "data preset", false},
        {"initial", "shell initial data: bar | ext", false},
        {"forcing", "shell forcing: bar | ext", false},
        {"out", "output directory", false},
        {"seed", "random seed", false},
        {"tol", "identity tolerance", false},
        {"samples", "random samples per eps", false},
        {"sample-every", "steps between stored samples", false},
        {"euler-steps", "implicit-Euler startup steps (shell)", false},
        {"horizon", "global-mode horizon", false},
        {"pollute", "global mode: add this multiple of r_e3 to v0", false},
        {"workers", "sweep worker threads (0: hardware)", false},
        {"kind", "probe kinds, comma-separated", false},
        {"global", "global-in-time mode", true},
        {"killing", "add the Killing field r_e3 as a probe sample", true},
        {"scaling", "also run the scaling-ratio suite", true},
    };
    const std::vector<std::pair<std::string, std::string>> commands{
        {"ops-check", "operator identity suite"},
        {"solve-sphere", "2D Navier-Stokes on the unit sphere"},
        {"solve-shell", "3D Navier-Stokes in the thin shell"},
        {"diff-study", "eps sweep of the difference functionals"},
        {"korn-probe", "empirical Korn constants"},
    };
    std::map<std::string, std::string> config_path;
    std::map<std::string, std::map<std::string, std::string>> values;
    std::map<std::string, std::map<std::string, bool>> switches;
    std::map<std::string, CLI::App*> subs;
    for (const auto& [cmd, help] : commands) {
        auto* sub = app.add_subcommand(cmd, help);
        subs[cmd] = sub;
        sub->add_option("--config", config_path[cmd], "flat key = value file; flags override it");
        for (const auto& f : flags) {
            if (f.boolean)
                sub->add_flag(std::string("--") + f.name, switches[cmd][f.name], f.help);
            else
                sub->add_option(std::string("--") + f.name, values[cmd][f.name], f.help);
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    std::string cmd;
    for (const auto& [name, sub] : subs)
        if (sub->parsed()) cmd = name;
    auto* sub = subs[cmd];
    try {
        Settings s;
        if (!config_path[cmd].empty()) s.load_file(config_path[cmd]);
        for (const auto& f : flags) {
            if (sub->count(std::string("--") + f.name) == 0) continue;
            s.set(f.name, f.boolean ? (switches[cmd][f.name] ? "true" : "false") : values[cmd][f.name]);
        }
        if (cmd == "ops-check") return cmd_ops_check(s);
        if (cmd == "solve-sphere") return cmd_solve_sphere(s);
        if (cmd == "solve-shell") return cmd_solve_shell(s);
        if (cmd == "diff-study") return cmd_diff_study(s);
        return cmd_korn_probe(s);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
