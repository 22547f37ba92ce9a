// bsgen: command-line front end.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure,
// 3 failed acceptance check (--check).

#include <bsgen/branching.hpp>
#include <bsgen/coalescent.hpp>
#include <bsgen/config.hpp>
#include <bsgen/diagnostics.hpp>
#include <bsgen/harness.hpp>
#include <bsgen/scaling.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace bsgen;
namespace fs = std::filesystem;

namespace {

struct CheckFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::string out;
    bool check = false;
};

std::ofstream open_csv(const fs::path& path) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write '" + path.string() + "'");
    return os;
}

std::string num(double x) { return detail::format_double(x); }

std::vector<double> parse_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, ',')) {
        double v = 0;
        if (!detail::parse_number(detail::trim(item), v))
            throw ConfigError(std::string(what) + ": '" + item + "' is not a number");
        out.push_back(v);
    }
    if (out.empty())
        throw ConfigError(std::string(what) + ": empty list");
    return out;
}

/// Typed access to a flat parameter file with a fixed key set.
class Params {
  public:
    Params(const std::string& path, std::vector<std::string> allowed) {
        std::vector<std::string> errors;
        if (!path.empty())
            kv_ = parse_key_values(read_text_file(path), errors);
        for (const auto& [k, v] : kv_)
            if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
                errors.push_back("unknown key '" + k + "' for this preset");
        if (!errors.empty())
            throw ConfigError(detail::join_errors(errors));
    }

    template <typename T>
    T get(const std::string& key, T fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end())
            return fallback;
        T v{};
        if (!detail::parse_number(it->second, v))
            throw ConfigError(key + ": '" + it->second + "' is not a valid number");
        return v;
    }

    std::string text(const std::string& key, std::string fallback) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

  private:
    KeyValues kv_;
};

fs::path out_path(const std::string& explicit_path, const Globals& g, const char* fallback) {
    if (!explicit_path.empty())
        return explicit_path;
    if (!g.out.empty())
        return fs::path(g.out) / fallback;
    return fallback;
}

// -------------------------------------------------------------------------

void cmd_simulate(const std::string& config, std::string prefix, const Globals& g) {
    auto p = parse_model_config(read_text_file(config));
    if (g.seed)
        p.seed = *g.seed;
    if (prefix.empty() && !g.out.empty())
        prefix = (fs::path(g.out) / "").string();
    if (fs::path(prefix).has_parent_path())
        fs::create_directories(fs::path(prefix).parent_path());
    RandomStream rng(derive_seed(p.seed, 0));
    const auto run = simulate_model(p, rng);
    write_snapshots(prefix + "snapshots.csv", run.rows);
    write_taus(prefix + "tau.csv", run.taus);
    const double b = b_constant(0.01, 0.1, p.T);
    write_front(prefix + "front.csv", front_constants(run.taus, run.sc, p.s, b));
    std::cout << "simulated N=" << p.N << " to T a_N = " << p.T * run.sc.a_N << " (" << run.summary.events
              << " events, " << run.taus.size() << " tau records)\n";
}

void cmd_coalescent(int n, const std::string& method, double horizon, std::size_t reps, const std::string& out,
                    const Globals& g) {
    if (n < 1)
        throw ConfigError("n: must be at least 1");
    if (!(horizon > 0.0))
        throw ConfigError("horizon: must be positive");
    if (method != "markov" && method != "poisson")
        throw ConfigError("method: must be markov or poisson");
    const auto path = out_path(out, g, "coalescent.csv");
    auto os = open_csv(path);
    os << "rep,event_time,partition\n";
    const std::uint64_t seed = g.seed.value_or(1);
    for (std::size_t r = 0; r < reps; ++r) {
        auto rng = RandomStream::for_replicate(seed, r);
        const auto tr = method == "markov" ? sample_bs_markov(n, horizon, rng) : sample_bs_poisson(n, horizon, rng);
        os << r << ",0,\"" << tr.initial.to_string() << "\"\n";
        for (const auto& e : tr.events)
            os << r << ',' << num(e.time) << ",\"" << e.state.to_string() << "\"\n";
    }
}

void cmd_compare(const std::string& traces, int n, const std::string& times, const std::string& out,
                 std::size_t bootstrap, const Globals& g) {
    const auto cfg = load_experiment_config(traces);
    const auto u = parse_list(times, "times");
    const auto all = load_traces(traces, cfg);
    if (all.empty())
        throw std::runtime_error("no replicate traces under '" + traces + "'");
    const auto sc = scaling_constants(cfg.model.N, cfg.model.mu, cfg.model.s);
    FddOptions opt;
    opt.bootstrap = bootstrap;
    opt.seed = g.seed.value_or(derive_seed(cfg.model.seed, ~std::uint64_t{0}));
    const auto rep = fdd_compare(all, n, u, sc.a_N, opt);
    write_compare(out_path(out, g, "compare.csv"), rep);
    for (const auto& r : rep.rows)
        std::cout << "u=" << r.u << " tv=" << r.tv << " [" << r.ci_low << ", " << r.ci_high << "] null " << r.null_mean
                  << " +- " << r.null_sd << "\n";
    if (!rep.warning.empty())
        std::cerr << "warning: " << rep.warning << "\n";
    if (g.check)
        for (const auto& r : rep.rows)
            if (r.tv > r.null_mean + 3 * r.null_sd)
                throw CheckFailed("tv at u=" + num(r.u) + " exceeds sampling noise by more than 3 sd");
}

void cmd_qsolve(double tmax, double step, const std::string& out, const Globals& g) {
    const auto q = solve_q(tmax, step);
    auto os = open_csv(out_path(out, g, "q.csv"));
    os << "t,q\n";
    for (std::size_t i = 0; i < q.size(); ++i)
        os << num(q.time_at(i)) << ',' << num(q.value_at(i)) << '\n';
    const auto lim = q_limit_report(q);
    std::cout << "q(" << lim.t_last << ") = " << lim.q_last << ", |q - 2| = " << lim.deviation << "\n";
    if (g.check) {
        const double e = std::numbers::e;
        const double err = std::max({std::abs(q(0.5) - std::exp(0.5)), std::abs(q(1.0, Side::right) - (e - 1)),
                                     std::abs(q(1.5) - std::exp(0.5) * (e - 1.5)), std::abs(q(2.0) - e * (e - 2))});
        std::cout << "closed-form error " << err << "\n";
        if (err > 1e-6 || (tmax >= 2.0 && !std::isfinite(err)))
            throw CheckFailed("q differs from its closed form by " + num(err));
    }
}

void cmd_branching(const std::string& preset, const std::string& params, std::size_t reps, const std::string& out,
                   const Globals& g) {
    const std::uint64_t seed = g.seed.value_or(1);
    const auto path = out_path(out, g, ("branching_" + preset + ".csv").c_str());
    if (preset == "survival") {
        Params P(params, {"lambda", "nu", "t"});
        const auto lambdas = parse_list(P.text("lambda", "1.1,1.5,2"), "lambda");
        const double nu = P.get("nu", 1.0);
        const auto ts = parse_list(P.text("t", "1,5,20"), "t");
        auto os = open_csv(path);
        os << "lambda,nu,t,reps,freq,se,exact,z\n";
        bool ok = true;
        std::uint64_t k = 0;
        for (double l : lambdas)
            for (double t : ts) {
                const auto r = survival_frequency(l, nu, t, reps, derive_seed(seed, k++));
                os << num(l) << ',' << num(nu) << ',' << num(t) << ',' << reps << ',' << num(r.freq) << ',' << num(r.se)
                   << ',' << num(r.exact) << ',' << num(r.z) << '\n';
                ok = ok && std::abs(r.z) <= 3.0;
            }
        if (g.check && !ok)
            throw CheckFailed("a survival frequency is more than 3 sd from the closed form");
    } else if (preset == "wlimit") {
        Params P(params, {"lambda", "nu", "t_large"});
        const double l = P.get("lambda", 2.0), nu = P.get("nu", 1.0);
        const auto r = w_limit_test(l, nu, P.get("t_large", 10.0 / (l - nu) + 5.0), reps, seed);
        auto os = open_csv(path);
        os << "kind,t,eta,value,se,reference\n";
        os << "ks,," << "," << num(r.ks_statistic) << ",," << num(r.ks_p) << '\n';
        os << "survivors,,," << r.survivors << ",," << r.runs << '\n';
        for (const auto& m : r.means)
            os << "mean_W," << num(m.t) << ",," << num(m.mean) << ',' << num(m.se) << ',' << num(1.0) << '\n';
        bool ok = r.ks_p > 1e-3;
        for (const auto& e : r.exceedances) {
            os << "exceedance," << num(e.t) << ',' << num(e.eta) << ',' << num(e.freq) << ',' << num(e.se) << ','
               << num(e.bound) << '\n';
            ok = ok && e.freq <= e.bound;
        }
        if (!r.warning.empty())
            std::cerr << "warning: " << r.warning << "\n";
        if (g.check && !ok)
            throw CheckFailed("W limit: KS p <= 1e-3 or an exceedance above its bound");
    } else if (preset == "coupling") {
        Params P(params, {"N", "mu", "s", "T", "j", "delta", "C4", "b_delta", "b_epsilon"});
        ModelParams p;
        p.N = P.get<std::int64_t>("N", 5000);
        p.mu = P.get("mu", 2.5e-4);
        p.s = P.get("s", 0.05);
        p.T = P.get("T", 4.0);
        const auto j = P.get<std::int32_t>("j", 2);
        CouplingParams cp;
        cp.delta = P.get("delta", 0.25);
        cp.C4 = P.get("C4", 2.0);
        const double b = b_constant(P.get("b_delta", 0.01), P.get("b_epsilon", 0.1), p.T);
        auto os = open_csv(path);
        os << "rep,started,valid,kappa,kappa_by_level,q,window,sandwich_checks,sandwich_violations,"
              "correspondence_errors,flag\n";
        std::uint64_t violations = 0;
        for (std::size_t r = 0; r < reps; ++r) {
            auto rng = RandomStream::for_replicate(seed, r);
            const auto feed = record_early_family(p, j, b, rng);
            if (!feed.started) {
                os << r << ",0,0,,,,,0,0,0,no tau_j\n";
                continue;
            }
            const auto run = run_coupling(feed, cp, rng);
            violations += run.sandwich_violations + run.correspondence_errors;
            os << r << ",1," << run.valid << ',' << num(run.kappa) << ',' << run.kappa_by_level << ',' << num(run.q)
               << ',' << num(run.window) << ',' << run.sandwich_checks << ',' << run.sandwich_violations << ','
               << run.correspondence_errors << ",\"" << run.flag << "\"\n";
        }
        if (g.check && violations > 0)
            throw CheckFailed(std::to_string(violations) + " sandwich or correspondence violations");
    } else if (preset == "tail") {
        Params P(params, {"q", "s", "b", "mu", "delta", "C4", "variant", "xs"});
        FamilyTailSpec spec;
        spec.q = P.get("q", spec.q);
        spec.s = P.get("s", spec.s);
        spec.b = P.get("b", spec.b);
        spec.mu = P.get("mu", spec.mu);
        spec.delta = P.get("delta", spec.delta);
        spec.C4 = P.get("C4", spec.C4);
        const auto v = P.text("variant", "central");
        if (v == "central")
            spec.variant = TailVariant::central;
        else if (v == "plus")
            spec.variant = TailVariant::plus;
        else if (v == "minus")
            spec.variant = TailVariant::minus;
        else
            throw ConfigError("variant: must be central, plus or minus");
        spec.xs = parse_list(P.text("xs", "0.5,1,2"), "xs");
        spec.reps = reps;
        spec.seed = seed;
        const auto r = family_tail_estimate(spec);
        auto os = open_csv(path);
        os << "x,freq,se,reference,ratio,ratio_se\n";
        bool ok = true;
        for (const auto& row : r.rows) {
            os << num(row.x) << ',' << num(row.freq) << ',' << num(row.se) << ',' << num(row.reference) << ','
               << num(row.ratio) << ',' << num(row.ratio_se) << '\n';
            ok = ok && std::abs(row.ratio - 1.0) <= 7 * spec.delta;
        }
        for (const auto& h : r.halving)
            ok = ok && std::abs(h.z) <= 3.0;
        if (g.check && !ok)
            throw CheckFailed("family tail outside [1 - 7 delta, 1 + 7 delta] or halving off by more than 3 sd");
    } else {
        throw ConfigError("preset: must be survival, wlimit, coupling or tail");
    }
}

/// Config for a directory of simulation output: explicit, the directory's own
/// config.txt, or its parent's.
ExperimentConfig dir_config(const fs::path& dir, const std::string& explicit_path) {
    if (!explicit_path.empty()) {
        std::vector<std::string> errors;
        const auto kv = parse_key_values(read_text_file(explicit_path), errors);
        return config_from_values(kv, std::move(errors), config_keys(), false);
    }
    for (const auto& p : {dir / "config.txt", dir.parent_path() / "config.txt"})
        if (fs::exists(p))
            return load_experiment_config(p.parent_path());
    throw ConfigError("no config.txt in '" + dir.string() + "' or its parent; pass --config");
}

std::vector<std::pair<std::string, fs::path>> output_dirs(const fs::path& in) {
    std::vector<std::pair<std::string, fs::path>> out;
    if (fs::exists(in / "snapshots.csv"))
        out.emplace_back(in.filename().string(), in);
    for (const auto& d : replicate_dirs(in))
        if (fs::exists(d / "snapshots.csv"))
            out.emplace_back(d.filename().string().substr(4), d);
    if (out.empty())
        throw std::runtime_error("no snapshots.csv under '" + in.string() + "'");
    return out;
}

void cmd_diagnose(const std::string& which, const std::string& in, const std::string& out, const std::string& config,
                  double t0, double t1, std::size_t reps, const Globals& g) {
    const fs::path dir(in);
    const auto cfg = dir_config(dir, config);
    const auto& p = cfg.model;
    const auto sc = scaling_constants(p.N, p.mu, p.s);
    const double b = b_constant(cfg.delta, cfg.epsilon, p.T);
    auto os = open_csv(out_path(out, g, ("diagnose_" + which + ".csv").c_str()));
    if (which == "qprofile") {
        const auto profile = solve_q(std::max(4.0, p.T), 1e-3);
        os << "rep,sup_deviation,t_at_sup,points\n";
        for (const auto& [name, d] : output_dirs(dir)) {
            const auto chk = q_profile_check(read_snapshots(d / "snapshots.csv"), sc, profile);
            os << name << ',' << num(chk.sup_deviation) << ',' << num(chk.t_at_sup) << ',' << chk.points.size() << '\n';
        }
    } else if (which == "growth") {
        os << "rep,j,skipped,q_j,points,prev_slope,prev_predicted_slope,prev_intercept,prev_predicted_intercept,"
              "cur_slope,cur_predicted_slope,cur_intercept,notice\n";
        for (const auto& [name, d] : output_dirs(dir)) {
            const auto rows = read_snapshots(d / "snapshots.csv");
            const auto taus = read_taus(d / "tau.csv", &rows);
            for (const auto& e : taus) {
                const auto gc = growth_check(rows, taus, e.j, sc, p.s, p.mu, b);
                os << name << ',' << e.j << ',' << gc.skipped << ',' << num(gc.q) << ',' << gc.prev.points << ','
                   << num(gc.prev.slope) << ',' << num(gc.prev.predicted_slope) << ',' << num(gc.prev.intercept) << ','
                   << num(gc.prev.predicted_intercept) << ',' << num(gc.cur.slope) << ',' << num(gc.cur.predicted_slope)
                   << ',' << num(gc.cur.intercept) << ",\"" << gc.notice << "\"\n";
            }
        }
    } else if (which == "front") {
        os << "rep,j,tau_j,M_tau,q_star,q_j,window,xi_j,gamma_j,tau_prime_j,b,gap_to_next,gap_in_band\n";
        for (const auto& [name, d] : output_dirs(dir)) {
            const auto rows = read_snapshots(d / "snapshots.csv");
            const auto taus = read_taus(d / "tau.csv", &rows);
            const auto sp = tau_spacing(taus, sc);
            for (const auto& f : front_constants(taus, sc, p.s, b)) {
                std::string gap, in_band;
                for (const auto& [j, gp] : sp.gaps)
                    if (j == f.j) {
                        gap = num(gp);
                        in_band = gp >= sp.lo && gp <= sp.hi ? "1" : "0";
                    }
                os << name << ',' << f.j << ',' << num(f.tau) << ',' << num(f.mean_at_tau) << ',' << num(f.q_star) << ','
                   << num(f.q) << ',' << f.window << ',' << num(f.xi) << ',' << num(f.gamma) << ',' << num(f.tau_prime)
                   << ',' << num(f.b) << ',' << gap << ',' << in_band << '\n';
            }
        }
    } else if (which == "martingale") {
        MartingaleOptions opt;
        opt.t0 = t0 >= 0 ? t0 : sc.a_N;
        opt.t1 = t1 >= 0 ? t1 : opt.t0 + 10.0;
        const std::uint64_t seed = g.seed.value_or(p.seed);
        std::vector<MartingaleValue> vals;
        os << "rep,j,x_t0,x_t1,z,integrand\n";
        for (std::size_t r = 0; r < reps; ++r) {
            auto rng = RandomStream::for_replicate(seed, r);
            vals.push_back(martingale_replicate(p, opt, rng));
            const auto& v = vals.back();
            os << r << ',' << v.j << ',' << num(v.x0) << ',' << num(v.x1) << ',' << num(v.z) << ',' << num(v.integrand)
               << '\n';
        }
        const auto rep = martingale_check(vals);
        std::cout << "mean Z = " << rep.mean << " +- " << rep.se << ", Var ratio = " << rep.ratio << " +- " << rep.ratio_se
                  << "\n";
        if (g.check && (std::abs(rep.z_score) > 3.0 || rep.ratio < 0.9 || rep.ratio > 1.1))
            throw CheckFailed("martingale mean or variance ratio outside tolerance");
    } else {
        throw ConfigError("which: must be qprofile, growth, martingale or front");
    }
}

void cmd_run(const std::string& config, const std::string& manifest, const Globals& g) {
    if (config.empty() == manifest.empty())
        throw ConfigError("run needs exactly one of --config or --manifest");
    auto cfg = manifest.empty() ? validate_config(config) : config_from_manifest(manifest);
    if (g.seed)
        cfg.model.seed = *g.seed;
    if (g.workers)
        cfg.workers = *g.workers;
    if (!g.out.empty())
        cfg.out = g.out;
    const auto res = run_experiment(cfg);
    std::cout << "replicates " << cfg.reps << ", failed " << res.failures() << ", wall " << res.wall_seconds << " s\n";
    if (res.fdd)
        for (const auto& r : res.fdd->rows)
            std::cout << "u=" << r.u << " tv=" << r.tv << " singleton=" << r.singleton_prob << "\n";
    if (res.failures() == cfg.reps)
        throw std::runtime_error("every replicate failed; see manifest.json");
    if (g.check) {
        if (res.failures() > 0)
            throw CheckFailed(std::to_string(res.failures()) + " replicates failed");
        for (const auto& r : res.replicates)
            if (!r.diag.trace_ok)
                throw CheckFailed("replicate " + std::to_string(r.index) + ": " + r.diag.trace_problem);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation and checks for the Bolthausen-Sznitman genealogy of a rapidly adapting population"};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed = 0;
    unsigned workers = 0;
    auto* seed_opt = app.add_option("--seed", seed, "Master seed")->group("Global");
    auto* workers_opt = app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber)->group("Global");
    app.add_option("--out", g.out, "Output directory")->group("Global");
    app.add_flag("--check", g.check, "Exit with code 3 when a built-in check fails")->group("Global");
    app.fallthrough();

    std::string config, prefix, manifest;
    auto* sim = app.add_subcommand("simulate", "Forward run; writes snapshots.csv, tau.csv and front.csv");
    sim->add_option("--config", config, "Model config (key = value)")->required()->check(CLI::ExistingFile);
    sim->add_option("--out-prefix", prefix, "Prefix for the output files");

    int n = 4;
    std::string method = "markov";
    double horizon = 1.0;
    std::size_t reps = 1000;
    std::string out_file;
    auto* cs = app.add_subcommand("coalescent-sample", "Bolthausen-Sznitman trajectories");
    cs->add_option("--n", n, "Sample size")->required();
    cs->add_option("--method", method, "markov or poisson")->check(CLI::IsMember({"markov", "poisson"}));
    cs->add_option("--horizon", horizon, "Time horizon")->required();
    cs->add_option("--reps", reps, "Trajectories");
    cs->add_option("--out", out_file, "CSV path");

    std::string traces, times = "0.25,0.5,1";
    std::size_t bootstrap = 1000;
    auto* cmp = app.add_subcommand("compare", "Finite-dimensional distributions of traced partitions vs the coalescent");
    cmp->add_option("--traces", traces, "Experiment directory")->required()->check(CLI::ExistingDirectory);
    cmp->add_option("--n", n, "Sample size")->required();
    cmp->add_option("--times", times, "Comma list of offsets u");
    cmp->add_option("--bootstrap", bootstrap, "Bootstrap resamples");
    cmp->add_option("--out", out_file, "CSV path");

    double tmax = 10.0, step = 1e-3;
    auto* qs = app.add_subcommand("qsolve", "Solve the q delay equation on a grid");
    qs->add_option("--tmax", tmax, "Final time")->required();
    qs->add_option("--step", step, "Grid step (1/step integer)")->required();
    qs->add_option("--out", out_file, "CSV path");

    std::string preset, params;
    auto* br = app.add_subcommand("branching", "Branching-process checks");
    br->add_option("--preset", preset, "survival, wlimit, coupling or tail")
        ->required()
        ->check(CLI::IsMember({"survival", "wlimit", "coupling", "tail"}));
    br->add_option("--params", params, "Parameter file (key = value)")->check(CLI::ExistingFile);
    br->add_option("--reps", reps, "Replicates");
    br->add_option("--out", out_file, "CSV path");

    std::string which, in;
    double t0 = -1, t1 = -1;
    std::size_t mreps = 1000;
    auto* dg = app.add_subcommand("diagnose", "Post-hoc diagnostics of simulation output");
    dg->add_option("--which", which, "qprofile, growth, martingale or front")
        ->required()
        ->check(CLI::IsMember({"qprofile", "growth", "martingale", "front"}));
    dg->add_option("--in", in, "Output directory of simulate or run")->required()->check(CLI::ExistingDirectory);
    dg->add_option("--out", out_file, "CSV path");
    dg->add_option("--config", config, "Config when the directory has no config.txt");
    dg->add_option("--t0", t0, "Martingale window start (default a_N)");
    dg->add_option("--t1", t1, "Martingale window end (default t0 + 10)");
    dg->add_option("--reps", mreps, "Martingale replicates");

    auto* run = app.add_subcommand("run", "Full pipeline: replicates, comparison, diagnostics, manifest");
    run->add_option("--config", config, "Experiment config")->check(CLI::ExistingFile);
    run->add_option("--manifest", manifest, "Re-run the configuration recorded in a manifest")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    if (*seed_opt)
        g.seed = seed;
    if (*workers_opt)
        g.workers = workers;

    try {
        if (*sim)
            cmd_simulate(config, prefix, g);
        else if (*cs)
            cmd_coalescent(n, method, horizon, reps, out_file, g);
        else if (*cmp)
            cmd_compare(traces, n, times, out_file, bootstrap, g);
        else if (*qs)
            cmd_qsolve(tmax, step, out_file, g);
        else if (*br)
            cmd_branching(preset, params, reps, out_file, g);
        else if (*dg)
            cmd_diagnose(which, in, out_file, config, t0, t1, mreps, g);
        else if (*run)
            cmd_run(config, manifest, g);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ArgumentError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const CheckFailed& e) {
        std::cerr << "check failed: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
