#pragma once

#include <bsgen/ancestry.hpp>
#include <bsgen/config.hpp>
#include <bsgen/diagnostics.hpp>
#include <bsgen/error.hpp>
#include <bsgen/genealogy.hpp>
#include <bsgen/popsim.hpp>
#include <bsgen/rng.hpp>
#include <bsgen/scaling.hpp>
#include <bsgen/stats.hpp>

#include <boost/version.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace bsgen {

inline constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Single runs

struct ModelRun {
    ScaleConstants sc;
    std::vector<SnapshotRow> rows;
    std::vector<TauEntry> taus;
    SimSummary summary;
};

inline double snapshot_interval(const ModelParams& p, const ScaleConstants& sc) {
    return p.snapshot_dt > 0.0 ? p.snapshot_dt : sc.a_N / 50.0;
}

/// Forward run to T a_N with snapshots and tau records (no ancestry).
inline ModelRun simulate_model(const ModelParams& p, RandomStream& rng) {
    validate_model(p);
    ModelRun r;
    r.sc = scaling_constants(p.N, p.mu, p.s);
    PopulationState st = init_population(p);
    SnapshotRecorder snaps(snapshot_interval(p, r.sc));
    TauTracker taus(p.s, p.mu);
    taus.start(st);
    r.summary = run_until(st, p, p.T * r.sc.a_N, rng, snaps, taus);
    r.rows = snaps.rows();
    r.taus = taus.entries();
    return r;
}

/// Everything one replicate of the experiment produces.
struct ReplicateData {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    ScaleConstants sc;
    double t_record = 0;  ///< ancestry is recorded from here on
    std::vector<SnapshotRow> rows;
    std::vector<TauEntry> taus;
    AncestryStore store;  ///< sample ancestry only
    SampleSet samples;
    SampleTrace trace;
    std::vector<Partition> partitions; ///< at backward times a_N (1 + u_k)
    SimSummary summary;
};

/// Runs replicate `index`: forward to T a_N, ancestry recorded over the last
/// (t + 1) a_N (earlier history cannot reach the traced partitions), then n
/// samples traced back.
inline ReplicateData simulate_replicate(const ExperimentConfig& cfg, std::size_t index) {
    const auto& p = cfg.model;
    validate_model(p);
    ReplicateData d;
    d.index = index;
    d.seed = derive_seed(p.seed, index);
    d.sc = scaling_constants(p.N, p.mu, p.s);
    RandomStream rng(d.seed);
    const double t_end = p.T * d.sc.a_N;
    d.t_record = std::max(0.0, t_end - (cfg.t + 1.0) * d.sc.a_N);

    PopulationState st = init_population(p);
    SnapshotRecorder snaps(snapshot_interval(p, d.sc));
    TauTracker taus(p.s, p.mu);
    taus.start(st);
    const auto s1 = run_until(st, p, d.t_record, rng, snaps, taus);
    d.store = AncestryStore(st);
    AncestryRecorder anc(d.store, p.simplify_interval > 0 ? p.simplify_interval : p.N);
    const auto s2 = run_until(st, p, t_end, rng, snaps, taus, anc);
    d.summary = s2;
    d.summary.events += s1.events;
    d.summary.death_births += s1.death_births;
    d.summary.mutations += s1.mutations;
    d.summary.clamped_events += s1.clamped_events;
    d.summary.refreshes += s1.refreshes;
    d.summary.max_fitness_drift = std::max(s1.max_fitness_drift, s2.max_fitness_drift);
    d.summary.max_mean_drift = std::max(s1.max_mean_drift, s2.max_mean_drift);

    d.samples = sample_individuals(st, d.store, cfg.sample_size, rng);
    d.store.retire_living();
    d.store.simplify();
    d.trace = extract_times(d.store, d.samples);
    for (double u : cfg.times)
        d.partitions.push_back(d.trace.partition_at(d.sc.a_N * (1.0 + u)));
    d.rows = snaps.rows();
    d.taus = taus.entries();
    return d;
}

/// Exact consistency of a trace over [t_from, t_sample]: T is symmetric and
/// ultrametric, partitions coarsen with backward time, and the blocks at each
/// time are the classes {T_ij > tau}. Returns the first problem found, or
/// an empty string.
inline std::string check_trace(const SampleTrace& tr, double t_from) {
    const std::size_t n = tr.size();
    const auto& T = tr.coalescence;
    for (std::size_t i = 0; i < n; ++i) {
        if (T[i][i] != tr.t_sample)
            return "diagonal of T differs from the sampling time";
        for (std::size_t j = 0; j < n; ++j) {
            if (T[i][j] != T[j][i])
                return "T is not symmetric";
            for (std::size_t k = 0; k < n; ++k)
                if (T[i][k] < std::min(T[i][j], T[j][k]))
                    return "ultrametric inequality fails for samples " + std::to_string(i) + ", " + std::to_string(j) +
                           ", " + std::to_string(k);
        }
    }
    // Partitions change only at lineage node times; check at each of them.
    std::vector<double> times{t_from, tr.t_sample};
    for (const auto& l : tr.lineages)
        for (const auto& p : l)
            if (p.time >= t_from)
                times.push_back(p.time);
    std::sort(times.begin(), times.end(), std::greater<>());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    Partition prev = Partition::singletons(static_cast<int>(n));
    for (double tau : times) {
        const auto p = tr.partition_at(tr.t_sample - tau);
        if (!prev.refines(p))
            return "partitions do not coarsen at forward time " + detail::format_double(tau);
        const auto lab = p.labels();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if ((lab[i] == lab[j]) != (T[i][j] > tau))
                    return "blocks disagree with the coalescence times at " + detail::format_double(tau);
        prev = p;
    }
    return {};
}

// ---------------------------------------------------------------------------
// Per-replicate diagnostics

struct ReplicateDiagnostics {
    double q_sup_deviation = std::numeric_limits<double>::quiet_NaN();
    double tau_fraction_in_band = std::numeric_limits<double>::quiet_NaN();
    std::size_t tau_gaps = 0;
    double growth_median_abs_slope_residual = std::numeric_limits<double>::quiet_NaN();
    std::size_t growth_fits = 0;
    bool trace_ok = false;
    std::string trace_problem;
    bool singletons_at_a_N = false;
};

inline double median_or_nan(std::vector<double> v) {
    return v.empty() ? std::numeric_limits<double>::quiet_NaN() : stats::quantile(std::move(v), 0.5);
}

inline ReplicateDiagnostics replicate_diagnostics(const ReplicateData& d, const ExperimentConfig& cfg,
                                                  const QProfile& profile) {
    ReplicateDiagnostics r;
    const auto& p = cfg.model;
    r.q_sup_deviation = q_profile_check(d.rows, d.sc, profile).sup_deviation;
    const auto sp = tau_spacing(d.taus, d.sc, d.sc.a_N);
    r.tau_fraction_in_band = sp.fraction_in_band;
    r.tau_gaps = sp.gaps.size();
    const double b = b_constant(cfg.delta, cfg.epsilon, p.T);
    std::vector<double> res;
    for (const auto& e : d.taus) {
        if (e.tau < d.sc.a_N)
            continue;
        const auto g = growth_check(d.rows, d.taus, e.j, d.sc, p.s, p.mu, b);
        if (!g.skipped)
            res.push_back(std::abs(g.prev.slope_residual));
    }
    r.growth_fits = res.size();
    r.growth_median_abs_slope_residual = median_or_nan(res);
    r.trace_problem = check_trace(d.trace, d.t_record);
    r.trace_ok = r.trace_problem.empty();
    r.singletons_at_a_N = d.trace.partition_at(d.sc.a_N).is_singletons();
    return r;
}

// ---------------------------------------------------------------------------
// Files

namespace detail {

inline std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write '" + path.string() + "'");
    return os;
}

inline void close_out(std::ofstream& os, const fs::path& path) {
    os.close();
    if (!os)
        throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, sep))
        out.push_back(cur);
    if (!line.empty() && line.back() == sep)
        out.emplace_back();
    return out;
}

inline std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || trim(line) != header)
        throw std::runtime_error("'" + path.string() + "': expected header '" + header + "'");
    const auto cols = split(header, ',').size();
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (trim(line).empty())
            continue;
        auto f = split(trim(line), ',');
        if (f.size() != cols)
            throw std::runtime_error("'" + path.string() + "': malformed row '" + line + "'");
        rows.push_back(std::move(f));
    }
    return rows;
}

template <typename T>
T field(const std::string& text, const fs::path& path) {
    T v{};
    if (!parse_number(text, v))
        throw std::runtime_error("'" + path.string() + "': bad number '" + text + "'");
    return v;
}

} // namespace detail

inline void write_snapshots(const fs::path& path, const std::vector<SnapshotRow>& rows) {
    auto os = detail::open_out(path);
    os << "t,j,X_j\n";
    for (const auto& r : rows)
        os << detail::format_double(r.t) << ',' << r.j << ',' << r.count << '\n';
    detail::close_out(os, path);
}

inline void write_taus(const fs::path& path, const std::vector<TauEntry>& taus) {
    auto os = detail::open_out(path);
    os << "j,tau_j\n";
    for (const auto& e : taus)
        os << e.j << ',' << detail::format_double(e.tau) << '\n';
    detail::close_out(os, path);
}

/// Front constants per recorded tau_j, including the exact M(tau_j).
inline void write_front(const fs::path& path, const std::vector<FrontConstants>& fc) {
    auto os = detail::open_out(path);
    os << "j,tau_j,M_tau,q_j,xi_j,gamma_j,tau_prime_j\n";
    for (const auto& f : fc)
        os << f.j << ',' << detail::format_double(f.tau) << ',' << detail::format_double(f.mean_at_tau) << ','
           << detail::format_double(f.q) << ',' << detail::format_double(f.xi) << ',' << detail::format_double(f.gamma)
           << ',' << detail::format_double(f.tau_prime) << '\n';
    detail::close_out(os, path);
}

inline std::vector<SnapshotRow> read_snapshots(const fs::path& path) {
    std::vector<SnapshotRow> rows;
    for (const auto& f : detail::read_csv(path, "t,j,X_j"))
        rows.push_back({detail::field<double>(f[0], path), detail::field<std::int32_t>(f[1], path),
                        detail::field<std::int64_t>(f[2], path)});
    return rows;
}

/// tau records; M(tau_j) comes from front.csv next to tau.csv when present,
/// otherwise from the last snapshot at or before tau_j.
inline std::vector<TauEntry> read_taus(const fs::path& path, const std::vector<SnapshotRow>* snapshots = nullptr) {
    std::vector<TauEntry> out;
    for (const auto& f : detail::read_csv(path, "j,tau_j"))
        out.push_back({detail::field<std::int32_t>(f[0], path), detail::field<double>(f[1], path), 0.0});
    const auto front = path.parent_path() / "front.csv";
    if (fs::exists(front)) {
        const auto rows = detail::read_csv(front, "j,tau_j,M_tau,q_j,xi_j,gamma_j,tau_prime_j");
        for (auto& e : out)
            for (const auto& f : rows)
                if (detail::field<std::int32_t>(f[0], front) == e.j)
                    e.mean_at_tau = detail::field<double>(f[2], front);
    } else if (snapshots) {
        const auto sums = summarize_snapshots(*snapshots);
        for (auto& e : out) {
            auto it = std::upper_bound(sums.begin(), sums.end(), e.tau,
                                       [](double v, const SnapshotSummary& s) { return v < s.t; });
            if (it != sums.begin())
                e.mean_at_tau = (it - 1)->mean;
        }
    }
    return out;
}

inline void write_samples(const fs::path& path, const AncestryStore& store, const SampleSet& samples) {
    auto os = detail::open_out(path);
    for (std::size_t i = 0; i < samples.size(); ++i)
        os << samples.node(store, i) << '\n';
    detail::close_out(os, path);
}

inline void write_trace(const fs::path& path, const SampleTrace& tr) {
    auto os = detail::open_out(path);
    os << "sample,time,type,node,kind\n";
    for (std::size_t i = 0; i < tr.size(); ++i)
        for (const auto& p : tr.lineages[i])
            os << i << ',' << detail::format_double(p.time) << ',' << p.type << ',' << p.node << ',' << to_string(p.kind)
               << '\n';
    detail::close_out(os, path);
}

/// Rebuilds the store and sample set of a replicate directory.
inline std::pair<AncestryStore, SampleSet> read_ancestry(const fs::path& dir, double t_sample) {
    const auto apath = dir / "ancestry.csv";
    std::vector<AncestryStore::Node> nodes;
    std::int64_t expect = 0;
    for (const auto& f : detail::read_csv(apath, "node_id,parent_id,time,type,kind")) {
        if (detail::field<std::int64_t>(f[0], apath) != expect++)
            throw std::runtime_error("'" + apath.string() + "': node ids must be 0, 1, 2, ...");
        AncestryStore::Node n;
        n.parent = detail::field<std::int64_t>(f[1], apath);
        n.time = detail::field<double>(f[2], apath);
        n.type = detail::field<std::int32_t>(f[3], apath);
        if (f[4] == "root")
            n.kind = NodeKind::root;
        else if (f[4] == "birth")
            n.kind = NodeKind::birth;
        else if (f[4] == "mutation")
            n.kind = NodeKind::mutation;
        else
            throw std::runtime_error("'" + apath.string() + "': unknown node kind '" + f[4] + "'");
        nodes.push_back(n);
    }
    std::vector<AncestryStore::NodeId> pinned;
    std::ifstream in(dir / "samples.txt");
    if (!in)
        throw std::runtime_error("cannot open '" + (dir / "samples.txt").string() + "'");
    std::string line;
    while (std::getline(in, line))
        if (!detail::trim(line).empty())
            pinned.push_back(detail::field<AncestryStore::NodeId>(detail::trim(line), dir / "samples.txt"));
    for (auto id : pinned)
        if (id < 0 || static_cast<std::size_t>(id) >= nodes.size())
            throw std::runtime_error("samples.txt: node " + std::to_string(id) + " is not in the ancestry table");
    SampleSet samples;
    samples.t_sample = t_sample;
    for (std::size_t i = 0; i < pinned.size(); ++i)
        samples.pin_slots.push_back(i);
    return {AncestryStore::from_nodes(std::move(nodes), std::move(pinned)), std::move(samples)};
}

/// The five per-replicate files plus front.csv.
inline void write_replicate(const fs::path& dir, const ReplicateData& d, const ExperimentConfig& cfg) {
    fs::create_directories(dir);
    write_snapshots(dir / "snapshots.csv", d.rows);
    write_taus(dir / "tau.csv", d.taus);
    write_front(dir / "front.csv",
                front_constants(d.taus, d.sc, cfg.model.s, b_constant(cfg.delta, cfg.epsilon, cfg.model.T)));
    auto os = detail::open_out(dir / "ancestry.csv");
    d.store.write_csv(os);
    detail::close_out(os, dir / "ancestry.csv");
    write_samples(dir / "samples.txt", d.store, d.samples);
    write_trace(dir / "trace.csv", d.trace);
}

inline fs::path replicate_dir(const fs::path& out, std::size_t index) { return out / ("rep_" + std::to_string(index)); }

/// Config of an experiment directory (its config.txt).
inline ExperimentConfig load_experiment_config(const fs::path& dir) {
    return validate_config((dir / "config.txt").string());
}

/// Replicate directories under `dir`, ordered by index.
inline std::vector<fs::path> replicate_dirs(const fs::path& dir) {
    std::vector<std::pair<std::size_t, fs::path>> found;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        std::size_t idx = 0;
        if (e.is_directory() && name.rfind("rep_", 0) == 0 && detail::parse_number(name.substr(4), idx))
            found.emplace_back(idx, e.path());
    }
    std::sort(found.begin(), found.end());
    std::vector<fs::path> out;
    for (auto& f : found)
        out.push_back(f.second);
    return out;
}

/// Traces of every complete replicate under an experiment directory.
inline std::vector<SampleTrace> load_traces(const fs::path& dir, const ExperimentConfig& cfg) {
    const auto sc = scaling_constants(cfg.model.N, cfg.model.mu, cfg.model.s);
    std::vector<SampleTrace> traces;
    for (const auto& rep : replicate_dirs(dir)) {
        if (!fs::exists(rep / "ancestry.csv") || !fs::exists(rep / "samples.txt"))
            continue;
        auto [store, samples] = read_ancestry(rep, cfg.model.T * sc.a_N);
        traces.push_back(extract_times(store, samples));
    }
    return traces;
}

inline void write_compare(const fs::path& path, const FddReport& rep) {
    auto os = detail::open_out(path);
    os << "u,tv_distance,ci_low,ci_high,singleton_prob\n";
    for (const auto& r : rep.rows)
        os << detail::format_double(r.u) << ',' << detail::format_double(r.tv) << ',' << detail::format_double(r.ci_low)
           << ',' << detail::format_double(r.ci_high) << ',' << detail::format_double(r.singleton_prob) << '\n';
    detail::close_out(os, path);
}

// ---------------------------------------------------------------------------
// Experiment

struct ReplicateOutcome {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double wall_seconds = 0;
    std::vector<Partition> partitions;
    ReplicateDiagnostics diag;
};

struct ExperimentResult {
    fs::path out;
    std::vector<ReplicateOutcome> replicates; ///< by index
    std::optional<FddReport> fdd;
    double wall_seconds = 0;

    std::size_t failures() const {
        return static_cast<std::size_t>(std::count_if(replicates.begin(), replicates.end(), [](const auto& r) { return !r.ok; }));
    }
};

inline nlohmann::json versions_json() {
    return {{"bsgen", kVersion},
            {"compiler", __VERSION__},
            {"cplusplus", __cplusplus},
            {"boost", BOOST_LIB_VERSION},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                  "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

inline ExperimentConfig config_from_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open manifest '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (!j.contains("config") || !j["config"].is_object())
        throw ConfigError("manifest '" + path.string() + "' has no config object");
    KeyValues kv;
    for (const auto& [k, v] : j["config"].items()) {
        if (!v.is_string())
            throw ConfigError("manifest config value for '" + k + "' must be a string");
        kv[k] = v.get<std::string>();
    }
    return config_from_values(kv);
}

inline void write_diagnostics(const fs::path& path, const std::vector<ReplicateOutcome>& reps) {
    auto os = detail::open_out(path);
    os << "rep,metric,value\n";
    auto put = [&](const std::string& rep, const char* metric, double v) {
        os << rep << ',' << metric << ',' << detail::format_double(v) << '\n';
    };
    std::vector<double> q, tau, growth;
    std::size_t consistent = 0, singletons = 0, ok = 0;
    for (const auto& r : reps) {
        if (!r.ok)
            continue;
        ++ok;
        const auto id = std::to_string(r.index);
        put(id, "q_sup_deviation", r.diag.q_sup_deviation);
        put(id, "tau_fraction_in_band", r.diag.tau_fraction_in_band);
        put(id, "tau_gaps", static_cast<double>(r.diag.tau_gaps));
        put(id, "growth_median_abs_slope_residual", r.diag.growth_median_abs_slope_residual);
        put(id, "trace_consistent", r.diag.trace_ok ? 1.0 : 0.0);
        put(id, "singletons_at_a_N", r.diag.singletons_at_a_N ? 1.0 : 0.0);
        if (!std::isnan(r.diag.q_sup_deviation))
            q.push_back(r.diag.q_sup_deviation);
        if (!std::isnan(r.diag.tau_fraction_in_band))
            tau.push_back(r.diag.tau_fraction_in_band);
        if (!std::isnan(r.diag.growth_median_abs_slope_residual))
            growth.push_back(r.diag.growth_median_abs_slope_residual);
        consistent += r.diag.trace_ok;
        singletons += r.diag.singletons_at_a_N;
    }
    put("all", "q_sup_deviation_median", median_or_nan(q));
    put("all", "tau_fraction_in_band_median", median_or_nan(tau));
    put("all", "growth_median_abs_slope_residual_median", median_or_nan(growth));
    put("all", "trace_consistent_fraction", ok ? static_cast<double>(consistent) / static_cast<double>(ok) : 0.0);
    put("all", "singleton_prob_at_a_N", ok ? static_cast<double>(singletons) / static_cast<double>(ok) : 0.0);
    detail::close_out(os, path);
}

/// Runs all replicates on a pool of cfg.workers threads, writes rep_<i>/,
/// compare.csv, diagnostics.csv, config.txt and manifest.json under cfg.out.
/// A replicate that throws is recorded as failed; the others continue.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentResult res;
    res.out = cfg.out;
    fs::create_directories(res.out);
    {
        auto os = detail::open_out(res.out / "config.txt");
        os << normalized_text(cfg);
        detail::close_out(os, res.out / "config.txt");
    }
    const auto sc = scaling_constants(cfg.model.N, cfg.model.mu, cfg.model.s);
    const auto profile = solve_q(std::max(4.0, cfg.model.T), 1e-3);
    res.replicates.resize(cfg.reps);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cfg.reps)
                return;
            auto& out = res.replicates[i];
            out.index = i;
            out.seed = derive_seed(cfg.model.seed, i);
            const auto t0 = std::chrono::steady_clock::now();
            try {
                const auto d = simulate_replicate(cfg, i);
                write_replicate(replicate_dir(res.out, i), d, cfg);
                out.partitions = d.partitions;
                out.diag = replicate_diagnostics(d, cfg, profile);
                out.ok = true;
            } catch (const std::exception& e) {
                out.ok = false;
                out.error = e.what();
            }
            out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
    };
    const unsigned nthreads = std::max(1u, std::min<unsigned>(cfg.workers, static_cast<unsigned>(cfg.reps)));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < nthreads; ++k)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }

    // Aggregation in index order.
    std::vector<std::vector<Partition>> observed;
    for (const auto& r : res.replicates)
        if (r.ok)
            observed.push_back(r.partitions);
    std::string aggregate_error;
    if (!observed.empty()) {
        try {
            FddOptions opt;
            opt.bootstrap = cfg.bootstrap;
            opt.seed = derive_seed(cfg.model.seed, ~std::uint64_t{0});
            res.fdd = fdd_compare_partitions(observed, cfg.sample_size, cfg.times, opt);
            write_compare(res.out / "compare.csv", *res.fdd);
        } catch (const std::exception& e) {
            aggregate_error = e.what();
        }
    }
    write_diagnostics(res.out / "diagnostics.csv", res.replicates);
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    nlohmann::json m;
    m["tool"] = "bsgen";
    m["config"] = config_values(cfg);
    m["config_hash"] = config_hash(cfg);
    m["master_seed"] = cfg.model.seed;
    m["seed_derivation"] = "splitmix64(splitmix64(master) ^ splitmix64(index))";
    m["scale"] = {{"k_N", sc.k_N}, {"a_N", sc.a_N}, {"a1", sc.a1}, {"a2", sc.a2}, {"a3", sc.a3}};
    m["versions"] = versions_json();
    m["workers"] = nthreads;
    m["wall_seconds"] = res.wall_seconds;
    auto reps = nlohmann::json::array();
    auto fails = nlohmann::json::array();
    for (const auto& r : res.replicates) {
        nlohmann::json e{{"index", r.index}, {"seed", r.seed}, {"ok", r.ok}, {"wall_seconds", r.wall_seconds}};
        if (!r.ok) {
            e["error"] = r.error;
            fails.push_back({{"index", r.index}, {"error", r.error}});
        }
        reps.push_back(e);
    }
    m["replicates"] = reps;
    m["failures"] = fails;
    if (res.fdd && !res.fdd->warning.empty())
        m["warnings"] = {res.fdd->warning};
    if (!aggregate_error.empty())
        m["aggregate_error"] = aggregate_error;
    auto os = detail::open_out(res.out / "manifest.json");
    os << m.dump(2) << '\n';
    detail::close_out(os, res.out / "manifest.json");
    return res;
}

} // namespace bsgen
