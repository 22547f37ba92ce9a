#pragma once

#include <bsgen/ancestry.hpp>
#include <bsgen/coalescent.hpp>
#include <bsgen/error.hpp>
#include <bsgen/partition.hpp>
#include <bsgen/popsim.hpp>
#include <bsgen/rng.hpp>
#include <bsgen/stats.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

namespace bsgen {

/// Sampled individuals, identified by their pin slots in the store so that
/// they survive simplification.
struct SampleSet {
    double t_sample = 0;
    std::vector<std::int32_t> individuals;
    std::vector<std::size_t> pin_slots;

    std::size_t size() const noexcept { return pin_slots.size(); }
    AncestryStore::NodeId node(const AncestryStore& store, std::size_t i) const { return store.pinned().at(pin_slots.at(i)); }
};

/// n distinct individuals uniformly at random (Floyd's algorithm), pinned.
inline SampleSet sample_individuals(const PopulationState& st, AncestryStore& store, int n, RandomStream& rng) {
    if (n < 1 || n > st.N())
        throw ArgumentError("sample size must lie in [1, N]");
    const auto N = static_cast<std::uint64_t>(st.N());
    std::unordered_set<std::uint64_t> chosen;
    std::vector<std::int32_t> order;
    for (std::uint64_t j = N - static_cast<std::uint64_t>(n); j < N; ++j) {
        const std::uint64_t r = rng.uniform_index(j + 1);
        const std::uint64_t pick = chosen.count(r) ? j : r;
        chosen.insert(pick);
        order.push_back(static_cast<std::int32_t>(pick));
    }
    SampleSet set;
    set.t_sample = st.t;
    for (auto ind : order) {
        set.individuals.push_back(ind);
        set.pin_slots.push_back(store.pin(store.living_node(ind)));
    }
    return set;
}

/// Pi_N at backward time u_back (model time units): i and j share a block iff
/// their lineages pass through the same node at forward time t_sample - u_back.
inline Partition trace_partition(const AncestryStore& store, const SampleSet& samples, double u_back) {
    if (u_back < 0.0)
        throw ArgumentError("trace_partition: negative backward time");
    const double tau = samples.t_sample - u_back;
    std::vector<AncestryStore::NodeId> anc;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto a = store.ancestor_at(samples.node(store, i), tau);
        if (a == AncestryStore::none)
            throw ArgumentError("trace_partition: backward time reaches before the recorded ancestry");
        anc.push_back(a);
    }
    return Partition::from_labels<AncestryStore::NodeId>(anc);
}

/// Self-contained record of the sampled lineages.
struct SampleTrace {
    struct Point {
        double time;
        std::int32_t type;
        AncestryStore::NodeId node;
        NodeKind kind;
    };

    double t_sample = 0;
    std::vector<std::vector<Point>> lineages;     ///< root-to-sample, per sample
    std::vector<std::vector<double>> mutation_times; ///< V_{i,.}
    std::vector<std::vector<double>> coalescence;    ///< T_{i,j}; -inf if never within the record

    std::size_t size() const noexcept { return lineages.size(); }

    double start_time() const {
        double t = -std::numeric_limits<double>::infinity();
        for (const auto& l : lineages)
            t = std::max(t, l.front().time);
        return t;
    }

    /// Type of sample i's ancestor at forward time t (U_i).
    std::int32_t ancestor_type(std::size_t i, double t) const { return point_at(i, t).type; }

    /// Pi_N at backward time u_back (model time units).
    Partition partition_at(double u_back) const {
        if (u_back < 0.0)
            throw ArgumentError("partition_at: negative backward time");
        const double tau = t_sample - u_back;
        std::vector<AncestryStore::NodeId> anc;
        for (std::size_t i = 0; i < size(); ++i)
            anc.push_back(point_at(i, tau).node);
        return Partition::from_labels<AncestryStore::NodeId>(anc);
    }

  private:
    const Point& point_at(std::size_t i, double t) const {
        const auto& l = lineages.at(i);
        if (t < l.front().time)
            throw ArgumentError("time precedes the recorded lineage");
        auto it = std::upper_bound(l.begin(), l.end(), t, [](double v, const Point& p) { return v < p.time; });
        return *(it - 1);
    }
};

/// Lineages, mutation times V and pairwise coalescence times T of the samples.
/// T_{i,j} is the last forward time at which i and j share an ancestor: the
/// earlier of the two times at which their root-to-sample paths part.
inline SampleTrace extract_times(const AncestryStore& store, const SampleSet& samples) {
    SampleTrace tr;
    tr.t_sample = samples.t_sample;
    const std::size_t n = samples.size();
    std::vector<std::vector<AncestryStore::NodeId>> paths;
    for (std::size_t i = 0; i < n; ++i) {
        paths.push_back(store.lineage(samples.node(store, i)));
        std::vector<SampleTrace::Point> pts;
        std::vector<double> muts;
        for (auto id : paths.back()) {
            const auto& nd = store.node(id);
            pts.push_back({nd.time, nd.type, id, nd.kind});
            if (nd.kind == NodeKind::mutation)
                muts.push_back(nd.time);
        }
        tr.lineages.push_back(std::move(pts));
        tr.mutation_times.push_back(std::move(muts));
    }
    tr.coalescence.assign(n, std::vector<double>(n, tr.t_sample));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& a = paths[i];
            const auto& b = paths[j];
            double T;
            if (a.front() != b.front()) {
                T = -std::numeric_limits<double>::infinity();
            } else {
                std::size_t k = 0;
                while (k < a.size() && k < b.size() && a[k] == b[k])
                    ++k;
                const double ta = k < a.size() ? store.node(a[k]).time : tr.t_sample;
                const double tb = k < b.size() ? store.node(b[k]).time : tr.t_sample;
                T = std::min(ta, tb);
            }
            tr.coalescence[i][j] = tr.coalescence[j][i] = T;
        }
    }
    return tr;
}

struct FddRow {
    double u = 0;                ///< backward time offset, units of a_N (evaluated at a_N (1 + u))
    double tv = 0;
    double ci_low = 0;
    double ci_high = 0;
    double singleton_prob = 0;   ///< empirical P(Pi_N = singletons) at this time
    double exact_singleton_prob = 0;
    double null_mean = 0;        ///< TV expected from sampling noise alone
    double null_sd = 0;
};

struct FddReport {
    int n = 0;
    std::size_t replicates = 0;
    std::vector<FddRow> rows;
    double joint_tv = 0;
    double joint_null_mean = 0;
    double joint_null_sd = 0;
    std::string warning;
};

struct FddOptions {
    std::size_t bootstrap = 1000;
    std::uint64_t seed = 0x5eed;
};

/// Compares observed partitions (observed[r][k] is replicate r at time u[k])
/// with the Bolthausen-Sznitman law at times u[k]. Times must be increasing
/// for the joint comparison.
inline FddReport fdd_compare_partitions(const std::vector<std::vector<Partition>>& observed, int n,
                                        const std::vector<double>& u, const FddOptions& opt = {}) {
    if (!std::is_sorted(u.begin(), u.end()))
        throw ArgumentError("fdd_compare: times must be increasing");
    if (observed.empty())
        throw ArgumentError("fdd_compare: no replicates");
    FddReport rep;
    rep.n = n;
    rep.replicates = observed.size();
    if (observed.size() < 100)
        rep.warning = "only " + std::to_string(observed.size()) + " replicates; distances are unreliable below 100";

    PartitionSpace space(n);
    const auto exact = bs_exact_fdd(n, u);
    const std::size_t R = observed.size();
    std::vector<std::vector<std::size_t>> idx(u.size(), std::vector<std::size_t>(R));
    for (std::size_t r = 0; r < R; ++r) {
        if (observed[r].size() != u.size())
            throw ArgumentError("fdd_compare: replicate has the wrong number of times");
        for (std::size_t k = 0; k < u.size(); ++k)
            idx[k][r] = space.index_of(observed[r][k]);
    }
    RandomStream rng(opt.seed);
    for (std::size_t k = 0; k < u.size(); ++k) {
        std::vector<double> counts(space.size(), 0.0);
        for (auto s : idx[k])
            counts[s] += 1.0;
        const auto emp = stats::normalize_counts(counts);
        FddRow row;
        row.u = u[k];
        row.tv = stats::total_variation(emp, exact[k]);
        const auto boot = stats::bootstrap_tv(idx[k], exact[k], opt.bootstrap, rng);
        row.ci_low = stats::quantile(boot, 0.025);
        row.ci_high = stats::quantile(boot, 0.975);
        row.singleton_prob = emp[0];
        row.exact_singleton_prob = exact[k][0];
        const auto null = stats::mean_se(stats::null_tv(exact[k], R, opt.bootstrap, rng));
        row.null_mean = null.mean;
        row.null_sd = null.sd;
        rep.rows.push_back(row);
    }

    // Joint law of the path over all requested times.
    const auto joint = bs_exact_joint(n, u);
    std::map<std::vector<std::size_t>, std::size_t> path_index;
    std::vector<double> ref;
    for (const auto& [path, p] : joint) {
        path_index.emplace(path, ref.size());
        ref.push_back(p);
    }
    std::vector<double> counts(ref.size() + 1, 0.0); // last cell: paths the reference never produces
    std::vector<std::size_t> labels(R);
    for (std::size_t r = 0; r < R; ++r) {
        std::vector<std::size_t> path(u.size());
        for (std::size_t k = 0; k < u.size(); ++k)
            path[k] = idx[k][r];
        auto it = path_index.find(path);
        labels[r] = it == path_index.end() ? ref.size() : it->second;
        counts[labels[r]] += 1.0;
    }
    ref.push_back(0.0);
    rep.joint_tv = stats::total_variation(stats::normalize_counts(counts), ref);
    const auto jnull = stats::mean_se(stats::null_tv(ref, R, std::min<std::size_t>(opt.bootstrap, 200), rng));
    rep.joint_null_mean = jnull.mean;
    rep.joint_null_sd = jnull.sd;
    return rep;
}

/// Evaluates each trace at backward times a_N (1 + u_k) and compares with the
/// coalescent at times u_k.
inline FddReport fdd_compare(const std::vector<SampleTrace>& traces, int n, const std::vector<double>& u, double a_N,
                             const FddOptions& opt = {}) {
    std::vector<std::vector<Partition>> observed;
    observed.reserve(traces.size());
    for (const auto& tr : traces) {
        if (static_cast<int>(tr.size()) != n)
            throw ArgumentError("fdd_compare: trace sample size differs from n");
        std::vector<Partition> row;
        for (double uk : u)
            row.push_back(tr.partition_at(a_N * (1.0 + uk)));
        observed.push_back(std::move(row));
    }
    return fdd_compare_partitions(observed, n, u, opt);
}

} // namespace bsgen
