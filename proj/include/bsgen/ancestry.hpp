#pragma once

#include <bsgen/error.hpp>
#include <bsgen/popsim.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace bsgen {

enum class NodeKind : std::uint8_t { root, birth, mutation };

inline const char* to_string(NodeKind k) {
    switch (k) {
    case NodeKind::root:
        return "root";
    case NodeKind::birth:
        return "birth";
    case NodeKind::mutation:
        return "mutation";
    }
    return "?";
}

/// Genealogy of a population as a node table. A node marks a change in an
/// individual's lineage: the founders at t = 0 (roots), a birth (the new
/// individual), or a mutation (the mutated individual). An individual keeps
/// its node when it gives birth, so a node stands for one lineage segment that
/// lasts until the next node on it.
///
/// Parents always have smaller ids than their children, and strictly earlier
/// times except at t = 0.
class AncestryStore {
  public:
    using NodeId = std::int64_t;
    static constexpr NodeId none = -1;

    struct Node {
        NodeId parent = none;
        double time = 0;
        std::int32_t type = 0;
        NodeKind kind = NodeKind::root;
    };

    AncestryStore() = default;

    /// N founders of type 0 at time 0; individual i starts on node i.
    explicit AncestryStore(std::int64_t N) {
        if (N < 1)
            throw ArgumentError("AncestryStore needs at least one founder");
        nodes_.reserve(static_cast<std::size_t>(2 * N));
        living_.resize(static_cast<std::size_t>(N));
        for (std::int64_t i = 0; i < N; ++i) {
            nodes_.push_back({none, 0.0, 0, NodeKind::root});
            living_[static_cast<std::size_t>(i)] = i;
        }
    }

    /// Founders are the current members of `st`, as roots at time st.t with
    /// their current types. Lets recording start after a burn-in.
    explicit AncestryStore(const PopulationState& st) : AncestryStore(st.N()) {
        for (std::int64_t i = 0; i < st.N(); ++i) {
            auto& n = nodes_[static_cast<std::size_t>(i)];
            n.time = st.t;
            n.type = st.type_of(static_cast<std::int32_t>(i));
        }
    }

    /// `child` is replaced by a new individual descending from `parent`.
    NodeId record_birth(std::int32_t parent, std::int32_t child, double t) {
        const NodeId p = living_node(parent);
        return record_birth_typed(p, child, t, nodes_[static_cast<std::size_t>(p)].type);
    }

    /// record_birth with the parent's type supplied by the caller, which saves
    /// a lookup in the node table on the simulation hot path.
    NodeId record_birth_typed(NodeId p, std::int32_t child, double t, std::int32_t type) {
        check_individual(child);
        nodes_.push_back({p, t, type, NodeKind::birth});
        const auto id = static_cast<NodeId>(nodes_.size() - 1);
        living_[static_cast<std::size_t>(child)] = id;
        return id;
    }

    NodeId record_mutation(std::int32_t individual, double t) {
        const NodeId p = living_node(individual);
        return record_mutation_typed(individual, t, nodes_[static_cast<std::size_t>(p)].type + 1);
    }

    NodeId record_mutation_typed(std::int32_t individual, double t, std::int32_t new_type) {
        const NodeId p = living_node(individual);
        nodes_.push_back({p, t, new_type, NodeKind::mutation});
        const auto id = static_cast<NodeId>(nodes_.size() - 1);
        living_[static_cast<std::size_t>(individual)] = id;
        return id;
    }

    NodeId living_node(std::int32_t individual) const {
        check_individual(individual);
        const NodeId n = living_[static_cast<std::size_t>(individual)];
        if (n == none)
            throw InternalError("individual " + std::to_string(individual) + " has no living node");
        return n;
    }

    /// Keeps `node` (and its ancestry) through every later simplification.
    /// Returns the index into pinned() that tracks the node across remaps.
    std::size_t pin(NodeId node) {
        check_node(node);
        pinned_.push_back(node);
        return pinned_.size() - 1;
    }

    const std::vector<NodeId>& pinned() const noexcept { return pinned_; }

    /// Drops the living individuals so that only pinned ancestry survives the
    /// next simplification.
    void retire_living() { std::fill(living_.begin(), living_.end(), none); }

    std::size_t size() const noexcept { return nodes_.size(); }
    const Node& node(NodeId id) const {
        check_node(id);
        return nodes_[static_cast<std::size_t>(id)];
    }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }

    /// Removes every node that is not an ancestor (inclusive) of a living or
    /// pinned node. Ids are compacted in order, so parent < child still holds;
    /// living and pinned ids are remapped.
    void simplify() {
        // Parents precede children, so one backward sweep marks every ancestor.
        std::vector<char> keep(nodes_.size(), 0);
        for (NodeId n : living_)
            if (n != none)
                keep[static_cast<std::size_t>(n)] = 1;
        for (NodeId n : pinned_)
            keep[static_cast<std::size_t>(n)] = 1;
        for (std::size_t i = nodes_.size(); i-- > 0;)
            if (keep[i] && nodes_[i].parent != none)
                keep[static_cast<std::size_t>(nodes_[i].parent)] = 1;

        std::vector<NodeId> remap(nodes_.size(), none);
        std::size_t out = 0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (!keep[i])
                continue;
            Node nd = nodes_[i];
            if (nd.parent != none)
                nd.parent = remap[static_cast<std::size_t>(nd.parent)];
            remap[i] = static_cast<NodeId>(out);
            nodes_[out++] = nd;
        }
        nodes_.resize(out);
        for (auto& n : living_)
            if (n != none)
                n = remap[static_cast<std::size_t>(n)];
        for (auto& n : pinned_)
            n = remap[static_cast<std::size_t>(n)];
        ++simplifications_;
    }

    std::uint64_t simplifications() const noexcept { return simplifications_; }

    /// The node on `node`'s lineage that is current at forward time `t`: the
    /// most recent node with time <= t. Returns none if t precedes the root.
    NodeId ancestor_at(NodeId node, double t) const {
        check_node(node);
        while (node != none && nodes_[static_cast<std::size_t>(node)].time > t)
            node = nodes_[static_cast<std::size_t>(node)].parent;
        return node;
    }

    /// Root-to-node path.
    std::vector<NodeId> lineage(NodeId node) const {
        check_node(node);
        std::vector<NodeId> path;
        for (NodeId n = node; n != none; n = nodes_[static_cast<std::size_t>(n)].parent)
            path.push_back(n);
        std::reverse(path.begin(), path.end());
        return path;
    }

    /// CSV dump: node_id,parent_id,time,type,kind (parent -1 for roots).
    void write_csv(std::ostream& os) const {
        os << "node_id,parent_id,time,type,kind\n";
        os.precision(17);
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const auto& n = nodes_[i];
            os << i << ',' << n.parent << ',' << n.time << ',' << n.type << ',' << to_string(n.kind) << '\n';
        }
    }

    /// Builds a store from a node table (e.g. a parsed dump). No living
    /// individuals; every node listed in `pinned` is pinned.
    static AncestryStore from_nodes(std::vector<Node> nodes, std::vector<NodeId> pinned) {
        AncestryStore s;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const auto& n = nodes[i];
            if (n.parent != none && (n.parent < 0 || static_cast<std::size_t>(n.parent) >= i))
                throw ArgumentError("ancestry table: parent id must precede node " + std::to_string(i));
            if (n.parent != none && nodes[static_cast<std::size_t>(n.parent)].time > n.time)
                throw ArgumentError("ancestry table: parent later than child at node " + std::to_string(i));
        }
        s.nodes_ = std::move(nodes);
        for (NodeId p : pinned)
            s.pin(p);
        return s;
    }

  private:
    void check_individual(std::int32_t i) const {
        if (i < 0 || static_cast<std::size_t>(i) >= living_.size())
            throw InternalError("unknown individual " + std::to_string(i));
    }
    void check_node(NodeId n) const {
        if (n < 0 || static_cast<std::size_t>(n) >= nodes_.size())
            throw InternalError("unknown node " + std::to_string(n));
    }

    std::vector<Node> nodes_;
    std::vector<NodeId> living_;
    std::vector<NodeId> pinned_;
    std::uint64_t simplifications_ = 0;
};

/// popsim hook that records every event in an AncestryStore and simplifies it
/// every `interval` events.
class AncestryRecorder {
  public:
    AncestryRecorder(AncestryStore& store, std::int64_t interval) : store_(&store), interval_(interval) {
        if (interval < 1)
            throw ArgumentError("simplify interval must be positive");
    }

    void after_event(const PopulationState&, const EventRecord& rec) {
        if (rec.kind == EventKind::death_birth)
            store_->record_birth_typed(store_->living_node(rec.parent), rec.victim, rec.time, rec.new_type);
        else
            store_->record_mutation_typed(rec.victim, rec.time, rec.new_type);
        if (++since_ >= interval_) {
            store_->simplify();
            since_ = 0;
        }
    }

  private:
    AncestryStore* store_;
    std::int64_t interval_;
    std::int64_t since_ = 0;
};

} // namespace bsgen
