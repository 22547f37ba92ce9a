#pragma once

#include <bsgen/error.hpp>

#include <algorithm>
#include <charconv>
#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bsgen {

/// Set partition of {1, ..., n}. Blocks are sorted internally and ordered by
/// their least element, so equal partitions compare equal.
class Partition {
  public:
    Partition() = default;

    static Partition singletons(int n) {
        if (n < 1)
            throw ArgumentError("partition needs n >= 1");
        Partition p;
        p.n_ = n;
        p.blocks_.reserve(static_cast<std::size_t>(n));
        for (int i = 1; i <= n; ++i)
            p.blocks_.push_back({i});
        return p;
    }

    /// Validates that `blocks` is a disjoint cover of {1..n} by non-empty sets.
    static Partition from_blocks(int n, std::vector<std::vector<int>> blocks) {
        if (n < 1)
            throw ArgumentError("partition needs n >= 1");
        std::vector<char> seen(static_cast<std::size_t>(n) + 1, 0);
        int covered = 0;
        for (auto& b : blocks) {
            if (b.empty())
                throw ArgumentError("partition block is empty");
            std::sort(b.begin(), b.end());
            for (int e : b) {
                if (e < 1 || e > n)
                    throw ArgumentError("partition element out of range");
                if (seen[static_cast<std::size_t>(e)]++)
                    throw ArgumentError("partition blocks overlap");
                ++covered;
            }
        }
        if (covered != n)
            throw ArgumentError("partition blocks do not cover {1..n}");
        std::sort(blocks.begin(), blocks.end(),
                  [](const auto& a, const auto& b) { return a.front() < b.front(); });
        Partition p;
        p.n_ = n;
        p.blocks_ = std::move(blocks);
        return p;
    }

    /// Elements i and j share a block iff labels[i-1] == labels[j-1].
    template <typename Label>
    static Partition from_labels(std::span<const Label> labels) {
        const int n = static_cast<int>(labels.size());
        if (n < 1)
            throw ArgumentError("partition needs n >= 1");
        std::vector<std::vector<int>> blocks;
        std::vector<Label> keys;
        for (int i = 0; i < n; ++i) {
            auto it = std::find(keys.begin(), keys.end(), labels[static_cast<std::size_t>(i)]);
            if (it == keys.end()) {
                keys.push_back(labels[static_cast<std::size_t>(i)]);
                blocks.push_back({i + 1});
            } else {
                blocks[static_cast<std::size_t>(it - keys.begin())].push_back(i + 1);
            }
        }
        Partition p;
        p.n_ = n;
        p.blocks_ = std::move(blocks); // first-occurrence order is least-element order
        return p;
    }

    /// Parses the "1,2|3|4" form written by to_string().
    static Partition parse(std::string_view text) {
        std::vector<std::vector<int>> blocks(1);
        int n = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            std::size_t end = text.find_first_of(",|", pos);
            if (end == std::string_view::npos)
                end = text.size();
            int value = 0;
            auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + end, value);
            if (ec != std::errc() || ptr != text.data() + end)
                throw ArgumentError("malformed partition string: " + std::string(text));
            blocks.back().push_back(value);
            n = std::max(n, value);
            if (end < text.size() && text[end] == '|')
                blocks.emplace_back();
            pos = end + 1;
        }
        return from_blocks(n, std::move(blocks));
    }

    int n() const noexcept { return n_; }
    std::size_t block_count() const noexcept { return blocks_.size(); }
    const std::vector<std::vector<int>>& blocks() const noexcept { return blocks_; }
    bool is_singletons() const noexcept { return blocks_.size() == static_cast<std::size_t>(n_); }

    /// Zero-based block index of each element 1..n.
    std::vector<int> labels() const {
        std::vector<int> out(static_cast<std::size_t>(n_));
        for (std::size_t b = 0; b < blocks_.size(); ++b)
            for (int e : blocks_[b])
                out[static_cast<std::size_t>(e - 1)] = static_cast<int>(b);
        return out;
    }

    /// True when every block of *this lies inside a block of `coarser`.
    bool refines(const Partition& coarser) const {
        if (coarser.n_ != n_)
            return false;
        const auto outer = coarser.labels();
        for (const auto& b : blocks_)
            for (int e : b)
                if (outer[static_cast<std::size_t>(e - 1)] != outer[static_cast<std::size_t>(b.front() - 1)])
                    return false;
        return true;
    }

    std::string to_string() const {
        std::string out;
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            if (b)
                out += '|';
            for (std::size_t i = 0; i < blocks_[b].size(); ++i) {
                if (i)
                    out += ',';
                out += std::to_string(blocks_[b][i]);
            }
        }
        return out;
    }

    friend bool operator==(const Partition&, const Partition&) = default;
    friend auto operator<=>(const Partition&, const Partition&) = default;

  private:
    int n_ = 0;
    std::vector<std::vector<int>> blocks_;
};

/// Merges the blocks at the given zero-based positions into one block.
/// A single index (or none) leaves the partition unchanged.
inline Partition merge_blocks(const Partition& p, std::span<const std::size_t> indices) {
    std::vector<char> chosen(p.block_count(), 0);
    for (auto i : indices) {
        if (i >= p.block_count())
            throw ArgumentError("merge_blocks: block index " + std::to_string(i) + " out of range");
        chosen[i] = 1;
    }
    std::vector<std::vector<int>> blocks;
    std::vector<int> merged;
    for (std::size_t b = 0; b < p.block_count(); ++b) {
        if (chosen[b])
            merged.insert(merged.end(), p.blocks()[b].begin(), p.blocks()[b].end());
        else
            blocks.push_back(p.blocks()[b]);
    }
    if (!merged.empty())
        blocks.push_back(std::move(merged));
    return Partition::from_blocks(p.n(), std::move(blocks));
}

inline Partition merge_blocks(const Partition& p, std::initializer_list<std::size_t> indices) {
    return merge_blocks(p, std::span<const std::size_t>(indices.begin(), indices.size()));
}

} // namespace bsgen
