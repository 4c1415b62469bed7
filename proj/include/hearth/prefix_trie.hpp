#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "hearth/net.hpp"

namespace hearth {

/// Binary trie keyed by address prefixes; lookups return the longest match.
/// One tree per address family.
template <class Value>
class PrefixTrie {
public:
    /// Returns false (and leaves the trie unchanged) if `prefix` is already present.
    bool insert(const Prefix& prefix, Value value) {
        auto& nodes = tree(prefix.network().family());
        std::uint32_t at = 0;
        for (unsigned i = 0; i < prefix.length(); ++i) {
            unsigned b = prefix.network().bit(i);
            if (nodes[at].child[b] == 0) {
                nodes[at].child[b] = static_cast<std::uint32_t>(nodes.size());
                nodes.emplace_back();
            }
            at = nodes[at].child[b];
        }
        if (nodes[at].value) return false;
        nodes[at].value = std::move(value);
        ++size_;
        return true;
    }

    const Value* exact(const Prefix& prefix) const {
        const auto& nodes = tree(prefix.network().family());
        std::uint32_t at = 0;
        for (unsigned i = 0; i < prefix.length(); ++i) {
            at = nodes[at].child[prefix.network().bit(i)];
            if (at == 0) return nullptr;
        }
        return nodes[at].value ? &*nodes[at].value : nullptr;
    }

    /// Longest-prefix match; the matched prefix length is written to `matched_length` if given.
    const Value* longest_match(const IpAddress& ip, unsigned* matched_length = nullptr) const {
        const auto& nodes = tree(ip.family());
        const Value* best = nodes[0].value ? &*nodes[0].value : nullptr;
        unsigned best_len = 0;
        std::uint32_t at = 0;
        for (unsigned i = 0; i < ip.bit_width(); ++i) {
            at = nodes[at].child[ip.bit(i)];
            if (at == 0) break;
            if (nodes[at].value) {
                best = &*nodes[at].value;
                best_len = i + 1;
            }
        }
        if (best && matched_length) *matched_length = best_len;
        return best;
    }

    bool contains(const IpAddress& ip) const { return longest_match(ip) != nullptr; }

    std::size_t size() const noexcept { return size_; }
    bool empty() const noexcept { return size_ == 0; }

private:
    struct Node {
        std::uint32_t child[2]{0, 0};
        std::optional<Value> value;
    };

    std::vector<Node>& tree(IpFamily f) { return f == IpFamily::V4 ? v4_ : v6_; }
    const std::vector<Node>& tree(IpFamily f) const { return f == IpFamily::V4 ? v4_ : v6_; }

    std::vector<Node> v4_{1};
    std::vector<Node> v6_{1};
    std::size_t size_ = 0;
};

}  // namespace hearth
