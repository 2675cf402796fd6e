#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace taxo {

// A term's identity is its normalized surface: case-folded with whitespace
// runs collapsed. Multi-word terms stay atomic ("dairy, cheese & eggs").
class Term {
public:
    Term() = default;
    explicit Term(const std::string& raw);

    const std::string& surface() const { return surface_; }
    bool empty() const { return surface_.empty(); }

    auto operator<=>(const Term&) const = default;

private:
    std::string surface_;
};

std::string normalize_surface(const std::string& raw);

// Rooted tree of terms. Immutable once built; every mutation-style
// operation returns a new value. Children keep insertion order, which all
// tie-breaking downstream relies on.
class Taxonomy {
public:
    // Edges are (parent, child) in file order. Validates single root,
    // single parent, connectivity.
    static Taxonomy from_edges(const std::vector<std::pair<Term, Term>>& edges);

    // Degenerate one-node tree (e.g. a core whose leaves were all removed).
    static Taxonomy single(const Term& root);

    int node_count() const { return static_cast<int>(order_.size()); }
    int edge_count() const { return node_count() - 1; }
    const Term& root() const { return order_[root_]; }
    bool has(const Term& t) const { return index_.count(t.surface()) > 0; }

    // Insertion order; stable across identical inputs.
    const std::vector<Term>& nodes() const { return order_; }

    std::optional<Term> parent(const Term& t) const;
    const std::vector<Term>& children(const Term& t) const;
    bool is_leaf(const Term& t) const;

    // Parent first, root last; empty for the root.
    std::vector<Term> ancestors(const Term& t) const;
    int depth(const Term& t) const;

    // Children of t's parent except t itself; empty for the root.
    std::vector<Term> siblings(const Term& t) const;

    // Nodes with no children, in node insertion order.
    std::vector<Term> leaves() const;

    std::vector<std::pair<Term, Term>> edges() const;

    nlohmann::json to_json() const;
    static Taxonomy from_json(const nlohmann::json& j);

private:
    int id_of(const Term& t, const char* who) const;

    std::vector<Term> order_;
    std::unordered_map<std::string, int> index_;
    std::vector<int> parent_;  // -1 for the root
    std::vector<std::vector<Term>> children_;
    int root_ = -1;
};

// TSV edge list, one "parent<TAB>child" per line.
Taxonomy load_taxonomy(const std::string& path);
void save_taxonomy(const Taxonomy& tax, const std::string& path);

// Returns a copy with child attached as a new leaf under parent.
Taxonomy attach_term(const Taxonomy& tax, const Term& parent, const Term& child);

struct SplitRatios {
    double train = 0.64;
    double dev = 0.16;
    double test = 0.20;
};

// All leaves held out; the remainder is the core taxonomy the held-out
// terms are re-attached to.
struct LeafSplit {
    Taxonomy core;
    std::vector<std::pair<Term, Term>> train, dev, test;  // (term, gold parent)
    std::uint64_t seed = 0;
};

LeafSplit ablate_leaves(const Taxonomy& tax, const SplitRatios& ratios, std::uint64_t seed);

}  // namespace taxo

template <>
struct std::hash<taxo::Term> {
    std::size_t operator()(const taxo::Term& t) const noexcept {
        return std::hash<std::string>{}(t.surface());
    }
};
