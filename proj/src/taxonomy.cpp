#include "taxo/taxonomy.hpp"

#include <cmath>
#include <fstream>

#include "taxo/common.hpp"
#include "taxo/rng.hpp"
#include "taxo/text.hpp"

namespace taxo {

std::string normalize_surface(const std::string& raw) {
    return text::collapse_ws(text::ascii_lower(raw));
}

Term::Term(const std::string& raw) : surface_(normalize_surface(raw)) {
    if (surface_.empty()) throw ValidationError("term surface must not be empty");
}

Taxonomy Taxonomy::from_edges(const std::vector<std::pair<Term, Term>>& edges) {
    if (edges.empty()) throw ValidationError("taxonomy has no edges");

    Taxonomy tax;
    auto intern = [&tax](const Term& t) {
        auto it = tax.index_.find(t.surface());
        if (it != tax.index_.end()) return it->second;
        int id = static_cast<int>(tax.order_.size());
        tax.order_.push_back(t);
        tax.index_.emplace(t.surface(), id);
        tax.parent_.push_back(-1);
        tax.children_.emplace_back();
        return id;
    };

    std::vector<bool> has_parent;
    for (const auto& [p, c] : edges) {
        int pid = intern(p);
        int cid = intern(c);
        has_parent.resize(tax.order_.size(), false);
        if (pid == cid) throw ValidationError("self-edge at term: " + p.surface());
        if (has_parent[cid])
            throw ValidationError("multiple parents for term: " + c.surface());
        has_parent[cid] = true;
        tax.parent_[cid] = pid;
        tax.children_[pid].push_back(tax.order_[cid]);
    }

    for (int i = 0; i < tax.node_count(); ++i) {
        if (tax.parent_[i] == -1) {
            if (tax.root_ != -1)
                throw ValidationError("multiple roots: " + tax.order_[tax.root_].surface() +
                                      " and " + tax.order_[i].surface());
            tax.root_ = i;
        }
    }
    if (tax.root_ == -1) throw ValidationError("no root: every term has a parent (cycle)");

    // Single parent + single root means any unreachable node sits on a cycle.
    std::vector<int> stack{tax.root_};
    int reached = 0;
    std::vector<bool> seen(tax.order_.size(), false);
    seen[tax.root_] = true;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        ++reached;
        for (const Term& c : tax.children_[v]) {
            int cid = tax.index_.at(c.surface());
            if (!seen[cid]) {
                seen[cid] = true;
                stack.push_back(cid);
            }
        }
    }
    if (reached != tax.node_count())
        throw ValidationError("cycle detected: " + std::to_string(tax.node_count() - reached) +
                              " terms unreachable from root");
    return tax;
}

Taxonomy Taxonomy::single(const Term& root) {
    Taxonomy tax;
    tax.order_.push_back(root);
    tax.index_.emplace(root.surface(), 0);
    tax.parent_.push_back(-1);
    tax.children_.emplace_back();
    tax.root_ = 0;
    return tax;
}

int Taxonomy::id_of(const Term& t, const char* who) const {
    auto it = index_.find(t.surface());
    if (it == index_.end())
        throw ValidationError(std::string(who) + ": unknown term '" + t.surface() + "'");
    return it->second;
}

std::optional<Term> Taxonomy::parent(const Term& t) const {
    int id = id_of(t, "parent");
    if (parent_[id] == -1) return std::nullopt;
    return order_[parent_[id]];
}

const std::vector<Term>& Taxonomy::children(const Term& t) const {
    return children_[id_of(t, "children")];
}

bool Taxonomy::is_leaf(const Term& t) const {
    return children_[id_of(t, "is_leaf")].empty();
}

std::vector<Term> Taxonomy::ancestors(const Term& t) const {
    int id = id_of(t, "ancestors");
    std::vector<Term> out;
    for (int p = parent_[id]; p != -1; p = parent_[p]) out.push_back(order_[p]);
    return out;
}

int Taxonomy::depth(const Term& t) const {
    int id = id_of(t, "depth");
    int d = 0;
    for (int p = parent_[id]; p != -1; p = parent_[p]) ++d;
    return d;
}

std::vector<Term> Taxonomy::siblings(const Term& t) const {
    int id = id_of(t, "siblings");
    if (parent_[id] == -1) return {};
    std::vector<Term> out;
    for (const Term& c : children_[parent_[id]])
        if (c != t) out.push_back(c);
    return out;
}

std::vector<Term> Taxonomy::leaves() const {
    std::vector<Term> out;
    for (int i = 0; i < node_count(); ++i)
        if (children_[i].empty()) out.push_back(order_[i]);
    return out;
}

std::vector<std::pair<Term, Term>> Taxonomy::edges() const {
    std::vector<std::pair<Term, Term>> out;
    out.reserve(order_.size() - 1);
    for (int i = 0; i < node_count(); ++i)
        for (const Term& c : children_[i]) out.emplace_back(order_[i], c);
    return out;
}

nlohmann::json Taxonomy::to_json() const {
    nlohmann::json j;
    j["root"] = root().surface();
    nlohmann::json e = nlohmann::json::array();
    for (const auto& [p, c] : edges()) e.push_back({p.surface(), c.surface()});
    j["edges"] = e;
    return j;
}

Taxonomy Taxonomy::from_json(const nlohmann::json& j) {
    std::vector<std::pair<Term, Term>> edges;
    for (const auto& e : j.at("edges"))
        edges.emplace_back(Term(e.at(0).get<std::string>()), Term(e.at(1).get<std::string>()));
    if (edges.empty()) return single(Term(j.at("root").get<std::string>()));
    Taxonomy tax = from_edges(edges);
    if (tax.root().surface() != normalize_surface(j.at("root").get<std::string>()))
        throw ValidationError("taxonomy json: declared root does not match edges");
    return tax;
}

Taxonomy load_taxonomy(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open taxonomy file: " + path);
    std::vector<std::pair<Term, Term>> edges;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ValidationError("taxonomy line " + std::to_string(lineno) + " has no tab: " + path);
        edges.emplace_back(Term(line.substr(0, tab)), Term(line.substr(tab + 1)));
    }
    if (edges.empty()) throw ValidationError("taxonomy file has no edges: " + path);
    return Taxonomy::from_edges(edges);
}

void save_taxonomy(const Taxonomy& tax, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open taxonomy file for writing: " + path);
    for (const auto& [p, c] : tax.edges()) os << p.surface() << '\t' << c.surface() << '\n';
    if (!os) throw ValidationError("taxonomy write failed: " + path);
}

Taxonomy attach_term(const Taxonomy& tax, const Term& parent, const Term& child) {
    if (!tax.has(parent))
        throw ValidationError("attach_term: unknown parent '" + parent.surface() + "'");
    if (tax.has(child))
        throw ValidationError("attach_term: term already present '" + child.surface() + "'");
    auto edges = tax.edges();
    edges.emplace_back(parent, child);
    return Taxonomy::from_edges(edges);
}

LeafSplit ablate_leaves(const Taxonomy& tax, const SplitRatios& ratios, std::uint64_t seed) {
    if (ratios.train <= 0.0 || ratios.dev <= 0.0 || ratios.test <= 0.0 ||
        std::abs(ratios.train + ratios.dev + ratios.test - 1.0) > 1e-9)
        throw ValidationError("ablate_leaves: ratios must be positive and sum to 1");

    std::vector<Term> held = tax.leaves();
    int n = static_cast<int>(held.size());
    if (n < 5) throw ValidationError("ablate_leaves: need at least 5 leaves, have " +
                                     std::to_string(n));

    rng::Engine eng(seed);
    rng::shuffle(held, eng);

    std::vector<std::pair<Term, Term>> core_edges;
    std::unordered_map<std::string, bool> is_held;
    for (const Term& t : held) is_held[t.surface()] = true;
    for (const auto& [p, c] : tax.edges())
        if (!is_held.count(c.surface())) core_edges.emplace_back(p, c);

    LeafSplit split;
    // A star collapses to a bare root once its leaves are held out.
    split.core = core_edges.empty() ? Taxonomy::single(tax.root())
                                    : Taxonomy::from_edges(core_edges);
    split.seed = seed;

    int n_train = static_cast<int>(std::floor(ratios.train * n));
    int n_dev = static_cast<int>(std::floor(ratios.dev * n));
    for (int i = 0; i < n; ++i) {
        Term gold = *tax.parent(held[i]);
        auto& bucket = i < n_train ? split.train : (i < n_train + n_dev ? split.dev : split.test);
        bucket.emplace_back(held[i], gold);
    }
    return split;
}

}  // namespace taxo
