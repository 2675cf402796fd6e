#include "taxo/graph.hpp"

#include <algorithm>
#include <memory>
#include <set>

#include "taxo/common.hpp"
#include "taxo/rng.hpp"

namespace taxo::graph {

R1Direction r1_direction_from_string(const std::string& s) {
    if (s == "C->P") return R1Direction::ChildToParent;
    if (s == "P->C") return R1Direction::ParentToChild;
    if (s == "C<->P") return R1Direction::Both;
    throw ValidationError("bad r1 direction '" + s + "' (want C->P, P->C or C<->P)");
}

std::string to_string(R1Direction dir) {
    switch (dir) {
        case R1Direction::ChildToParent: return "C->P";
        case R1Direction::ParentToChild: return "P->C";
        case R1Direction::Both: return "C<->P";
    }
    throw ValidationError("bad r1 direction value");
}

namespace {

bool contains_sequence(const std::vector<std::string>& haystack,
                       const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > haystack.size()) return false;
    for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        bool hit = true;
        for (std::size_t j = 0; j < needle.size() && hit; ++j)
            hit = haystack[i + j] == needle[j];
        if (hit) return true;
    }
    return false;
}

}  // namespace

HetGraph HetGraph::build(const Taxonomy& core, const std::vector<Term>& new_terms,
                         const std::vector<corpus::QueryRecord>& queries,
                         const std::vector<corpus::ItemProfile>& items, R1Direction dir) {
    HetGraph g;
    for (const Term& t : core.nodes()) {
        g.index_.emplace(t.surface(), g.node_count());
        g.nodes_.push_back(t);
    }
    g.core_count_ = g.node_count();
    for (const Term& t : new_terms) {
        if (!g.index_.emplace(t.surface(), g.node_count()).second)
            throw ValidationError("new term collides with an existing node: " + t.surface());
        g.nodes_.push_back(t);
    }
    g.r1_.assign(g.node_count(), {});
    g.r2_.assign(g.node_count(), {});

    for (const auto& [p, c] : core.edges()) {
        int pi = g.index_.at(p.surface());
        int ci = g.index_.at(c.surface());
        if (dir == R1Direction::ChildToParent || dir == R1Direction::Both)
            g.r1_[pi].push_back(ci);  // parent aggregates from child
        if (dir == R1Direction::ParentToChild || dir == R1Direction::Both)
            g.r1_[ci].push_back(pi);
    }

    std::unordered_map<std::string, const corpus::ItemProfile*> by_id;
    for (const corpus::ItemProfile& it : items) by_id.emplace(it.id, &it);

    // Tokenized new-term surfaces for containment tests against queries.
    std::vector<std::vector<std::string>> term_tokens;
    term_tokens.reserve(new_terms.size());
    for (const Term& t : new_terms) term_tokens.push_back(corpus::tokenize(t.surface()));

    std::vector<std::set<int>> sources(new_terms.size());
    for (const corpus::QueryRecord& q : queries) {
        // Assigned nodes of the query's clicked items.
        std::vector<int> assigned;
        for (const std::string& id : q.clicked_item_ids) {
            auto it = by_id.find(id);
            if (it == by_id.end())
                throw ValidationError("query clicks unknown item id: " + id);
            if (!it->second->assigned_node) continue;
            const Term& node = *it->second->assigned_node;
            auto idx = g.index_.find(node.surface());
            if (idx == g.index_.end() || idx->second >= g.core_count_)
                throw ValidationError("item '" + id + "' assigned to unknown core node: " +
                                      node.surface());
            assigned.push_back(idx->second);
        }
        if (assigned.empty()) continue;
        for (std::size_t t = 0; t < new_terms.size(); ++t) {
            if (!contains_sequence(q.query_tokens, term_tokens[t])) continue;
            for (int src : assigned) sources[t].insert(src);
        }
    }
    // Edge v_i -> v': the new term aggregates from the core nodes its
    // mentioning queries clicked into.
    for (std::size_t t = 0; t < new_terms.size(); ++t) {
        int target = g.core_count_ + static_cast<int>(t);
        for (int src : sources[t]) g.r2_[target].push_back(src);
    }
    return g;
}

int HetGraph::index_of(const Term& t) const {
    auto it = index_.find(t.surface());
    if (it == index_.end()) throw ValidationError("term not in graph: " + t.surface());
    return it->second;
}

nlohmann::json HetGraph::to_json() const {
    nlohmann::json j;
    nlohmann::json nodes = nlohmann::json::array();
    for (int i = 0; i < node_count(); ++i)
        nodes.push_back({{"term", nodes_[i].surface()}, {"new", is_new_term(i)}});
    j["nodes"] = nodes;
    // Edges are dumped in message-flow direction (from, to); the "to"
    // side is the node whose adjacency list holds the edge.
    nlohmann::json r1 = nlohmann::json::array();
    nlohmann::json r2 = nlohmann::json::array();
    for (int v = 0; v < node_count(); ++v) {
        for (int i : r1_[v]) r1.push_back({nodes_[i].surface(), nodes_[v].surface()});
        for (int i : r2_[v]) r2.push_back({nodes_[i].surface(), nodes_[v].surface()});
    }
    j["r1"] = r1;
    j["r2"] = r2;
    return j;
}

namespace {

std::vector<std::string> relation_keys(const RgcnConfig& cfg) {
    std::vector<std::string> rels{"r1"};
    if (cfg.use_r2) rels.push_back("r2");
    rels.push_back("r3");
    return rels;
}

}  // namespace

std::vector<std::string> rgcn_param_names(const RgcnConfig& cfg) {
    std::vector<std::string> names;
    for (int l = 0; l < cfg.layers; ++l)
        for (const std::string& r : relation_keys(cfg))
            names.push_back("rgcn/l" + std::to_string(l) + "/" + r);
    return names;
}

void init_rgcn_params(nn::ParamSet& params, const RgcnConfig& cfg, rng::Engine& eng) {
    if (cfg.layers < 1) throw ValidationError("rgcn needs at least one layer");
    if (cfg.dim < 1) throw ValidationError("rgcn dim must be positive");
    for (const std::string& name : rgcn_param_names(cfg))
        params.create(name, nn::glorot_uniform({cfg.dim, cfg.dim}, cfg.dim, cfg.dim, eng));
}

nn::Tape::Var rgcn_forward(nn::Tape& tape, nn::ParamBinding& bind, const HetGraph& graph,
                           const RgcnConfig& cfg, const nn::Tensor& h0, std::uint64_t epoch) {
    int n = graph.node_count();
    if (h0.ndim() != 2 || h0.rows() != n || h0.cols() != cfg.dim)
        throw ValidationError("rgcn_forward: h0 must be (nodes x dim), got " + h0.shape_str());

    // One sampled adjacency per (layer, relation); nodes with at most
    // sample_n neighbours keep their full lists.
    rng::Engine sampler(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
    auto sampled = [&](const std::vector<int>& full) {
        if (cfg.sample_n <= 0 || static_cast<int>(full.size()) <= cfg.sample_n) return full;
        std::vector<int> out;
        out.reserve(cfg.sample_n);
        for (int k : rng::sample_without_replacement(static_cast<int>(full.size()),
                                                     cfg.sample_n, sampler))
            out.push_back(full[k]);
        return out;
    };

    auto aggregate = [&tape, n](nn::Tape::Var h,
                                std::shared_ptr<std::vector<std::vector<int>>> adj) {
        const nn::Tensor& hv = tape.value(h);
        int dim = hv.cols();
        nn::Tensor out({n, dim});
        for (int v = 0; v < n; ++v)
            for (int i : (*adj)[v])
                for (int d = 0; d < dim; ++d) out.at(v, d) += hv.at(i, d);
        return tape.custom({h}, std::move(out), [h, adj, n, dim](nn::Tape& t,
                                                                 const nn::Tensor& gout) {
            nn::Tensor& gh = t.grad_mut(h);
            for (int v = 0; v < n; ++v)
                for (int i : (*adj)[v])
                    for (int d = 0; d < dim; ++d) gh.at(i, d) += gout.at(v, d);
        });
    };

    nn::Tape::Var h = tape.leaf(h0);
    for (int l = 0; l < cfg.layers; ++l) {
        // Self-loop: no aggregation needed, the input matrix itself.
        nn::Tape::Var acc = tape.matmul(h, bind.var("rgcn/l" + std::to_string(l) + "/r3"));

        auto adj1 = std::make_shared<std::vector<std::vector<int>>>();
        adj1->reserve(n);
        for (int v = 0; v < n; ++v) adj1->push_back(sampled(graph.neighbors_r1(v)));
        acc = tape.add(acc, tape.matmul(aggregate(h, adj1),
                                        bind.var("rgcn/l" + std::to_string(l) + "/r1")));

        if (cfg.use_r2) {
            auto adj2 = std::make_shared<std::vector<std::vector<int>>>();
            adj2->reserve(n);
            for (int v = 0; v < n; ++v) adj2->push_back(sampled(graph.neighbors_r2(v)));
            acc = tape.add(acc, tape.matmul(aggregate(h, adj2),
                                            bind.var("rgcn/l" + std::to_string(l) + "/r2")));
        }
        h = tape.relu(acc);
    }
    return h;
}

}  // namespace taxo::graph
