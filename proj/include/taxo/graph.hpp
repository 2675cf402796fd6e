#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "taxo/corpus.hpp"
#include "taxo/params.hpp"
#include "taxo/tape.hpp"
#include "taxo/taxonomy.hpp"

namespace taxo::graph {

// Direction of the taxonomy-structure relation: which neighbours a node
// aggregates FROM. ChildToParent means information flows child -> parent,
// i.e. a node reads its children.
enum class R1Direction { ChildToParent, ParentToChild, Both };

R1Direction r1_direction_from_string(const std::string& s);  // "C->P" | "P->C" | "C<->P"
std::string to_string(R1Direction dir);

// Heterogeneous graph over core nodes (V) followed by new terms (V').
// r1 connects core nodes along taxonomy edges; r2 points from core nodes
// to the new terms whose mentioning queries clicked items assigned there;
// r3 is the implicit self-loop every node has.
class HetGraph {
public:
    static HetGraph build(const Taxonomy& core, const std::vector<Term>& new_terms,
                          const std::vector<corpus::QueryRecord>& queries,
                          const std::vector<corpus::ItemProfile>& items,
                          R1Direction dir = R1Direction::ChildToParent);

    int node_count() const { return static_cast<int>(nodes_.size()); }
    int core_count() const { return core_count_; }
    const std::vector<Term>& nodes() const { return nodes_; }
    const Term& node(int idx) const { return nodes_[idx]; }
    int index_of(const Term& t) const;
    bool is_new_term(int idx) const { return idx >= core_count_; }

    const std::vector<int>& neighbors_r1(int v) const { return r1_[v]; }
    const std::vector<int>& neighbors_r2(int v) const { return r2_[v]; }

    nlohmann::json to_json() const;

private:
    std::vector<Term> nodes_;
    std::unordered_map<std::string, int> index_;
    std::vector<std::vector<int>> r1_, r2_;
    int core_count_ = 0;
};

struct RgcnConfig {
    int dim = 300;
    int layers = 2;
    int sample_n = 5;  // 0 disables neighbour sampling
    bool use_r2 = true;
    std::uint64_t seed = 0;
};

std::vector<std::string> rgcn_param_names(const RgcnConfig& cfg);
void init_rgcn_params(nn::ParamSet& params, const RgcnConfig& cfg, rng::Engine& eng);

// Runs the full L-layer forward over the tape and returns the matrix node
// holding every node's structural embedding g_v as its rows. h0 must be
// (node_count x dim). Neighbour lists longer than sample_n are subsampled
// without replacement from a stream seeded by (cfg.seed, epoch).
nn::Tape::Var rgcn_forward(nn::Tape& tape, nn::ParamBinding& bind, const HetGraph& graph,
                           const RgcnConfig& cfg, const nn::Tensor& h0, std::uint64_t epoch = 0);

}  // namespace taxo::graph
