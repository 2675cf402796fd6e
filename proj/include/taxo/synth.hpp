#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "taxo/corpus.hpp"
#include "taxo/features.hpp"
#include "taxo/taxonomy.hpp"

namespace taxo::synth {

// Generator for a small world with learnable signal on every channel:
// names are compositional (surface features), each child's vector is its
// parent's plus noise (semantic features), and queries click into the
// right subtree (structural features).
struct SynthConfig {
    std::uint64_t seed = 0;
    int depth = 3;  // leaves sit exactly this far below the root
    int branch_min = 2;
    int branch_max = 4;
    std::vector<std::string> base_nouns;  // level-1 nodes; defaults when empty
    std::vector<std::string> modifiers;   // child-name prefixes; defaults when empty
    int items_per_leaf = 3;
    double noise_rate = 0.0;   // chance a title or query carries a junk token
    double click_noise = 0.0;  // chance a click lands on a random item
    int dim = 16;
};

std::vector<std::string> default_base_nouns();
std::vector<std::string> default_modifiers();

struct SynthWorld {
    Taxonomy tax;  // full tree; leaves are the future new terms
    features::EmbeddingStore store;
    std::vector<corpus::ItemProfile> items;
    std::vector<corpus::QueryRecord> queries;
};

// Every item belongs to one leaf: its title mentions that leaf and its
// assignment is the leaf's parent, so assignments survive leaf ablation.
// Each item gets one query mentioning the leaf; the click goes to the item
// itself, or with probability click_noise to a random item.
SynthWorld gen_world(const SynthConfig& cfg);

struct WorldPaths {
    std::string taxonomy, vectors, items, queries;
};

// Writes taxonomy.tsv, vectors.vec, items.jsonl, queries.jsonl into dir.
WorldPaths save_world(const SynthWorld& world, const std::string& dir);

}  // namespace taxo::synth
