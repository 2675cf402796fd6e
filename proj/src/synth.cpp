#include "taxo/synth.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>

#include "taxo/common.hpp"
#include "taxo/rng.hpp"

namespace taxo::synth {

namespace {

const char* kRoot = "products";
const std::vector<std::string> kTitleLead = {"premium", "bulk", "value", "family", "classic"};
const char* kQueryLead = "buy";

std::string phrase_key(const Term& t) {
    std::string key;
    for (const std::string& tok : corpus::tokenize(t.surface())) {
        if (!key.empty()) key.push_back('_');
        key += tok;
    }
    return key;
}

std::string head_token(const Term& t) {
    std::vector<std::string> tokens = corpus::tokenize(t.surface());
    return tokens.back();
}

std::vector<double> gaussian_vec(int dim, rng::Engine& eng, double scale) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (double& x : v) x = scale * rng::gaussian(eng);
    return v;
}

void validate(const SynthConfig& cfg) {
    if (cfg.depth < 2) throw ValidationError("synth: depth must be at least 2");
    if (cfg.branch_min < 1 || cfg.branch_max < cfg.branch_min)
        throw ValidationError("synth: branching range is empty");
    if (cfg.items_per_leaf < 1) throw ValidationError("synth: need at least one item per leaf");
    if (cfg.noise_rate < 0.0 || cfg.noise_rate > 1.0)
        throw ValidationError("synth: noise rate outside [0, 1]");
    if (cfg.click_noise < 0.0 || cfg.click_noise > 1.0)
        throw ValidationError("synth: click noise outside [0, 1]");
    if (cfg.dim < 1) throw ValidationError("synth: embedding dimension must be positive");
}

}  // namespace

std::vector<std::string> default_base_nouns() {
    return {"tea", "coffee", "cheese", "bread", "juice", "pasta", "rice", "soap",
            "candle", "paper"};
}

std::vector<std::string> default_modifiers() {
    return {"black",   "green",  "iced",    "spiced", "organic", "roasted", "fresh",
            "aged",    "wild",   "golden",  "smoked", "sweet",   "dark",    "light",
            "raw",     "herbal", "creamy",  "crisp",  "frozen",  "dried",   "deluxe",
            "rustic",  "zesty",  "mellow",  "silky",  "tangy",   "toasted", "velvet",
            "amber",   "breezy", "earthy",  "floral", "glazed",  "hearty",  "minty",
            "nutty"};
}

SynthWorld gen_world(const SynthConfig& cfg) {
    validate(cfg);
    std::vector<std::string> nouns = cfg.base_nouns.empty() ? default_base_nouns() : cfg.base_nouns;
    std::vector<std::string> mods = cfg.modifiers.empty() ? default_modifiers() : cfg.modifiers;
    for (const std::string& s : nouns)
        if (corpus::tokenize(s).size() != 1)
            throw ValidationError("synth: base noun '" + s + "' is not a single token");
    for (const std::string& s : mods)
        if (corpus::tokenize(s).size() != 1)
            throw ValidationError("synth: modifier '" + s + "' is not a single token");

    rng::Engine eng(cfg.seed);
    features::EmbeddingStore store(cfg.dim, cfg.seed);

    // Tree: level 1 is one node per base noun; below that every child is
    // "modifier + parent head", so a chain's head token never changes. The
    // same modifier is never reused with the same head, which keeps names
    // unique across the tree.
    std::vector<std::pair<Term, Term>> edges;
    std::map<std::string, std::set<std::string>> used_mods;  // head -> modifiers taken
    std::vector<Term> frontier;

    Term root(kRoot);
    store.insert(kRoot, gaussian_vec(cfg.dim, eng, 1.0));
    for (const std::string& noun : nouns) {
        Term node(noun);
        edges.emplace_back(root, node);
        std::vector<double> v = store.token_vector(kRoot).vec();
        std::vector<double> noise = gaussian_vec(cfg.dim, eng, 0.3);
        for (int d = 0; d < cfg.dim; ++d) v[static_cast<std::size_t>(d)] += noise[static_cast<std::size_t>(d)];
        store.insert(noun, std::move(v));
        frontier.push_back(node);
    }

    for (int level = 2; level <= cfg.depth; ++level) {
        std::vector<Term> next;
        for (const Term& parent : frontier) {
            std::string head = head_token(parent);
            int fanout = cfg.branch_min +
                         static_cast<int>(rng::bounded(
                             eng, static_cast<std::uint64_t>(cfg.branch_max - cfg.branch_min + 1)));
            for (int b = 0; b < fanout; ++b) {
                const std::string* pick = nullptr;
                for (const std::string& m : mods)
                    if (!used_mods[head].count(m)) {
                        pick = &m;
                        break;
                    }
                if (!pick)
                    throw ValidationError("synth: modifier vocabulary exhausted for head '" +
                                          head + "'; supply more modifiers or reduce fanout");
                used_mods[head].insert(*pick);
                Term child(*pick + " " + head);
                edges.emplace_back(parent, child);
                std::vector<double> v = store.term_vector(parent).vec();
                std::vector<double> noise = gaussian_vec(cfg.dim, eng, 0.3);
                for (int d = 0; d < cfg.dim; ++d)
                    v[static_cast<std::size_t>(d)] += noise[static_cast<std::size_t>(d)];
                store.insert(phrase_key(child), std::move(v));
                next.push_back(child);
            }
        }
        frontier = std::move(next);
    }

    SynthWorld world{Taxonomy::from_edges(edges), std::move(store), {}, {}};

    // Vectors for every loose token a title or query can carry.
    for (const std::string& m : mods)
        if (!world.store.has(m)) world.store.insert(m, gaussian_vec(cfg.dim, eng, 1.0));
    for (const std::string& lead : kTitleLead)
        world.store.insert(lead, gaussian_vec(cfg.dim, eng, 1.0));
    world.store.insert(kQueryLead, gaussian_vec(cfg.dim, eng, 1.0));
    std::vector<std::string> junk;
    for (int i = 0; i < 20; ++i) {
        junk.push_back("zq" + std::to_string(i));
        world.store.insert(junk.back(), gaussian_vec(cfg.dim, eng, 1.0));
    }

    auto maybe_noise = [&](std::vector<std::string>& tokens) {
        if (rng::uniform01(eng) < cfg.noise_rate)
            tokens.push_back(junk[rng::bounded(eng, junk.size())]);
    };

    std::vector<Term> leaves = world.tax.leaves();
    for (const Term& leaf : leaves) {
        Term parent = *world.tax.parent(leaf);
        for (int k = 0; k < cfg.items_per_leaf; ++k) {
            corpus::ItemProfile item;
            item.id = "i" + std::to_string(world.items.size());
            item.title_tokens.push_back(kTitleLead[rng::bounded(eng, kTitleLead.size())]);
            for (const std::string& tok : corpus::tokenize(leaf.surface()))
                item.title_tokens.push_back(tok);
            maybe_noise(item.title_tokens);
            item.assigned_node = parent;
            world.items.push_back(std::move(item));
        }
    }

    // One query per item. The click goes back to the item itself unless
    // click noise reroutes it to a uniformly random item.
    for (std::size_t i = 0; i < world.items.size(); ++i) {
        const Term& leaf = leaves[i / static_cast<std::size_t>(cfg.items_per_leaf)];
        corpus::QueryRecord q;
        q.query_tokens.push_back(kQueryLead);
        for (const std::string& tok : corpus::tokenize(leaf.surface()))
            q.query_tokens.push_back(tok);
        maybe_noise(q.query_tokens);
        std::size_t target = i;
        if (rng::uniform01(eng) < cfg.click_noise)
            target = rng::bounded(eng, world.items.size());
        q.clicked_item_ids.push_back(world.items[target].id);
        world.queries.push_back(std::move(q));
    }

    return world;
}

WorldPaths save_world(const SynthWorld& world, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::filesystem::path base(dir);
    WorldPaths paths{(base / "taxonomy.tsv").string(), (base / "vectors.vec").string(),
                     (base / "items.jsonl").string(), (base / "queries.jsonl").string()};
    save_taxonomy(world.tax, paths.taxonomy);
    world.store.save(paths.vectors);
    corpus::save_items(world.items, paths.items);
    corpus::save_queries(world.queries, paths.queries);
    return paths;
}

}  // namespace taxo::synth
