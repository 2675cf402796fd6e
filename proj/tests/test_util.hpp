#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "taxo/rng.hpp"
#include "taxo/taxonomy.hpp"

namespace testutil {

// Random tree over nodes n0..n{count-1}; parent of n_i drawn from earlier
// nodes, so the edge list is valid by construction.
inline std::vector<std::pair<taxo::Term, taxo::Term>> random_tree_edges(int count,
                                                                        taxo::rng::Engine& eng) {
    std::vector<std::pair<taxo::Term, taxo::Term>> edges;
    for (int i = 1; i < count; ++i) {
        int p = static_cast<int>(taxo::rng::bounded(eng, static_cast<std::uint64_t>(i)));
        edges.emplace_back(taxo::Term("n" + std::to_string(p)), taxo::Term("n" + std::to_string(i)));
    }
    return edges;
}

inline taxo::Taxonomy random_tree(int count, std::uint64_t seed) {
    taxo::rng::Engine eng(seed);
    auto edges = random_tree_edges(count, eng);
    return taxo::Taxonomy::from_edges(edges);
}

// Unique temp file removed on destruction.
class TempFile {
public:
    explicit TempFile(const std::string& name)
        : path_(std::filesystem::temp_directory_path() / name) {}
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    std::string str() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
