#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "taxo/taxonomy.hpp"
#include "taxo/tensor.hpp"

namespace taxo::features {

// Fixed word embeddings. Unknown tokens fall back to deterministic
// character n-gram hash vectors, so lookup never fails and never mutates
// the store.
class EmbeddingStore {
public:
    explicit EmbeddingStore(int dim, std::uint64_t seed = 0, int hash_buckets = 1 << 16);

    // word2vec text format: "N D" header, then "token v1 .. vD" lines.
    static EmbeddingStore load(const std::string& path, std::uint64_t seed = 0,
                               int hash_buckets = 1 << 16);
    void save(const std::string& path) const;

    int dim() const { return dim_; }
    std::size_t size() const { return table_.size(); }
    bool has(const std::string& token) const { return table_.count(token) > 0; }
    void insert(const std::string& token, std::vector<double> vec);

    // Stored vector, or the subword-hash fallback.
    nn::Tensor token_vector(const std::string& token) const;

    // Underscore-joined phrase lookup first, then the mean of the term's
    // token vectors.
    nn::Tensor term_vector(const Term& term) const;

private:
    nn::Tensor subword_vector(const std::string& token) const;

    int dim_;
    std::uint64_t seed_;
    int hash_buckets_;
    std::unordered_map<std::string, std::vector<double>> table_;
    std::vector<std::string> order_;  // insertion order, for save()
};

struct RelMeasure {
    double l1 = 0.0;
    double l2 = 0.0;
    double cos = 0.0;  // 0 when either vector has zero norm
};

RelMeasure rel_measure(const nn::Tensor& a, const nn::Tensor& b);

// Chunks split on {"&", ",", " and "}; the head of a chunk is its last
// token. Falls back to the term itself if no chunk yields a token.
std::vector<Term> head_words(const Term& term);

// Max cosine over all head-word pairs of the two terms.
double head_similarity(const Term& v, const Term& vp, const EmbeddingStore& store);

// [H(v,v'), w_v, w_v'] of length 1 + 2*dim.
nn::Tensor semantic_rep(const Term& v, const Term& vp, const EmbeddingStore& store);

// Surface-level evidence that hyponym specialises hypernym. Lengths and
// distances are in characters; suffix_match is in whole tokens.
struct LexicalFeatures {
    bool ends_with = false;   // hyponym ends with hypernym
    bool contains = false;    // hyponym contains hypernym
    int suffix_match = 0;     // shared trailing tokens
    int lcs_len = 0;          // longest common substring
    int len_diff = 0;         // len(hyponym) - len(hypernym), signed
    int edit_dist = 0;        // Levenshtein
};

LexicalFeatures lexical_features(const Term& hypernym, const Term& hyponym);

int longest_common_substring(const std::string& a, const std::string& b);
int levenshtein(const std::string& a, const std::string& b);

// Maps each raw lexical feature to a bin index; every bin gets a 10-dim
// trainable embedding (owned elsewhere), so the full lexical block is
// 6 x 10 = 60 wide.
class BinSpec {
public:
    static constexpr int kNumFeatures = 6;
    static constexpr int kEmbedDim = 10;

    static const std::array<std::string, kNumFeatures>& feature_names();

    int bin_count(int feature) const;
    int total_bins() const;  // 23 with the default boundaries

    std::array<int, kNumFeatures> bin_ids(const LexicalFeatures& f) const;

    nlohmann::json to_json() const;
};

// Reference lexical block: concatenated bin embeddings, one 10-dim row
// per feature. embeddings[i] must be (bin_count(i) x 10).
nn::Tensor lexical_rep(const Term& hypernym, const Term& hyponym, const BinSpec& bins,
                       const std::vector<nn::Tensor>& embeddings);

}  // namespace taxo::features
