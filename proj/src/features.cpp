#include "taxo/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "taxo/common.hpp"
#include "taxo/corpus.hpp"
#include "taxo/rng.hpp"

namespace taxo::features {

EmbeddingStore::EmbeddingStore(int dim, std::uint64_t seed, int hash_buckets)
    : dim_(dim), seed_(seed), hash_buckets_(hash_buckets) {
    if (dim <= 0) throw ValidationError("embedding dim must be positive");
    if (hash_buckets <= 0) throw ValidationError("hash bucket count must be positive");
}

EmbeddingStore EmbeddingStore::load(const std::string& path, std::uint64_t seed,
                                    int hash_buckets) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open embedding file: " + path);
    long long n = 0;
    int dim = 0;
    if (!(is >> n >> dim) || n < 0 || dim <= 0)
        throw ValidationError("bad embedding header in " + path);
    EmbeddingStore store(dim, seed, hash_buckets);
    for (long long i = 0; i < n; ++i) {
        std::string token;
        if (!(is >> token))
            throw ValidationError("truncated embedding file at entry " + std::to_string(i));
        std::vector<double> vec(dim);
        for (int d = 0; d < dim; ++d)
            if (!(is >> vec[d]))
                throw ValidationError("truncated embedding vector for token '" + token + "'");
        store.insert(token, std::move(vec));
    }
    return store;
}

void EmbeddingStore::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open embedding file for writing: " + path);
    os << order_.size() << ' ' << dim_ << '\n';
    os.precision(17);
    for (const std::string& token : order_) {
        os << token;
        for (double v : table_.at(token)) os << ' ' << v;
        os << '\n';
    }
    if (!os) throw ValidationError("embedding write failed: " + path);
}

void EmbeddingStore::insert(const std::string& token, std::vector<double> vec) {
    if (static_cast<int>(vec.size()) != dim_)
        throw ValidationError("embedding for '" + token + "' has wrong dim");
    if (token.empty()) throw ValidationError("empty embedding token");
    auto [it, inserted] = table_.emplace(token, std::move(vec));
    if (!inserted) throw ValidationError("duplicate embedding token: " + token);
    order_.push_back(token);
}

namespace {

std::uint64_t fnv1a(const char* data, std::size_t len) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

nn::Tensor EmbeddingStore::subword_vector(const std::string& token) const {
    std::string padded = "<" + token + ">";
    nn::Tensor acc({dim_});
    int grams = 0;
    double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
    for (int len = 3; len <= 5; ++len) {
        if (static_cast<int>(padded.size()) < len) continue;
        for (std::size_t i = 0; i + len <= padded.size(); ++i) {
            std::uint64_t bucket = fnv1a(padded.data() + i, len) %
                                   static_cast<std::uint64_t>(hash_buckets_);
            rng::Engine eng(seed_ ^ (bucket + 0x9e3779b97f4a7c15ULL));
            for (int d = 0; d < dim_; ++d) acc[d] += scale * rng::gaussian(eng);
            ++grams;
        }
    }
    if (grams == 0) {
        // Token shorter than any gram window cannot happen ("<x>" is 3
        // chars), but guard anyway.
        return acc;
    }
    for (int d = 0; d < dim_; ++d) acc[d] /= grams;
    return acc;
}

nn::Tensor EmbeddingStore::token_vector(const std::string& token) const {
    auto it = table_.find(token);
    if (it != table_.end()) return nn::Tensor({dim_}, it->second);
    return subword_vector(token);
}

nn::Tensor EmbeddingStore::term_vector(const Term& term) const {
    std::vector<std::string> tokens = corpus::tokenize(term.surface());
    if (tokens.empty()) return subword_vector(term.surface());

    std::string joined;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) joined.push_back('_');
        joined += tokens[i];
    }
    auto it = table_.find(joined);
    if (it != table_.end()) return nn::Tensor({dim_}, it->second);

    nn::Tensor acc({dim_});
    for (const std::string& tok : tokens) {
        nn::Tensor v = token_vector(tok);
        for (int d = 0; d < dim_; ++d) acc[d] += v[d];
    }
    for (int d = 0; d < dim_; ++d) acc[d] /= static_cast<double>(tokens.size());
    return acc;
}

RelMeasure rel_measure(const nn::Tensor& a, const nn::Tensor& b) {
    if (!a.same_shape(b) || a.ndim() != 1)
        throw ValidationError("rel_measure: vectors must be 1-d of equal length");
    RelMeasure m;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (long long i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        m.l1 += std::abs(d);
        m.l2 += d * d;
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    m.l2 = std::sqrt(m.l2);
    m.cos = (na == 0.0 || nb == 0.0) ? 0.0 : dot / (std::sqrt(na) * std::sqrt(nb));
    return m;
}

std::vector<Term> head_words(const Term& term) {
    const std::string& s = term.surface();
    std::vector<std::string> chunks;
    std::string cur;
    for (std::size_t i = 0; i < s.size();) {
        if (s[i] == '&' || s[i] == ',') {
            chunks.push_back(cur);
            cur.clear();
            ++i;
        } else if (s.compare(i, 5, " and ") == 0) {
            chunks.push_back(cur);
            cur.clear();
            i += 5;
        } else {
            cur.push_back(s[i]);
            ++i;
        }
    }
    chunks.push_back(cur);

    std::vector<Term> heads;
    for (const std::string& chunk : chunks) {
        std::vector<std::string> tokens = corpus::tokenize(chunk);
        if (!tokens.empty()) heads.emplace_back(tokens.back());
    }
    if (heads.empty()) heads.push_back(term);
    return heads;
}

double head_similarity(const Term& v, const Term& vp, const EmbeddingStore& store) {
    std::vector<Term> hv = head_words(v);
    std::vector<Term> hp = head_words(vp);
    double best = -1.0;
    for (const Term& a : hv) {
        nn::Tensor va = store.term_vector(a);
        for (const Term& b : hp) best = std::max(best, rel_measure(va, store.term_vector(b)).cos);
    }
    return best;
}

nn::Tensor semantic_rep(const Term& v, const Term& vp, const EmbeddingStore& store) {
    nn::Tensor wv = store.term_vector(v);
    nn::Tensor wp = store.term_vector(vp);
    nn::Tensor out({1 + 2 * store.dim()});
    out[0] = head_similarity(v, vp, store);
    for (int d = 0; d < store.dim(); ++d) {
        out[1 + d] = wv[d];
        out[1 + store.dim() + d] = wp[d];
    }
    return out;
}

int longest_common_substring(const std::string& a, const std::string& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    int best = 0;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : 0;
            best = std::max(best, cur[j]);
        }
        std::swap(prev, cur);
    }
    return best;
}

int levenshtein(const std::string& a, const std::string& b) {
    std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= b.size(); ++j) {
            int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

namespace {

std::vector<std::string> surface_tokens(const Term& t) {
    std::vector<std::string> out;
    std::istringstream is(t.surface());
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

}  // namespace

LexicalFeatures lexical_features(const Term& hypernym, const Term& hyponym) {
    const std::string& hyper = hypernym.surface();
    const std::string& hypo = hyponym.surface();

    LexicalFeatures f;
    f.ends_with = hypo.size() >= hyper.size() &&
                  hypo.compare(hypo.size() - hyper.size(), hyper.size(), hyper) == 0;
    f.contains = hypo.find(hyper) != std::string::npos;

    std::vector<std::string> ta = surface_tokens(hypernym);
    std::vector<std::string> tb = surface_tokens(hyponym);
    std::size_t limit = std::min(ta.size(), tb.size());
    while (f.suffix_match < static_cast<int>(limit) &&
           ta[ta.size() - 1 - f.suffix_match] == tb[tb.size() - 1 - f.suffix_match])
        ++f.suffix_match;

    f.lcs_len = longest_common_substring(hyper, hypo);
    f.len_diff = static_cast<int>(hypo.size()) - static_cast<int>(hyper.size());
    f.edit_dist = levenshtein(hyper, hypo);
    return f;
}

const std::array<std::string, BinSpec::kNumFeatures>& BinSpec::feature_names() {
    static const std::array<std::string, kNumFeatures> names = {
        "ends_with", "contains", "suffix_match", "lcs_len", "len_diff", "edit_dist",
    };
    return names;
}

namespace {

int bin_counted(int x) {
    // {0, 1-2, 3-5, 6-10, >=11}
    if (x <= 0) return 0;
    if (x <= 2) return 1;
    if (x <= 5) return 2;
    if (x <= 10) return 3;
    return 4;
}

int bin_signed(int x) {
    // {<=-6, -5..-1, 0, 1..5, >=6}
    if (x <= -6) return 0;
    if (x < 0) return 1;
    if (x == 0) return 2;
    if (x <= 5) return 3;
    return 4;
}

int bin_small(int x) {
    // {0, 1, 2, >=3}
    return std::min(x, 3);
}

}  // namespace

int BinSpec::bin_count(int feature) const {
    switch (feature) {
        case 0: case 1: return 2;  // booleans
        case 2: return 4;          // suffix_match
        case 3: return 5;          // lcs_len
        case 4: return 5;          // len_diff
        case 5: return 5;          // edit_dist
    }
    throw ValidationError("bad lexical feature index");
}

int BinSpec::total_bins() const {
    int n = 0;
    for (int i = 0; i < kNumFeatures; ++i) n += bin_count(i);
    return n;
}

std::array<int, BinSpec::kNumFeatures> BinSpec::bin_ids(const LexicalFeatures& f) const {
    return {
        f.ends_with ? 1 : 0,
        f.contains ? 1 : 0,
        bin_small(f.suffix_match),
        bin_counted(f.lcs_len),
        bin_signed(f.len_diff),
        bin_counted(f.edit_dist),
    };
}

nlohmann::json BinSpec::to_json() const {
    nlohmann::json j;
    j["embed_dim"] = kEmbedDim;
    j["features"] = {
        {{"name", "ends_with"}, {"bins", {"false", "true"}}},
        {{"name", "contains"}, {"bins", {"false", "true"}}},
        {{"name", "suffix_match"}, {"units", "tokens"}, {"bins", {"0", "1", "2", ">=3"}}},
        {{"name", "lcs_len"}, {"units", "characters"},
         {"bins", {"0", "1-2", "3-5", "6-10", ">=11"}}},
        {{"name", "len_diff"}, {"units", "characters"}, {"signed", true},
         {"bins", {"<=-6", "-5..-1", "0", "1..5", ">=6"}}},
        {{"name", "edit_dist"}, {"units", "characters"},
         {"bins", {"0", "1-2", "3-5", "6-10", ">=11"}}},
    };
    return j;
}

nn::Tensor lexical_rep(const Term& hypernym, const Term& hyponym, const BinSpec& bins,
                       const std::vector<nn::Tensor>& embeddings) {
    if (static_cast<int>(embeddings.size()) != BinSpec::kNumFeatures)
        throw ValidationError("lexical_rep: need one embedding table per feature");
    auto ids = bins.bin_ids(lexical_features(hypernym, hyponym));
    nn::Tensor out({BinSpec::kNumFeatures * BinSpec::kEmbedDim});
    for (int i = 0; i < BinSpec::kNumFeatures; ++i) {
        const nn::Tensor& table = embeddings[i];
        if (table.ndim() != 2 || table.rows() != bins.bin_count(i) ||
            table.cols() != BinSpec::kEmbedDim)
            throw ValidationError("lexical_rep: embedding table " + std::to_string(i) +
                                  " has wrong shape " + table.shape_str());
        for (int d = 0; d < BinSpec::kEmbedDim; ++d)
            out[i * BinSpec::kEmbedDim + d] = table.at(ids[i], d);
    }
    return out;
}

}  // namespace taxo::features
