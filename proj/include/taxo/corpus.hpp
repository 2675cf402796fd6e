#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "taxo/taxonomy.hpp"

namespace taxo::corpus {

// BIOE tag indices are fixed; the CRF layer indexes its tables with them.
enum class Tag : int { B = 0, I = 1, O = 2, E = 3 };
constexpr int kNumTags = 4;

char tag_char(Tag t);
Tag tag_from_char(char c);

struct ItemProfile {
    std::string id;
    std::vector<std::string> title_tokens;
    std::optional<Term> assigned_node;
};

struct QueryRecord {
    std::vector<std::string> query_tokens;
    std::vector<std::string> clicked_item_ids;
};

struct TaggedSequence {
    std::vector<std::string> tokens;
    std::vector<Tag> tags;

    // Every I/E follows a B or I; every B...I* run is closed by an E
    // unless it is a lone B.
    bool is_well_formed() const;
};

// Case-folds, pads '&' into its own token, splits on whitespace, strips
// leading/trailing punctuation from each token, drops empties.
std::vector<std::string> tokenize(const std::string& text);

// Greedy longest-match scanner over token sequences. Vocab terms are
// tokenized with the same tokenizer; a matched sequence maps back to the
// canonical Term it came from.
class TermMatcher {
public:
    explicit TermMatcher(const std::vector<Term>& vocab);
    explicit TermMatcher(const std::set<Term>& vocab);

    struct Match {
        int start = 0;
        int len = 0;
        Term term;
    };

    // Left-to-right maximal munch: at each position take the longest
    // vocab match; matches never overlap.
    std::vector<Match> find_all(const std::vector<std::string>& tokens) const;

    bool mentions(const std::vector<std::string>& tokens, const Term& t) const;
    std::vector<Term> mentioned_terms(const std::vector<std::string>& tokens) const;

    int vocab_size() const { return static_cast<int>(vocab_.size()); }

private:
    void add(const Term& t);
    std::unordered_map<std::string, Term> by_key_;  // space-joined tokens
    std::vector<Term> vocab_;
    int max_len_ = 0;
};

TaggedSequence distant_label(const std::vector<std::string>& tokens, const TermMatcher& matcher);
TaggedSequence distant_label(const std::vector<std::string>& tokens, const std::set<Term>& vocab);

// Well-formed B...E / lone-B spans as (start, len); malformed fragments
// are dropped.
std::vector<std::pair<int, int>> decode_spans(const std::vector<Tag>& tags);
std::vector<Term> span_terms(const TaggedSequence& seq);

struct ExtractionSplit {
    std::vector<std::string> train_ids;
    std::vector<TaggedSequence> train;
    std::vector<Term> test_terms;
    std::vector<std::string> test_ids;  // items mentioning any test term
    std::uint64_t seed = 0;
};

// Splits by matched term: every title mentioning a test term is excluded
// from the training pairs entirely.
ExtractionSplit build_extraction_split(const std::vector<ItemProfile>& items,
                                       const std::set<Term>& vocab, double train_ratio,
                                       std::uint64_t seed);

// items.jsonl: {"id": str, "title": str, "node": str|null}
std::vector<ItemProfile> load_items(const std::string& path);
void save_items(const std::vector<ItemProfile>& items, const std::string& path);

// queries.jsonl: {"query": str, "clicks": [str, ...]}
std::vector<QueryRecord> load_queries(const std::string& path);
void save_queries(const std::vector<QueryRecord>& queries, const std::string& path);

// labels.jsonl: {"id": str, "tokens": [...], "tags": [...]}
void save_labels(const std::vector<std::string>& ids, const std::vector<TaggedSequence>& seqs,
                 const std::string& path);
std::pair<std::vector<std::string>, std::vector<TaggedSequence>> load_labels(
    const std::string& path);

}  // namespace taxo::corpus
