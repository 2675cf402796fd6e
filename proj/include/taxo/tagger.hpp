#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "taxo/corpus.hpp"
#include "taxo/features.hpp"
#include "taxo/params.hpp"
#include "taxo/tape.hpp"

namespace taxo::tagger {

struct TaggerConfig {
    int hidden = 100;  // per direction
    std::uint64_t seed = 0;
};

// BiLSTM-CRF sequence labeler over fixed word vectors. The store is
// referenced, not owned, and training never updates it.
class TaggerModel {
public:
    TaggerModel(const features::EmbeddingStore* vectors, TaggerConfig cfg);

    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    int hidden() const { return cfg_.hidden; }
    int embed_dim() const;
    const features::EmbeddingStore& vectors() const { return *vectors_; }

    void save(const std::string& path) const;
    static TaggerModel load(const std::string& path, const features::EmbeddingStore* vectors);

    // Mean training NLL per epoch, filled in by train_tagger.
    std::vector<double> epoch_nll;

private:
    const features::EmbeddingStore* vectors_;
    TaggerConfig cfg_;
    nn::ParamSet params_;
};

// Maps a parameter name to its tape leaf. ParamBinding gives the
// trainable flavour; inference uses constant leaves.
using ParamLookup = std::function<nn::Tape::Var(const std::string&)>;

// Per-token tag scores (one 4-wide var per token) from the BiLSTM and
// the emission projection.
std::vector<nn::Tape::Var> emission_vars(nn::Tape& tape, const ParamLookup& param,
                                         const TaggerModel& model,
                                         const std::vector<std::string>& tokens);
std::vector<nn::Tape::Var> emission_vars(nn::Tape& tape, nn::ParamBinding& bind,
                                         const TaggerModel& model,
                                         const std::vector<std::string>& tokens);

// T x 4 emission scores with the model's current weights.
nn::Tensor emissions(const TaggerModel& model, const std::vector<std::string>& tokens);

// log of the summed exp score over all 4^T tag paths (forward algorithm).
double crf_log_partition(const nn::Tensor& emissions, const nn::Tensor& trans,
                         const nn::Tensor& start, const nn::Tensor& end);

// Unnormalized score of a single path.
double crf_path_score(const nn::Tensor& emissions, const nn::Tensor& trans,
                      const nn::Tensor& start, const nn::Tensor& end,
                      const std::vector<corpus::Tag>& path);

// logZ - score(gold) as one tape node. Gradients are the forward-backward
// marginals minus the gold indicators, exact rather than numeric.
nn::Tape::Var crf_nll(nn::Tape& tape, const std::vector<nn::Tape::Var>& emissions,
                      nn::Tape::Var trans, nn::Tape::Var start, nn::Tape::Var end,
                      const std::vector<corpus::Tag>& gold);

// Max-score path. When constrained, transitions that would break the
// BIOE schema are masked off, so the output always decodes cleanly.
std::vector<corpus::Tag> viterbi_decode(const nn::Tensor& emissions, const nn::Tensor& trans,
                                        const nn::Tensor& start, const nn::Tensor& end,
                                        bool constrained = true);
std::vector<corpus::Tag> viterbi_decode(const nn::Tensor& emissions, const TaggerModel& model,
                                        bool constrained = true);

std::vector<corpus::Tag> decode_title(const TaggerModel& model,
                                      const std::vector<std::string>& tokens,
                                      bool constrained = true);

// Sequence-level Adam steps in the given order (batch size 1, no
// shuffling), so equal seeds and data give bit-identical models.
TaggerModel train_tagger(const std::vector<corpus::TaggedSequence>& labeled,
                         const features::EmbeddingStore* vectors, TaggerConfig cfg,
                         int epochs, double lr);

struct ExtractedTerm {
    Term term;
    long long count = 0;
};
// Count-descending, ties lexicographic, no duplicates.
using ExtractedTermList = std::vector<ExtractedTerm>;

// Decodes every title, counts the decoded spans, and drops terms that are
// already core-taxonomy nodes.
ExtractedTermList extract_terms(const TaggerModel& model,
                                const std::vector<corpus::ItemProfile>& items,
                                const std::set<Term>& core_vocab, bool constrained = true);

// Share of gold terms present among the top k extracted entries.
double recall_at_k(const ExtractedTermList& extracted, const std::set<Term>& gold,
                   std::size_t k);

// extracted.jsonl: {"term": str, "count": int}
void save_extracted(const ExtractedTermList& terms, const std::string& path);
ExtractedTermList load_extracted(const std::string& path);

// spans.jsonl: {"id": str, "terms": [str, ...]}
void save_spans(const std::vector<std::string>& ids,
                const std::vector<std::vector<Term>>& spans, const std::string& path);

}  // namespace taxo::tagger
