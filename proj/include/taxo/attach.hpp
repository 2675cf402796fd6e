#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "taxo/eval.hpp"
#include "taxo/features.hpp"
#include "taxo/graph.hpp"
#include "taxo/params.hpp"
#include "taxo/taxonomy.hpp"
#include "taxo/tensor.hpp"

namespace taxo::attach {

// Which blocks of the pair representation are active. Dropping a block
// shortens the vector; the scorer is sized to whatever remains.
struct RepFlags {
    bool use_g = true;  // the three similarity triples over structural embeddings
    bool use_w = true;  // raw word vectors of both terms
    bool use_h = true;  // head-word similarity scalar
    bool use_l = true;  // binned lexical block
};

// 9·g + 1·h + 2·dim·w + 60·l.
int rep_length(const RepFlags& flags, int dim);

// Which terms anchor training pairs: held-out training leaves, non-root
// core nodes, or the union.
enum class AnchorMode { Core, Train, Both };

AnchorMode anchor_mode_from_string(const std::string& s);  // "core"|"train"|"both"
std::string to_string(AnchorMode mode);

struct AttachConfig {
    graph::RgcnConfig rgcn;
    RepFlags flags;
    int hidden = 100;
    double lr = 1e-4;
    int epochs = 50;
    int patience = 10;       // non-improving dev epochs before stopping
    int negative_ratio = 0;  // 0 = every non-parent candidate is a negative
    AnchorMode anchors = AnchorMode::Both;
    std::uint64_t seed = 0;
};

// Scorer (W2 -> ReLU -> W1 -> sigmoid, no biases), lexical bin tables, and
// the graph-network weights, all in one parameter set. Blocks that the
// flags disable are never instantiated.
class AttachModel {
public:
    explicit AttachModel(const AttachConfig& cfg);

    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }
    const AttachConfig& config() const { return cfg_; }
    const features::BinSpec& bins() const { return bins_; }
    int rep_len() const { return rep_length(cfg_.flags, cfg_.rgcn.dim); }

    void save(const std::string& path) const;
    static AttachModel load(const std::string& path);

    std::vector<double> epoch_loss;    // mean pair BCE per epoch
    std::vector<double> epoch_dev_f1;  // dev edge F1 per epoch (empty without dev)

private:
    AttachConfig cfg_;
    features::BinSpec bins_;
    nn::ParamSet params_;
};

// Structural embeddings for every graph node with neighbour sampling off,
// one row per node in graph order. Requires the graph block to be active.
nn::Tensor node_embeddings(const AttachModel& model, const graph::HetGraph& graph,
                           const features::EmbeddingStore& store);

// [s(g_v,g_v'), s(w_v,g_v'), s(g_v,w_v'), H, w_v, w_v', lexical] with the
// flag-disabled blocks removed. v must be a core node; v' must be a graph
// node whenever the graph block is active.
nn::Tensor pair_representation(const Term& v, const Term& vp, const AttachModel& model,
                               const graph::HetGraph& graph,
                               const features::EmbeddingStore& store);

// sigmoid(W1 · ReLU(W2 · R(v,v'))), always strictly inside (0,1).
double score(const Term& v, const Term& vp, const AttachModel& model,
             const graph::HetGraph& graph, const features::EmbeddingStore& store);

struct TrainPair {
    Term v;  // candidate parent, always a core node
    Term t;  // anchor term
    bool positive = false;
};

// One positive pair (gold parent, t) per anchor plus negatives drawn from
// the remaining core nodes: all of them, or negative_ratio seeded samples
// per positive. Self-pairs never appear.
std::vector<TrainPair> build_training_pairs(const Taxonomy& core, const LeafSplit& split,
                                            int negative_ratio, AnchorMode anchors,
                                            std::uint64_t seed);

// Mean BCE over the pairs for the current parameters; with want_grads the
// full gradient (scorer, bin tables, graph weights) lands in model.params().
// epoch seeds the neighbour-sampling stream.
double epoch_objective(AttachModel& model, const graph::HetGraph& graph,
                       const features::EmbeddingStore& store,
                       const std::vector<TrainPair>& pairs, std::uint64_t epoch,
                       bool want_grads);

// Full-batch Adam. After each epoch the dev terms are re-attached and
// scored by edge F1; the returned model is the checkpoint with the best
// dev score (earliest on ties), or the final epoch when dev is empty.
// Stops early after cfg.patience epochs without improvement.
AttachModel train_attach(const std::vector<TrainPair>& pairs,
                         const std::vector<std::pair<Term, Term>>& dev,
                         const graph::HetGraph& graph,
                         const features::EmbeddingStore& store, const AttachConfig& cfg);

using AttachmentPrediction = eval::RankedPrediction;

// Probability-ranked candidates over every core node, ties by surface.
AttachmentPrediction predict(const AttachModel& model, const graph::HetGraph& graph,
                             const features::EmbeddingStore& store, const Term& vp);

// Same, sharing one embedding pass across all terms.
std::vector<AttachmentPrediction> predict_all(const AttachModel& model,
                                              const graph::HetGraph& graph,
                                              const features::EmbeddingStore& store,
                                              const std::vector<Term>& terms);

AttachmentPrediction top_k(const AttachmentPrediction& pred, int k);

// Keeps the terms whose best candidate clears the threshold.
std::vector<AttachmentPrediction> filter_threshold(
    const std::vector<AttachmentPrediction>& preds, double c);

// One {"term": ..., "ranked": [[candidate, probability], ...]} per line.
void save_predictions(const std::vector<AttachmentPrediction>& preds,
                      const std::string& path);
std::vector<AttachmentPrediction> load_predictions(const std::string& path);

}  // namespace taxo::attach
