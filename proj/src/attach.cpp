#include "taxo/attach.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "taxo/common.hpp"
#include "taxo/corpus.hpp"
#include "taxo/rng.hpp"
#include "taxo/tape.hpp"

namespace taxo::attach {

using nlohmann::json;
using nn::Tape;
using nn::Tensor;

namespace {

constexpr int kLexWidth = features::BinSpec::kNumFeatures * features::BinSpec::kEmbedDim;

std::string bin_name(int feature) { return "attach/bins/f" + std::to_string(feature); }

Tensor tensor_row(const Tensor& m, int r) {
    Tensor out({m.cols()});
    for (int c = 0; c < m.cols(); ++c) out[c] = m.at(r, c);
    return out;
}

// Initial node features for the graph network: every node starts from its
// fixed word vector.
Tensor initial_features(const graph::HetGraph& graph, const features::EmbeddingStore& store) {
    Tensor h0({graph.node_count(), store.dim()});
    for (int i = 0; i < graph.node_count(); ++i) {
        Tensor w = store.term_vector(graph.node(i));
        for (int d = 0; d < store.dim(); ++d) h0.at(i, d) = w[d];
    }
    return h0;
}

void check_dims(const AttachModel& model, const features::EmbeddingStore& store) {
    const RepFlags& f = model.config().flags;
    if ((f.use_g || f.use_w) && store.dim() != model.config().rgcn.dim)
        throw ValidationError("attach: store dimension " + std::to_string(store.dim()) +
                              " does not match the configured dimension " +
                              std::to_string(model.config().rgcn.dim));
}

int core_index(const graph::HetGraph& graph, const Term& v) {
    int idx = graph.index_of(v);
    if (idx >= graph.core_count())
        throw ValidationError("attach: candidate '" + v.surface() + "' is not a core node");
    return idx;
}

using ParamFn = std::function<Tape::Var(const std::string&)>;

// The pair representation assembled on a tape. g_v/g_t hold the structural
// rows and are ignored when the graph block is off.
Tape::Var rep_var(Tape& tape, const AttachModel& model, const features::EmbeddingStore& store,
                  const ParamFn& param, const Term& v, const Term& t, Tape::Var g_v,
                  Tape::Var g_t) {
    const RepFlags& f = model.config().flags;
    std::vector<Tape::Var> parts;

    Tape::Var w_v = -1, w_t = -1;
    if (f.use_g || f.use_w) {
        w_v = tape.leaf(store.term_vector(v));
        w_t = tape.leaf(store.term_vector(t));
    }
    auto triple = [&](Tape::Var a, Tape::Var b) {
        Tape::Var d = tape.sub(a, b);
        parts.push_back(tape.l1_norm(d));
        parts.push_back(tape.l2_norm(d));
        parts.push_back(tape.cosine(a, b));
    };
    if (f.use_g) {
        triple(g_v, g_t);
        triple(w_v, g_t);
        triple(g_v, w_t);
    }
    if (f.use_h)
        parts.push_back(tape.leaf(Tensor::scalar(features::head_similarity(v, t, store))));
    if (f.use_w) {
        parts.push_back(w_v);
        parts.push_back(w_t);
    }
    if (f.use_l) {
        auto ids = model.bins().bin_ids(features::lexical_features(v, t));
        for (int i = 0; i < features::BinSpec::kNumFeatures; ++i)
            parts.push_back(tape.row(param(bin_name(i)), ids[i]));
    }
    return tape.concat(parts);
}

Tape::Var prob_var(Tape& tape, const ParamFn& param, Tape::Var rep) {
    Tape::Var hidden = tape.relu(tape.matmul(param("attach/w2"), rep));
    return tape.sigmoid(tape.matmul(param("attach/w1"), hidden));
}

// Inference-side parameter lookup: plain value leaves, one per name.
ParamFn value_lookup(Tape& tape, const nn::ParamSet& params) {
    auto cache = std::make_shared<std::map<std::string, Tape::Var>>();
    return [&tape, &params, cache](const std::string& name) {
        auto it = cache->find(name);
        if (it == cache->end()) it = cache->emplace(name, tape.leaf(params.value(name))).first;
        return it->second;
    };
}

json config_to_json(const AttachConfig& cfg) {
    return json{{"dim", cfg.rgcn.dim},
                {"layers", cfg.rgcn.layers},
                {"sample_n", cfg.rgcn.sample_n},
                {"use_r2", cfg.rgcn.use_r2},
                {"rgcn_seed", cfg.rgcn.seed},
                {"use_g", cfg.flags.use_g},
                {"use_w", cfg.flags.use_w},
                {"use_h", cfg.flags.use_h},
                {"use_l", cfg.flags.use_l},
                {"hidden", cfg.hidden},
                {"lr", cfg.lr},
                {"epochs", cfg.epochs},
                {"patience", cfg.patience},
                {"negative_ratio", cfg.negative_ratio},
                {"anchors", to_string(cfg.anchors)},
                {"seed", cfg.seed}};
}

AttachConfig config_from_json(const json& j) {
    AttachConfig cfg;
    cfg.rgcn.dim = j.at("dim").get<int>();
    cfg.rgcn.layers = j.at("layers").get<int>();
    cfg.rgcn.sample_n = j.at("sample_n").get<int>();
    cfg.rgcn.use_r2 = j.at("use_r2").get<bool>();
    cfg.rgcn.seed = j.at("rgcn_seed").get<std::uint64_t>();
    cfg.flags.use_g = j.at("use_g").get<bool>();
    cfg.flags.use_w = j.at("use_w").get<bool>();
    cfg.flags.use_h = j.at("use_h").get<bool>();
    cfg.flags.use_l = j.at("use_l").get<bool>();
    cfg.hidden = j.at("hidden").get<int>();
    cfg.lr = j.at("lr").get<double>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.patience = j.at("patience").get<int>();
    cfg.negative_ratio = j.at("negative_ratio").get<int>();
    cfg.anchors = anchor_mode_from_string(j.at("anchors").get<std::string>());
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

}  // namespace

int rep_length(const RepFlags& flags, int dim) {
    int len = 0;
    if (flags.use_g) len += 9;
    if (flags.use_h) len += 1;
    if (flags.use_w) len += 2 * dim;
    if (flags.use_l) len += kLexWidth;
    return len;
}

AnchorMode anchor_mode_from_string(const std::string& s) {
    if (s == "core") return AnchorMode::Core;
    if (s == "train") return AnchorMode::Train;
    if (s == "both") return AnchorMode::Both;
    throw ValidationError("unknown anchor mode: " + s);
}

std::string to_string(AnchorMode mode) {
    switch (mode) {
        case AnchorMode::Core: return "core";
        case AnchorMode::Train: return "train";
        case AnchorMode::Both: return "both";
    }
    throw ValidationError("unknown anchor mode");
}

AttachModel::AttachModel(const AttachConfig& cfg) : cfg_(cfg) {
    if (cfg.hidden < 1) throw ValidationError("attach: hidden size must be positive");
    if (cfg.rgcn.dim < 1) throw ValidationError("attach: dimension must be positive");
    if (cfg.epochs < 0) throw ValidationError("attach: epochs must be non-negative");
    if (cfg.patience < 1) throw ValidationError("attach: patience must be positive");
    if (cfg.negative_ratio < 0) throw ValidationError("attach: negative ratio must be >= 0");
    int len = rep_len();
    if (len < 1) throw ValidationError("attach: every representation block is disabled");

    rng::Engine eng(cfg.seed);
    params_.create("attach/w1", nn::glorot_uniform({1, cfg.hidden}, cfg.hidden, 1, eng));
    params_.create("attach/w2", nn::glorot_uniform({cfg.hidden, len}, len, cfg.hidden, eng));
    if (cfg.flags.use_l)
        for (int i = 0; i < features::BinSpec::kNumFeatures; ++i) {
            int bc = bins_.bin_count(i);
            params_.create(bin_name(i),
                           nn::glorot_uniform({bc, features::BinSpec::kEmbedDim}, bc,
                                              features::BinSpec::kEmbedDim, eng));
        }
    if (cfg.flags.use_g) graph::init_rgcn_params(params_, cfg.rgcn, eng);
}

void AttachModel::save(const std::string& path) const {
    json meta = config_to_json(cfg_);
    meta["kind"] = "attach";
    meta["epoch_loss"] = epoch_loss;
    meta["epoch_dev_f1"] = epoch_dev_f1;
    params_.save(path, meta);
}

AttachModel AttachModel::load(const std::string& path) {
    json meta;
    nn::ParamSet loaded = nn::ParamSet::load(path, &meta);
    if (!meta.is_object() || meta.value("kind", "") != "attach")
        throw ValidationError("not an attachment model checkpoint: " + path);
    AttachConfig cfg;
    try {
        cfg = config_from_json(meta);
    } catch (const json::exception& e) {
        throw ValidationError("malformed checkpoint metadata in " + path + ": " + e.what());
    }
    AttachModel model(cfg);
    if (loaded.names() != model.params_.names())
        throw ValidationError("checkpoint parameters do not match the configuration: " + path);
    for (const std::string& name : loaded.names())
        if (loaded.value(name).shape() != model.params_.value(name).shape())
            throw ValidationError("checkpoint parameter '" + name + "' has shape " +
                                  loaded.value(name).shape_str() + ", expected " +
                                  model.params_.value(name).shape_str());
    model.params_ = std::move(loaded);
    try {
        model.epoch_loss = meta.value("epoch_loss", std::vector<double>{});
        model.epoch_dev_f1 = meta.value("epoch_dev_f1", std::vector<double>{});
    } catch (const json::exception& e) {
        throw ValidationError("malformed checkpoint metadata in " + path + ": " + e.what());
    }
    return model;
}

nn::Tensor node_embeddings(const AttachModel& model, const graph::HetGraph& graph,
                           const features::EmbeddingStore& store) {
    if (!model.config().flags.use_g)
        throw ValidationError("attach: the graph block is disabled");
    check_dims(model, store);
    graph::RgcnConfig dense = model.config().rgcn;
    dense.sample_n = 0;
    nn::ParamSet scratch = model.params();
    Tape tape;
    nn::ParamBinding bind(scratch, tape);
    Tape::Var g = graph::rgcn_forward(tape, bind, graph, dense, initial_features(graph, store));
    return tape.value(g);
}

nn::Tensor pair_representation(const Term& v, const Term& vp, const AttachModel& model,
                               const graph::HetGraph& graph,
                               const features::EmbeddingStore& store) {
    check_dims(model, store);
    int iv = core_index(graph, v);
    Tape tape;
    Tape::Var g_v = -1, g_t = -1;
    if (model.config().flags.use_g) {
        Tensor g = node_embeddings(model, graph, store);
        g_v = tape.leaf(tensor_row(g, iv));
        g_t = tape.leaf(tensor_row(g, graph.index_of(vp)));
    }
    ParamFn param = value_lookup(tape, model.params());
    return tape.value(rep_var(tape, model, store, param, v, vp, g_v, g_t));
}

double score(const Term& v, const Term& vp, const AttachModel& model,
             const graph::HetGraph& graph, const features::EmbeddingStore& store) {
    check_dims(model, store);
    int iv = core_index(graph, v);
    Tape tape;
    Tape::Var g_v = -1, g_t = -1;
    if (model.config().flags.use_g) {
        Tensor g = node_embeddings(model, graph, store);
        g_v = tape.leaf(tensor_row(g, iv));
        g_t = tape.leaf(tensor_row(g, graph.index_of(vp)));
    }
    ParamFn param = value_lookup(tape, model.params());
    Tape::Var rep = rep_var(tape, model, store, param, v, vp, g_v, g_t);
    return tape.scalar_value(prob_var(tape, param, rep));
}

std::vector<TrainPair> build_training_pairs(const Taxonomy& core, const LeafSplit& split,
                                            int negative_ratio, AnchorMode anchors,
                                            std::uint64_t seed) {
    if (negative_ratio < 0) throw ValidationError("build_training_pairs: negative ratio < 0");
    rng::Engine eng(seed);

    std::vector<std::pair<Term, Term>> anchor_list;  // (anchor, gold parent)
    if (anchors != AnchorMode::Core)
        for (const auto& [t, gold] : split.train) anchor_list.emplace_back(t, gold);
    if (anchors != AnchorMode::Train)
        for (const Term& node : core.nodes())
            if (node != core.root()) anchor_list.emplace_back(node, *core.parent(node));

    std::vector<TrainPair> out;
    for (const auto& [t, gold] : anchor_list) {
        if (!core.has(gold))
            throw ValidationError("build_training_pairs: gold parent '" + gold.surface() +
                                  "' of '" + t.surface() + "' is not a core node");
        out.push_back({gold, t, true});
        std::vector<Term> negs;
        for (const Term& v : core.nodes())
            if (v != gold && v != t) negs.push_back(v);
        if (negative_ratio > 0) {
            for (int i : rng::sample_without_replacement(static_cast<int>(negs.size()),
                                                         negative_ratio, eng))
                out.push_back({negs[static_cast<std::size_t>(i)], t, false});
        } else {
            for (const Term& v : negs) out.push_back({v, t, false});
        }
    }
    return out;
}

double epoch_objective(AttachModel& model, const graph::HetGraph& graph,
                       const features::EmbeddingStore& store,
                       const std::vector<TrainPair>& pairs, std::uint64_t epoch,
                       bool want_grads) {
    if (pairs.empty()) throw ValidationError("epoch_objective: no pairs");
    check_dims(model, store);
    const AttachConfig& cfg = model.config();
    const double inv_count = 1.0 / static_cast<double>(pairs.size());

    Tape gtape;
    std::optional<nn::ParamBinding> gbind;
    Tape::Var g_node = -1;
    Tensor g_val, d_g;
    if (cfg.flags.use_g) {
        gbind.emplace(model.params(), gtape);
        g_node = graph::rgcn_forward(gtape, *gbind, graph, cfg.rgcn,
                                     initial_features(graph, store), epoch);
        g_val = gtape.value(g_node);
        d_g = Tensor({graph.node_count(), cfg.rgcn.dim});
    }

    double total = 0.0;
    for (const TrainPair& pr : pairs) {
        Tape tape;
        nn::ParamBinding bind(model.params(), tape);
        ParamFn param = [&bind](const std::string& name) { return bind.var(name); };

        Tape::Var g_v = -1, g_t = -1;
        int iv = -1, it = -1;
        if (cfg.flags.use_g) {
            iv = core_index(graph, pr.v);
            it = graph.index_of(pr.t);
            g_v = tape.leaf(tensor_row(g_val, iv));
            g_t = tape.leaf(tensor_row(g_val, it));
        }
        Tape::Var rep = rep_var(tape, model, store, param, pr.v, pr.t, g_v, g_t);
        Tape::Var prob = prob_var(tape, param, rep);
        Tape::Var loss = tape.bce_loss(prob, pr.positive ? 1.0 : 0.0);
        total += tape.scalar_value(loss);

        if (want_grads) {
            tape.backward(tape.scale(loss, inv_count));
            bind.harvest();
            if (cfg.flags.use_g) {
                const Tensor& dv = tape.grad(g_v);
                const Tensor& dt = tape.grad(g_t);
                for (int d = 0; d < cfg.rgcn.dim; ++d) {
                    d_g.at(iv, d) += dv[d];
                    d_g.at(it, d) += dt[d];
                }
            }
        }
    }

    if (want_grads && cfg.flags.use_g) {
        gtape.backward_from({{g_node, d_g}});
        gbind->harvest();
    }
    return total * inv_count;
}

AttachModel train_attach(const std::vector<TrainPair>& pairs,
                         const std::vector<std::pair<Term, Term>>& dev,
                         const graph::HetGraph& graph,
                         const features::EmbeddingStore& store, const AttachConfig& cfg) {
    if (pairs.empty()) throw ValidationError("train_attach: no training pairs");
    AttachModel model(cfg);
    check_dims(model, store);

    std::vector<Term> dev_terms;
    eval::Assignment dev_gold;
    for (const auto& [t, gold] : dev) {
        dev_terms.push_back(t);
        dev_gold[t] = gold;
    }

    nn::AdamConfig adam;
    adam.lr = cfg.lr;

    AttachModel best = model;
    double best_f1 = -1.0;
    int best_epoch = -1;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        model.params().zero_grads();
        double loss = epoch_objective(model, graph, store, pairs,
                                      static_cast<std::uint64_t>(epoch), true);
        if (!std::isfinite(loss)) {
            throw NumericError("attachment training diverged: loss " + std::to_string(loss) +
                               " at epoch " + std::to_string(epoch) + " (lr " +
                               std::to_string(cfg.lr) + ", " + std::to_string(pairs.size()) +
                               " pairs)");
        }
        model.epoch_loss.push_back(loss);
        model.params().adam_step(adam);
        if (dev.empty()) continue;

        double f1 =
            eval::edge_f1(eval::top1(predict_all(model, graph, store, dev_terms)), dev_gold).f1;
        model.epoch_dev_f1.push_back(f1);
        if (f1 > best_f1) {
            best_f1 = f1;
            best_epoch = epoch;
            best = model;
        } else if (epoch - best_epoch >= cfg.patience) {
            break;
        }
    }
    if (dev.empty() || best_epoch < 0) return model;
    best.epoch_loss = model.epoch_loss;
    best.epoch_dev_f1 = model.epoch_dev_f1;
    return best;
}

std::vector<AttachmentPrediction> predict_all(const AttachModel& model,
                                              const graph::HetGraph& graph,
                                              const features::EmbeddingStore& store,
                                              const std::vector<Term>& terms) {
    check_dims(model, store);
    const bool use_g = model.config().flags.use_g;
    Tensor g;
    if (use_g) g = node_embeddings(model, graph, store);

    std::vector<AttachmentPrediction> out;
    for (const Term& vp : terms) {
        Tape tape;
        ParamFn param = value_lookup(tape, model.params());
        Tape::Var g_t = -1;
        if (use_g) g_t = tape.leaf(tensor_row(g, graph.index_of(vp)));

        AttachmentPrediction pred;
        pred.term = vp;
        for (int iv = 0; iv < graph.core_count(); ++iv) {
            const Term& v = graph.node(iv);
            Tape::Var g_v = use_g ? tape.leaf(tensor_row(g, iv)) : -1;
            Tape::Var rep = rep_var(tape, model, store, param, v, vp, g_v, g_t);
            pred.ranked.emplace_back(v, tape.scalar_value(prob_var(tape, param, rep)));
        }
        std::sort(pred.ranked.begin(), pred.ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        out.push_back(std::move(pred));
    }
    return out;
}

AttachmentPrediction predict(const AttachModel& model, const graph::HetGraph& graph,
                             const features::EmbeddingStore& store, const Term& vp) {
    return predict_all(model, graph, store, {vp}).front();
}

AttachmentPrediction top_k(const AttachmentPrediction& pred, int k) {
    if (k < 1) throw ValidationError("top_k: k must be >= 1");
    AttachmentPrediction out;
    out.term = pred.term;
    std::size_t keep = std::min(static_cast<std::size_t>(k), pred.ranked.size());
    out.ranked.assign(pred.ranked.begin(), pred.ranked.begin() + static_cast<long>(keep));
    return out;
}

std::vector<AttachmentPrediction> filter_threshold(
    const std::vector<AttachmentPrediction>& preds, double c) {
    if (c < 0.0 || c > 1.0) throw ValidationError("filter_threshold: c must be in [0, 1]");
    std::vector<AttachmentPrediction> out;
    for (const AttachmentPrediction& p : preds) {
        if (p.ranked.empty())
            throw ValidationError("prediction for '" + p.term.surface() + "' has no candidates");
        if (p.ranked.front().second >= c) out.push_back(p);
    }
    return out;
}

void save_predictions(const std::vector<AttachmentPrediction>& preds, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open file for writing: " + path);
    for (const AttachmentPrediction& p : preds) {
        json ranked = json::array();
        for (const auto& [cand, prob] : p.ranked) ranked.push_back({cand.surface(), prob});
        os << json{{"term", p.term.surface()}, {"ranked", ranked}}.dump() << '\n';
    }
}

std::vector<AttachmentPrediction> load_predictions(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open file: " + path);
    std::vector<AttachmentPrediction> out;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw ValidationError(path + ":" + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) fail("not a JSON object");
        if (!j.contains("term") || !j["term"].is_string()) fail("missing term");
        if (!j.contains("ranked") || !j["ranked"].is_array() || j["ranked"].empty())
            fail("missing or empty ranking");
        AttachmentPrediction p;
        p.term = Term(j["term"].get<std::string>());
        if (p.term.empty()) fail("empty term");
        double prev = 2.0;
        for (const json& entry : j["ranked"]) {
            if (!entry.is_array() || entry.size() != 2 || !entry[0].is_string() ||
                !entry[1].is_number())
                fail("ranking entries must be [candidate, probability] pairs");
            double prob = entry[1].get<double>();
            if (prob < 0.0 || prob > 1.0) fail("probability out of range");
            if (prob > prev) fail("ranking is not sorted by probability");
            prev = prob;
            p.ranked.emplace_back(Term(entry[0].get<std::string>()), prob);
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace taxo::attach
