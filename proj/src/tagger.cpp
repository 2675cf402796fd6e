#include "taxo/tagger.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "taxo/common.hpp"

namespace taxo::tagger {

using corpus::kNumTags;
using corpus::Tag;
using nlohmann::json;
using nn::Tape;
using nn::Tensor;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Transitions i -> j compatible with the BIOE schema. B -> B is excluded:
// a begin tag either closes with E or stands alone before O.
constexpr bool kTransOk[kNumTags][kNumTags] = {
    // to:  B      I      O      E
    {false, true, true, true},    // from B
    {false, true, false, true},   // from I
    {true, false, true, false},   // from O
    {true, false, true, false},   // from E
};
constexpr bool kStartOk[kNumTags] = {true, false, true, false};  // B or O
constexpr bool kEndOk[kNumTags] = {true, false, true, true};     // not I

std::string gate_param(const char* dir, char gate, const char* part) {
    return std::string("tagger/") + dir + "/" + part + "_" + gate;
}

constexpr char kGateLetters[4] = {'i', 'f', 'g', 'o'};

double lse(const std::array<double, kNumTags>& a) {
    double m = *std::max_element(a.begin(), a.end());
    double s = 0.0;
    for (double v : a) s += std::exp(v - m);
    return m + std::log(s);
}

void check_crf_tables(const Tensor& trans, const Tensor& start, const Tensor& end) {
    if (trans.shape() != std::vector<int>{kNumTags, kNumTags})
        throw ValidationError("crf: transition table must be 4x4, got " + trans.shape_str());
    if (start.shape() != std::vector<int>{kNumTags})
        throw ValidationError("crf: start scores must have 4 entries, got " + start.shape_str());
    if (end.shape() != std::vector<int>{kNumTags})
        throw ValidationError("crf: end scores must have 4 entries, got " + end.shape_str());
}

void check_emission_matrix(const Tensor& em) {
    if (em.ndim() != 2 || em.cols() != kNumTags || em.rows() < 1)
        throw ValidationError("crf: emissions must be T x 4 with T >= 1, got " + em.shape_str());
}

int tag_index(Tag t) {
    int i = static_cast<int>(t);
    if (i < 0 || i >= kNumTags) throw ValidationError("crf: tag index out of range");
    return i;
}

std::vector<std::array<double, kNumTags>> forward_alphas(
    const std::vector<std::array<double, kNumTags>>& em, const Tensor& trans,
    const Tensor& start) {
    int t_len = static_cast<int>(em.size());
    std::vector<std::array<double, kNumTags>> alpha(t_len);
    for (int j = 0; j < kNumTags; ++j) alpha[0][j] = start[j] + em[0][j];
    for (int t = 1; t < t_len; ++t) {
        for (int j = 0; j < kNumTags; ++j) {
            std::array<double, kNumTags> acc;
            for (int i = 0; i < kNumTags; ++i) acc[i] = alpha[t - 1][i] + trans.at(i, j);
            alpha[t][j] = lse(acc) + em[t][j];
        }
    }
    return alpha;
}

std::vector<std::array<double, kNumTags>> backward_betas(
    const std::vector<std::array<double, kNumTags>>& em, const Tensor& trans,
    const Tensor& end) {
    int t_len = static_cast<int>(em.size());
    std::vector<std::array<double, kNumTags>> beta(t_len);
    for (int i = 0; i < kNumTags; ++i) beta[t_len - 1][i] = end[i];
    for (int t = t_len - 2; t >= 0; --t) {
        for (int i = 0; i < kNumTags; ++i) {
            std::array<double, kNumTags> acc;
            for (int j = 0; j < kNumTags; ++j)
                acc[j] = trans.at(i, j) + em[t + 1][j] + beta[t + 1][j];
            beta[t][i] = lse(acc);
        }
    }
    return beta;
}

std::vector<std::array<double, kNumTags>> emission_rows(const Tensor& em) {
    std::vector<std::array<double, kNumTags>> rows(em.rows());
    for (int t = 0; t < em.rows(); ++t)
        for (int j = 0; j < kNumTags; ++j) rows[t][j] = em.at(t, j);
    return rows;
}

}  // namespace

TaggerModel::TaggerModel(const features::EmbeddingStore* vectors, TaggerConfig cfg)
    : vectors_(vectors), cfg_(cfg) {
    if (!vectors_) throw ValidationError("tagger: embedding store is required");
    if (cfg_.hidden <= 0) throw ValidationError("tagger: hidden size must be positive");
    int d = vectors_->dim();
    int h = cfg_.hidden;
    rng::Engine eng(cfg_.seed);
    for (const char* dir : {"fwd", "bwd"}) {
        for (char g : kGateLetters) {
            params_.create(gate_param(dir, g, "W"), nn::glorot_uniform({h, d}, d, h, eng));
            params_.create(gate_param(dir, g, "U"), nn::glorot_uniform({h, h}, h, h, eng));
            params_.create(gate_param(dir, g, "b"), Tensor({h}));
        }
    }
    params_.create("tagger/emit/W",
                   nn::glorot_uniform({kNumTags, 2 * h}, 2 * h, kNumTags, eng));
    params_.create("tagger/emit/b", Tensor({kNumTags}));
    params_.create("tagger/crf/trans", Tensor({kNumTags, kNumTags}));
    params_.create("tagger/crf/start", Tensor({kNumTags}));
    params_.create("tagger/crf/end", Tensor({kNumTags}));
}

int TaggerModel::embed_dim() const { return vectors_->dim(); }

void TaggerModel::save(const std::string& path) const {
    json meta{{"kind", "tagger"},
              {"hidden", cfg_.hidden},
              {"embed_dim", embed_dim()},
              {"epoch_nll", epoch_nll}};
    params_.save(path, meta);
}

TaggerModel TaggerModel::load(const std::string& path, const features::EmbeddingStore* vectors) {
    json meta;
    nn::ParamSet loaded = nn::ParamSet::load(path, &meta);
    if (meta.value("kind", std::string()) != "tagger")
        throw ValidationError("tagger checkpoint: wrong kind in " + path);
    TaggerConfig cfg;
    cfg.hidden = meta.at("hidden").get<int>();
    TaggerModel model(vectors, cfg);
    if (meta.at("embed_dim").get<int>() != model.embed_dim())
        throw ValidationError("tagger checkpoint: embedding dim mismatch in " + path);
    if (loaded.names() != model.params_.names())
        throw ValidationError("tagger checkpoint: parameter names mismatch in " + path);
    for (const std::string& name : loaded.names())
        if (loaded.value(name).shape() != model.params_.value(name).shape())
            throw ValidationError("tagger checkpoint: shape mismatch for " + name);
    model.params_ = std::move(loaded);
    if (meta.contains("epoch_nll"))
        model.epoch_nll = meta.at("epoch_nll").get<std::vector<double>>();
    return model;
}

std::vector<Tape::Var> emission_vars(Tape& tape, const ParamLookup& param,
                                     const TaggerModel& model,
                                     const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw ValidationError("emission_vars: empty token sequence");
    const int t_len = static_cast<int>(tokens.size());
    const int h = model.hidden();

    std::vector<Tape::Var> x(t_len);
    for (int t = 0; t < t_len; ++t)
        x[t] = tape.leaf(model.vectors().token_vector(tokens[t]));

    auto run_lstm = [&](const char* dir, bool reversed) {
        struct GateVars {
            Tape::Var w, u, b;
        };
        std::array<GateVars, 4> gates;
        for (int k = 0; k < 4; ++k)
            gates[k] = {param(gate_param(dir, kGateLetters[k], "W")),
                        param(gate_param(dir, kGateLetters[k], "U")),
                        param(gate_param(dir, kGateLetters[k], "b"))};
        Tape::Var hprev = tape.leaf(Tensor({h}));
        Tape::Var cprev = tape.leaf(Tensor({h}));
        std::vector<Tape::Var> hs(t_len);
        for (int s = 0; s < t_len; ++s) {
            int t = reversed ? t_len - 1 - s : s;
            auto preact = [&](const GateVars& g) {
                return tape.add(tape.add(tape.matmul(g.w, x[t]), tape.matmul(g.u, hprev)), g.b);
            };
            Tape::Var in_g = tape.sigmoid(preact(gates[0]));
            Tape::Var forget_g = tape.sigmoid(preact(gates[1]));
            Tape::Var cand = tape.tanh(preact(gates[2]));
            Tape::Var out_g = tape.sigmoid(preact(gates[3]));
            Tape::Var c = tape.add(tape.mul(forget_g, cprev), tape.mul(in_g, cand));
            Tape::Var hv = tape.mul(out_g, tape.tanh(c));
            hs[t] = hv;
            hprev = hv;
            cprev = c;
        }
        return hs;
    };

    std::vector<Tape::Var> hf = run_lstm("fwd", false);
    std::vector<Tape::Var> hb = run_lstm("bwd", true);

    Tape::Var we = param("tagger/emit/W");
    Tape::Var be = param("tagger/emit/b");
    std::vector<Tape::Var> out(t_len);
    for (int t = 0; t < t_len; ++t)
        out[t] = tape.add(tape.matmul(we, tape.concat({hf[t], hb[t]})), be);
    return out;
}

std::vector<Tape::Var> emission_vars(Tape& tape, nn::ParamBinding& bind,
                                     const TaggerModel& model,
                                     const std::vector<std::string>& tokens) {
    return emission_vars(
        tape, [&bind](const std::string& name) { return bind.var(name); }, model, tokens);
}

Tensor emissions(const TaggerModel& model, const std::vector<std::string>& tokens) {
    Tape tape;
    std::map<std::string, Tape::Var> cache;
    auto param = [&](const std::string& name) {
        auto it = cache.find(name);
        if (it == cache.end())
            it = cache.emplace(name, tape.leaf(model.params().value(name))).first;
        return it->second;
    };
    std::vector<Tape::Var> em = emission_vars(tape, param, model, tokens);
    Tensor out({static_cast<int>(em.size()), kNumTags});
    for (std::size_t t = 0; t < em.size(); ++t)
        for (int j = 0; j < kNumTags; ++j)
            out.at(static_cast<int>(t), j) = tape.value(em[t])[j];
    return out;
}

double crf_log_partition(const Tensor& em, const Tensor& trans, const Tensor& start,
                         const Tensor& end) {
    check_emission_matrix(em);
    check_crf_tables(trans, start, end);
    auto alpha = forward_alphas(emission_rows(em), trans, start);
    std::array<double, kNumTags> fin;
    for (int j = 0; j < kNumTags; ++j) fin[j] = alpha.back()[j] + end[j];
    return lse(fin);
}

double crf_path_score(const Tensor& em, const Tensor& trans, const Tensor& start,
                      const Tensor& end, const std::vector<Tag>& path) {
    check_emission_matrix(em);
    check_crf_tables(trans, start, end);
    if (static_cast<int>(path.size()) != em.rows())
        throw ValidationError("crf_path_score: path length does not match emissions");
    int first = tag_index(path.front());
    double score = start[first] + em.at(0, first);
    for (int t = 1; t < em.rows(); ++t) {
        int prev = tag_index(path[t - 1]);
        int cur = tag_index(path[t]);
        score += trans.at(prev, cur) + em.at(t, cur);
    }
    return score + end[tag_index(path.back())];
}

Tape::Var crf_nll(Tape& tape, const std::vector<Tape::Var>& em_vars, Tape::Var trans,
                  Tape::Var start, Tape::Var end, const std::vector<Tag>& gold) {
    const int t_len = static_cast<int>(em_vars.size());
    if (t_len == 0) throw ValidationError("crf_nll: empty sequence");
    if (static_cast<int>(gold.size()) != t_len)
        throw ValidationError("crf_nll: gold length " + std::to_string(gold.size()) +
                              " does not match " + std::to_string(t_len) + " emissions");
    for (Tape::Var v : em_vars)
        if (tape.value(v).shape() != std::vector<int>{kNumTags})
            throw ValidationError("crf_nll: each emission must have 4 scores");

    Tensor em({t_len, kNumTags});
    for (int t = 0; t < t_len; ++t)
        for (int j = 0; j < kNumTags; ++j) em.at(t, j) = tape.value(em_vars[t])[j];
    double log_z = crf_log_partition(em, tape.value(trans), tape.value(start), tape.value(end));
    double nll = log_z - crf_path_score(em, tape.value(trans), tape.value(start),
                                        tape.value(end), gold);

    std::vector<Tape::Var> inputs = em_vars;
    inputs.push_back(trans);
    inputs.push_back(start);
    inputs.push_back(end);
    std::vector<int> gold_idx(t_len);
    for (int t = 0; t < t_len; ++t) gold_idx[t] = tag_index(gold[t]);

    std::vector<Tape::Var> em_copy = em_vars;
    auto backward = [em_copy, trans, start, end, gold_idx, t_len](Tape& tp,
                                                                  const Tensor& grad_out) {
        double go = grad_out[0];
        std::vector<std::array<double, kNumTags>> em_val(t_len);
        for (int t = 0; t < t_len; ++t)
            for (int j = 0; j < kNumTags; ++j) em_val[t][j] = tp.value(em_copy[t])[j];
        const Tensor& tr = tp.value(trans);
        auto alpha = forward_alphas(em_val, tr, tp.value(start));
        auto beta = backward_betas(em_val, tr, tp.value(end));
        std::array<double, kNumTags> fin;
        for (int j = 0; j < kNumTags; ++j) fin[j] = alpha[t_len - 1][j] + tp.value(end)[j];
        double log_z2 = lse(fin);

        auto marginal = [&](int t, int j) {
            return std::exp(alpha[t][j] + beta[t][j] - log_z2);
        };
        for (int t = 0; t < t_len; ++t) {
            Tensor& eg = tp.grad_mut(em_copy[t]);
            for (int j = 0; j < kNumTags; ++j)
                eg[j] += go * (marginal(t, j) - (gold_idx[t] == j ? 1.0 : 0.0));
        }
        Tensor& tg = tp.grad_mut(trans);
        for (int t = 0; t + 1 < t_len; ++t)
            for (int i = 0; i < kNumTags; ++i)
                for (int j = 0; j < kNumTags; ++j)
                    tg.at(i, j) += go * std::exp(alpha[t][i] + tr.at(i, j) +
                                                 em_val[t + 1][j] + beta[t + 1][j] - log_z2);
        for (int t = 1; t < t_len; ++t) tg.at(gold_idx[t - 1], gold_idx[t]) -= go;
        Tensor& sg = tp.grad_mut(start);
        for (int j = 0; j < kNumTags; ++j)
            sg[j] += go * (marginal(0, j) - (gold_idx[0] == j ? 1.0 : 0.0));
        Tensor& zg = tp.grad_mut(end);
        for (int j = 0; j < kNumTags; ++j)
            zg[j] += go * (marginal(t_len - 1, j) - (gold_idx[t_len - 1] == j ? 1.0 : 0.0));
    };
    return tape.custom(std::move(inputs), Tensor::scalar(nll), backward);
}

std::vector<Tag> viterbi_decode(const Tensor& em, const Tensor& trans, const Tensor& start,
                                const Tensor& end, bool constrained) {
    check_emission_matrix(em);
    check_crf_tables(trans, start, end);
    const int t_len = em.rows();
    std::vector<std::array<double, kNumTags>> delta(t_len);
    std::vector<std::array<int, kNumTags>> from(t_len);
    for (int j = 0; j < kNumTags; ++j)
        delta[0][j] = constrained && !kStartOk[j] ? kNegInf : start[j] + em.at(0, j);
    for (int t = 1; t < t_len; ++t) {
        for (int j = 0; j < kNumTags; ++j) {
            double best = kNegInf;
            int best_i = 0;
            for (int i = 0; i < kNumTags; ++i) {
                if (constrained && !kTransOk[i][j]) continue;
                if (delta[t - 1][i] == kNegInf) continue;
                double cand = delta[t - 1][i] + trans.at(i, j);
                if (cand > best) {
                    best = cand;
                    best_i = i;
                }
            }
            delta[t][j] = best == kNegInf ? kNegInf : best + em.at(t, j);
            from[t][j] = best_i;
        }
    }
    double best = kNegInf;
    int best_j = 0;
    for (int j = 0; j < kNumTags; ++j) {
        if (constrained && !kEndOk[j]) continue;
        if (delta[t_len - 1][j] == kNegInf) continue;
        double cand = delta[t_len - 1][j] + end[j];
        if (cand > best) {
            best = cand;
            best_j = j;
        }
    }
    std::vector<Tag> out(t_len);
    out[t_len - 1] = static_cast<Tag>(best_j);
    for (int t = t_len - 1; t > 0; --t) {
        best_j = from[t][best_j];
        out[t - 1] = static_cast<Tag>(best_j);
    }
    return out;
}

std::vector<Tag> viterbi_decode(const Tensor& em, const TaggerModel& model, bool constrained) {
    const nn::ParamSet& p = model.params();
    return viterbi_decode(em, p.value("tagger/crf/trans"), p.value("tagger/crf/start"),
                          p.value("tagger/crf/end"), constrained);
}

std::vector<Tag> decode_title(const TaggerModel& model, const std::vector<std::string>& tokens,
                              bool constrained) {
    if (tokens.empty()) return {};
    return viterbi_decode(emissions(model, tokens), model, constrained);
}

TaggerModel train_tagger(const std::vector<corpus::TaggedSequence>& labeled,
                         const features::EmbeddingStore* vectors, TaggerConfig cfg, int epochs,
                         double lr) {
    if (labeled.empty()) throw ValidationError("train_tagger: empty training set");
    for (const corpus::TaggedSequence& seq : labeled)
        if (seq.tokens.size() != seq.tags.size())
            throw ValidationError("train_tagger: token/tag count mismatch in training data");

    TaggerModel model(vectors, cfg);
    nn::AdamConfig adam;
    adam.lr = lr;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double total = 0.0;
        long long count = 0;
        for (const corpus::TaggedSequence& seq : labeled) {
            if (seq.tokens.empty()) continue;
            Tape tape;
            nn::ParamBinding bind(model.params(), tape);
            std::vector<Tape::Var> em = emission_vars(tape, bind, model, seq.tokens);
            Tape::Var loss =
                crf_nll(tape, em, bind.var("tagger/crf/trans"), bind.var("tagger/crf/start"),
                        bind.var("tagger/crf/end"), seq.tags);
            double nll = tape.scalar_value(loss);
            if (!std::isfinite(nll)) {
                throw NumericError("tagger training diverged: NLL " + std::to_string(nll) +
                                   " at epoch " + std::to_string(epoch) + ", sequence " +
                                   std::to_string(count) + " (lr " + std::to_string(lr) + ")");
            }
            model.params().zero_grads();
            tape.backward(loss);
            bind.harvest();
            model.params().adam_step(adam);
            total += nll;
            ++count;
        }
        model.epoch_nll.push_back(count > 0 ? total / static_cast<double>(count) : 0.0);
    }
    return model;
}

ExtractedTermList extract_terms(const TaggerModel& model,
                                const std::vector<corpus::ItemProfile>& items,
                                const std::set<Term>& core_vocab, bool constrained) {
    std::map<Term, long long> counts;
    for (const corpus::ItemProfile& item : items) {
        if (item.title_tokens.empty()) continue;
        corpus::TaggedSequence seq;
        seq.tokens = item.title_tokens;
        seq.tags = decode_title(model, item.title_tokens, constrained);
        for (const Term& t : corpus::span_terms(seq))
            if (core_vocab.count(t) == 0) ++counts[t];
    }
    ExtractedTermList out;
    out.reserve(counts.size());
    for (const auto& [term, count] : counts) out.push_back({term, count});
    std::sort(out.begin(), out.end(), [](const ExtractedTerm& a, const ExtractedTerm& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.term < b.term;
    });
    return out;
}

double recall_at_k(const ExtractedTermList& extracted, const std::set<Term>& gold,
                   std::size_t k) {
    if (gold.empty()) throw ValidationError("recall_at_k: empty gold set");
    std::size_t hits = 0;
    std::size_t top = std::min(k, extracted.size());
    for (std::size_t i = 0; i < top; ++i)
        if (gold.count(extracted[i].term) > 0) ++hits;
    return static_cast<double>(hits) / static_cast<double>(gold.size());
}

void save_extracted(const ExtractedTermList& terms, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open file for writing: " + path);
    for (const ExtractedTerm& t : terms) {
        json j{{"term", t.term.surface()}, {"count", t.count}};
        os << j.dump() << '\n';
    }
}

ExtractedTermList load_extracted(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open file: " + path);
    ExtractedTermList out;
    std::set<Term> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ValidationError(path + ":" + std::to_string(lineno) + ": invalid json");
        ExtractedTerm t{Term(j.at("term").get<std::string>()), j.at("count").get<long long>()};
        if (t.count < 1)
            throw ValidationError(path + ":" + std::to_string(lineno) + ": count must be >= 1");
        if (!seen.insert(t.term).second)
            throw ValidationError(path + ":" + std::to_string(lineno) + ": duplicate term '" +
                                  t.term.surface() + "'");
        if (!out.empty() && (out.back().count < t.count ||
                             (out.back().count == t.count && !(out.back().term < t.term))))
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": list is not sorted by count desc, term asc");
        out.push_back(std::move(t));
    }
    return out;
}

void save_spans(const std::vector<std::string>& ids,
                const std::vector<std::vector<Term>>& spans, const std::string& path) {
    if (ids.size() != spans.size())
        throw ValidationError("save_spans: id/span count mismatch");
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open file for writing: " + path);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        json terms = json::array();
        for (const Term& t : spans[i]) terms.push_back(t.surface());
        json j{{"id", ids[i]}, {"terms", terms}};
        os << j.dump() << '\n';
    }
}

}  // namespace taxo::tagger
