#include "taxo/eval.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "taxo/common.hpp"
#include "taxo/rng.hpp"

namespace taxo::eval {

using nlohmann::json;

namespace {

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// Parent plus its ancestors; the attached term itself stays out.
std::set<Term> path_set(const Taxonomy& core, const Term& parent) {
    if (!core.has(parent))
        throw ValidationError("ancestor metric: '" + parent.surface() + "' is not a core node");
    std::set<Term> out;
    out.insert(parent);
    for (const Term& a : core.ancestors(parent)) out.insert(a);
    return out;
}

const Term& gold_parent(const Assignment& gold, const Term& term) {
    auto it = gold.find(term);
    if (it == gold.end())
        throw ValidationError("term '" + term.surface() + "' has no gold parent");
    return it->second;
}

long long intersection_size(const std::set<Term>& a, const std::set<Term>& b) {
    long long n = 0;
    for (const Term& t : a) n += b.count(t) > 0 ? 1 : 0;
    return n;
}

}  // namespace

Assignment top1(const std::vector<RankedPrediction>& preds) {
    Assignment out;
    for (const RankedPrediction& p : preds) {
        if (p.ranked.empty())
            throw ValidationError("prediction for '" + p.term.surface() + "' has no candidates");
        out[p.term] = p.ranked.front().first;
    }
    return out;
}

Prf edge_f1(const Assignment& preds, const Assignment& gold) {
    long long correct = 0;
    for (const auto& [term, parent] : preds)
        correct += gold_parent(gold, term) == parent ? 1 : 0;
    Prf out;
    out.precision = preds.empty() ? 0.0 : static_cast<double>(correct) / preds.size();
    out.recall = gold.empty() ? 0.0 : static_cast<double>(correct) / gold.size();
    out.f1 = harmonic(out.precision, out.recall);
    return out;
}

Prf ancestor_f1(const Assignment& preds, const Assignment& gold, const Taxonomy& core) {
    long long overlap = 0, sys_size = 0;
    for (const auto& [term, parent] : preds) {
        std::set<Term> sys = path_set(core, parent);
        std::set<Term> ref = path_set(core, gold_parent(gold, term));
        overlap += intersection_size(sys, ref);
        sys_size += static_cast<long long>(sys.size());
    }
    long long gold_size = 0;
    for (const auto& [term, parent] : gold)
        gold_size += static_cast<long long>(path_set(core, parent).size());
    Prf out;
    out.precision = sys_size > 0 ? static_cast<double>(overlap) / sys_size : 0.0;
    out.recall = gold_size > 0 ? static_cast<double>(overlap) / gold_size : 0.0;
    out.f1 = harmonic(out.precision, out.recall);
    return out;
}

Prf ancestor_f1_macro(const Assignment& preds, const Assignment& gold, const Taxonomy& core) {
    double p_sum = 0.0, r_sum = 0.0;
    for (const auto& [term, parent] : preds) {
        std::set<Term> sys = path_set(core, parent);
        std::set<Term> ref = path_set(core, gold_parent(gold, term));
        double overlap = static_cast<double>(intersection_size(sys, ref));
        p_sum += overlap / static_cast<double>(sys.size());
        r_sum += overlap / static_cast<double>(ref.size());
    }
    Prf out;
    out.precision = preds.empty() ? 0.0 : p_sum / static_cast<double>(preds.size());
    out.recall = gold.empty() ? 0.0 : r_sum / static_cast<double>(gold.size());
    out.f1 = harmonic(out.precision, out.recall);
    return out;
}

double hit_at_k(const std::vector<RankedPrediction>& preds, const Assignment& gold, int k) {
    if (k < 1) throw ValidationError("hit_at_k: k must be >= 1");
    if (preds.empty()) return 0.0;
    long long hits = 0;
    for (const RankedPrediction& p : preds) {
        const Term& want = gold_parent(gold, p.term);
        std::size_t top = std::min(static_cast<std::size_t>(k), p.ranked.size());
        for (std::size_t i = 0; i < top; ++i)
            if (p.ranked[i].first == want) {
                ++hits;
                break;
            }
    }
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::vector<PrPoint> pr_tradeoff(const std::vector<RankedPrediction>& preds,
                                 const Assignment& gold, std::vector<double> thresholds) {
    std::sort(thresholds.begin(), thresholds.end());
    std::vector<PrPoint> out;
    for (double c : thresholds) {
        PrPoint row;
        row.c = c;
        long long correct = 0;
        for (const RankedPrediction& p : preds) {
            if (p.ranked.empty())
                throw ValidationError("prediction for '" + p.term.surface() +
                                      "' has no candidates");
            if (p.ranked.front().second < c) continue;
            ++row.attached;
            correct += p.ranked.front().first == gold_parent(gold, p.term) ? 1 : 0;
        }
        row.precision =
            row.attached > 0 ? static_cast<double>(correct) / row.attached : 1.0;
        row.recall = gold.empty() ? 0.0 : static_cast<double>(correct) / gold.size();
        out.push_back(row);
    }
    return out;
}

double neighbor_precision(const Assignment& preds, const Assignment& gold,
                          const Taxonomy& core) {
    if (preds.empty()) return 0.0;
    long long correct = 0;
    for (const auto& [term, parent] : preds) {
        std::set<Term> allowed = path_set(core, parent);
        for (const Term& node : path_set(core, parent))
            for (const Term& sib : core.siblings(node)) allowed.insert(sib);
        correct += allowed.count(gold_parent(gold, term)) > 0 ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

Assignment random_attach(const Taxonomy& core, const std::vector<Term>& terms,
                         std::uint64_t seed) {
    rng::Engine eng(seed);
    const std::vector<Term>& nodes = core.nodes();
    Assignment out;
    for (const Term& t : terms)
        out[t] = nodes[rng::bounded(eng, static_cast<std::uint64_t>(nodes.size()))];
    return out;
}

Assignment root_attach(const Taxonomy& core, const std::vector<Term>& terms) {
    Assignment out;
    for (const Term& t : terms) out[t] = core.root();
    return out;
}

Assignment substr_attach(const Taxonomy& core, const std::vector<Term>& terms) {
    Assignment out;
    for (const Term& t : terms) {
        const Term* best = nullptr;
        for (const Term& v : core.nodes()) {
            if (t.surface().find(v.surface()) == std::string::npos) continue;
            if (!best || v.surface().size() > best->surface().size() ||
                (v.surface().size() == best->surface().size() && v < *best))
                best = &v;
        }
        out[t] = best ? *best : core.root();
    }
    return out;
}

Assignment i2t_attach(const Taxonomy& core, const std::vector<Term>& terms,
                      const std::vector<corpus::ItemProfile>& items) {
    corpus::TermMatcher matcher(terms);
    Assignment out;
    for (const Term& t : terms) {
        std::map<Term, long long> votes;
        for (const corpus::ItemProfile& item : items) {
            if (!item.assigned_node) continue;
            if (!matcher.mentions(item.title_tokens, t)) continue;
            if (!core.has(*item.assigned_node))
                throw ValidationError("i2t: item '" + item.id + "' is assigned to '" +
                                      item.assigned_node->surface() +
                                      "', which is not a core node");
            ++votes[*item.assigned_node];
        }
        const Term* best = nullptr;
        long long best_votes = 0;
        for (const auto& [node, n] : votes)
            if (n > best_votes) {  // map order makes ties lexicographic
                best_votes = n;
                best = &node;
            }
        out[t] = best ? *best : core.root();
    }
    return out;
}

json EvalReport::to_json() const {
    auto prf = [](const Prf& m) {
        return json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
    };
    json hit_obj = json::object();
    for (const auto& [k, rate] : hit) hit_obj[std::to_string(k)] = rate;
    json curve = json::array();
    for (const PrPoint& row : pr_curve)
        curve.push_back({{"c", row.c},
                         {"precision", row.precision},
                         {"recall", row.recall},
                         {"attached", row.attached}});
    return json{{"edge", prf(edge)},
                {"ancestor", prf(ancestor)},
                {"ancestor_macro", prf(ancestor_macro)},
                {"hit_at_k", hit_obj},
                {"pr_curve", curve},
                {"neighbor_precision", neighbor},
                {"attached", attached},
                {"total", total}};
}

EvalReport evaluate(const std::vector<RankedPrediction>& preds, const Assignment& gold,
                    const Taxonomy& core, const std::vector<int>& ks,
                    const std::vector<double>& thresholds) {
    EvalReport report;
    Assignment assign = top1(preds);
    report.edge = edge_f1(assign, gold);
    report.ancestor = ancestor_f1(assign, gold, core);
    report.ancestor_macro = ancestor_f1_macro(assign, gold, core);
    for (int k : ks) report.hit[k] = hit_at_k(preds, gold, k);
    report.pr_curve = pr_tradeoff(preds, gold, thresholds);
    report.neighbor = neighbor_precision(assign, gold, core);
    report.attached = static_cast<long long>(assign.size());
    report.total = static_cast<long long>(gold.size());
    return report;
}

void save_report(const EvalReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open file for writing: " + path);
    os << report.to_json().dump(2) << '\n';
}

void save_pr_curve(const std::vector<PrPoint>& curve, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open file for writing: " + path);
    os << "c\tprecision\trecall\tattached\n";
    for (const PrPoint& row : curve) {
        std::ostringstream line;
        line << row.c << '\t' << row.precision << '\t' << row.recall << '\t' << row.attached;
        os << line.str() << '\n';
    }
}

}  // namespace taxo::eval
