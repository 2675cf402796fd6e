#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "taxo/corpus.hpp"
#include "taxo/taxonomy.hpp"

namespace taxo::eval {

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// term -> (predicted or gold) parent.
using Assignment = std::map<Term, Term>;

// Candidates ranked by probability descending, ties by candidate surface.
struct RankedPrediction {
    Term term;
    std::vector<std::pair<Term, double>> ranked;
};

// Top-1 parent per term; every ranking must be non-empty.
Assignment top1(const std::vector<RankedPrediction>& preds);

// P = correct/|preds|, R = correct/|gold|. Every predicted term must be in
// the gold assignment.
Prf edge_f1(const Assignment& preds, const Assignment& gold);

// Path overlap between the predicted and gold parent: each side is the
// parent plus its ancestors up to the root (the attached term excluded).
// Micro-averaged: intersection and set sizes are summed over terms before
// dividing; unattached gold terms still count in the recall denominator.
Prf ancestor_f1(const Assignment& preds, const Assignment& gold, const Taxonomy& core);

// Secondary diagnostic: per-term ratios averaged instead of pooled.
Prf ancestor_f1_macro(const Assignment& preds, const Assignment& gold, const Taxonomy& core);

// Fraction of ranked terms whose gold parent is in the top k.
double hit_at_k(const std::vector<RankedPrediction>& preds, const Assignment& gold, int k);

struct PrPoint {
    double c = 0.0;
    double precision = 0.0;  // 1.0 when nothing clears the threshold
    double recall = 0.0;
    long long attached = 0;
};

// Threshold sweep: a term is attached when its max probability >= c.
// Rows come back sorted by c.
std::vector<PrPoint> pr_tradeoff(const std::vector<RankedPrediction>& preds,
                                 const Assignment& gold, std::vector<double> thresholds);

// A prediction also counts when the gold parent is a sibling of any node
// on the predicted path (or on the path itself).
double neighbor_precision(const Assignment& preds, const Assignment& gold,
                          const Taxonomy& core);

// Baselines. Parents always come from the core node set; Substr and I2T
// fall back to the root when nothing matches.
Assignment random_attach(const Taxonomy& core, const std::vector<Term>& terms,
                         std::uint64_t seed);
Assignment root_attach(const Taxonomy& core, const std::vector<Term>& terms);
// Longest core surface that is a substring of the term, ties lexicographic.
Assignment substr_attach(const Taxonomy& core, const std::vector<Term>& terms);
// Majority vote over the assigned nodes of items whose titles mention the
// term, ties lexicographic.
Assignment i2t_attach(const Taxonomy& core, const std::vector<Term>& terms,
                      const std::vector<corpus::ItemProfile>& items);

struct EvalReport {
    Prf edge;
    Prf ancestor;
    Prf ancestor_macro;
    std::map<int, double> hit;
    std::vector<PrPoint> pr_curve;
    double neighbor = 0.0;
    long long attached = 0;
    long long total = 0;

    nlohmann::json to_json() const;
};

EvalReport evaluate(const std::vector<RankedPrediction>& preds, const Assignment& gold,
                    const Taxonomy& core, const std::vector<int>& ks,
                    const std::vector<double>& thresholds);

void save_report(const EvalReport& report, const std::string& path);
// TSV: c, precision, recall, attached.
void save_pr_curve(const std::vector<PrPoint>& curve, const std::string& path);

}  // namespace taxo::eval
