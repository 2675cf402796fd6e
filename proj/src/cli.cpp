#include "taxo/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "taxo/common.hpp"
#include "taxo/corpus.hpp"
#include "taxo/eval.hpp"
#include "taxo/features.hpp"
#include "taxo/tagger.hpp"

namespace taxo::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kTaxonomyFile = "taxonomy.tsv";
constexpr const char* kVectorsFile = "vectors.vec";
constexpr const char* kItemsFile = "items.jsonl";
constexpr const char* kQueriesFile = "queries.jsonl";
constexpr const char* kLabelsFile = "labels.jsonl";
constexpr const char* kTaggerTrainFile = "tagger_train.jsonl";
constexpr const char* kExtractTestTermsFile = "extract_test_terms.tsv";
constexpr const char* kExtractTestIdsFile = "extract_test_ids.txt";
constexpr const char* kTaggerModelFile = "tagger.bin";
constexpr const char* kTaggerCurveFile = "tagger_curve.tsv";
constexpr const char* kExtractedFile = "extracted.jsonl";
constexpr const char* kSpansFile = "spans.jsonl";
constexpr const char* kCoreFile = "core.tsv";
constexpr const char* kGraphFile = "graph.json";
constexpr const char* kAttachModelFile = "attach.bin";
constexpr const char* kAttachCurveFile = "attach_curve.tsv";
constexpr const char* kAblationFile = "ablation.tsv";
constexpr const char* kEnrichedFile = "enriched.tsv";
constexpr const char* kManifestFile = "manifest.json";

std::string split_file(const char* stem, const std::string& split, const char* ext) {
    return std::string(stem) + "_" + split + ext;
}

// ---------------------------------------------------------------- config

[[noreturn]] void bad_key(const std::string& path, const char* expected) {
    throw ValidationError("config key '" + path + "' must be " + expected);
}

std::string key_path(const char* group, const char* key) {
    return std::string(group) + "." + key;
}

const json& leaf(const json& j, const char* group, const char* key) {
    return j.at(group).at(key);
}

long long int_field(const json& j, const char* g, const char* k) {
    const json& v = leaf(j, g, k);
    if (!v.is_number_integer()) bad_key(key_path(g, k), "an integer");
    return v.get<long long>();
}

std::uint64_t seed_field(const json& j, const char* g, const char* k) {
    const json& v = leaf(j, g, k);
    if (!v.is_number_integer()) bad_key(key_path(g, k), "an integer");
    if (!v.is_number_unsigned() && v.get<long long>() < 0)
        bad_key(key_path(g, k), "a non-negative integer");
    return v.get<std::uint64_t>();
}

double num_field(const json& j, const char* g, const char* k) {
    const json& v = leaf(j, g, k);
    if (!v.is_number()) bad_key(key_path(g, k), "a number");
    return v.get<double>();
}

bool bool_field(const json& j, const char* g, const char* k) {
    const json& v = leaf(j, g, k);
    if (!v.is_boolean()) bad_key(key_path(g, k), "true or false");
    return v.get<bool>();
}

std::string str_field(const json& j, const char* g, const char* k) {
    const json& v = leaf(j, g, k);
    if (!v.is_string()) bad_key(key_path(g, k), "a string");
    return v.get<std::string>();
}

std::vector<std::string> str_list(const json& j, const char* g, const char* k) {
    const json& v = leaf(j, g, k);
    if (!v.is_array()) bad_key(key_path(g, k), "an array of strings");
    std::vector<std::string> out;
    for (const json& e : v) {
        if (!e.is_string()) bad_key(key_path(g, k), "an array of strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

std::vector<int> int_list(const json& j, const char* g, const char* k) {
    const json& v = leaf(j, g, k);
    if (!v.is_array()) bad_key(key_path(g, k), "an array of integers");
    std::vector<int> out;
    for (const json& e : v) {
        if (!e.is_number_integer()) bad_key(key_path(g, k), "an array of integers");
        out.push_back(e.get<int>());
    }
    return out;
}

std::vector<double> num_list(const json& j, const char* g, const char* k) {
    const json& v = leaf(j, g, k);
    if (!v.is_array()) bad_key(key_path(g, k), "an array of numbers");
    std::vector<double> out;
    for (const json& e : v) {
        if (!e.is_number()) bad_key(key_path(g, k), "an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

// Both directions: merged may not introduce keys the schema lacks, and
// every schema key must survive the merge (a null override deletes one).
void check_keys(const json& defaults, const json& merged, const std::string& prefix) {
    for (const auto& [key, value] : merged.items()) {
        std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!defaults.contains(key)) throw ValidationError("unknown config key '" + path + "'");
        if (value.is_null()) throw ValidationError("config key '" + path + "' is null");
        if (defaults.at(key).is_object()) {
            if (!value.is_object()) throw ValidationError("config key '" + path + "' must be an object");
            check_keys(defaults.at(key), value, path);
        }
    }
    for (const auto& [key, value] : defaults.items()) {
        std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!merged.contains(key)) throw ValidationError("config key '" + path + "' is missing");
    }
}

// ------------------------------------------------------------- artifacts

std::string world_file(const RunConfig& cfg, const std::string& configured, const char* fallback) {
    if (!configured.empty()) return configured;
    return (fs::path(cfg.paths.out) / fallback).string();
}

std::string out_file(const RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.paths.out) / name).string();
}

void need_inputs(const std::vector<std::string>& paths) {
    for (const std::string& p : paths)
        if (!fs::exists(p)) throw ValidationError("input file not found: " + p);
}

void ensure_outdir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create output directory " + dir + ": " + ec.message());
    fs::path probe = fs::path(dir) / ".write_probe";
    {
        std::ofstream out(probe);
        out << "";
        if (!out) throw ValidationError("output directory not writable: " + dir);
    }
    fs::remove(probe, ec);
}

std::string iso_now() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const RunConfig& cfg, const std::string& command) {
    json m;
    m["command"] = command;
    m["config"] = cfg.echo;
    m["config_hash"] = config_hash(cfg.echo);
    m["seeds"] = cfg.echo.at("seeds");
    m["version"] = kVersion;
    m["config_format"] = 1;
    m["timestamp"] = iso_now();
    std::string path = out_file(cfg, kManifestFile);
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << m.dump(2) << "\n";
}

void save_pairs(const std::vector<std::pair<Term, Term>>& pairs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    for (const auto& [term, parent] : pairs)
        out << term.surface() << "\t" << parent.surface() << "\n";
}

std::vector<std::pair<Term, Term>> load_pairs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read " + path);
    std::vector<std::pair<Term, Term>> pairs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() ||
            line.find('\t', tab + 1) != std::string::npos) {
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": expected term<TAB>parent");
        }
        pairs.emplace_back(Term(line.substr(0, tab)), Term(line.substr(tab + 1)));
    }
    return pairs;
}

void save_lines(const std::vector<std::string>& lines, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    for (const std::string& l : lines) out << l << "\n";
}

std::vector<Term> firsts(const std::vector<std::pair<Term, Term>>& pairs) {
    std::vector<Term> terms;
    terms.reserve(pairs.size());
    for (const auto& [term, parent] : pairs) terms.push_back(term);
    return terms;
}

eval::Assignment as_assignment(const std::vector<std::pair<Term, Term>>& pairs) {
    eval::Assignment a;
    for (const auto& [term, parent] : pairs) a.emplace(term, parent);
    return a;
}

// ------------------------------------------------------------- commands

void cmd_synth(const RunConfig& cfg) {
    synth::SynthWorld world = synth::gen_world(cfg.synth);
    synth::save_world(world, cfg.paths.out);
    std::cout << "synth: " << world.tax.nodes().size() << " nodes, " << world.items.size()
              << " items, " << world.queries.size() << " queries -> " << cfg.paths.out << "\n";
}

void cmd_label(const RunConfig& cfg) {
    std::string tax_path = world_file(cfg, cfg.paths.taxonomy, kTaxonomyFile);
    std::string items_path = world_file(cfg, cfg.paths.items, kItemsFile);
    need_inputs({tax_path, items_path});
    Taxonomy tax = load_taxonomy(tax_path);
    std::vector<corpus::ItemProfile> items = corpus::load_items(items_path);

    corpus::TermMatcher matcher(tax.nodes());
    std::vector<std::string> ids;
    std::vector<corpus::TaggedSequence> seqs;
    ids.reserve(items.size());
    seqs.reserve(items.size());
    long long matched = 0;
    for (const corpus::ItemProfile& item : items) {
        ids.push_back(item.id);
        seqs.push_back(corpus::distant_label(item.title_tokens, matcher));
        if (!corpus::decode_spans(seqs.back().tags).empty()) ++matched;
    }
    corpus::save_labels(ids, seqs, out_file(cfg, kLabelsFile));
    std::cout << "label: " << matched << "/" << items.size() << " titles matched a term\n";
}

void cmd_split_extract(const RunConfig& cfg) {
    std::string tax_path = world_file(cfg, cfg.paths.taxonomy, kTaxonomyFile);
    std::string items_path = world_file(cfg, cfg.paths.items, kItemsFile);
    need_inputs({tax_path, items_path});
    Taxonomy tax = load_taxonomy(tax_path);
    std::vector<corpus::ItemProfile> items = corpus::load_items(items_path);

    std::set<Term> vocab(tax.nodes().begin(), tax.nodes().end());
    corpus::ExtractionSplit split =
        corpus::build_extraction_split(items, vocab, cfg.tagger.train_ratio, cfg.seeds.split);
    corpus::save_labels(split.train_ids, split.train, out_file(cfg, kTaggerTrainFile));
    std::vector<std::string> term_lines;
    for (const Term& t : split.test_terms) term_lines.push_back(t.surface());
    save_lines(term_lines, out_file(cfg, kExtractTestTermsFile));
    save_lines(split.test_ids, out_file(cfg, kExtractTestIdsFile));
    std::cout << "split-extract: " << split.train.size() << " training titles, "
              << split.test_terms.size() << " held-out terms\n";
}

void cmd_train_tagger(const RunConfig& cfg) {
    std::string vec_path = world_file(cfg, cfg.paths.vectors, kVectorsFile);
    std::string train_path = out_file(cfg, kTaggerTrainFile);
    need_inputs({vec_path, train_path});
    features::EmbeddingStore store = features::EmbeddingStore::load(vec_path);
    auto labeled = corpus::load_labels(train_path);

    tagger::TaggerConfig tc;
    tc.hidden = cfg.tagger.hidden;
    tc.seed = cfg.seeds.tagger;
    tagger::TaggerModel model =
        tagger::train_tagger(labeled.second, &store, tc, cfg.tagger.epochs, cfg.tagger.lr);
    model.save(out_file(cfg, kTaggerModelFile));

    std::string curve_path = out_file(cfg, kTaggerCurveFile);
    std::ofstream curve(curve_path);
    if (!curve) throw ValidationError("cannot write " + curve_path);
    curve << "epoch\tnll\n";
    for (std::size_t i = 0; i < model.epoch_nll.size(); ++i)
        curve << i << "\t" << model.epoch_nll[i] << "\n";
    std::cout << "train-tagger: " << labeled.second.size() << " sequences, final NLL "
              << (model.epoch_nll.empty() ? 0.0 : model.epoch_nll.back()) << "\n";
}

void cmd_extract(const RunConfig& cfg) {
    std::string vec_path = world_file(cfg, cfg.paths.vectors, kVectorsFile);
    std::string items_path = world_file(cfg, cfg.paths.items, kItemsFile);
    std::string model_path = out_file(cfg, kTaggerModelFile);
    std::string core_path = out_file(cfg, kCoreFile);
    need_inputs({vec_path, items_path, model_path, core_path});
    features::EmbeddingStore store = features::EmbeddingStore::load(vec_path);
    std::vector<corpus::ItemProfile> items = corpus::load_items(items_path);
    tagger::TaggerModel model = tagger::TaggerModel::load(model_path, &store);
    Taxonomy core = load_taxonomy(core_path);
    std::set<Term> core_vocab(core.nodes().begin(), core.nodes().end());

    tagger::ExtractedTermList extracted =
        tagger::extract_terms(model, items, core_vocab, cfg.extract.constrained);
    std::erase_if(extracted, [&](const tagger::ExtractedTerm& e) {
        return e.count < cfg.extract.min_count;
    });
    tagger::save_extracted(extracted, out_file(cfg, kExtractedFile));

    std::vector<std::string> ids;
    std::vector<std::vector<Term>> spans;
    for (const corpus::ItemProfile& item : items) {
        ids.push_back(item.id);
        corpus::TaggedSequence seq{
            item.title_tokens,
            tagger::decode_title(model, item.title_tokens, cfg.extract.constrained)};
        spans.push_back(corpus::span_terms(seq));
    }
    tagger::save_spans(ids, spans, out_file(cfg, kSpansFile));
    std::cout << "extract: " << extracted.size() << " new terms from " << items.size()
              << " titles\n";
}

void cmd_split_attach(const RunConfig& cfg) {
    std::string tax_path = world_file(cfg, cfg.paths.taxonomy, kTaxonomyFile);
    need_inputs({tax_path});
    Taxonomy tax = load_taxonomy(tax_path);
    LeafSplit split = ablate_leaves(tax, cfg.ratios, cfg.seeds.split);
    save_taxonomy(split.core, out_file(cfg, kCoreFile));
    save_pairs(split.train, out_file(cfg, split_file("attach", "train", ".tsv")));
    save_pairs(split.dev, out_file(cfg, split_file("attach", "dev", ".tsv")));
    save_pairs(split.test, out_file(cfg, split_file("attach", "test", ".tsv")));
    std::cout << "split-attach: core " << split.core.nodes().size() << " nodes, held out "
              << split.train.size() << "/" << split.dev.size() << "/" << split.test.size()
              << " train/dev/test leaves\n";
}

struct AttachInputs {
    Taxonomy core;
    LeafSplit split;
    std::vector<corpus::QueryRecord> queries;
    std::vector<corpus::ItemProfile> items;
    features::EmbeddingStore store;
};

AttachInputs load_attach_inputs(const RunConfig& cfg) {
    std::string core_path = out_file(cfg, kCoreFile);
    std::string train_path = out_file(cfg, split_file("attach", "train", ".tsv"));
    std::string dev_path = out_file(cfg, split_file("attach", "dev", ".tsv"));
    std::string test_path = out_file(cfg, split_file("attach", "test", ".tsv"));
    std::string queries_path = world_file(cfg, cfg.paths.queries, kQueriesFile);
    std::string items_path = world_file(cfg, cfg.paths.items, kItemsFile);
    std::string vec_path = world_file(cfg, cfg.paths.vectors, kVectorsFile);
    need_inputs({core_path, train_path, dev_path, test_path, queries_path, items_path, vec_path});

    Taxonomy core = load_taxonomy(core_path);
    LeafSplit split;
    split.core = core;
    split.train = load_pairs(train_path);
    split.dev = load_pairs(dev_path);
    split.test = load_pairs(test_path);
    split.seed = cfg.seeds.split;
    return AttachInputs{std::move(core), std::move(split), corpus::load_queries(queries_path),
                        corpus::load_items(items_path), features::EmbeddingStore::load(vec_path)};
}

std::vector<Term> all_new_terms(const LeafSplit& split) {
    std::vector<Term> terms = firsts(split.train);
    for (const auto& [term, parent] : split.dev) terms.push_back(term);
    for (const auto& [term, parent] : split.test) terms.push_back(term);
    return terms;
}

graph::HetGraph build_het(const AttachInputs& in, graph::R1Direction dir) {
    return graph::HetGraph::build(in.core, all_new_terms(in.split), in.queries, in.items, dir);
}

void cmd_build_graph(const RunConfig& cfg) {
    AttachInputs in = load_attach_inputs(cfg);
    graph::HetGraph g = build_het(in, cfg.r1_dir);
    std::string path = out_file(cfg, kGraphFile);
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << g.to_json().dump(2) << "\n";
    std::cout << "build-graph: " << g.node_count() << " nodes (" << g.core_count() << " core), "
              << to_string(cfg.r1_dir) << "\n";
}

void cmd_train_attach(const RunConfig& cfg) {
    AttachInputs in = load_attach_inputs(cfg);
    graph::HetGraph g = build_het(in, cfg.r1_dir);
    std::vector<attach::TrainPair> pairs = attach::build_training_pairs(
        in.core, in.split, cfg.attach.negative_ratio, cfg.attach.anchors, cfg.seeds.attach);
    attach::AttachModel model = attach::train_attach(pairs, in.split.dev, g, in.store, cfg.attach);
    model.save(out_file(cfg, kAttachModelFile));

    std::string curve_path = out_file(cfg, kAttachCurveFile);
    std::ofstream curve(curve_path);
    if (!curve) throw ValidationError("cannot write " + curve_path);
    bool with_dev = !model.epoch_dev_f1.empty();
    curve << (with_dev ? "epoch\tloss\tdev_f1\n" : "epoch\tloss\n");
    for (std::size_t i = 0; i < model.epoch_loss.size(); ++i) {
        curve << i << "\t" << model.epoch_loss[i];
        if (with_dev) curve << "\t" << model.epoch_dev_f1[i];
        curve << "\n";
    }
    double best = 0.0;
    for (double f : model.epoch_dev_f1) best = std::max(best, f);
    std::cout << "train-attach: " << pairs.size() << " pairs, " << model.epoch_loss.size()
              << " epochs, best dev edge F1 " << best << "\n";
}

const std::vector<std::pair<Term, Term>>& split_of(const LeafSplit& split,
                                                   const std::string& name) {
    if (name == "train") return split.train;
    if (name == "dev") return split.dev;
    return split.test;
}

void cmd_attach(const RunConfig& cfg) {
    std::string model_path = out_file(cfg, kAttachModelFile);
    need_inputs({model_path});
    AttachInputs in = load_attach_inputs(cfg);
    graph::HetGraph g = build_het(in, cfg.r1_dir);
    attach::AttachModel model = attach::AttachModel::load(model_path);

    std::vector<Term> terms = firsts(split_of(in.split, cfg.eval.split));
    std::vector<attach::AttachmentPrediction> preds =
        attach::predict_all(model, g, in.store, terms);
    std::string path = out_file(cfg, split_file("predictions", cfg.eval.split, ".jsonl"));
    attach::save_predictions(preds, path);
    std::cout << "attach: ranked " << preds.size() << " " << cfg.eval.split << " terms\n";
}

json prf_json(const eval::Prf& prf) {
    return json{{"precision", prf.precision}, {"recall", prf.recall}, {"f1", prf.f1}};
}

json baseline_json(const eval::Assignment& preds, const eval::Assignment& gold,
                   const Taxonomy& core) {
    return json{{"edge", prf_json(eval::edge_f1(preds, gold))},
                {"ancestor", prf_json(eval::ancestor_f1(preds, gold, core))}};
}

void cmd_evaluate(const RunConfig& cfg) {
    std::string core_path = out_file(cfg, kCoreFile);
    std::string gold_path = out_file(cfg, split_file("attach", cfg.eval.split, ".tsv"));
    std::string preds_path = out_file(cfg, split_file("predictions", cfg.eval.split, ".jsonl"));
    std::string items_path = world_file(cfg, cfg.paths.items, kItemsFile);
    need_inputs({core_path, gold_path, preds_path, items_path});

    Taxonomy core = load_taxonomy(core_path);
    std::vector<std::pair<Term, Term>> gold_pairs = load_pairs(gold_path);
    eval::Assignment gold = as_assignment(gold_pairs);
    std::vector<attach::AttachmentPrediction> preds = attach::load_predictions(preds_path);
    std::vector<corpus::ItemProfile> items = corpus::load_items(items_path);

    eval::EvalReport report = eval::evaluate(preds, gold, core, cfg.eval.ks, cfg.eval.thresholds);
    std::vector<Term> terms = firsts(gold_pairs);
    json baselines;
    baselines["random"] =
        baseline_json(eval::random_attach(core, terms, cfg.seeds.split), gold, core);
    baselines["root"] = baseline_json(eval::root_attach(core, terms), gold, core);
    baselines["substr"] = baseline_json(eval::substr_attach(core, terms), gold, core);
    baselines["i2t"] = baseline_json(eval::i2t_attach(core, terms, items), gold, core);

    json full{{"model", report.to_json()}, {"baselines", baselines}};
    std::string report_path = out_file(cfg, split_file("report", cfg.eval.split, ".json"));
    std::ofstream out(report_path);
    if (!out) throw ValidationError("cannot write " + report_path);
    out << full.dump(2) << "\n";
    eval::save_pr_curve(report.pr_curve,
                        out_file(cfg, split_file("pr_curve", cfg.eval.split, ".tsv")));
    std::cout << "evaluate(" << cfg.eval.split << "): edge F1 " << report.edge.f1
              << ", ancestor F1 " << report.ancestor.f1 << "\n";
}

void cmd_ablate(const RunConfig& cfg) {
    AttachInputs in = load_attach_inputs(cfg);
    std::vector<attach::TrainPair> pairs = attach::build_training_pairs(
        in.core, in.split, cfg.attach.negative_ratio, cfg.attach.anchors, cfg.seeds.attach);

    std::map<std::string, graph::HetGraph> graphs;
    auto get_graph = [&](graph::R1Direction dir) -> const graph::HetGraph& {
        std::string key = to_string(dir);
        auto it = graphs.find(key);
        if (it == graphs.end()) it = graphs.emplace(key, build_het(in, dir)).first;
        return it->second;
    };
    eval::Assignment dev_gold = as_assignment(in.split.dev);
    eval::Assignment test_gold = as_assignment(in.split.test);
    std::vector<Term> dev_terms = firsts(in.split.dev);
    std::vector<Term> test_terms = firsts(in.split.test);

    struct Row {
        std::string grid, name;
        int rep_len = 0;
        double dev_f1 = 0.0, test_f1 = 0.0;
    };
    std::vector<Row> rows;
    auto run_row = [&](const std::string& grid, const std::string& name,
                       attach::AttachConfig ac, graph::R1Direction dir) {
        const graph::HetGraph& g = get_graph(dir);
        attach::AttachModel model = attach::train_attach(pairs, in.split.dev, g, in.store, ac);
        Row row{grid, name, attach::rep_length(ac.flags, ac.rgcn.dim), 0.0, 0.0};
        if (!dev_terms.empty()) {
            row.dev_f1 = eval::edge_f1(
                             eval::top1(attach::predict_all(model, g, in.store, dev_terms)),
                             dev_gold)
                             .f1;
        }
        if (!test_terms.empty()) {
            row.test_f1 = eval::edge_f1(
                              eval::top1(attach::predict_all(model, g, in.store, test_terms)),
                              test_gold)
                              .f1;
        }
        rows.push_back(row);
        std::cout << "ablate: " << grid << "/" << name << " dev F1 " << row.dev_f1 << "\n";
    };

    const attach::RepFlags kSingles[] = {{true, false, false, false},
                                         {false, true, false, false},
                                         {false, false, true, false},
                                         {false, false, false, true}};
    const char* kSingleNames[] = {"g_only", "w_only", "h_only", "l_only"};
    attach::AttachConfig full = cfg.attach;
    full.flags = attach::RepFlags{true, true, true, true};
    run_row("representation", "full", full, cfg.r1_dir);
    for (int i = 0; i < 4; ++i) {
        attach::AttachConfig ac = cfg.attach;
        ac.flags = kSingles[i];
        run_row("representation", kSingleNames[i], ac, cfg.r1_dir);
    }
    for (graph::R1Direction dir : {graph::R1Direction::ChildToParent,
                                   graph::R1Direction::ParentToChild, graph::R1Direction::Both}) {
        for (bool use_r2 : {false, true}) {
            attach::AttachConfig ac = cfg.attach;
            ac.rgcn.use_r2 = use_r2;
            std::string name =
                "dir=" + to_string(dir) + ",rels=" + (use_r2 ? "r1+r2+r3" : "r1+r3");
            run_row("graph", name, ac, dir);
        }
    }

    std::string path = out_file(cfg, kAblationFile);
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << "grid\tname\trep_len\tdev_edge_f1\ttest_edge_f1\n";
    for (const Row& row : rows) {
        out << row.grid << "\t" << row.name << "\t" << row.rep_len << "\t" << row.dev_f1 << "\t"
            << row.test_f1 << "\n";
    }
    std::cout << "ablate: " << rows.size() << " rows -> " << path << "\n";
}

void cmd_enrich(const RunConfig& cfg) {
    std::string vec_path = world_file(cfg, cfg.paths.vectors, kVectorsFile);
    std::string items_path = world_file(cfg, cfg.paths.items, kItemsFile);
    std::string queries_path = world_file(cfg, cfg.paths.queries, kQueriesFile);
    std::string tagger_path = out_file(cfg, kTaggerModelFile);
    std::string attach_path = out_file(cfg, kAttachModelFile);
    std::string core_path = out_file(cfg, kCoreFile);
    if (!fs::exists(core_path)) core_path = world_file(cfg, cfg.paths.taxonomy, kTaxonomyFile);
    need_inputs({vec_path, items_path, queries_path, tagger_path, attach_path, core_path});

    features::EmbeddingStore store = features::EmbeddingStore::load(vec_path);
    std::vector<corpus::ItemProfile> items = corpus::load_items(items_path);
    std::vector<corpus::QueryRecord> queries = corpus::load_queries(queries_path);
    tagger::TaggerModel tag_model = tagger::TaggerModel::load(tagger_path, &store);
    attach::AttachModel att_model = attach::AttachModel::load(attach_path);
    Taxonomy core = load_taxonomy(core_path);
    std::set<Term> core_vocab(core.nodes().begin(), core.nodes().end());

    tagger::ExtractedTermList extracted =
        tagger::extract_terms(tag_model, items, core_vocab, cfg.extract.constrained);
    std::erase_if(extracted, [&](const tagger::ExtractedTerm& e) {
        return e.count < cfg.extract.min_count;
    });
    std::vector<Term> terms;
    terms.reserve(extracted.size());
    for (const tagger::ExtractedTerm& e : extracted) terms.push_back(e.term);

    graph::HetGraph g = graph::HetGraph::build(core, terms, queries, items, cfg.r1_dir);
    std::vector<attach::AttachmentPrediction> preds =
        attach::predict_all(att_model, g, store, terms);
    attach::save_predictions(preds, out_file(cfg, split_file("predictions", "extracted", ".jsonl")));

    std::vector<attach::AttachmentPrediction> kept =
        attach::filter_threshold(preds, cfg.eval.threshold);
    Taxonomy enriched = core;
    for (const attach::AttachmentPrediction& p : kept)
        enriched = attach_term(enriched, p.ranked.front().first, p.term);
    save_taxonomy(enriched, out_file(cfg, kEnrichedFile));
    std::cout << "enrich: extracted " << terms.size() << " terms, attached " << kept.size()
              << " at threshold " << cfg.eval.threshold << "\n";
}

std::string help_for(const std::string& name) {
    static const std::map<std::string, std::string> helps{
        {"synth", "generate a synthetic taxonomy, item corpus, and query log"},
        {"label", "distantly label item titles with taxonomy terms"},
        {"split-extract", "hold out terms and build the tagger training set"},
        {"train-tagger", "train the sequence tagger on distant labels"},
        {"extract", "run the tagger over titles and collect new terms"},
        {"split-attach", "ablate leaves into a core tree plus attachment splits"},
        {"build-graph", "assemble the heterogeneous term graph"},
        {"train-attach", "train the candidate-parent scorer"},
        {"attach", "rank candidate parents for held-out terms"},
        {"evaluate", "score predictions against gold parents, with baselines"},
        {"ablate", "re-train across representation and graph variants"},
        {"enrich", "extract new terms and attach them to the taxonomy"}};
    return helps.at(name);
}

}  // namespace

json default_config() {
    json j;
    j["paths"] = {{"out", "out"}, {"taxonomy", ""}, {"items", ""}, {"queries", ""},
                  {"vectors", ""}};
    j["seeds"] = {{"world", 0}, {"split", 0}, {"tagger", 0}, {"attach", 0}};
    j["synth"] = {{"depth", 3},
                  {"branch_min", 2},
                  {"branch_max", 4},
                  {"items_per_leaf", 3},
                  {"noise_rate", 0.0},
                  {"click_noise", 0.0},
                  {"dim", 16},
                  {"base_nouns", json::array()},
                  {"modifiers", json::array()}};
    j["tagger"] = {{"hidden", 100},
                   {"epochs", 5},
                   {"lr", 1e-4},
                   {"train_ratio", 0.8},
                   {"constrained", true}};
    j["attach"] = {{"dim", 300},      {"layers", 2},
                   {"sample_n", 5},   {"use_r2", true},
                   {"r1_direction", "C->P"},
                   {"use_g", true},   {"use_w", true},
                   {"use_h", true},   {"use_l", true},
                   {"hidden", 100},   {"lr", 1e-4},
                   {"epochs", 50},    {"patience", 10},
                   {"negative_ratio", 0},
                   {"anchors", "both"}};
    j["split"] = {{"train", 0.64}, {"dev", 0.16}, {"test", 0.20}};
    j["eval"] = {{"split", "test"},
                 {"ks", json::array({1, 3, 5, 10})},
                 {"thresholds",
                  json::array({0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9})},
                 {"threshold", 0.5}};
    j["extract"] = {{"constrained", true}, {"min_count", 1}};
    return j;
}

void apply_override(json& config, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ValidationError("override '" + assignment + "' is not of the form dotted.key=value");
    }
    std::string key = assignment.substr(0, eq);
    std::string raw = assignment.substr(eq + 1);
    std::string pointer = "/" + key;
    std::replace(pointer.begin(), pointer.end(), '.', '/');

    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json patch = json::object();
    patch[json::json_pointer(pointer)] = value;
    config.merge_patch(patch);
}

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
    json merged = default_config();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ValidationError("config file not found: " + path);
        json file = json::parse(in, nullptr, false);
        if (file.is_discarded()) throw ValidationError("config file " + path + " is not valid JSON");
        if (!file.is_object()) {
            throw ValidationError("config file " + path + " must hold a JSON object");
        }
        merged.merge_patch(file);
    }
    for (const std::string& o : overrides) apply_override(merged, o);
    check_keys(default_config(), merged, "");
    return merged;
}

RunConfig parse_config(const json& config) {
    RunConfig cfg;
    cfg.paths.out = str_field(config, "paths", "out");
    if (cfg.paths.out.empty()) throw ValidationError("config key 'paths.out' must not be empty");
    cfg.paths.taxonomy = str_field(config, "paths", "taxonomy");
    cfg.paths.items = str_field(config, "paths", "items");
    cfg.paths.queries = str_field(config, "paths", "queries");
    cfg.paths.vectors = str_field(config, "paths", "vectors");

    cfg.seeds.world = seed_field(config, "seeds", "world");
    cfg.seeds.split = seed_field(config, "seeds", "split");
    cfg.seeds.tagger = seed_field(config, "seeds", "tagger");
    cfg.seeds.attach = seed_field(config, "seeds", "attach");

    cfg.synth.seed = cfg.seeds.world;
    cfg.synth.depth = static_cast<int>(int_field(config, "synth", "depth"));
    cfg.synth.branch_min = static_cast<int>(int_field(config, "synth", "branch_min"));
    cfg.synth.branch_max = static_cast<int>(int_field(config, "synth", "branch_max"));
    cfg.synth.items_per_leaf = static_cast<int>(int_field(config, "synth", "items_per_leaf"));
    cfg.synth.noise_rate = num_field(config, "synth", "noise_rate");
    cfg.synth.click_noise = num_field(config, "synth", "click_noise");
    cfg.synth.dim = static_cast<int>(int_field(config, "synth", "dim"));
    cfg.synth.base_nouns = str_list(config, "synth", "base_nouns");
    cfg.synth.modifiers = str_list(config, "synth", "modifiers");

    cfg.tagger.hidden = static_cast<int>(int_field(config, "tagger", "hidden"));
    cfg.tagger.epochs = static_cast<int>(int_field(config, "tagger", "epochs"));
    if (cfg.tagger.epochs < 0) bad_key("tagger.epochs", "non-negative");
    cfg.tagger.lr = num_field(config, "tagger", "lr");
    cfg.tagger.train_ratio = num_field(config, "tagger", "train_ratio");
    if (!(cfg.tagger.train_ratio > 0.0 && cfg.tagger.train_ratio <= 1.0))
        bad_key("tagger.train_ratio", "in (0, 1]");
    cfg.tagger.constrained = bool_field(config, "tagger", "constrained");

    cfg.attach.rgcn.dim = static_cast<int>(int_field(config, "attach", "dim"));
    cfg.attach.rgcn.layers = static_cast<int>(int_field(config, "attach", "layers"));
    cfg.attach.rgcn.sample_n = static_cast<int>(int_field(config, "attach", "sample_n"));
    cfg.attach.rgcn.use_r2 = bool_field(config, "attach", "use_r2");
    cfg.attach.rgcn.seed = cfg.seeds.attach;
    cfg.r1_dir = graph::r1_direction_from_string(str_field(config, "attach", "r1_direction"));
    cfg.attach.flags.use_g = bool_field(config, "attach", "use_g");
    cfg.attach.flags.use_w = bool_field(config, "attach", "use_w");
    cfg.attach.flags.use_h = bool_field(config, "attach", "use_h");
    cfg.attach.flags.use_l = bool_field(config, "attach", "use_l");
    cfg.attach.hidden = static_cast<int>(int_field(config, "attach", "hidden"));
    cfg.attach.lr = num_field(config, "attach", "lr");
    cfg.attach.epochs = static_cast<int>(int_field(config, "attach", "epochs"));
    cfg.attach.patience = static_cast<int>(int_field(config, "attach", "patience"));
    cfg.attach.negative_ratio = static_cast<int>(int_field(config, "attach", "negative_ratio"));
    cfg.attach.anchors = attach::anchor_mode_from_string(str_field(config, "attach", "anchors"));
    cfg.attach.seed = cfg.seeds.attach;

    cfg.ratios.train = num_field(config, "split", "train");
    cfg.ratios.dev = num_field(config, "split", "dev");
    cfg.ratios.test = num_field(config, "split", "test");

    cfg.eval.split = str_field(config, "eval", "split");
    if (cfg.eval.split != "train" && cfg.eval.split != "dev" && cfg.eval.split != "test")
        bad_key("eval.split", "one of train, dev, test");
    cfg.eval.ks = int_list(config, "eval", "ks");
    for (int k : cfg.eval.ks)
        if (k < 1) bad_key("eval.ks", "a list of integers >= 1");
    cfg.eval.thresholds = num_list(config, "eval", "thresholds");
    for (double c : cfg.eval.thresholds)
        if (!std::isfinite(c)) bad_key("eval.thresholds", "a list of finite numbers");
    cfg.eval.threshold = num_field(config, "eval", "threshold");
    if (!(cfg.eval.threshold >= 0.0 && cfg.eval.threshold <= 1.0))
        bad_key("eval.threshold", "in [0, 1]");

    cfg.extract.constrained = bool_field(config, "extract", "constrained");
    cfg.extract.min_count = int_field(config, "extract", "min_count");
    if (cfg.extract.min_count < 0) bad_key("extract.min_count", "non-negative");

    cfg.echo = config;
    return cfg;
}

std::string config_hash(const json& config) {
    std::string dump = config.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream hex;
    hex << std::hex << std::setfill('0') << std::setw(16) << h;
    return hex.str();
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{
        "synth",        "label",  "split-extract", "train-tagger", "extract", "split-attach",
        "build-graph",  "train-attach", "attach", "evaluate",     "ablate",  "enrich"};
    return names;
}

void run_command(const std::string& name, const RunConfig& cfg) {
    ensure_outdir(cfg.paths.out);
    if (name == "synth") cmd_synth(cfg);
    else if (name == "label") cmd_label(cfg);
    else if (name == "split-extract") cmd_split_extract(cfg);
    else if (name == "train-tagger") cmd_train_tagger(cfg);
    else if (name == "extract") cmd_extract(cfg);
    else if (name == "split-attach") cmd_split_attach(cfg);
    else if (name == "build-graph") cmd_build_graph(cfg);
    else if (name == "train-attach") cmd_train_attach(cfg);
    else if (name == "attach") cmd_attach(cfg);
    else if (name == "evaluate") cmd_evaluate(cfg);
    else if (name == "ablate") cmd_ablate(cfg);
    else if (name == "enrich") cmd_enrich(cfg);
    else throw ValidationError("unknown command '" + name + "'");
    write_manifest(cfg, name);
}

int run(int argc, const char* const* argv) {
    CLI::App app{"self-supervised taxonomy enrichment pipeline"};
    app.set_version_flag("--version", std::string(kVersion));
    std::string config_path;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "JSON run configuration file");
    app.add_option("--set", sets, "override a config key: dotted.key=value");
    app.require_subcommand(1);
    for (const std::string& name : command_names()) {
        CLI::App* sub = app.add_subcommand(name, help_for(name));
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        RunConfig cfg = parse_config(load_config(config_path, sets));
        run_command(app.get_subcommands().front()->get_name(), cfg);
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace taxo::cli
