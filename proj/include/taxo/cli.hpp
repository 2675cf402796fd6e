#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "taxo/attach.hpp"
#include "taxo/graph.hpp"
#include "taxo/synth.hpp"
#include "taxo/taxonomy.hpp"

namespace taxo::cli {

inline constexpr const char* kVersion = "0.1.0";

// Everything a run needs, resolved from defaults <- config file <- --set
// overrides. Path fields left empty fall back to the matching artifact in
// the output directory, so a synth world feeds the rest of the pipeline
// without any path wiring.
struct RunConfig {
    struct Paths {
        std::string out = "out";
        std::string taxonomy, items, queries, vectors;
    } paths;

    struct Seeds {
        std::uint64_t world = 0, split = 0, tagger = 0, attach = 0;
    } seeds;

    synth::SynthConfig synth;  // seed comes from seeds.world

    struct TaggerRun {
        int hidden = 100;
        int epochs = 5;
        double lr = 1e-4;
        double train_ratio = 0.8;  // share of usable titles kept for training
        bool constrained = true;
    } tagger;

    attach::AttachConfig attach;  // seeds come from seeds.attach
    graph::R1Direction r1_dir = graph::R1Direction::ChildToParent;

    SplitRatios ratios;

    struct EvalRun {
        std::string split = "test";  // train | dev | test
        std::vector<int> ks{1, 3, 5, 10};
        std::vector<double> thresholds{0.0, 0.1, 0.2, 0.3, 0.4,
                                       0.5, 0.6, 0.7, 0.8, 0.9};
        double threshold = 0.5;  // acceptance cut used by enrich
    } eval;

    struct ExtractRun {
        bool constrained = true;
        long long min_count = 1;
    } extract;

    nlohmann::json echo;  // the fully merged config, echoed into the manifest
};

// Every tunable with its default value; the schema other configs are
// validated against.
nlohmann::json default_config();

// "dotted.key=value"; the value is parsed as JSON when possible and kept
// as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

// defaults <- file (optional) <- overrides, with unknown keys rejected.
nlohmann::json load_config(const std::string& path,
                           const std::vector<std::string>& overrides);

RunConfig parse_config(const nlohmann::json& config);

// FNV-1a over the canonical dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

const std::vector<std::string>& command_names();

// Runs one subcommand against the resolved config and writes its
// artifacts plus manifest.json into the output directory. Throws
// ValidationError / NumericError on failure.
void run_command(const std::string& name, const RunConfig& cfg);

// Full argv entry point: 0 ok, 2 validation failure, 3 runtime failure.
int run(int argc, const char* const* argv);

}  // namespace taxo::cli
