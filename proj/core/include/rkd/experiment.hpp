#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rkd/eval.hpp"

namespace rkd {

// Full experiment description, loadable from a flat key = value config file
// (see render_config for the canonical key set). Defaults reproduce the
// default synthetic benchmark.
struct ExperimentConfig {
    enum class Source { synthetic, csv };

    Source data_source = Source::synthetic;
    SynthConfig synth; // synth.cell_size mirrors cell_size below
    std::vector<std::string> csv_seasons;
    int csv_features = 0;
    bool csv_header = false;

    double cell_size = 20.0;
    int min_count = 10;

    int ensemble_size = 4;
    Strategy strategy = builtin_strategy(3);
    std::vector<int> hidden_layers = {32};
    double leaky_slope = 0.1;
    double dropout_rate = 0.3;
    TrainSpec pretrain_spec{.epochs = 30, .batch_size = 32, .temperature = 1.0};
    TrainSpec distill_spec{.epochs = 30, .batch_size = 32, .temperature = 10.0};
    AdamConfig adam;

    Source transfer_source = Source::synthetic;
    int transfer_size = 2000;
    std::string transfer_csv;

    std::vector<int> x_set = {1, 5, 10};
    std::vector<std::uint64_t> seeds = {1};
    std::string out_dir = "results";
    bool deterministic = true;
};

// Parses and validates a config file. Unknown or duplicate keys are rejected
// by name when strict is set. Missing keys take defaults; cross-key
// requirements (csv sources need paths) are enforced either way.
ExperimentConfig load_config(const std::string& path, bool strict = true);
ExperimentConfig parse_config_text(const std::string& text, bool strict = true);

// Canonical config rendering: every key with its resolved value, one per
// line. parse_config_text(render_config(cfg)) reproduces cfg, which makes
// the emitted run record sufficient to replay a run.
std::string render_config(const ExperimentConfig& cfg);

// Builds the labeled domain sequence for one seed (generate or ingest, then
// grid filtering) and the matching transfer set.
DomainSequence build_data(const ExperimentConfig& cfg, std::uint64_t seed);
TransferSet build_transfer(const ExperimentConfig& cfg, std::uint64_t seed);

// The engine configuration used for one seed of this experiment.
RKDConfig make_rkd_config(const ExperimentConfig& cfg, std::uint64_t seed,
                          int input_dim, int num_classes);

struct SeedResult {
    std::uint64_t seed = 0;
    AccuracyTable table;
};

// Runs every configured seed and writes results to cfg.out_dir (per-seed
// CSVs, summary, long-format CSV, manifest). Errors are rethrown with the
// offending seed named. progress, when non-null, receives one line per
// season per seed.
std::vector<SeedResult> run_experiment(const ExperimentConfig& cfg,
                                       std::ostream* progress = nullptr);

// Writes seed_<seed>.csv per entry, summary.csv (mean/stddev/count across
// seeds per (season, rule, X)), long.csv (seed,season,rule,X,accuracy) and
// manifest.json. Throws InvalidInputError for an empty result set.
void emit_results(const std::vector<SeedResult>& results,
                  const ExperimentConfig& cfg, const std::string& out_dir);

} // namespace rkd
