// rkd command line: runs and validates experiments, prints the built-in TSA
// strategies, and emits synthetic datasets as CSV.

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "rkd/error.hpp"
#include "rkd/experiment.hpp"
#include "rkd/version.hpp"

namespace {

// exit codes: 0 ok, 2 invalid input/config, 3 parse error, 4 I/O error,
// 1 anything else
int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const rkd::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 3;
    } catch (const rkd::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const rkd::InvalidInputError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

// RKD_OUT_DIR overrides the configured output directory (and nothing else)
void apply_out_dir_override(rkd::ExperimentConfig& cfg) {
    if (const char* env = std::getenv("RKD_OUT_DIR"); env != nullptr && *env != '\0') {
        cfg.out_dir = env;
    }
}

int cmd_run(const std::string& config_path) {
    rkd::ExperimentConfig cfg = rkd::load_config(config_path);
    apply_out_dir_override(cfg);
    rkd::run_experiment(cfg, &std::cerr);
    std::cout << "results written to " << cfg.out_dir << "\n";
    return 0;
}

int cmd_validate(const std::string& config_path) {
    const rkd::ExperimentConfig cfg = rkd::load_config(config_path);
    std::cout << "config ok\n" << rkd::render_config(cfg);
    return 0;
}

int cmd_strategies() {
    for (int n = 1; n <= rkd::kNumBuiltinStrategies; ++n) {
        std::cout << "#" << n << "\t" << rkd::render_strategy(rkd::builtin_strategy(n))
                  << "\n";
    }
    return 0;
}

int cmd_gen_data(const std::string& config_path) {
    rkd::ExperimentConfig cfg = rkd::load_config(config_path);
    apply_out_dir_override(cfg);
    if (cfg.data_source != rkd::ExperimentConfig::Source::synthetic) {
        throw rkd::InvalidInputError("gen-data: config must use data.source=synthetic");
    }
    const std::uint64_t seed = cfg.seeds.front();
    const rkd::DomainSequence seq = rkd::synth_generate(cfg.synth, seed);

    namespace fs = std::filesystem;
    const std::string dir = cfg.out_dir + "/data";
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw rkd::IoError("gen-data: cannot create '" + dir + "': " + ec.message());

    for (const rkd::SeasonDataset& season : seq.seasons) {
        const std::string path =
            dir + "/season_" + std::to_string(season.season_index) + ".csv";
        rkd::write_pose_csv(season, path);
        std::cout << path << " (" << season.samples.size() << " samples)\n";
    }

    // transfer corpus with placeholder poses, usable via transfer.source=csv
    const rkd::TransferSet transfer =
        rkd::synth_transfer_set(cfg.synth, seed, cfg.transfer_size);
    rkd::SeasonDataset as_season;
    for (const auto& features : transfer.features) {
        rkd::Sample smp;
        smp.features = features;
        as_season.samples.push_back(std::move(smp));
    }
    const std::string tpath = dir + "/transfer.csv";
    rkd::write_pose_csv(as_season, tpath);
    std::cout << tpath << " (" << transfer.size() << " samples)\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"recursive multi-teacher knowledge distillation experiments"};
    app.set_version_flag("--version", rkd::kVersion);
    app.require_subcommand(1);

    std::string config_path;

    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("config", config_path, "config file")->required();

    auto* validate = app.add_subcommand("validate", "check a config and print it resolved");
    validate->add_option("config", config_path, "config file")->required();

    app.add_subcommand("strategies", "list the built-in TSA strategies");

    auto* gen = app.add_subcommand("gen-data", "write synthetic season CSVs");
    gen->add_option("config", config_path, "config file")->required();

    CLI11_PARSE(app, argc, argv);

    return run_guarded([&]() -> int {
        if (run->parsed()) return cmd_run(config_path);
        if (validate->parsed()) return cmd_validate(config_path);
        if (gen->parsed()) return cmd_gen_data(config_path);
        return cmd_strategies();
    });
}
