#include "rkd/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rkd/error.hpp"
#include "rkd/version.hpp"

namespace rkd {

namespace {

// ---------------------------------------------------------------------------
// Config file: one `key = value` per line, full-line # comments, flat dotted
// keys. Values never contain '=' so no quoting is needed.
// ---------------------------------------------------------------------------

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped.front() == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config line " + std::to_string(lineno) +
                             ": expected 'key = value', got '" + stripped + "'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) {
            throw ParseError("config line " + std::to_string(lineno) + ": empty key");
        }
        if (kv.count(key)) {
            throw ParseError("config: duplicate key '" + key + "'");
        }
        kv[key] = value;
    }
    return kv;
}

class ConfigReader {
public:
    explicit ConfigReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

    bool has(const std::string& key) {
        seen_.insert(key);
        return kv_.count(key) > 0;
    }

    std::string str(const std::string& key, const std::string& fallback) {
        seen_.insert(key);
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    long long integer(const std::string& key, long long fallback) {
        seen_.insert(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        long long v = 0;
        if (!parse_ll(it->second, v)) {
            throw ParseError("config key '" + key + "': expected integer, got '" +
                             it->second + "'");
        }
        return v;
    }

    double real(const std::string& key, double fallback) {
        seen_.insert(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        double v = 0.0;
        auto [p, ec] =
            std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
        if (ec != std::errc() || p != it->second.data() + it->second.size()) {
            throw ParseError("config key '" + key + "': expected number, got '" +
                             it->second + "'");
        }
        return v;
    }

    bool boolean(const std::string& key, bool fallback) {
        seen_.insert(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        if (it->second == "true") return true;
        if (it->second == "false") return false;
        throw ParseError("config key '" + key + "': expected true or false, got '" +
                         it->second + "'");
    }

    template <typename T>
    std::vector<T> int_list(const std::string& key, std::vector<T> fallback) {
        seen_.insert(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        std::vector<T> out;
        for (const std::string& item : split(it->second, ',')) {
            long long v = 0;
            if (!parse_ll(trim(item), v)) {
                throw ParseError("config key '" + key + "': expected integer list, got '" +
                                 it->second + "'");
            }
            out.push_back(static_cast<T>(v));
        }
        return out;
    }

    std::vector<std::string> str_list(const std::string& key) {
        seen_.insert(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return {};
        std::vector<std::string> out;
        for (const std::string& item : split(it->second, ';')) {
            const std::string t = trim(item);
            if (!t.empty()) out.push_back(t);
        }
        return out;
    }

    void reject_unknown() const {
        for (const auto& [key, value] : kv_) {
            if (!seen_.count(key)) {
                throw ParseError("config: unknown key '" + key + "'");
            }
        }
    }

private:
    static bool parse_ll(const std::string& s, long long& v) {
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        return ec == std::errc() && p == s.data() + s.size();
    }

    static std::vector<std::string> split(const std::string& s, char sep) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            const std::size_t pos = s.find(sep, start);
            if (pos == std::string::npos) {
                out.push_back(s.substr(start));
                return out;
            }
            out.push_back(s.substr(start, pos - start));
            start = pos + 1;
        }
    }

    std::map<std::string, std::string> kv_;
    std::set<std::string> seen_;
};

ExperimentConfig::Source parse_source(const std::string& key, const std::string& v) {
    if (v == "synthetic") return ExperimentConfig::Source::synthetic;
    if (v == "csv") return ExperimentConfig::Source::csv;
    throw ParseError("config key '" + key + "': expected synthetic or csv, got '" + v +
                     "'");
}

Strategy parse_strategy_value(const std::string& v) {
    if (!v.empty() && v.front() == '#') {
        int n = 0;
        auto [p, ec] = std::from_chars(v.data() + 1, v.data() + v.size(), n);
        if (ec != std::errc() || p != v.data() + v.size()) {
            throw ParseError("config key 'rkd.strategy': bad builtin reference '" + v +
                             "'");
        }
        return builtin_strategy(n);
    }
    return parse_strategy(v);
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.data_source == ExperimentConfig::Source::csv) {
        if (cfg.csv_seasons.size() < 2) {
            throw InvalidInputError(
                "config: data.source=csv requires csv.seasons with >= 2 paths");
        }
        if (cfg.csv_features < 1) {
            throw InvalidInputError("config: data.source=csv requires csv.features >= 1");
        }
    } else if (cfg.synth.seasons < 2) {
        throw InvalidInputError("config: synth.seasons must be >= 2");
    }
    if (cfg.transfer_source == ExperimentConfig::Source::csv && cfg.transfer_csv.empty()) {
        throw InvalidInputError("config: transfer.source=csv requires transfer.csv");
    }
    if (cfg.seeds.empty()) {
        throw InvalidInputError("config: run.seeds must name at least one seed");
    }
    if (cfg.x_set.empty()) {
        throw InvalidInputError("config: eval.top_x must name at least one X");
    }
    for (int x : cfg.x_set) {
        if (x < 1) throw InvalidInputError("config: eval.top_x values must be >= 1");
    }
    if (cfg.ensemble_size < 1) {
        throw InvalidInputError("config: rkd.ensemble_size must be >= 1");
    }
    if (cfg.strategy.total_students() != cfg.ensemble_size) {
        throw InvalidInputError("config: strategy covers " +
                                std::to_string(cfg.strategy.total_students()) +
                                " students but rkd.ensemble_size is " +
                                std::to_string(cfg.ensemble_size));
    }
    if (cfg.min_count < 1) {
        throw InvalidInputError("config: grid.min_count must be >= 1");
    }
    if (!(cfg.cell_size > 0.0)) {
        throw InvalidInputError("config: grid.cell_size must be > 0");
    }
    if (cfg.transfer_size < 1) {
        throw InvalidInputError("config: transfer.size must be >= 1");
    }
}

} // namespace

ExperimentConfig parse_config_text(const std::string& text, bool strict) {
    ConfigReader r(parse_key_values(text));
    ExperimentConfig cfg;

    cfg.data_source = parse_source("data.source", r.str("data.source", "synthetic"));
    cfg.synth.seasons = static_cast<int>(r.integer("synth.seasons", cfg.synth.seasons));
    cfg.synth.classes = static_cast<int>(r.integer("synth.classes", cfg.synth.classes));
    cfg.synth.features = static_cast<int>(r.integer("synth.features", cfg.synth.features));
    cfg.synth.samples_per_class =
        static_cast<int>(r.integer("synth.samples_per_class", cfg.synth.samples_per_class));
    cfg.synth.drift_mag = r.real("synth.drift_mag", cfg.synth.drift_mag);
    cfg.synth.drift_period =
        static_cast<int>(r.integer("synth.drift_period", cfg.synth.drift_period));
    cfg.synth.noise = r.real("synth.noise", cfg.synth.noise);
    cfg.synth.centroid_scale = r.real("synth.centroid_scale", cfg.synth.centroid_scale);

    cfg.csv_seasons = r.str_list("csv.seasons");
    cfg.csv_features = static_cast<int>(r.integer("csv.features", cfg.csv_features));
    cfg.csv_header = r.boolean("csv.header", cfg.csv_header);

    cfg.cell_size = r.real("grid.cell_size", cfg.cell_size);
    cfg.min_count = static_cast<int>(r.integer("grid.min_count", cfg.min_count));
    cfg.synth.cell_size = cfg.cell_size;

    cfg.ensemble_size = static_cast<int>(r.integer("rkd.ensemble_size", cfg.ensemble_size));
    if (r.has("rkd.strategy")) {
        cfg.strategy = parse_strategy_value(r.str("rkd.strategy", ""));
    }

    cfg.hidden_layers = r.int_list<int>("classifier.hidden", cfg.hidden_layers);
    cfg.leaky_slope = r.real("classifier.leaky_slope", cfg.leaky_slope);
    cfg.dropout_rate = r.real("classifier.dropout", cfg.dropout_rate);

    cfg.pretrain_spec.epochs =
        static_cast<int>(r.integer("pretrain.epochs", cfg.pretrain_spec.epochs));
    cfg.pretrain_spec.batch_size =
        static_cast<int>(r.integer("pretrain.batch", cfg.pretrain_spec.batch_size));
    cfg.distill_spec.epochs =
        static_cast<int>(r.integer("distill.epochs", cfg.distill_spec.epochs));
    cfg.distill_spec.batch_size =
        static_cast<int>(r.integer("distill.batch", cfg.distill_spec.batch_size));
    cfg.distill_spec.temperature =
        r.real("distill.temperature", cfg.distill_spec.temperature);
    cfg.adam.lr = r.real("adam.lr", cfg.adam.lr);

    cfg.transfer_source =
        parse_source("transfer.source", r.str("transfer.source", "synthetic"));
    cfg.transfer_size = static_cast<int>(r.integer("transfer.size", cfg.transfer_size));
    cfg.transfer_csv = r.str("transfer.csv", cfg.transfer_csv);

    cfg.x_set = r.int_list<int>("eval.top_x", cfg.x_set);
    cfg.seeds = r.int_list<std::uint64_t>("run.seeds", cfg.seeds);
    cfg.out_dir = r.str("run.out_dir", cfg.out_dir);
    cfg.deterministic = r.boolean("run.deterministic", cfg.deterministic);

    if (strict) r.reject_unknown();
    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path, bool strict) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_config: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return parse_config_text(text, strict);
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

template <typename T>
std::string join(const std::vector<T>& values, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) out += sep;
        if constexpr (std::is_same_v<T, std::string>) {
            out += values[i];
        } else {
            out += std::to_string(values[i]);
        }
    }
    return out;
}

const char* source_name(ExperimentConfig::Source s) {
    return s == ExperimentConfig::Source::synthetic ? "synthetic" : "csv";
}

} // namespace

std::string render_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "data.source = " << source_name(cfg.data_source) << "\n";
    out << "synth.seasons = " << cfg.synth.seasons << "\n";
    out << "synth.classes = " << cfg.synth.classes << "\n";
    out << "synth.features = " << cfg.synth.features << "\n";
    out << "synth.samples_per_class = " << cfg.synth.samples_per_class << "\n";
    out << "synth.drift_mag = " << fmt_double(cfg.synth.drift_mag) << "\n";
    out << "synth.drift_period = " << cfg.synth.drift_period << "\n";
    out << "synth.noise = " << fmt_double(cfg.synth.noise) << "\n";
    out << "synth.centroid_scale = " << fmt_double(cfg.synth.centroid_scale) << "\n";
    if (!cfg.csv_seasons.empty()) {
        out << "csv.seasons = " << join(cfg.csv_seasons, ";") << "\n";
        out << "csv.features = " << cfg.csv_features << "\n";
        out << "csv.header = " << (cfg.csv_header ? "true" : "false") << "\n";
    }
    out << "grid.cell_size = " << fmt_double(cfg.cell_size) << "\n";
    out << "grid.min_count = " << cfg.min_count << "\n";
    out << "rkd.ensemble_size = " << cfg.ensemble_size << "\n";
    out << "rkd.strategy = " << render_strategy(cfg.strategy) << "\n";
    out << "classifier.hidden = " << join(cfg.hidden_layers, ",") << "\n";
    out << "classifier.leaky_slope = " << fmt_double(cfg.leaky_slope) << "\n";
    out << "classifier.dropout = " << fmt_double(cfg.dropout_rate) << "\n";
    out << "pretrain.epochs = " << cfg.pretrain_spec.epochs << "\n";
    out << "pretrain.batch = " << cfg.pretrain_spec.batch_size << "\n";
    out << "distill.epochs = " << cfg.distill_spec.epochs << "\n";
    out << "distill.batch = " << cfg.distill_spec.batch_size << "\n";
    out << "distill.temperature = " << fmt_double(cfg.distill_spec.temperature) << "\n";
    out << "adam.lr = " << fmt_double(cfg.adam.lr) << "\n";
    out << "transfer.source = " << source_name(cfg.transfer_source) << "\n";
    out << "transfer.size = " << cfg.transfer_size << "\n";
    if (!cfg.transfer_csv.empty()) {
        out << "transfer.csv = " << cfg.transfer_csv << "\n";
    }
    out << "eval.top_x = " << join(cfg.x_set, ",") << "\n";
    out << "run.seeds = " << join(cfg.seeds, ",") << "\n";
    out << "run.out_dir = " << cfg.out_dir << "\n";
    out << "run.deterministic = " << (cfg.deterministic ? "true" : "false") << "\n";
    return out.str();
}

DomainSequence build_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    std::vector<SeasonDataset> seasons;
    if (cfg.data_source == ExperimentConfig::Source::synthetic) {
        DomainSequence generated = synth_generate(cfg.synth, seed);
        seasons = std::move(generated.seasons);
        // strip generator labels; grid filtering below re-derives them
        for (auto& season : seasons) {
            for (auto& smp : season.samples) smp.class_id.reset();
        }
    } else {
        for (std::size_t i = 0; i < cfg.csv_seasons.size(); ++i) {
            SeasonDataset season =
                ingest_pose_csv(cfg.csv_seasons[i], cfg.csv_features, cfg.csv_header);
            season.season_index = static_cast<int>(i) + 1;
            seasons.push_back(std::move(season));
        }
    }
    return filter_valid_classes(std::move(seasons), cfg.cell_size, cfg.min_count);
}

TransferSet build_transfer(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.transfer_source == ExperimentConfig::Source::synthetic) {
        return synth_transfer_set(cfg.synth, seed, cfg.transfer_size);
    }
    const int dim = cfg.data_source == ExperimentConfig::Source::csv
                        ? cfg.csv_features
                        : cfg.synth.features;
    SeasonDataset season = ingest_pose_csv(cfg.transfer_csv, dim, cfg.csv_header);
    TransferSet ts;
    ts.features.reserve(season.samples.size());
    for (auto& smp : season.samples) ts.features.push_back(std::move(smp.features));
    return ts;
}

RKDConfig make_rkd_config(const ExperimentConfig& cfg, std::uint64_t seed,
                          int input_dim, int num_classes) {
    RKDConfig rc;
    rc.ensemble_size = cfg.ensemble_size;
    rc.strategy = cfg.strategy;
    rc.classifier.input_dim = input_dim;
    rc.classifier.hidden_layers = cfg.hidden_layers;
    rc.classifier.num_classes = num_classes;
    rc.classifier.leaky_slope = cfg.leaky_slope;
    rc.classifier.dropout_rate = cfg.dropout_rate;
    rc.pretrain_spec = cfg.pretrain_spec;
    rc.distill_spec = cfg.distill_spec;
    rc.adam = cfg.adam;
    rc.master_seed = seed;
    rc.deterministic = cfg.deterministic;
    return rc;
}

std::vector<SeedResult> run_experiment(const ExperimentConfig& cfg,
                                       std::ostream* progress) {
    std::vector<SeedResult> results;
    for (std::uint64_t seed : cfg.seeds) {
        try {
            if (progress) *progress << "seed " << seed << ":\n" << std::flush;
            const DomainSequence data = build_data(cfg, seed);
            RKDConfig rc = make_rkd_config(cfg, seed,
                                           static_cast<int>(data.seasons.front().feature_dim()),
                                           data.num_classes());
            rc.transfer = build_transfer(cfg, seed);
            SeedResult res;
            res.seed = seed;
            res.table = evaluate_sequence(data, rc, cfg.x_set, progress);
            results.push_back(std::move(res));
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw Error("seed " + std::to_string(seed) + ": " + e.what());
        }
    }
    emit_results(results, cfg, cfg.out_dir);
    return results;
}

namespace {

struct SummaryKey {
    int season;
    std::string rule;
    int x;
    bool operator<(const SummaryKey& o) const {
        if (season != o.season) return season < o.season;
        if (rule != o.rule) return rule < o.rule;
        return x < o.x;
    }
};

} // namespace

void emit_results(const std::vector<SeedResult>& results,
                  const ExperimentConfig& cfg, const std::string& out_dir) {
    if (results.empty()) {
        throw InvalidInputError("emit_results: no result tables");
    }
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("emit_results: cannot create '" + out_dir + "': " + ec.message());
    }

    auto open = [&](const std::string& name) {
        std::ofstream out(out_dir + "/" + name, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("emit_results: cannot write '" + out_dir + "/" + name + "'");
        return out;
    };

    for (const SeedResult& res : results) {
        auto out = open("seed_" + std::to_string(res.seed) + ".csv");
        write_accuracy_csv(res.table, out);
    }

    // long format, one row per (seed, season, rule, X)
    {
        auto out = open("long.csv");
        out << "seed,season,rule,X,accuracy\n";
        for (const SeedResult& res : results) {
            for (const AccuracyRow& row : res.table.rows) {
                out << res.seed << ',' << row.season << ',' << to_string(row.rule) << ','
                    << row.x << ',' << fmt_double(row.accuracy) << "\n";
            }
        }
    }

    // mean / population stddev across seeds
    {
        std::map<SummaryKey, std::vector<double>> groups;
        for (const SeedResult& res : results) {
            for (const AccuracyRow& row : res.table.rows) {
                groups[SummaryKey{row.season, to_string(row.rule), row.x}].push_back(
                    row.accuracy);
            }
        }
        auto out = open("summary.csv");
        out << "season,rule,X,mean,stddev,count\n";
        for (const auto& [key, values] : groups) {
            double mean = 0.0;
            for (double v : values) mean += v;
            mean /= static_cast<double>(values.size());
            double var = 0.0;
            for (double v : values) var += (v - mean) * (v - mean);
            var /= static_cast<double>(values.size());
            out << key.season << ',' << key.rule << ',' << key.x << ','
                << fmt_double(mean) << ',' << fmt_double(std::sqrt(var)) << ','
                << values.size() << "\n";
        }
    }

    {
        nlohmann::json manifest;
        manifest["version"] = kVersion;
        manifest["strategy"] = render_strategy(cfg.strategy);
        manifest["seeds"] = cfg.seeds;
        manifest["config"] = render_config(cfg);
        auto out = open("manifest.json");
        out << manifest.dump(2) << "\n";
    }
}

} // namespace rkd
