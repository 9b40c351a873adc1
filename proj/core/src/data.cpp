#include "rkd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include "rkd/error.hpp"
#include "rkd/rng.hpp"

namespace rkd {

GridCell grid_cell(const Viewpoint& v, double cell_size) {
    if (!(cell_size > 0.0)) {
        throw InvalidInputError("grid_cell: cell_size must be > 0, got " +
                                std::to_string(cell_size));
    }
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
        throw InvalidInputError("grid_cell: non-finite viewpoint coordinates");
    }
    return GridCell{static_cast<long long>(std::floor(v.x / cell_size)),
                    static_cast<long long>(std::floor(v.y / cell_size))};
}

DomainSequence filter_valid_classes(std::vector<SeasonDataset> seasons,
                                    double cell_size, int min_count) {
    if (seasons.empty()) {
        throw InvalidInputError("filter_valid_classes: need at least one season");
    }
    if (min_count < 1) {
        throw InvalidInputError("filter_valid_classes: min_count must be >= 1");
    }

    // per-cell sample count per season; std::map keeps cells in (ix, iy) order
    std::map<GridCell, std::vector<int>> counts;
    for (std::size_t s = 0; s < seasons.size(); ++s) {
        for (const Sample& smp : seasons[s].samples) {
            auto& per_season = counts[grid_cell(smp.viewpoint, cell_size)];
            per_season.resize(seasons.size(), 0);
            ++per_season[s];
        }
    }

    std::vector<GridCell> valid;
    for (const auto& [cell, per_season] : counts) {
        if (per_season.size() < seasons.size()) continue; // absent somewhere
        if (std::all_of(per_season.begin(), per_season.end(),
                        [min_count](int n) { return n >= min_count; })) {
            valid.push_back(cell); // map iteration order == lexicographic
        }
    }
    if (valid.empty()) {
        throw InvalidInputError(
            "filter_valid_classes: no cell has >= " + std::to_string(min_count) +
            " samples in every season");
    }

    std::map<GridCell, int> class_of;
    for (std::size_t i = 0; i < valid.size(); ++i) {
        class_of[valid[i]] = static_cast<int>(i);
    }

    DomainSequence seq;
    seq.cell_size = cell_size;
    seq.valid_classes = std::move(valid);
    seq.seasons = std::move(seasons);
    for (SeasonDataset& season : seq.seasons) {
        std::vector<Sample> kept;
        kept.reserve(season.samples.size());
        for (Sample& smp : season.samples) {
            auto it = class_of.find(grid_cell(smp.viewpoint, cell_size));
            if (it == class_of.end()) continue;
            smp.class_id = it->second;
            kept.push_back(std::move(smp));
        }
        season.samples = std::move(kept);
    }
    return seq;
}

namespace {

double parse_field_double(std::string_view field, std::size_t row, std::size_t col) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    // tolerate surrounding spaces
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw ParseError("row " + std::to_string(row) + ", column " +
                         std::to_string(col + 1) + ": not a number: '" +
                         std::string(field) + "'");
    }
    return value;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

} // namespace

SeasonDataset ingest_pose_csv(const std::string& path, int feature_dim,
                              bool has_header) {
    if (feature_dim < 1) {
        throw InvalidInputError("ingest_pose_csv: feature_dim must be >= 1");
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("ingest_pose_csv: cannot open '" + path + "'");
    }

    SeasonDataset season;
    const auto slash = path.find_last_of("/\\");
    season.label = slash == std::string::npos ? path : path.substr(slash + 1);

    const std::size_t base_fields = 2 + static_cast<std::size_t>(feature_dim);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (row == 1 && has_header) continue;
        if (line.empty()) continue;

        const auto fields = split_csv_line(line);
        const bool with_payload = fields.size() == base_fields + 1;
        if (fields.size() != base_fields && !with_payload) {
            throw ParseError("row " + std::to_string(row) + ": expected " +
                             std::to_string(base_fields) + " or " +
                             std::to_string(base_fields + 1) + " fields, got " +
                             std::to_string(fields.size()));
        }

        Sample smp;
        smp.viewpoint.x = parse_field_double(fields[0], row, 0);
        smp.viewpoint.y = parse_field_double(fields[1], row, 1);
        smp.features.resize(static_cast<std::size_t>(feature_dim));
        for (int f = 0; f < feature_dim; ++f) {
            smp.features[static_cast<std::size_t>(f)] =
                parse_field_double(fields[2 + static_cast<std::size_t>(f)], row,
                                   2 + static_cast<std::size_t>(f));
        }
        if (with_payload) {
            smp.payload_ref = std::string(fields.back());
        }
        season.samples.push_back(std::move(smp));
    }
    return season;
}

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    out.append(buf, ptr);
}

} // namespace

void write_pose_csv(const SeasonDataset& season, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("write_pose_csv: cannot open '" + path + "' for writing");
    }
    std::string line;
    for (const Sample& smp : season.samples) {
        line.clear();
        append_double(line, smp.viewpoint.x);
        line.push_back(',');
        append_double(line, smp.viewpoint.y);
        for (double f : smp.features) {
            line.push_back(',');
            append_double(line, f);
        }
        if (smp.payload_ref) {
            line.push_back(',');
            line.append(*smp.payload_ref);
        }
        line.push_back('\n');
        out.write(line.data(), static_cast<std::streamsize>(line.size()));
    }
    if (!out) {
        throw IoError("write_pose_csv: write failed for '" + path + "'");
    }
}

namespace {

void check_synth_config(const SynthConfig& c) {
    if (c.classes < 2) throw InvalidInputError("synth: classes must be >= 2");
    if (c.features < 1) throw InvalidInputError("synth: features must be >= 1");
    if (c.seasons < 1) throw InvalidInputError("synth: seasons must be >= 1");
    if (c.samples_per_class < 1) throw InvalidInputError("synth: samples_per_class must be >= 1");
    if (c.drift_mag < 0.0) throw InvalidInputError("synth: drift_mag must be >= 0");
    if (c.drift_period < 1) throw InvalidInputError("synth: drift_period must be >= 1");
    if (!(c.noise > 0.0)) throw InvalidInputError("synth: noise must be > 0");
    if (!(c.cell_size > 0.0)) throw InvalidInputError("synth: cell_size must be > 0");
}

std::vector<double> random_unit_vector(Rng& rng, int dim) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    double norm2 = 0.0;
    do {
        norm2 = 0.0;
        for (double& x : v) {
            x = rng.normal();
            norm2 += x * x;
        }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
}

struct ClassGeometry {
    std::vector<double> base;   // centroid at cycle position 0
    std::vector<double> axis_a; // orthonormal drift plane
    std::vector<double> axis_b;
};

// Geometry derives from (seed, class) only, so centroids are independent of
// the number of seasons or samples requested.
ClassGeometry class_geometry(const SynthConfig& c, std::uint64_t seed, int class_id) {
    Rng rng(mix_seed({seed, 0x67656f6dULL, static_cast<std::uint64_t>(class_id)}));
    ClassGeometry g;
    g.base = random_unit_vector(rng, c.features);
    for (double& x : g.base) x *= c.centroid_scale;

    g.axis_a = random_unit_vector(rng, c.features);
    if (c.features == 1) {
        // no orthogonal direction in 1D; drift degenerates to the line
        g.axis_b.assign(1, 0.0);
        return g;
    }
    // Gram-Schmidt a second axis so the drift circle has radius exactly drift_mag
    std::vector<double> b;
    double norm2 = 0.0;
    do {
        b = random_unit_vector(rng, c.features);
        double dot = 0.0;
        for (int i = 0; i < c.features; ++i) {
            dot += b[static_cast<std::size_t>(i)] * g.axis_a[static_cast<std::size_t>(i)];
        }
        norm2 = 0.0;
        for (int i = 0; i < c.features; ++i) {
            auto idx = static_cast<std::size_t>(i);
            b[idx] -= dot * g.axis_a[idx];
            norm2 += b[idx] * b[idx];
        }
    } while (norm2 < 1e-12);
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : b) x *= inv;
    g.axis_b = std::move(b);
    return g;
}

std::vector<double> centroid_at(const SynthConfig& c, const ClassGeometry& g,
                                double cycle_pos) {
    const double angle = 2.0 * M_PI * cycle_pos / static_cast<double>(c.drift_period);
    const double ca = std::cos(angle);
    const double sb = std::sin(angle);
    std::vector<double> out(g.base);
    for (int i = 0; i < c.features; ++i) {
        auto idx = static_cast<std::size_t>(i);
        out[idx] += c.drift_mag * (ca * g.axis_a[idx] + sb * g.axis_b[idx]);
    }
    return out;
}

} // namespace

std::vector<double> synth_centroid_at_phase(const SynthConfig& config,
                                            std::uint64_t seed, int class_id,
                                            double cycle_pos) {
    check_synth_config(config);
    if (class_id < 0 || class_id >= config.classes) {
        throw InvalidInputError("synth_centroid: class_id out of range");
    }
    return centroid_at(config, class_geometry(config, seed, class_id), cycle_pos);
}

std::vector<double> synth_centroid(const SynthConfig& config, std::uint64_t seed,
                                   int class_id, int season) {
    if (season < 1) {
        throw InvalidInputError("synth_centroid: season must be >= 1");
    }
    // season t sits at integer cycle position (t - 1) mod drift_period
    const int pos = (season - 1) % config.drift_period;
    return synth_centroid_at_phase(config, seed, class_id, static_cast<double>(pos));
}

DomainSequence synth_generate(const SynthConfig& config, std::uint64_t seed) {
    check_synth_config(config);

    std::vector<ClassGeometry> geometry;
    geometry.reserve(static_cast<std::size_t>(config.classes));
    for (int c = 0; c < config.classes; ++c) {
        geometry.push_back(class_geometry(config, seed, c));
    }

    DomainSequence seq;
    seq.cell_size = config.cell_size;
    for (int c = 0; c < config.classes; ++c) {
        // class c occupies cell (c, 0); lexicographic order == class order
        seq.valid_classes.push_back(GridCell{c, 0});
    }

    for (int t = 1; t <= config.seasons; ++t) {
        SeasonDataset season;
        season.season_index = t;
        season.label = "S" + std::to_string(t);
        for (int c = 0; c < config.classes; ++c) {
            const auto centroid =
                centroid_at(config, geometry[static_cast<std::size_t>(c)],
                            static_cast<double>((t - 1) % config.drift_period));
            Rng rng(mix_seed({seed, 0x73616d70ULL, static_cast<std::uint64_t>(t),
                              static_cast<std::uint64_t>(c)}));
            for (int k = 0; k < config.samples_per_class; ++k) {
                Sample smp;
                // jitter inside the class cell, away from the boundary
                smp.viewpoint.x = (static_cast<double>(c) + 0.1 + 0.8 * rng.uniform()) *
                                  config.cell_size;
                smp.viewpoint.y = (0.1 + 0.8 * rng.uniform()) * config.cell_size;
                smp.features.resize(static_cast<std::size_t>(config.features));
                for (int f = 0; f < config.features; ++f) {
                    smp.features[static_cast<std::size_t>(f)] =
                        centroid[static_cast<std::size_t>(f)] + config.noise * rng.normal();
                }
                smp.class_id = c;
                season.samples.push_back(std::move(smp));
            }
        }
        seq.seasons.push_back(std::move(season));
    }
    return seq;
}

} // namespace rkd
