#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rkd {

// 2D metric pose of a sample. Coordinates in meters, must be finite.
struct Viewpoint {
    double x = 0.0;
    double y = 0.0;
};

// Integer grid cell index. Lexicographic (ix, iy) ordering is the canonical
// cell ordering everywhere in the library.
struct GridCell {
    long long ix = 0;
    long long iy = 0;
    auto operator<=>(const GridCell&) const = default;
};

// One pose-tagged feature vector. class_id is assigned by grid labeling and
// refers to the owning DomainSequence's valid_classes table. payload_ref is
// an opaque pointer back to the source record (image path, URI).
struct Sample {
    Viewpoint viewpoint;
    std::vector<double> features;
    std::optional<int> class_id;
    std::optional<std::string> payload_ref;
};

// All samples collected in one season.
struct SeasonDataset {
    int season_index = 1; // 1-based
    std::string label;    // free-form, e.g. "SP1"
    std::vector<Sample> samples;

    // Feature dimension shared by all samples; 0 when empty.
    std::size_t feature_dim() const {
        return samples.empty() ? 0 : samples.front().features.size();
    }
};

// An ordered sequence of seasons over a fixed class set. valid_classes maps
// contiguous class indices 0..C-1 onto grid cells; the vector is sorted by
// (ix, iy) and the position in it IS the class index.
struct DomainSequence {
    std::vector<SeasonDataset> seasons;
    std::vector<GridCell> valid_classes;
    double cell_size = 0.0;

    int num_classes() const { return static_cast<int>(valid_classes.size()); }
};

// Maps a viewpoint to its grid cell with floor semantics (round toward
// negative infinity), so cells tile the plane uniformly across zero.
// Throws InvalidInputError for non-finite coordinates or cell_size <= 0.
GridCell grid_cell(const Viewpoint& v, double cell_size);

// Keeps exactly the cells with >= min_count samples in every season, assigns
// contiguous class indices in lexicographic (ix, iy) order, stamps class_id
// on every retained sample and drops samples falling in invalid cells.
// Throws InvalidInputError when no cell survives or inputs are malformed.
DomainSequence filter_valid_classes(std::vector<SeasonDataset> seasons,
                                    double cell_size, int min_count);

// Reads rows "x,y,f1,...,fF[,payload_ref]" into a season (class_id unset,
// row order preserved). When has_header is set the first line is skipped.
// Throws IoError for unreadable files, ParseError naming the failing row.
SeasonDataset ingest_pose_csv(const std::string& path, int feature_dim,
                              bool has_header = false);

// Writes samples back out in the same row format (shortest round-trip float
// representation, LF line endings). Used by the gen-data tool.
void write_pose_csv(const SeasonDataset& season, const std::string& path);

// Synthetic sequential-multi-domain generator. Every class gets a seeded
// base centroid; season t displaces it along a per-class circle of radius
// drift_mag, advancing 1/drift_period of a turn per season, so seasons t and
// t + drift_period share identical class-conditional distributions. Samples
// add isotropic gaussian noise and viewpoints are jittered inside cell
// (class, 0) so grid labeling reproduces the class exactly.
struct SynthConfig {
    int seasons = 8;
    int classes = 16;
    int features = 16;
    int samples_per_class = 30; // per class per season
    double drift_mag = 0.8;     // centroid displacement radius
    int drift_period = 4;       // seasons per drift cycle
    double noise = 0.12;        // sample noise sigma
    double centroid_scale = 1.0;
    double cell_size = 20.0;
};

// Deterministic for fixed (config, seed). Throws InvalidInputError when the
// config is out of contract (classes < 2, features < 1, ...).
DomainSequence synth_generate(const SynthConfig& config, std::uint64_t seed);

// Class-conditional centroid of class c at a given season (1-based), before
// sampling noise. Exposed so tests can check the drift cycle exactly.
std::vector<double> synth_centroid(const SynthConfig& config, std::uint64_t seed,
                                   int class_id, int season);

// Centroid at an arbitrary (possibly fractional) position along the drift
// cycle; cycle_pos = 0 matches season 1.
std::vector<double> synth_centroid_at_phase(const SynthConfig& config,
                                            std::uint64_t seed, int class_id,
                                            double cycle_pos);

} // namespace rkd
