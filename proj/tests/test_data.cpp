#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rkd/data.hpp"
#include "rkd/error.hpp"
#include "rkd/rng.hpp"

using namespace rkd;

namespace {

// brute-force nearest-centroid classifier, the independent oracle for the
// synthetic generator's drift behavior
struct NearestCentroid {
    std::vector<std::vector<double>> means;

    static NearestCentroid fit(const SeasonDataset& train, int num_classes) {
        NearestCentroid nc;
        nc.means.assign(static_cast<std::size_t>(num_classes),
                        std::vector<double>(train.feature_dim(), 0.0));
        std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
        for (const Sample& smp : train.samples) {
            auto& mean = nc.means[static_cast<std::size_t>(*smp.class_id)];
            for (std::size_t f = 0; f < smp.features.size(); ++f) {
                mean[f] += smp.features[f];
            }
            ++counts[static_cast<std::size_t>(*smp.class_id)];
        }
        for (std::size_t c = 0; c < nc.means.size(); ++c) {
            for (double& v : nc.means[c]) v /= counts[c];
        }
        return nc;
    }

    int classify(const std::vector<double>& x) const {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < means.size(); ++c) {
            double d = 0.0;
            for (std::size_t f = 0; f < x.size(); ++f) {
                const double diff = x[f] - means[c][f];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        return best;
    }

    double accuracy(const SeasonDataset& test) const {
        int hits = 0;
        for (const Sample& smp : test.samples) {
            if (classify(smp.features) == *smp.class_id) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(test.samples.size());
    }
};

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("grid_cell basics") {
    CHECK(grid_cell({0.0, 0.0}, 20.0) == GridCell{0, 0});
    CHECK(grid_cell({35.2, 7.9}, 20.0) == GridCell{1, 0});
    CHECK(grid_cell({-0.1, 5.0}, 20.0) == GridCell{-1, 0});
    CHECK(grid_cell({-40.0, -0.001}, 20.0) == GridCell{-2, -1});
}

TEST_CASE("grid_cell rejects bad input") {
    CHECK_THROWS_AS(grid_cell({0.0, 0.0}, 0.0), InvalidInputError);
    CHECK_THROWS_AS(grid_cell({0.0, 0.0}, -1.0), InvalidInputError);
    CHECK_THROWS_AS(grid_cell({std::nan(""), 0.0}, 20.0), InvalidInputError);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(grid_cell({0.0, inf}, 20.0), InvalidInputError);
}

TEST_CASE("grid_cell translation consistency") {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform(-1000.0, 1000.0);
        const double y = rng.uniform(-1000.0, 1000.0);
        const double s = rng.uniform(0.5, 50.0);
        CHECK(grid_cell({x + s, y}, s).ix == grid_cell({x, y}, s).ix + 1);
        CHECK(grid_cell({x, y + s}, s).iy == grid_cell({x, y}, s).iy + 1);
    }
}

namespace {

SeasonDataset season_with(int index, const std::vector<std::pair<Viewpoint, int>>& spec) {
    SeasonDataset s;
    s.season_index = index;
    for (const auto& [vp, n] : spec) {
        for (int i = 0; i < n; ++i) {
            Sample smp;
            smp.viewpoint = vp;
            smp.features = {static_cast<double>(i)};
            s.samples.push_back(smp);
        }
    }
    return s;
}

} // namespace

TEST_CASE("filter_valid_classes keeps only cells present everywhere") {
    // cell A = (0,0), cell B = (1,0); B is empty in season 2
    auto s1 = season_with(1, {{{5.0, 5.0}, 5}, {{25.0, 5.0}, 5}});
    auto s2 = season_with(2, {{{6.0, 6.0}, 5}});
    const auto seq = filter_valid_classes({s1, s2}, 20.0, 1);
    REQUIRE(seq.num_classes() == 1);
    CHECK(seq.valid_classes[0] == GridCell{0, 0});
    CHECK(seq.seasons[0].samples.size() == 5);   // cell B samples dropped
    CHECK(seq.seasons[1].samples.size() == 5);
    for (const auto& season : seq.seasons) {
        for (const auto& smp : season.samples) {
            REQUIRE(smp.class_id.has_value());
            CHECK(*smp.class_id == 0);
        }
    }
}

TEST_CASE("filter_valid_classes assigns lexicographic indices") {
    auto s1 = season_with(1, {{{45.0, 5.0}, 3}, {{5.0, 25.0}, 3}, {{5.0, 5.0}, 3}});
    const auto seq = filter_valid_classes({s1}, 20.0, 1);
    REQUIRE(seq.num_classes() == 3);
    CHECK(seq.valid_classes[0] == GridCell{0, 0});
    CHECK(seq.valid_classes[1] == GridCell{0, 1});
    CHECK(seq.valid_classes[2] == GridCell{2, 0});
}

TEST_CASE("filter_valid_classes errors") {
    auto s1 = season_with(1, {{{5.0, 5.0}, 3}});
    CHECK_THROWS_AS(filter_valid_classes({s1}, 20.0, 4), InvalidInputError);
    CHECK_THROWS_AS(filter_valid_classes({}, 20.0, 1), InvalidInputError);
    CHECK_THROWS_AS(filter_valid_classes({s1}, 20.0, 0), InvalidInputError);
}

TEST_CASE("filter_valid_classes recount invariant") {
    const auto seq0 = synth_generate(SynthConfig{.seasons = 3, .classes = 5,
                                                 .features = 4, .samples_per_class = 12},
                                     99);
    auto seasons = seq0.seasons;
    for (auto& season : seasons) {
        for (auto& smp : season.samples) smp.class_id.reset();
    }
    const int min_count = 3;
    const auto seq = filter_valid_classes(seasons, 20.0, min_count);
    for (const auto& season : seq.seasons) {
        std::vector<int> counts(static_cast<std::size_t>(seq.num_classes()), 0);
        for (const auto& smp : season.samples) {
            ++counts[static_cast<std::size_t>(*smp.class_id)];
        }
        for (int c : counts) CHECK(c >= min_count);
    }
}

TEST_CASE("ingest_pose_csv parses rows") {
    const std::string path = temp_path("rkd_ingest_basic.csv");
    {
        std::ofstream out(path);
        out << "1.0,2.0,0.5,0.5\n";
        out << "3,4,-1.5,2.25,images/a.png\n";
    }
    const auto season = ingest_pose_csv(path, 2);
    REQUIRE(season.samples.size() == 2);
    CHECK(season.samples[0].viewpoint.x == 1.0);
    CHECK(season.samples[0].viewpoint.y == 2.0);
    CHECK(season.samples[0].features == std::vector<double>{0.5, 0.5});
    CHECK_FALSE(season.samples[0].class_id.has_value());
    CHECK_FALSE(season.samples[0].payload_ref.has_value());
    CHECK(season.samples[1].payload_ref == std::string("images/a.png"));
    std::remove(path.c_str());
}

TEST_CASE("ingest_pose_csv errors name the row") {
    const std::string path = temp_path("rkd_ingest_bad.csv");
    {
        std::ofstream out(path);
        out << "1.0,2.0,0.5,0.5\n";
        out << "1.0,2.0,0.5,0.5,0.5,x,y\n"; // too many fields
    }
    CHECK_THROWS_WITH_AS(ingest_pose_csv(path, 2),
                         doctest::Contains("row 2"), ParseError);
    std::remove(path.c_str());
    CHECK_THROWS_AS(ingest_pose_csv("/nonexistent/file.csv", 2), IoError);
}

TEST_CASE("ingest_pose_csv empty file and header flag") {
    const std::string path = temp_path("rkd_ingest_empty.csv");
    { std::ofstream out(path); }
    CHECK(ingest_pose_csv(path, 2).samples.empty());
    {
        std::ofstream out(path);
        out << "x,y,f1,f2\n";
        out << "0,0,1,2\n";
    }
    CHECK(ingest_pose_csv(path, 2, true).samples.size() == 1);
    // without the flag the header is a malformed row
    CHECK_THROWS_AS(ingest_pose_csv(path, 2, false), ParseError);
    std::remove(path.c_str());
}

TEST_CASE("pose csv round-trips through write + ingest") {
    const auto seq = synth_generate(SynthConfig{.seasons = 1, .classes = 3,
                                                .features = 5, .samples_per_class = 7},
                                    1234);
    const std::string path = temp_path("rkd_roundtrip.csv");
    write_pose_csv(seq.seasons[0], path);
    const auto back = ingest_pose_csv(path, 5);
    REQUIRE(back.samples.size() == seq.seasons[0].samples.size());
    for (std::size_t i = 0; i < back.samples.size(); ++i) {
        CHECK(back.samples[i].features == seq.seasons[0].samples[i].features);
        CHECK(back.samples[i].viewpoint.x == seq.seasons[0].samples[i].viewpoint.x);
        CHECK(back.samples[i].viewpoint.y == seq.seasons[0].samples[i].viewpoint.y);
    }
    std::remove(path.c_str());
}

TEST_CASE("synth_generate is deterministic") {
    const SynthConfig cfg{.seasons = 3, .classes = 4, .features = 6,
                          .samples_per_class = 5};
    const auto a = synth_generate(cfg, 42);
    const auto b = synth_generate(cfg, 42);
    REQUIRE(a.seasons.size() == b.seasons.size());
    for (std::size_t t = 0; t < a.seasons.size(); ++t) {
        REQUIRE(a.seasons[t].samples.size() == b.seasons[t].samples.size());
        for (std::size_t i = 0; i < a.seasons[t].samples.size(); ++i) {
            CHECK(a.seasons[t].samples[i].features == b.seasons[t].samples[i].features);
            CHECK(a.seasons[t].samples[i].viewpoint.x == b.seasons[t].samples[i].viewpoint.x);
        }
    }
    const auto c = synth_generate(cfg, 43);
    CHECK(a.seasons[0].samples[0].features != c.seasons[0].samples[0].features);
}

TEST_CASE("synth_generate rejects bad configs") {
    CHECK_THROWS_AS(synth_generate(SynthConfig{.classes = 1}, 1), InvalidInputError);
    CHECK_THROWS_AS(synth_generate(SynthConfig{.features = 0}, 1), InvalidInputError);
    CHECK_THROWS_AS(synth_generate(SynthConfig{.noise = 0.0}, 1), InvalidInputError);
}

TEST_CASE("synth drift cycle is exact") {
    const SynthConfig cfg{.seasons = 10, .classes = 4, .features = 8,
                          .samples_per_class = 2, .drift_mag = 0.9, .drift_period = 4};
    for (int c = 0; c < cfg.classes; ++c) {
        for (int t = 1; t + cfg.drift_period <= cfg.seasons; ++t) {
            CHECK(synth_centroid(cfg, 5, c, t) ==
                  synth_centroid(cfg, 5, c, t + cfg.drift_period));
        }
        // and seasons within one cycle genuinely differ
        CHECK(synth_centroid(cfg, 5, c, 1) != synth_centroid(cfg, 5, c, 2));
    }
}

TEST_CASE("synth grid labeling matches generator classes") {
    const SynthConfig cfg{.seasons = 2, .classes = 6, .features = 4,
                          .samples_per_class = 8};
    const auto seq = synth_generate(cfg, 7);
    REQUIRE(seq.num_classes() == 6);
    for (const auto& season : seq.seasons) {
        for (const auto& smp : season.samples) {
            const GridCell cell = grid_cell(smp.viewpoint, cfg.cell_size);
            CHECK(cell == seq.valid_classes[static_cast<std::size_t>(*smp.class_id)]);
        }
    }
    // the standard pipeline (strip labels, grid-filter) reproduces the labels
    auto seasons = seq.seasons;
    std::vector<std::vector<std::optional<int>>> original;
    for (auto& season : seasons) {
        auto& ids = original.emplace_back();
        for (auto& smp : season.samples) {
            ids.push_back(smp.class_id);
            smp.class_id.reset();
        }
    }
    const auto filtered = filter_valid_classes(seasons, cfg.cell_size, 1);
    REQUIRE(filtered.num_classes() == 6);
    for (std::size_t t = 0; t < filtered.seasons.size(); ++t) {
        REQUIRE(filtered.seasons[t].samples.size() == original[t].size());
        for (std::size_t i = 0; i < original[t].size(); ++i) {
            CHECK(filtered.seasons[t].samples[i].class_id == original[t][i]);
        }
    }
}

TEST_CASE("zero drift means no domain shift") {
    const SynthConfig cfg{.seasons = 4, .classes = 5, .features = 8,
                          .samples_per_class = 40, .drift_mag = 0.0, .noise = 0.1};
    // centroids identical across seasons
    for (int c = 0; c < cfg.classes; ++c) {
        for (int t = 2; t <= cfg.seasons; ++t) {
            CHECK(synth_centroid(cfg, 11, c, 1) == synth_centroid(cfg, 11, c, t));
        }
    }
    const auto seq = synth_generate(cfg, 11);
    const auto oracle = NearestCentroid::fit(seq.seasons[0], cfg.classes);
    std::vector<double> accs;
    for (const auto& season : seq.seasons) accs.push_back(oracle.accuracy(season));
    for (double a : accs) {
        CHECK(a >= 0.95);
        CHECK(std::abs(a - accs[0]) <= 0.05);
    }
}

TEST_CASE("cyclic drift hurts off-phase seasons, oracle check") {
    // large drift relative to inter-centroid distance; season 3 is the
    // opposite phase of season 1, season 5 the same phase
    const SynthConfig cfg{.seasons = 5, .classes = 6, .features = 8,
                          .samples_per_class = 50, .drift_mag = 1.5,
                          .drift_period = 4, .noise = 0.1};
    const auto seq = synth_generate(cfg, 3);
    const auto oracle = NearestCentroid::fit(seq.seasons[0], cfg.classes);
    const double acc_season3 = oracle.accuracy(seq.seasons[2]);
    const double acc_season5 = oracle.accuracy(seq.seasons[4]);
    CHECK(acc_season5 >= 0.95); // same phase: easy
    CHECK(acc_season3 < acc_season5);
}
