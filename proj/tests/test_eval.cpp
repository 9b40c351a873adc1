#include <doctest.h>

#include <cmath>
#include <sstream>
#include <tuple>

#include "rkd/error.hpp"
#include "rkd/eval.hpp"

using namespace rkd;

namespace {

// member with constant output: zero weights, biases = log of the desired
// softmax probabilities
ClassifierParams constant_member(const std::vector<double>& probs) {
    ClassifierParams p;
    p.config.input_dim = 2;
    p.config.num_classes = static_cast<int>(probs.size());
    p.config.dropout_rate = 0.0;
    p.weights.emplace_back(2 * probs.size(), 0.0);
    std::vector<double> biases;
    for (double q : probs) biases.push_back(std::log(q));
    p.biases.push_back(std::move(biases));
    return p;
}

EnsembleState make_ensemble(std::vector<ClassifierParams> members, int season = 1) {
    EnsembleState e;
    e.season_index = season;
    for (auto& m : members) {
        e.members.push_back(std::move(m));
        e.provenance.push_back({});
    }
    return e;
}

const std::vector<double> kInput = {0.0, 0.0};

} // namespace

TEST_CASE("rank_averaging averages member probabilities") {
    auto e = make_ensemble({constant_member({0.7, 0.3}), constant_member({0.1, 0.9})});
    const auto list = rank_averaging(e, kInput);
    REQUIRE(list.size() == 2);
    CHECK(list[0].class_id == 1);
    CHECK(list[0].score == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(list[1].class_id == 0);
    CHECK(list[1].score == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("rank_merge_sort keeps each class at its best confidence") {
    // member A: class0@0.9 class1@0.1; member B: class1@0.8 class0@0.2
    auto e = make_ensemble({constant_member({0.9, 0.1}), constant_member({0.2, 0.8})});
    const auto list = rank_merge_sort(e, kInput);
    REQUIRE(list.size() == 2);
    CHECK(list[0].class_id == 0);
    CHECK(list[0].score == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(list[1].class_id == 1);
    CHECK(list[1].score == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("single-member ensembles rank identically under both rules") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        ClassifierConfig cfg;
        cfg.input_dim = 4;
        cfg.hidden_layers = {6};
        cfg.num_classes = 8;
        cfg.dropout_rate = 0.0;
        cfg.init_seed = static_cast<std::uint64_t>(trial);
        auto e = make_ensemble({init_params(cfg)});
        std::vector<double> x(4);
        for (double& v : x) v = rng.uniform(-2.0, 2.0);
        const auto a = rank_averaging(e, x);
        const auto m = rank_merge_sort(e, x);
        REQUIRE(a.size() == m.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].class_id == m[i].class_id);
            CHECK(a[i].score == doctest::Approx(m[i].score).epsilon(1e-12));
        }
    }
}

TEST_CASE("identical members rank like any single member") {
    auto single = make_ensemble({constant_member({0.5, 0.2, 0.3})});
    auto triple = make_ensemble({constant_member({0.5, 0.2, 0.3}),
                                 constant_member({0.5, 0.2, 0.3}),
                                 constant_member({0.5, 0.2, 0.3})});
    const auto a = rank_averaging(single, kInput);
    const auto b = rank_averaging(triple, kInput);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].class_id == b[i].class_id);
        CHECK(a[i].score == doctest::Approx(b[i].score).epsilon(1e-12));
    }
}

TEST_CASE("uniform members fall back to ascending class ids") {
    auto e = make_ensemble({constant_member({0.25, 0.25, 0.25, 0.25}),
                            constant_member({0.25, 0.25, 0.25, 0.25})});
    for (const auto& list : {rank_averaging(e, kInput), rank_merge_sort(e, kInput)}) {
        REQUIRE(list.size() == 4);
        for (int c = 0; c < 4; ++c) {
            CHECK(list[static_cast<std::size_t>(c)].class_id == c);
        }
    }
}

TEST_CASE("both rules produce permutations of the class set") {
    ClassifierConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden_layers = {5};
    cfg.num_classes = 7;
    cfg.dropout_rate = 0.0;
    Rng rng(9);
    for (int trial = 0; trial < 30; ++trial) {
        cfg.init_seed = static_cast<std::uint64_t>(trial);
        auto e = make_ensemble({init_params(cfg), init_params(cfg)});
        std::vector<double> x(3);
        for (double& v : x) v = rng.normal();
        for (const auto& list : {rank_averaging(e, x), rank_merge_sort(e, x)}) {
            REQUIRE(list.size() == 7);
            std::vector<bool> seen(7, false);
            for (const auto& entry : list) {
                CHECK_FALSE(seen[static_cast<std::size_t>(entry.class_id)]);
                seen[static_cast<std::size_t>(entry.class_id)] = true;
            }
        }
    }
}

namespace {

SeasonDataset labeled_samples(const std::vector<int>& labels) {
    SeasonDataset s;
    for (int y : labels) {
        Sample smp;
        smp.features = kInput;
        smp.class_id = y;
        s.samples.push_back(std::move(smp));
    }
    return s;
}

} // namespace

TEST_CASE("top_x_accuracy basics") {
    // constant ranking: class 2 first
    auto e = make_ensemble({constant_member({0.2, 0.3, 0.5})});
    const auto test = labeled_samples({2, 2, 0});
    CHECK(top_x_accuracy(e, EnsembleRule::averaging, test, 1) ==
          doctest::Approx(2.0 / 3.0));
    // X >= C lists every class
    CHECK(top_x_accuracy(e, EnsembleRule::averaging, test, 3) == 1.0);
    CHECK(top_x_accuracy(e, EnsembleRule::averaging, test, 99) == 1.0);
    // monotone in X
    double prev = 0.0;
    for (int x = 1; x <= 3; ++x) {
        const double acc = top_x_accuracy(e, EnsembleRule::merge_sort, test, x);
        CHECK(acc >= prev);
        prev = acc;
    }

    SeasonDataset empty;
    CHECK_THROWS_AS(top_x_accuracy(e, EnsembleRule::averaging, empty, 1),
                    InvalidInputError);
    CHECK_THROWS_AS(top_x_accuracy(e, EnsembleRule::averaging, test, 0),
                    InvalidInputError);
}

TEST_CASE("top-1 accuracy of random labels against a fixed ranking is ~1/C") {
    // a fixed scorer against uniformly random true labels: binomial with
    // p = 1/10, 10000 trials
    std::vector<double> probs(10);
    for (std::size_t c = 0; c < 10; ++c) probs[c] = (c + 1) / 55.0;
    auto e = make_ensemble({constant_member(probs)});
    Rng rng(1);
    std::vector<int> labels(10000);
    for (int& y : labels) y = static_cast<int>(rng.uniform_int(0, 9));
    const double acc =
        top_x_accuracy(e, EnsembleRule::averaging, labeled_samples(labels), 1);
    CHECK(acc == doctest::Approx(0.1).epsilon(0.1)); // within 0.01 absolute
    CHECK(std::abs(acc - 0.1) <= 0.01);
}

TEST_CASE("evaluate_sequence follows the next-season protocol") {
    SynthConfig synth{.seasons = 3, .classes = 4, .features = 6,
                      .samples_per_class = 8, .drift_mag = 0.3, .noise = 0.15};
    auto data = synth_generate(synth, 2);
    // make season sizes distinguishable so the tested-on-next-season fact is
    // observable through the row counts
    data.seasons[1].samples.pop_back();
    data.seasons[2].samples.pop_back();
    data.seasons[2].samples.pop_back();

    RKDConfig cfg;
    cfg.strategy = builtin_strategy(3);
    cfg.classifier.input_dim = synth.features;
    cfg.classifier.hidden_layers = {8};
    cfg.classifier.num_classes = synth.classes;
    cfg.classifier.dropout_rate = 0.0;
    cfg.pretrain_spec.epochs = 2;
    cfg.distill_spec.epochs = 2;
    cfg.transfer = synth_transfer_set(synth, 2, 50);
    cfg.master_seed = 5;

    const auto table = evaluate_sequence(data, cfg, {1, 5, 10});
    // (seasons - 1) x rules x X values
    CHECK(table.rows.size() == 2 * 2 * 3);
    for (const auto& row : table.rows) {
        CHECK(row.season >= 1);
        CHECK(row.season <= 2);
        // tested on the NEXT season's data
        CHECK(row.count ==
              data.seasons[static_cast<std::size_t>(row.season)].samples.size());
        CHECK(row.accuracy >= 0.0);
        CHECK(row.accuracy <= 1.0);
    }
    // sorted by (season, rule, X) and monotone in X within each group
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
        const auto& a = table.rows[i - 1];
        const auto& b = table.rows[i];
        const auto key = [](const AccuracyRow& r) {
            return std::make_tuple(r.season, to_string(r.rule), r.x);
        };
        CHECK(key(a) < key(b));
        if (a.season == b.season && a.rule == b.rule) {
            CHECK(b.accuracy >= a.accuracy);
        }
    }

    // a 2-season prefix produces exactly one season of rows
    DomainSequence two;
    two.cell_size = data.cell_size;
    two.valid_classes = data.valid_classes;
    two.seasons = {data.seasons[0], data.seasons[1]};
    const auto table2 = evaluate_sequence(two, cfg, {1, 5, 10});
    CHECK(table2.rows.size() == 6);
    for (const auto& row : table2.rows) CHECK(row.season == 1);
}

TEST_CASE("zero drift keeps next-season accuracy high") {
    SynthConfig synth{.seasons = 3, .classes = 4, .features = 8,
                      .samples_per_class = 25, .drift_mag = 0.0, .noise = 0.1};
    const auto data = synth_generate(synth, 4);

    // nearest-centroid oracle confirms the task is easy
    {
        std::vector<std::vector<double>> means(4, std::vector<double>(8, 0.0));
        std::vector<int> counts(4, 0);
        for (const auto& smp : data.seasons[0].samples) {
            for (std::size_t f = 0; f < 8; ++f) {
                means[static_cast<std::size_t>(*smp.class_id)][f] += smp.features[f];
            }
            ++counts[static_cast<std::size_t>(*smp.class_id)];
        }
        for (std::size_t c = 0; c < 4; ++c) {
            for (double& v : means[c]) v /= counts[c];
        }
        int hits = 0;
        for (const auto& smp : data.seasons[1].samples) {
            double best = 1e300;
            int best_c = -1;
            for (std::size_t c = 0; c < 4; ++c) {
                double d = 0.0;
                for (std::size_t f = 0; f < 8; ++f) {
                    d += (smp.features[f] - means[c][f]) * (smp.features[f] - means[c][f]);
                }
                if (d < best) {
                    best = d;
                    best_c = static_cast<int>(c);
                }
            }
            if (best_c == *smp.class_id) ++hits;
        }
        REQUIRE(static_cast<double>(hits) / data.seasons[1].samples.size() >= 0.95);
    }

    RKDConfig cfg;
    cfg.strategy = builtin_strategy(3);
    cfg.classifier.input_dim = synth.features;
    cfg.classifier.hidden_layers = {16};
    cfg.classifier.num_classes = synth.classes;
    cfg.classifier.dropout_rate = 0.0;
    cfg.pretrain_spec.epochs = 15;
    cfg.distill_spec.epochs = 15;
    cfg.transfer = synth_transfer_set(synth, 4, 300);
    cfg.master_seed = 6;

    const auto table = evaluate_sequence(data, cfg, {1});
    for (const auto& row : table.rows) {
        CHECK(row.accuracy >= 0.9);
    }
}

TEST_CASE("accuracy csv round-trips") {
    AccuracyTable table;
    table.rows.push_back({1, EnsembleRule::averaging, 1, 1.0 / 3.0, 300});
    table.rows.push_back({1, EnsembleRule::merge_sort, 5, 0.875, 64});
    table.rows.push_back({2, EnsembleRule::averaging, 10, 0.0, 12});
    std::ostringstream out;
    write_accuracy_csv(table, out);
    std::istringstream in(out.str());
    const auto back = read_accuracy_csv(in);
    CHECK(back == table);

    std::istringstream bad("wrong,header\n");
    CHECK_THROWS_AS(read_accuracy_csv(bad), ParseError);
}
