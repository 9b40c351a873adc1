#include "rkd/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <sstream>

#include "rkd/error.hpp"

namespace rkd {

std::string to_string(EnsembleRule rule) {
    return rule == EnsembleRule::averaging ? "averaging" : "merge+sort";
}

EnsembleRule rule_from_string(const std::string& text) {
    if (text == "averaging") return EnsembleRule::averaging;
    if (text == "merge+sort") return EnsembleRule::merge_sort;
    throw ParseError("unknown ensemble rule '" + text + "'");
}

namespace {

RankedList ranked_from_scores(std::vector<double> scores) {
    RankedList list(scores.size());
    for (std::size_t c = 0; c < scores.size(); ++c) {
        list[c] = RankedEntry{static_cast<int>(c), scores[c]};
    }
    std::sort(list.begin(), list.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.class_id < b.class_id;
    });
    return list;
}

std::vector<double> member_scores(const EnsembleState& ensemble,
                                  std::span<const double> features, bool use_max) {
    if (ensemble.members.empty()) {
        throw InvalidInputError("rank: empty ensemble");
    }
    const std::size_t num_classes =
        static_cast<std::size_t>(ensemble.members.front().config.num_classes);
    std::vector<double> scores(num_classes, 0.0);
    for (const ClassifierParams& member : ensemble.members) {
        const auto q = temp_softmax(forward_logits(member, features), 1.0);
        for (std::size_t c = 0; c < num_classes; ++c) {
            if (use_max) {
                scores[c] = std::max(scores[c], q[c]);
            } else {
                scores[c] += q[c];
            }
        }
    }
    if (!use_max) {
        const double inv = 1.0 / static_cast<double>(ensemble.members.size());
        for (double& v : scores) v *= inv;
    }
    return scores;
}

} // namespace

RankedList rank_averaging(const EnsembleState& ensemble,
                          std::span<const double> features) {
    return ranked_from_scores(member_scores(ensemble, features, false));
}

RankedList rank_merge_sort(const EnsembleState& ensemble,
                           std::span<const double> features) {
    // Concatenating every member's (class, confidence) pairs, sorting by
    // confidence and deduplicating keeps each class at its maximum member
    // confidence, so the max-reduction below is the same ranking.
    return ranked_from_scores(member_scores(ensemble, features, true));
}

namespace {

// hit counts for every (rule, X) in one pass over the test set
std::vector<AccuracyRow> evaluate_on(const EnsembleState& ensemble,
                                     const SeasonDataset& test,
                                     const std::vector<int>& x_set) {
    if (test.samples.empty()) {
        throw InvalidInputError("evaluate: empty test set, metric undefined");
    }
    const std::vector<EnsembleRule> rules = {EnsembleRule::averaging,
                                             EnsembleRule::merge_sort};
    std::vector<std::vector<long>> hits(rules.size(),
                                        std::vector<long>(x_set.size(), 0));
    for (const Sample& smp : test.samples) {
        if (!smp.class_id) {
            throw InvalidInputError("evaluate: unlabeled test sample");
        }
        for (std::size_t r = 0; r < rules.size(); ++r) {
            const RankedList list = rules[r] == EnsembleRule::averaging
                                        ? rank_averaging(ensemble, smp.features)
                                        : rank_merge_sort(ensemble, smp.features);
            for (std::size_t xi = 0; xi < x_set.size(); ++xi) {
                const std::size_t depth =
                    std::min(list.size(), static_cast<std::size_t>(x_set[xi]));
                for (std::size_t pos = 0; pos < depth; ++pos) {
                    if (list[pos].class_id == *smp.class_id) {
                        ++hits[r][xi];
                        break;
                    }
                }
            }
        }
    }

    std::vector<AccuracyRow> rows;
    for (std::size_t r = 0; r < rules.size(); ++r) {
        for (std::size_t xi = 0; xi < x_set.size(); ++xi) {
            AccuracyRow row;
            row.season = ensemble.season_index;
            row.rule = rules[r];
            row.x = x_set[xi];
            row.count = test.samples.size();
            row.accuracy = static_cast<double>(hits[r][xi]) /
                           static_cast<double>(test.samples.size());
            rows.push_back(row);
        }
    }
    return rows;
}

void sort_rows(std::vector<AccuracyRow>& rows) {
    std::sort(rows.begin(), rows.end(), [](const AccuracyRow& a, const AccuracyRow& b) {
        if (a.season != b.season) return a.season < b.season;
        if (a.rule != b.rule) return to_string(a.rule) < to_string(b.rule);
        return a.x < b.x;
    });
}

} // namespace

double top_x_accuracy(const EnsembleState& ensemble, EnsembleRule rule,
                      const SeasonDataset& test, int x) {
    if (x < 1) {
        throw InvalidInputError("top_x_accuracy: X must be >= 1");
    }
    for (const AccuracyRow& row : evaluate_on(ensemble, test, {x})) {
        if (row.rule == rule) return row.accuracy;
    }
    throw InvalidInputError("top_x_accuracy: internal rule lookup failed");
}

AccuracyTable evaluate_sequence(const DomainSequence& seq, const RKDConfig& cfg,
                                const std::vector<int>& x_set,
                                std::ostream* progress) {
    if (seq.seasons.size() < 2) {
        throw InvalidInputError("evaluate_sequence: need at least 2 seasons");
    }
    if (x_set.empty()) {
        throw InvalidInputError("evaluate_sequence: empty X set");
    }

    AccuracyTable table;
    EnsembleState ensemble = init_first_season(cfg, seq.seasons.front());
    if (progress) {
        *progress << "season 1: pretrained initial ensemble (K=1)\n" << std::flush;
    }
    for (std::size_t next = 1; next < seq.seasons.size(); ++next) {
        const SeasonDataset& test = seq.seasons[next];
        const auto rows = evaluate_on(ensemble, test, x_set);
        table.rows.insert(table.rows.end(), rows.begin(), rows.end());

        // adaptation mission for season next+1 (consumes the ensemble)
        Rng step_rng(mix_seed({cfg.master_seed,
                               static_cast<std::uint64_t>(ensemble.season_index + 1),
                               0x747361ULL}));
        ensemble = season_step(std::move(ensemble), seq.seasons[next],
                               cfg.transfer, cfg, step_rng);
        if (progress) {
            *progress << "season " << ensemble.season_index << ": adapted (K="
                      << ensemble.members.size() << ")\n"
                      << std::flush;
        }
    }
    sort_rows(table.rows);
    return table;
}

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    out.append(buf, ptr);
}

} // namespace

void write_accuracy_csv(const AccuracyTable& table, std::ostream& out) {
    out << "season,rule,X,accuracy,count\n";
    std::string line;
    for (const AccuracyRow& row : table.rows) {
        line.clear();
        line += std::to_string(row.season);
        line += ',';
        line += to_string(row.rule);
        line += ',';
        line += std::to_string(row.x);
        line += ',';
        append_double(line, row.accuracy);
        line += ',';
        line += std::to_string(row.count);
        line += '\n';
        out << line;
    }
}

AccuracyTable read_accuracy_csv(std::istream& in) {
    AccuracyTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1) {
            if (line != "season,rule,X,accuracy,count") {
                throw ParseError("accuracy csv: unexpected header '" + line + "'");
            }
            continue;
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                fields.push_back(line.substr(start));
                break;
            }
            fields.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        if (fields.size() != 5) {
            throw ParseError("accuracy csv: row " + std::to_string(lineno) +
                             ": expected 5 fields");
        }
        AccuracyRow row;
        row.season = std::stoi(fields[0]);
        row.rule = rule_from_string(fields[1]);
        row.x = std::stoi(fields[2]);
        auto [p, ec] =
            std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(),
                            row.accuracy);
        if (ec != std::errc() || p != fields[3].data() + fields[3].size()) {
            throw ParseError("accuracy csv: row " + std::to_string(lineno) +
                             ": bad accuracy '" + fields[3] + "'");
        }
        row.count = static_cast<std::size_t>(std::stoull(fields[4]));
        table.rows.push_back(row);
    }
    return table;
}

} // namespace rkd
