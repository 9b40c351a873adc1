#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rkd/engine.hpp"

namespace rkd {

// One ranked place class with its relevance score.
struct RankedEntry {
    int class_id = 0;
    double score = 0.0;
    bool operator==(const RankedEntry&) const = default;
};

// Full permutation of the class set, descending score, ties broken by
// ascending class_id.
using RankedList = std::vector<RankedEntry>;

enum class EnsembleRule { averaging, merge_sort };

// "averaging" / "merge+sort"; these exact strings appear in CSV output.
std::string to_string(EnsembleRule rule);
EnsembleRule rule_from_string(const std::string& text);

// score(class) = mean over members of softmax(member logits, T=1)[class].
RankedList rank_averaging(const EnsembleState& ensemble,
                          std::span<const double> features);

// Member confidences merged into one pool; each class keeps its maximum
// softmax probability across members and classes are ordered by that score.
RankedList rank_merge_sort(const EnsembleState& ensemble,
                           std::span<const double> features);

// Fraction of test samples whose true class appears among the first
// min(X, C) ranked entries. Throws InvalidInputError for an empty test set
// (the metric is undefined) or unlabeled samples.
double top_x_accuracy(const EnsembleState& ensemble, EnsembleRule rule,
                      const SeasonDataset& test, int x);

struct AccuracyRow {
    int season = 0; // ensemble index t; tested on season t+1
    EnsembleRule rule = EnsembleRule::averaging;
    int x = 1;
    double accuracy = 0.0; // exactly hits / count
    std::size_t count = 0; // test sample count
    bool operator==(const AccuracyRow&) const = default;
};

struct AccuracyTable {
    std::vector<AccuracyRow> rows;
    bool operator==(const AccuracyTable&) const = default;
};

// The full protocol: S^1 from the first season, then one season_step per
// remaining season; after S^t is adapted it is evaluated on season t+1's
// unseen data for both rules and every X. The final season's ensemble has no
// next season and produces no row. Rows are sorted by (season, rule, X).
// When progress is non-null one line per adapted season is written to it.
AccuracyTable evaluate_sequence(const DomainSequence& seq, const RKDConfig& cfg,
                                const std::vector<int>& x_set,
                                std::ostream* progress = nullptr);

// CSV with header "season,rule,X,accuracy,count"; floats in shortest
// round-trip form, so re-parsing reproduces the table exactly.
void write_accuracy_csv(const AccuracyTable& table, std::ostream& out);
AccuracyTable read_accuracy_csv(std::istream& in);

} // namespace rkd
