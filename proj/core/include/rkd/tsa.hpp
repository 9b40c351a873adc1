#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rkd/rng.hpp"

namespace rkd {

// Teacher-student-assignment strategy language.
//
// A strategy is `segment ('+' segment)*`; segments cover disjoint consecutive
// student groups in listed order and their student counts sum to the ensemble
// size K. Segment forms:
//
//   A<k>([a,b],p)  per student: draw the number of previous teachers
//                  uniformly from [a,b] (clamped to the s available), pick
//                  them without replacement, and include the current teacher
//                  with independent probability p.
//   B<k>           per student: draw a total teacher count uniformly from
//                  [1, min(k, s+1)] out of the pooled s+1 candidates, not
//                  distinguishing current from previous.
//   C<k>,<s'>      students 1..s' get B-style sampling with the total drawn
//                  from [1, min(5, s+1)]; the remaining k-s' students get the
//                  current teacher only.

struct SegmentA {
    int students = 0;
    int range_lo = 0;
    int range_hi = 0;
    double current_prob = 1.0;
    bool operator==(const SegmentA&) const = default;
};

struct SegmentB {
    int students = 0;
    bool operator==(const SegmentB&) const = default;
};

struct SegmentC {
    int students = 0;
    int split = 0; // s' < students
    bool operator==(const SegmentC&) const = default;
};

using Segment = std::variant<SegmentA, SegmentB, SegmentC>;

struct Strategy {
    std::vector<Segment> segments;

    int total_students() const;
    bool operator==(const Strategy&) const = default;
};

// Parses a strategy expression, validating segment constraints (a <= b,
// p in [0,1], s' < k, counts >= 1). Throws ParseError with the character
// position on syntax errors, InvalidInputError on constraint violations.
Strategy parse_strategy(std::string_view text);

// Canonical rendering; parse_strategy(render_strategy(s)) == s.
std::string render_strategy(const Strategy& strategy);

// The 14 built-in strategies (#1..#14); #14 is the current-teacher-only
// baseline. Throws InvalidInputError outside [1, 14].
Strategy builtin_strategy(int n);

inline constexpr int kNumBuiltinStrategies = 14;

// Binary assignment matrix: row 0 is the current teacher, rows 1..s the
// previous season's teachers, one column per student. Every column has at
// least one assignment.
struct TSAMatrix {
    int num_teachers = 0; // s + 1 rows
    int num_students = 0; // K columns
    std::vector<std::uint8_t> cells; // row-major

    bool at(int teacher, int student) const {
        return cells[static_cast<std::size_t>(teacher) *
                         static_cast<std::size_t>(num_students) +
                     static_cast<std::size_t>(student)] != 0;
    }
    // teacher rows assigned to one student, ascending
    std::vector<int> column_rows(int student) const;
    bool operator==(const TSAMatrix&) const = default;
};

// Samples a (s+1) x K assignment matrix. Columns that come out empty are
// resampled; a segment that can never produce an assignment (p == 0 with an
// all-zero clamped range) is rejected up front. Deterministic per rng state.
TSAMatrix sample_tsa(const Strategy& strategy, int num_prev_teachers, Rng& rng);

} // namespace rkd
