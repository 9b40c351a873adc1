#include "rkd/tsa.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "rkd/error.hpp"

namespace rkd {

int Strategy::total_students() const {
    int total = 0;
    for (const Segment& seg : segments) {
        total += std::visit([](const auto& s) { return s.students; }, seg);
    }
    return total;
}

std::vector<int> TSAMatrix::column_rows(int student) const {
    std::vector<int> rows;
    for (int i = 0; i < num_teachers; ++i) {
        if (at(i, student)) rows.push_back(i);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {

class Cursor {
public:
    explicit Cursor(std::string_view text) : text_(text) {}

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
    }

    bool done() {
        skip_ws();
        return pos_ >= text_.size();
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] != c) {
            fail(std::string("expected '") + c + "'");
        }
        ++pos_;
    }

    bool consume(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    int integer() {
        skip_ws();
        int value = 0;
        auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
        if (ec != std::errc() || ptr == text_.data() + pos_) {
            fail("expected an integer");
        }
        pos_ = static_cast<std::size_t>(ptr - text_.data());
        return value;
    }

    double real() {
        skip_ws();
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
        if (ec != std::errc() || ptr == text_.data() + pos_) {
            fail("expected a number");
        }
        pos_ = static_cast<std::size_t>(ptr - text_.data());
        return value;
    }

    [[noreturn]] void fail(const std::string& what) {
        throw ParseError("strategy: " + what + " at position " + std::to_string(pos_) +
                         " in '" + std::string(text_) + "'");
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

Segment parse_segment(Cursor& cur) {
    const char kind = cur.peek();
    if (kind == 'A' || kind == 'a') {
        cur.expect(kind);
        SegmentA seg;
        seg.students = cur.integer();
        cur.expect('(');
        cur.expect('[');
        seg.range_lo = cur.integer();
        cur.expect(',');
        seg.range_hi = cur.integer();
        cur.expect(']');
        cur.expect(',');
        seg.current_prob = cur.real();
        cur.expect(')');
        if (seg.students < 1) {
            throw InvalidInputError("strategy: A segment student count must be >= 1");
        }
        if (seg.range_lo < 0 || seg.range_lo > seg.range_hi) {
            throw InvalidInputError("strategy: A range [" + std::to_string(seg.range_lo) +
                                    "," + std::to_string(seg.range_hi) +
                                    "] must satisfy 0 <= a <= b");
        }
        if (seg.current_prob < 0.0 || seg.current_prob > 1.0) {
            throw InvalidInputError("strategy: A probability " +
                                    std::to_string(seg.current_prob) +
                                    " must lie in [0, 1]");
        }
        return seg;
    }
    if (kind == 'B' || kind == 'b') {
        cur.expect(kind);
        SegmentB seg;
        seg.students = cur.integer();
        if (seg.students < 1) {
            throw InvalidInputError("strategy: B segment student count must be >= 1");
        }
        return seg;
    }
    if (kind == 'C' || kind == 'c') {
        cur.expect(kind);
        SegmentC seg;
        seg.students = cur.integer();
        cur.expect(',');
        seg.split = cur.integer();
        if (seg.students < 1) {
            throw InvalidInputError("strategy: C segment student count must be >= 1");
        }
        if (seg.split < 0 || seg.split >= seg.students) {
            throw InvalidInputError("strategy: C split " + std::to_string(seg.split) +
                                    " must satisfy 0 <= s' < " +
                                    std::to_string(seg.students));
        }
        return seg;
    }
    cur.fail("expected segment 'A', 'B' or 'C'");
}

// trims trailing zeros but keeps one decimal, e.g. 1.0, 0.5, 0.25
std::string format_prob(double p) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), p);
    (void)ec;
    std::string s(buf, ptr);
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos) {
        s += ".0";
    }
    return s;
}

} // namespace

Strategy parse_strategy(std::string_view text) {
    Cursor cur(text);
    Strategy strategy;
    strategy.segments.push_back(parse_segment(cur));
    while (cur.consume('+')) {
        strategy.segments.push_back(parse_segment(cur));
    }
    if (!cur.done()) {
        cur.fail("trailing characters");
    }
    return strategy;
}

std::string render_strategy(const Strategy& strategy) {
    std::string out;
    for (std::size_t i = 0; i < strategy.segments.size(); ++i) {
        if (i > 0) out += "+";
        std::visit(
            [&out](const auto& seg) {
                using T = std::decay_t<decltype(seg)>;
                if constexpr (std::is_same_v<T, SegmentA>) {
                    out += "A" + std::to_string(seg.students) + "([" +
                           std::to_string(seg.range_lo) + "," +
                           std::to_string(seg.range_hi) + "]," +
                           format_prob(seg.current_prob) + ")";
                } else if constexpr (std::is_same_v<T, SegmentB>) {
                    out += "B" + std::to_string(seg.students);
                } else {
                    out += "C" + std::to_string(seg.students) + "," +
                           std::to_string(seg.split);
                }
            },
            strategy.segments[i]);
    }
    return out;
}

Strategy builtin_strategy(int n) {
    // Table of the 14 built-in strategies; #14 is the current-only baseline.
    static const char* kTable[] = {
        /* #1  */ "A4([1,1],1.0)",
        /* #2  */ "A4([2,2],0.5)",
        /* #3  */ "A4([2,2],1.0)",
        /* #4  */ "A4([3,3],1.0)",
        /* #5  */ "A4([1,2],1.0)",
        /* #6  */ "A4([0,2],1.0)",
        /* #7  */ "B4",
        /* #8  */ "A4([0,4],1.0)",
        /* #9  */ "B2+A2([0,0],1.0)",
        /* #10 */ "B2+A2([2,2],1.0)",
        /* #11 */ "B2+A1([1,1],1.0)+A1([1,1],1.0)",
        /* #12 */ "B2+A2([1,1],1.0)",
        /* #13 */ "C4,2",
        /* #14 */ "A4([0,0],1.0)",
    };
    if (n < 1 || n > kNumBuiltinStrategies) {
        throw InvalidInputError("builtin_strategy: #" + std::to_string(n) +
                                " out of range [1, " +
                                std::to_string(kNumBuiltinStrategies) + "]");
    }
    return parse_strategy(kTable[n - 1]);
}

// ---------------------------------------------------------------------------
// Sampler
// ---------------------------------------------------------------------------

namespace {

void set_cell(TSAMatrix& m, int teacher, int student) {
    m.cells[static_cast<std::size_t>(teacher) * static_cast<std::size_t>(m.num_students) +
            static_cast<std::size_t>(student)] = 1;
}

void clear_column(TSAMatrix& m, int student) {
    for (int i = 0; i < m.num_teachers; ++i) {
        m.cells[static_cast<std::size_t>(i) * static_cast<std::size_t>(m.num_students) +
                static_cast<std::size_t>(student)] = 0;
    }
}

bool column_empty(const TSAMatrix& m, int student) {
    for (int i = 0; i < m.num_teachers; ++i) {
        if (m.at(i, student)) return false;
    }
    return true;
}

// one A-segment column: previous-teacher count from the clamped range plus a
// current-teacher coin
void sample_a_column(TSAMatrix& m, int student, const SegmentA& seg, int s, Rng& rng) {
    const int lo = std::min(seg.range_lo, s);
    const int hi = std::min(seg.range_hi, s);
    const int n_prev = static_cast<int>(rng.uniform_int(lo, hi));
    for (int row : rng.sample_without_replacement(s, n_prev)) {
        set_cell(m, row + 1, student);
    }
    if (rng.bernoulli(seg.current_prob)) {
        set_cell(m, 0, student);
    }
}

// one B-style column: pooled draw of `total` teachers out of all s+1
void sample_b_column(TSAMatrix& m, int student, int nominal, int s, Rng& rng) {
    const int candidates = s + 1;
    const int hi = std::min(nominal, candidates);
    const int total = static_cast<int>(rng.uniform_int(1, hi));
    for (int row : rng.sample_without_replacement(candidates, total)) {
        set_cell(m, row, student);
    }
}

} // namespace

TSAMatrix sample_tsa(const Strategy& strategy, int num_prev_teachers, Rng& rng) {
    if (num_prev_teachers < 0) {
        throw InvalidInputError("sample_tsa: num_prev_teachers must be >= 0");
    }
    const int k = strategy.total_students();
    if (k < 1) {
        throw InvalidInputError("sample_tsa: strategy covers no students");
    }
    const int s = num_prev_teachers;

    // reject segments whose columns can never receive a teacher
    for (const Segment& seg : strategy.segments) {
        if (const auto* a = std::get_if<SegmentA>(&seg)) {
            if (a->current_prob == 0.0 && std::min(a->range_hi, s) == 0) {
                throw InvalidInputError(
                    "sample_tsa: segment " + render_strategy(Strategy{{seg}}) +
                    " with s=" + std::to_string(s) + " can never assign a teacher");
            }
        }
    }

    TSAMatrix m;
    m.num_teachers = s + 1;
    m.num_students = k;
    m.cells.assign(static_cast<std::size_t>(m.num_teachers) * static_cast<std::size_t>(k), 0);

    int student = 0;
    for (const Segment& seg : strategy.segments) {
        const int count = std::visit([](const auto& sg) { return sg.students; }, seg);
        for (int j = 0; j < count; ++j, ++student) {
            do {
                clear_column(m, student);
                if (const auto* a = std::get_if<SegmentA>(&seg)) {
                    sample_a_column(m, student, *a, s, rng);
                } else if (const auto* b = std::get_if<SegmentB>(&seg)) {
                    sample_b_column(m, student, b->students, s, rng);
                } else {
                    const auto& c = std::get<SegmentC>(seg);
                    if (j < c.split) {
                        sample_b_column(m, student, 5, s, rng);
                    } else {
                        set_cell(m, 0, student);
                    }
                }
            } while (column_empty(m, student));
        }
    }
    return m;
}

} // namespace rkd
