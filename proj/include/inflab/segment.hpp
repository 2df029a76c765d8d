#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "inflab/errors.hpp"
#include "inflab/utf8.hpp"

// Canonical-to-surface segmentation via minimal edit-distance alignment.
// Canonically segmented data may insert or delete characters relative to the
// surface form; a surface segmentation is recovered by aligning the surface
// string against the canonical one and cutting (i) at insertions of boundary
// symbols and (ii) after characters that align against a boundary symbol.

namespace inflab {

enum class EditKind { Match, Substitute, Delete, Insert };

// Match/Substitute carry both indices; Delete only source_index (a character
// of s absent from c); Insert only target_index (a character of c absent
// from s).
struct AlignmentOp {
    EditKind kind;
    std::optional<std::size_t> source_index;
    std::optional<std::size_t> target_index;
};

struct SurfaceSegmentation {
    std::string word;                     // UTF-8
    std::vector<std::size_t> boundaries;  // cut positions in (0, len), strictly increasing

    std::vector<std::string> segments() const {
        const std::u32string u = utf8::decode(word);
        std::vector<std::string> out;
        std::size_t start = 0;
        for (std::size_t cut : boundaries) {
            out.push_back(utf8::encode(u.substr(start, cut - start)));
            start = cut;
        }
        out.push_back(utf8::encode(u.substr(start)));
        return out;
    }

    std::string joined(char32_t separator = U'-') const {
        std::string out;
        bool first = true;
        for (const auto& seg : segments()) {
            if (!first) utf8::append(out, separator);
            out += seg;
            first = false;
        }
        return out;
    }
};

namespace detail {

// Edit-distance DP with backtrace. Costs: match 0, substitute/delete/insert 1,
// except inserting `free_insert` (the boundary symbol) costs 0. Co-optimal
// paths are resolved deterministically at each backtrace step by preferring
// match > substitute > delete > insert.
//
// Scratch buffers are thread_local: the aligner is called in tight loops
// (exhaustive equivalence checks run millions of alignments).
inline std::vector<AlignmentOp> align_impl(const std::u32string& s, const std::u32string& c,
                                           std::optional<char32_t> free_insert) {
    const std::size_t m = s.size();
    const std::size_t n = c.size();
    static thread_local std::vector<std::uint32_t> dist;
    dist.assign((m + 1) * (n + 1), 0);
    auto d = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return dist[i * (n + 1) + j]; };

    auto ins_cost = [&](char32_t cj) -> std::uint32_t {
        return (free_insert && cj == *free_insert) ? 0u : 1u;
    };

    for (std::size_t i = 1; i <= m; ++i) d(i, 0) = static_cast<std::uint32_t>(i);
    for (std::size_t j = 1; j <= n; ++j) d(0, j) = d(0, j - 1) + ins_cost(c[j - 1]);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            const std::uint32_t diag = d(i - 1, j - 1) + (s[i - 1] == c[j - 1] ? 0u : 1u);
            const std::uint32_t del = d(i - 1, j) + 1u;
            const std::uint32_t ins = d(i, j - 1) + ins_cost(c[j - 1]);
            d(i, j) = std::min({diag, del, ins});
        }
    }

    std::vector<AlignmentOp> ops;
    ops.reserve(m + n);
    std::size_t i = m;
    std::size_t j = n;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 && s[i - 1] == c[j - 1] && d(i, j) == d(i - 1, j - 1)) {
            ops.push_back({EditKind::Match, i - 1, j - 1});
            --i;
            --j;
        } else if (i > 0 && j > 0 && s[i - 1] != c[j - 1] && d(i, j) == d(i - 1, j - 1) + 1) {
            ops.push_back({EditKind::Substitute, i - 1, j - 1});
            --i;
            --j;
        } else if (i > 0 && d(i, j) == d(i - 1, j) + 1) {
            ops.push_back({EditKind::Delete, i - 1, std::nullopt});
            --i;
        } else {
            ops.push_back({EditKind::Insert, std::nullopt, j - 1});
            --j;
        }
    }
    std::reverse(ops.begin(), ops.end());
    return ops;
}

}  // namespace detail

// Minimal-cost alignment of s against c; the op sequence's cost (match 0,
// others 1) equals the Levenshtein distance.
inline std::vector<AlignmentOp> levenshtein_align(const std::u32string& s, const std::u32string& c) {
    if (s.empty() || c.empty()) throw ValidationError("levenshtein_align requires non-empty strings");
    return detail::align_impl(s, c, std::nullopt);
}

inline std::vector<AlignmentOp> levenshtein_align(const std::string& s, const std::string& c) {
    return levenshtein_align(utf8::decode(s), utf8::decode(c));
}

inline std::size_t alignment_cost(const std::vector<AlignmentOp>& ops) {
    std::size_t cost = 0;
    for (const auto& op : ops)
        if (op.kind != EditKind::Match) ++cost;
    return cost;
}

// Segments s according to its canonical segmentation c_segmented, whose
// morphs are joined by `boundary` (a symbol outside the alphabet). Boundary
// symbols are zero-cost insertion targets; a cut lands at any insertion of a
// boundary (rule i) and after any surface character that aligns against a
// boundary (rule ii). Duplicate cuts collapse; cuts at 0 or len(s) are
// dropped.
inline SurfaceSegmentation surface_segment(const std::string& s_utf8, const std::string& c_utf8,
                                           char32_t boundary = U'-') {
    const std::u32string s = utf8::decode(s_utf8);
    const std::u32string c = utf8::decode(c_utf8);
    if (s.empty()) throw ValidationError("cannot segment an empty word");
    if (c.empty()) throw ValidationError("empty canonical segmentation");
    if (s.find(boundary) != std::u32string::npos)
        throw ValidationError("surface form contains the boundary symbol");
    for (std::size_t i = 0; i + 1 < c.size(); ++i)
        if (c[i] == boundary && c[i + 1] == boundary)
            throw ValidationError("adjacent boundary symbols in canonical segmentation");

    const auto ops = detail::align_impl(s, c, boundary);

    std::vector<std::size_t> cuts;
    std::size_t consumed = 0;  // surface characters consumed so far
    for (const auto& op : ops) {
        switch (op.kind) {
            case EditKind::Insert:
                if (c[*op.target_index] == boundary) cuts.push_back(consumed);  // rule (i)
                break;
            case EditKind::Substitute:
                ++consumed;
                if (c[*op.target_index] == boundary) cuts.push_back(consumed);  // rule (ii)
                break;
            case EditKind::Match:
            case EditKind::Delete:
                ++consumed;
                break;
        }
    }

    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    std::erase_if(cuts, [&](std::size_t cut) { return cut == 0 || cut == s.size(); });

    return SurfaceSegmentation{s_utf8, std::move(cuts)};
}

}  // namespace inflab
