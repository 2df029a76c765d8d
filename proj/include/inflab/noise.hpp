#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "inflab/corpus.hpp"
#include "inflab/errors.hpp"
#include "inflab/rng.hpp"
#include "inflab/utf8.hpp"

// Self-supervised training pairs from lexicon entries:
// objective (AE | CMLM | T5) x strategy (iid | suffix | prefix) x
// corruption (mask | delete) x granularity (character | segment).

namespace inflab {

enum class Objective { AE, CMLM, T5 };
enum class Strategy { IID, Suffix, Prefix };
enum class Corruption { Mask, Delete };
enum class Granularity { Char, Segment };

struct NoiseSpec {
    Objective objective = Objective::CMLM;
    Strategy strategy = Strategy::IID;
    Corruption corruption = Corruption::Mask;
    Granularity granularity = Granularity::Char;
    double rate = 0.25;       // fraction of unit positions sampled per word
    double tail_mass = 0.95;  // probability mass on the skewed third

    // CMLM branch split: mask_prob applies the corruption, random_prob swaps
    // in another alphabet character, the remainder keeps the character.
    // Defaults follow the standard 80/10/10 recipe; tests force branches by
    // overriding them.
    double mask_prob = 0.8;
    double random_prob = 0.1;

    void validate() const {
        if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("noise rate must be in (0, 1]");
        if (!(tail_mass >= 0.0 && tail_mass <= 1.0)) throw ConfigError("tail_mass must be in [0, 1]");
        if (mask_prob < 0.0 || random_prob < 0.0 || mask_prob + random_prob > 1.0 + 1e-12)
            throw ConfigError("branch probabilities must be non-negative and sum to at most 1");
    }

    // Spec strings: "ae" or objective-strategy-corruption-granularity,
    // e.g. "cmlm-iid-mask-char", "t5-suffix-delete-segment".
    static NoiseSpec parse(std::string_view name);
    std::string name() const;
};

// A corrupted source with its reconstruction target (always the original
// word) and the sampled unit indices in draw order.
struct NoisedPair {
    std::vector<std::string> source;  // symbol tokens: characters, <MASK>, <SENT_i>
    std::string target;
    std::vector<std::size_t> positions;
};

// Number of corruptible units: characters, or oracle segments.
inline std::size_t unit_count(const LexiconEntry& entry, Granularity granularity) {
    if (granularity == Granularity::Segment) {
        if (!entry.segments)
            throw ConfigError("segment granularity requires segmented entries (word: " + entry.word +
                              ")");
        return entry.segments->size();
    }
    return utf8::length(entry.word);
}

// Draws k = max(1, round(rate * n)) distinct unit indices, sequentially
// without replacement from the strategy distribution renormalized over the
// remaining indices. IID is uniform; Suffix puts tail_mass uniformly on the
// last ceil(n/3) indices and the rest uniformly on the others; Prefix
// mirrors Suffix onto the first ceil(n/3).
inline std::vector<std::size_t> sample_positions(std::size_t n, const NoiseSpec& spec, Rng& rng) {
    if (n < 1) throw ConfigError("cannot sample positions from an empty unit sequence");
    spec.validate();

    std::vector<double> weight(n, 0.0);
    const std::size_t skew_len = (n + 2) / 3;  // ceil(n/3)
    const std::size_t rest_len = n - skew_len;
    switch (spec.strategy) {
        case Strategy::IID:
            std::fill(weight.begin(), weight.end(), 1.0 / static_cast<double>(n));
            break;
        case Strategy::Suffix:
        case Strategy::Prefix: {
            const bool suffix = spec.strategy == Strategy::Suffix;
            const double skew_w =
                (rest_len == 0 ? 1.0 : spec.tail_mass) / static_cast<double>(skew_len);
            const double rest_w =
                rest_len == 0 ? 0.0 : (1.0 - spec.tail_mass) / static_cast<double>(rest_len);
            for (std::size_t i = 0; i < n; ++i) {
                const bool in_skew = suffix ? i >= rest_len : i < skew_len;
                weight[i] = in_skew ? skew_w : rest_w;
            }
            break;
        }
    }

    const std::size_t k =
        std::min(n, std::max<std::size_t>(
                        1, static_cast<std::size_t>(std::floor(spec.rate * static_cast<double>(n) + 0.5))));

    std::vector<std::size_t> picked;
    picked.reserve(k);
    for (std::size_t draw = 0; draw < k; ++draw) {
        const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
        double u = rng.real() * total;
        std::size_t choice = n;  // falls back to the last positive weight
        for (std::size_t i = 0; i < n; ++i) {
            if (weight[i] <= 0.0) continue;
            choice = i;
            u -= weight[i];
            if (u < 0.0) break;
        }
        picked.push_back(choice);
        weight[choice] = 0.0;
    }
    return picked;
}

namespace detail {

// Expands sampled unit indices (ascending) to affected character indices.
inline std::vector<std::size_t> affected_chars(const LexiconEntry& entry,
                                               std::vector<std::size_t> positions,
                                               Granularity granularity, std::size_t n_chars) {
    std::sort(positions.begin(), positions.end());
    if (granularity == Granularity::Char) {
        for (std::size_t p : positions)
            if (p >= n_chars) throw ConfigError("sampled position out of range");
        return positions;
    }
    std::vector<std::size_t> chars;
    std::size_t offset = 0;
    std::size_t seg_idx = 0;
    auto next_pos = positions.begin();
    for (const auto& seg : *entry.segments) {
        const std::size_t len = utf8::length(seg);
        if (next_pos != positions.end() && *next_pos == seg_idx) {
            for (std::size_t i = 0; i < len; ++i) chars.push_back(offset + i);
            ++next_pos;
        }
        offset += len;
        ++seg_idx;
    }
    if (next_pos != positions.end()) throw ConfigError("sampled segment index out of range");
    return chars;
}

}  // namespace detail

// CMLM corruption. Per affected character an independent branch draw:
// with mask_prob the corruption applies (<MASK> in mask mode, removal in
// delete mode), with random_prob the character is replaced by another
// alphabet character, otherwise it is kept. Segment granularity expands each
// sampled segment to its characters first.
inline NoisedPair corrupt_cmlm(const LexiconEntry& entry, const std::vector<std::size_t>& positions,
                               const NoiseSpec& spec, const Vocabulary& vocab, Rng& rng) {
    const std::u32string word = utf8::decode(entry.word);
    const auto chars = detail::affected_chars(entry, positions, spec.granularity, word.size());

    enum class Action { Keep, Corrupt, Replace };
    std::vector<Action> action(word.size(), Action::Keep);
    std::vector<char32_t> replacement(word.size(), 0);
    for (std::size_t idx : chars) {
        const double u = rng.real();
        if (u < spec.mask_prob) {
            action[idx] = Action::Corrupt;
        } else if (u < spec.mask_prob + spec.random_prob) {
            const auto other = vocab.alphabet().random_other(word[idx], rng);
            if (other) {
                action[idx] = Action::Replace;
                replacement[idx] = *other;
            }  // alphabet offers no alternative: keep
        }
    }

    NoisedPair pair;
    pair.target = entry.word;
    pair.positions = positions;
    for (std::size_t i = 0; i < word.size(); ++i) {
        switch (action[i]) {
            case Action::Keep:
                pair.source.push_back(utf8::encode(word[i]));
                break;
            case Action::Replace:
                pair.source.push_back(utf8::encode(replacement[i]));
                break;
            case Action::Corrupt:
                if (spec.corruption == Corruption::Mask)
                    pair.source.push_back(Vocabulary::mask_symbol());
                // delete mode: drop the character
                break;
        }
    }
    return pair;
}

// T5 span corruption. Each maximal run of adjacent sampled units collapses
// to one sentinel, assigned left to right; delete mode removes the sampled
// units without sentinels. Segment granularity computes runs over segment
// indices, one sentinel per maximal segment run.
inline NoisedPair corrupt_t5(const LexiconEntry& entry, const std::vector<std::size_t>& positions,
                             const NoiseSpec& spec, Rng& /*rng*/,
                             int sentinel_capacity = Vocabulary::kDefaultSentinels) {
    const std::u32string word = utf8::decode(entry.word);

    std::vector<std::size_t> units = positions;
    std::sort(units.begin(), units.end());

    // Maximal runs over unit indices.
    std::vector<std::pair<std::size_t, std::size_t>> runs;  // [first, last] inclusive
    for (std::size_t u : units) {
        if (!runs.empty() && runs.back().second + 1 == u)
            runs.back().second = u;
        else
            runs.emplace_back(u, u);
    }
    if (spec.corruption == Corruption::Mask &&
        runs.size() > static_cast<std::size_t>(sentinel_capacity))
        throw CapacityError("span run count " + std::to_string(runs.size()) +
                            " exceeds sentinel capacity " + std::to_string(sentinel_capacity));

    // Character span of a unit run.
    std::vector<std::size_t> seg_offsets;
    if (spec.granularity == Granularity::Segment) {
        if (!entry.segments) throw ConfigError("segment granularity requires segmented entries");
        seg_offsets.push_back(0);
        for (const auto& seg : *entry.segments)
            seg_offsets.push_back(seg_offsets.back() + utf8::length(seg));
    }
    auto char_span = [&](std::size_t first, std::size_t last) -> std::pair<std::size_t, std::size_t> {
        if (spec.granularity == Granularity::Char) {
            if (last >= word.size()) throw ConfigError("sampled position out of range");
            return {first, last + 1};
        }
        if (last + 1 >= seg_offsets.size()) throw ConfigError("sampled segment index out of range");
        return {seg_offsets[first], seg_offsets[last + 1]};
    };

    NoisedPair pair;
    pair.target = entry.word;
    pair.positions = positions;
    std::size_t cursor = 0;
    int sentinel = 0;
    for (const auto& [first, last] : runs) {
        const auto [begin, end] = char_span(first, last);
        for (std::size_t i = cursor; i < begin; ++i) pair.source.push_back(utf8::encode(word[i]));
        if (spec.corruption == Corruption::Mask)
            pair.source.push_back(Vocabulary::sentinel_symbol(sentinel++));
        cursor = end;
    }
    for (std::size_t i = cursor; i < word.size(); ++i) pair.source.push_back(utf8::encode(word[i]));
    return pair;
}

// Autoencoding: the word reproduced unchanged.
inline NoisedPair make_autoencode(const LexiconEntry& entry) {
    if (entry.word.empty()) throw ValidationError("cannot autoencode an empty word");
    NoisedPair pair;
    pair.target = entry.word;
    for (char32_t c : utf8::decode(entry.word)) pair.source.push_back(utf8::encode(c));
    return pair;
}

// Dispatch over the heuristic matrix. Callers re-noise entries every epoch;
// nothing is cached here.
inline NoisedPair noise_example(const LexiconEntry& entry, const NoiseSpec& spec,
                                const Vocabulary& vocab, Rng& rng) {
    if (spec.objective == Objective::AE) return make_autoencode(entry);
    const std::size_t n = unit_count(entry, spec.granularity);
    if (n == 0) throw ValidationError("cannot noise an empty word");
    const auto positions = sample_positions(n, spec, rng);
    if (spec.objective == Objective::CMLM) return corrupt_cmlm(entry, positions, spec, vocab, rng);
    return corrupt_t5(entry, positions, spec, rng, vocab.sentinel_count());
}

// CLI rendering: <MASK> as "@", sentinels as "<X0>", "<X1>", ...
inline std::string render_source(const NoisedPair& pair) {
    std::string out;
    for (const auto& tok : pair.source) {
        if (tok == Vocabulary::mask_symbol()) {
            out += "@";
        } else if (tok.size() > 7 && tok.compare(0, 6, "<SENT_") == 0 && tok.back() == '>') {
            out += "<X" + tok.substr(6, tok.size() - 7) + ">";
        } else {
            out += tok;
        }
    }
    return out;
}

inline NoiseSpec NoiseSpec::parse(std::string_view name) {
    auto fail = [&]() -> NoiseSpec {
        throw ConfigError("bad noise spec \"" + std::string(name) +
                          "\"; expected \"ae\" or objective-strategy-corruption-granularity");
    };
    NoiseSpec spec;
    if (name == "ae") {
        spec.objective = Objective::AE;
        return spec;
    }
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = name.find('-', start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(name.substr(start));
            break;
        }
        parts.emplace_back(name.substr(start, pos - start));
        start = pos + 1;
    }
    if (parts.size() != 4) return fail();
    if (parts[0] == "cmlm") spec.objective = Objective::CMLM;
    else if (parts[0] == "t5") spec.objective = Objective::T5;
    else return fail();
    if (parts[1] == "iid") spec.strategy = Strategy::IID;
    else if (parts[1] == "suffix") spec.strategy = Strategy::Suffix;
    else if (parts[1] == "prefix") spec.strategy = Strategy::Prefix;
    else return fail();
    if (parts[2] == "mask") spec.corruption = Corruption::Mask;
    else if (parts[2] == "delete") spec.corruption = Corruption::Delete;
    else return fail();
    if (parts[3] == "char") spec.granularity = Granularity::Char;
    else if (parts[3] == "segment") spec.granularity = Granularity::Segment;
    else return fail();
    return spec;
}

inline std::string NoiseSpec::name() const {
    if (objective == Objective::AE) return "ae";
    std::string out = objective == Objective::CMLM ? "cmlm" : "t5";
    out += strategy == Strategy::IID ? "-iid" : strategy == Strategy::Suffix ? "-suffix" : "-prefix";
    out += corruption == Corruption::Mask ? "-mask" : "-delete";
    out += granularity == Granularity::Char ? "-char" : "-segment";
    return out;
}

}  // namespace inflab
