#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "inflab/errors.hpp"
#include "inflab/rng.hpp"
#include "inflab/utf8.hpp"

// Data types, file ingestion, dataset subsampling, vocabulary construction
// and corpus statistics.

namespace inflab {

enum class Pos { Noun, Verb, Adj, Other };

inline const char* pos_name(Pos p) {
    switch (p) {
        case Pos::Noun: return "noun";
        case Pos::Verb: return "verb";
        case Pos::Adj: return "adj";
        default: return "other";
    }
}

// Maps a POS column value or a leading tag to a coarse POS. SIGMORPHON tag
// bundles lead with V/N/ADJ; UD columns use VERB/NOUN/ADJ.
inline Pos parse_pos(std::string_view s) {
    std::string u(s);
    std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (u == "N" || u == "NOUN") return Pos::Noun;
    if (u == "V" || u == "VERB") return Pos::Verb;
    if (u == "ADJ" || u == "A" || u == "JJ") return Pos::Adj;
    return Pos::Other;
}

// One supervised triple: lemma + tag bundle -> inflected target form.
struct InflectionExample {
    std::string lemma;               // UTF-8
    std::vector<std::string> tags;   // tag bundle, file order
    std::string target;              // UTF-8
    Pos pos = Pos::Other;
    std::string paradigm_id;         // (lemma, pos); files carry no explicit key

    static std::string make_paradigm_id(const std::string& lemma, Pos pos) {
        return lemma + '\x1f' + pos_name(pos);
    }
};

struct Dataset {
    std::vector<InflectionExample> examples;

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }
};

// One unlabeled word, optionally carrying oracle morpheme boundaries.
struct LexiconEntry {
    std::string word;  // UTF-8, non-empty
    std::optional<std::vector<std::string>> segments;  // concatenation == word
    std::optional<std::string> pos;
};

// Duplicates permitted: sampling with replacement yields repeats.
struct Lexicon {
    std::vector<LexiconEntry> entries;

    std::size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }
};

struct StatsRecord {
    std::size_t samples = 0;     // |dataset| + |lexicon|
    std::size_t types = 0;       // unique forms over lemmas, targets and words
    std::size_t median_len = 0;  // lower median of character counts per form occurrence
    std::size_t ngrams = 0;      // unique character bigrams + trigrams over types
};

// Ordered set of character symbols (Unicode scalar values), no duplicates.
struct Alphabet {
    std::vector<char32_t> symbols;  // sorted ascending

    bool contains(char32_t c) const {
        return std::binary_search(symbols.begin(), symbols.end(), c);
    }
    std::size_t size() const { return symbols.size(); }

    // Uniform draw excluding `original`; nullopt when no alternative exists.
    std::optional<char32_t> random_other(char32_t original, Rng& rng) const {
        const auto it = std::lower_bound(symbols.begin(), symbols.end(), original);
        const bool present = it != symbols.end() && *it == original;
        const std::size_t n = symbols.size() - (present ? 1 : 0);
        if (n == 0) return std::nullopt;
        std::size_t j = static_cast<std::size_t>(rng.bounded(n));
        if (present && j >= static_cast<std::size_t>(it - symbols.begin())) ++j;
        return symbols[j];
    }
};

// Symbol table over reserved symbols, tag symbols and characters.
// Id layout is deterministic: PAD, BOS, EOS, UNK, MASK, TASK, SENT_0.., then
// tags sorted lexicographically, then characters sorted by code point.
class Vocabulary {
public:
    static constexpr int kDefaultSentinels = 50;

    static const std::string& pad_symbol() { static const std::string s = "<PAD>"; return s; }
    static const std::string& bos_symbol() { static const std::string s = "<BOS>"; return s; }
    static const std::string& eos_symbol() { static const std::string s = "<EOS>"; return s; }
    static const std::string& unk_symbol() { static const std::string s = "<UNK>"; return s; }
    static const std::string& mask_symbol() { static const std::string s = "<MASK>"; return s; }
    static const std::string& task_symbol() { static const std::string s = "<TASK>"; return s; }
    static std::string sentinel_symbol(int i) { return "<SENT_" + std::to_string(i) + ">"; }

    Vocabulary() = default;

    // Deterministic construction from explicit tag and character lists.
    Vocabulary(std::vector<std::string> tags, std::vector<char32_t> chars, int sentinel_count) {
        if (sentinel_count < 0) throw ConfigError("sentinel_count must be >= 0");
        sentinel_count_ = sentinel_count;
        add(pad_symbol());
        add(bos_symbol());
        add(eos_symbol());
        add(unk_symbol());
        add(mask_symbol());
        add(task_symbol());
        for (int i = 0; i < sentinel_count; ++i) add(sentinel_symbol(i));
        reserved_count_ = symbols_.size();

        std::sort(tags.begin(), tags.end());
        tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
        for (const auto& t : tags)
            if (add(escape(t))) tags_.push_back(t);

        std::sort(chars.begin(), chars.end());
        chars.erase(std::unique(chars.begin(), chars.end()), chars.end());
        alphabet_.symbols = chars;
        for (char32_t c : chars) add(escape(utf8::encode(c)));
    }

    int pad() const { return 0; }
    int bos() const { return 1; }
    int eos() const { return 2; }
    int unk() const { return 3; }
    int mask() const { return 4; }
    int task() const { return 5; }
    int sentinel(int i) const {
        if (i < 0 || i >= sentinel_count_)
            throw CapacityError("sentinel index " + std::to_string(i) + " exceeds capacity " +
                                std::to_string(sentinel_count_));
        return 6 + i;
    }
    int sentinel_count() const { return sentinel_count_; }

    std::size_t size() const { return symbols_.size(); }
    std::size_t reserved_count() const { return reserved_count_; }
    const Alphabet& alphabet() const { return alphabet_; }
    const std::vector<std::string>& tags() const { return tags_; }

    // Id of a data symbol (tag or character surface); UNK when absent.
    int id_or_unk(const std::string& data_symbol) const {
        const auto it = id_of_.find(escape(data_symbol));
        return it == id_of_.end() ? unk() : it->second;
    }
    bool knows(const std::string& data_symbol) const {
        return id_of_.count(escape(data_symbol)) != 0;
    }
    // Id of an internal symbol string (reserved names included).
    std::optional<int> id_of_internal(const std::string& symbol) const {
        const auto it = id_of_.find(symbol);
        if (it == id_of_.end()) return std::nullopt;
        return it->second;
    }
    const std::string& symbol(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size())
            throw ConfigError("symbol id out of range: " + std::to_string(id));
        return symbols_[static_cast<std::size_t>(id)];
    }
    // Data surface of an id: unescaped for tags/characters, the reserved
    // name itself otherwise.
    std::string surface(int id) const { return unescape(symbol(id)); }

    bool is_reserved(int id) const { return id >= 0 && static_cast<std::size_t>(id) < reserved_count_; }

private:
    // A data symbol that textually collides with a reserved surface form is
    // escaped with a leading backslash, never dropped. Injective: escaped
    // forms never collide with reserved names or with other data symbols.
    static std::string escape(const std::string& s) {
        if (!s.empty() && s.front() == '\\') return "\\" + s;
        if (is_reserved_name(s)) return "\\" + s;
        return s;
    }
    static std::string unescape(const std::string& s) {
        if (!s.empty() && s.front() == '\\') return s.substr(1);
        return s;
    }
    static bool is_reserved_name(const std::string& s) {
        static const std::set<std::string> base = {pad_symbol(), bos_symbol(), eos_symbol(),
                                                   unk_symbol(), mask_symbol(), task_symbol()};
        if (base.count(s)) return true;
        // Any "<SENT_<digits>>" is treated as reserved independent of the
        // configured sentinel count, so the escape rule does not depend on it.
        if (s.size() > 7 && s.compare(0, 6, "<SENT_") == 0 && s.back() == '>') {
            for (std::size_t i = 6; i + 1 < s.size(); ++i)
                if (s[i] < '0' || s[i] > '9') return false;
            return true;
        }
        return false;
    }

    bool add(const std::string& symbol) {
        if (id_of_.count(symbol)) return false;
        id_of_.emplace(symbol, static_cast<int>(symbols_.size()));
        symbols_.push_back(symbol);
        return true;
    }

    std::vector<std::string> symbols_;
    std::unordered_map<std::string, int> id_of_;
    std::vector<std::string> tags_;
    Alphabet alphabet_;
    std::size_t reserved_count_ = 0;
    int sentinel_count_ = 0;
};

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

inline std::ifstream open_for_read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    return in;
}

}  // namespace detail

// Supervised TSV: lemma<TAB>target<TAB>tag1;tag2;... with an optional fourth
// POS column. Empty files yield an empty Dataset.
enum class SupervisedFormat { LemmaTargetTags, LemmaTagsTarget };

inline Dataset load_supervised(const std::string& path,
                               SupervisedFormat format = SupervisedFormat::LemmaTargetTags) {
    auto in = detail::open_for_read(path);
    Dataset ds;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        const auto cols = detail::split(line, '\t');
        if (cols.size() < 3 || cols.size() > 4)
            throw ParseError("expected 3 or 4 tab-separated columns, got " + std::to_string(cols.size()),
                             lineno);
        InflectionExample ex;
        ex.lemma = cols[0];
        const std::string& tag_col = format == SupervisedFormat::LemmaTargetTags ? cols[2] : cols[1];
        ex.target = format == SupervisedFormat::LemmaTargetTags ? cols[1] : cols[2];
        for (auto& t : detail::split(tag_col, ';'))
            if (!t.empty()) ex.tags.push_back(std::move(t));
        if (ex.lemma.empty()) throw ParseError("empty lemma", lineno);
        if (ex.target.empty()) throw ParseError("empty target", lineno);
        if (ex.tags.empty()) throw ParseError("empty tag bundle", lineno);
        ex.pos = cols.size() == 4 ? parse_pos(cols[3]) : parse_pos(ex.tags.front());
        ex.paradigm_id = InflectionExample::make_paradigm_id(ex.lemma, ex.pos);
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

// Lexicon: one word per line, optional word<TAB>pos. Words shorter than
// min_len characters are dropped; web_filter drops tokens containing "@"
// or "www".
inline Lexicon load_lexicon(const std::string& path, std::size_t min_len = 3, bool web_filter = false) {
    auto in = detail::open_for_read(path);
    Lexicon lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        const auto cols = detail::split(line, '\t');
        if (cols.size() > 2) throw ParseError("expected at most 2 columns", lineno);
        LexiconEntry e;
        e.word = cols[0];
        if (e.word.empty()) throw ParseError("empty word", lineno);
        if (cols.size() == 2 && !cols[1].empty()) e.pos = cols[1];
        if (utf8::length(e.word) < min_len) continue;
        if (web_filter &&
            (e.word.find('@') != std::string::npos || e.word.find("www") != std::string::npos))
            continue;
        lex.entries.push_back(std::move(e));
    }
    return lex;
}

// Segmented lexicon: word<TAB>seg where seg joins morphs with `separator`.
// Only surface segmentations are accepted: the concatenation of the morphs
// must reproduce the word exactly (canonical rows must first pass through
// the segment module).
inline Lexicon load_segmented(const std::string& path, char32_t separator = U'-') {
    auto in = detail::open_for_read(path);
    Lexicon lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        const auto cols = detail::split(line, '\t');
        if (cols.size() != 2) throw ParseError("expected word<TAB>segmentation", lineno);
        LexiconEntry e;
        e.word = cols[0];
        if (e.word.empty()) throw ParseError("empty word", lineno);

        const std::u32string seg = utf8::decode(cols[1]);
        std::vector<std::string> segments;
        std::u32string current;
        std::string concat;
        for (char32_t c : seg) {
            if (c == separator) {
                if (current.empty()) throw ValidationError("empty morph in segmentation", lineno);
                segments.push_back(utf8::encode(current));
                concat += segments.back();
                current.clear();
            } else {
                current.push_back(c);
            }
        }
        if (current.empty()) throw ValidationError("empty morph in segmentation", lineno);
        segments.push_back(utf8::encode(current));
        concat += segments.back();
        if (concat != e.word)
            throw ValidationError("segmentation \"" + cols[1] + "\" does not concatenate to \"" +
                                      e.word + "\"; surface segmentation required",
                                  lineno);
        e.segments = std::move(segments);
        lex.entries.push_back(std::move(e));
    }
    return lex;
}

// Per-POS supervised subsampling, one paradigm at a time. Paradigms are
// visited in rng-shuffled order; rows within a paradigm keep file order; the
// final paradigm is truncated so each POS contributes exactly per_pos rows
// (all of them when the POS has fewer).
inline Dataset sample_supervised(const Dataset& full, std::size_t per_pos, Rng& rng) {
    if (per_pos < 1) throw ConfigError("per_pos must be >= 1");
    Dataset out;
    const Pos order[] = {Pos::Noun, Pos::Verb, Pos::Adj, Pos::Other};
    for (Pos pos : order) {
        // Paradigm keys in order of first appearance, then shuffled.
        std::vector<std::string> keys;
        std::unordered_map<std::string, std::vector<std::size_t>> rows;
        for (std::size_t i = 0; i < full.examples.size(); ++i) {
            const auto& ex = full.examples[i];
            if (ex.pos != pos) continue;
            auto [it, fresh] = rows.try_emplace(ex.paradigm_id);
            if (fresh) keys.push_back(ex.paradigm_id);
            it->second.push_back(i);
        }
        if (keys.empty()) continue;
        rng.shuffle(keys);
        std::size_t taken = 0;
        for (const auto& key : keys) {
            if (taken >= per_pos) break;
            for (std::size_t idx : rows[key]) {
                if (taken >= per_pos) break;
                out.examples.push_back(full.examples[idx]);
                ++taken;
            }
        }
    }
    return out;
}

// Uniform lexicon sampling. With replacement draws over entries; without
// replacement draws over unique word types. allow_short mirrors languages
// whose pools hold fewer types than requested: the whole unique pool is
// returned instead of failing.
inline Lexicon sample_lexicon(const Lexicon& pool, std::size_t size, bool with_replacement,
                              const std::optional<std::set<std::string>>& pos_filter, Rng& rng,
                              bool allow_short = true) {
    std::vector<const LexiconEntry*> filtered;
    filtered.reserve(pool.entries.size());
    for (const auto& e : pool.entries) {
        if (pos_filter && (!e.pos || !pos_filter->count(*e.pos))) continue;
        filtered.push_back(&e);
    }

    Lexicon out;
    if (size == 0) return out;
    if (with_replacement) {
        if (filtered.empty()) throw CapacityError("cannot sample from an empty pool");
        out.entries.reserve(size);
        for (std::size_t i = 0; i < size; ++i)
            out.entries.push_back(*filtered[rng.bounded(filtered.size())]);
        return out;
    }

    // Unique types, first occurrence wins.
    std::vector<const LexiconEntry*> unique;
    std::unordered_set<std::string> seen;
    for (const auto* e : filtered)
        if (seen.insert(e->word).second) unique.push_back(e);

    if (size > unique.size() && !allow_short)
        throw CapacityError("requested " + std::to_string(size) + " unique words but pool has " +
                            std::to_string(unique.size()));
    const std::size_t take = std::min(size, unique.size());
    // Partial Fisher-Yates over the unique pool.
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.bounded(unique.size() - i));
        std::swap(unique[i], unique[j]);
        out.entries.push_back(*unique[i]);
    }
    return out;
}

// Corpus statistics over the supervised data and the lexicon together.
// The form multiset counts every lemma, target and lexicon word once per
// occurrence; types and n-grams are computed over the unique forms. The
// median of an even count is the lower median.
inline StatsRecord corpus_stats(const Dataset& dataset, const Lexicon& lexicon) {
    StatsRecord rec;
    rec.samples = dataset.size() + lexicon.size();

    std::vector<std::size_t> lens;
    std::unordered_set<std::string> types;
    auto visit = [&](const std::string& form) {
        lens.push_back(utf8::length(form));
        types.insert(form);
    };
    for (const auto& ex : dataset.examples) {
        visit(ex.lemma);
        visit(ex.target);
    }
    for (const auto& e : lexicon.entries) visit(e.word);

    rec.types = types.size();
    if (!lens.empty()) {
        std::sort(lens.begin(), lens.end());
        rec.median_len = lens[(lens.size() - 1) / 2];
    }

    std::unordered_set<std::u32string> grams;
    for (const auto& t : types) {
        const std::u32string u = utf8::decode(t);
        for (std::size_t i = 0; i + 2 <= u.size(); ++i) grams.insert(u.substr(i, 2));
        for (std::size_t i = 0; i + 3 <= u.size(); ++i) grams.insert(u.substr(i, 3));
    }
    rec.ngrams = grams.size();
    return rec;
}

// Vocabulary over everything the two corpora contain plus the reserved block.
inline Vocabulary build_vocabulary(const Dataset& dataset, const Lexicon& lexicon,
                                   int sentinel_count = Vocabulary::kDefaultSentinels) {
    std::vector<std::string> tags;
    std::vector<char32_t> chars;
    auto visit_word = [&](const std::string& w) {
        for (char32_t c : utf8::decode(w)) chars.push_back(c);
    };
    for (const auto& ex : dataset.examples) {
        visit_word(ex.lemma);
        visit_word(ex.target);
        for (const auto& t : ex.tags) tags.push_back(t);
    }
    for (const auto& e : lexicon.entries) visit_word(e.word);
    return Vocabulary(std::move(tags), std::move(chars), sentinel_count);
}

}  // namespace inflab
