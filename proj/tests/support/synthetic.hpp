#pragma once

#include <string>
#include <vector>

#include "inflab/corpus.hpp"
#include "inflab/rng.hpp"

// Synthetic agglutinative language for desk-scale training checks:
// CV-syllable stems and four mandatory suffix slots with three options each.
// Fully concatenative, so generalization from a few hundred pairs is
// expected rather than hoped for.

namespace inflab::testing {

struct SyntheticLanguage {
    // Distinct consonant pools so "novel" stems contain unseen trigrams.
    std::vector<std::string> base_consonants = {"b", "d", "g", "k", "l", "m", "n", "p"};
    std::vector<std::string> novel_consonants = {"r", "s", "t", "v", "z", "f"};
    std::vector<std::string> vowels = {"a", "e", "i", "o", "u"};
    std::vector<std::vector<std::string>> slot_suffixes = {
        {"ta", "ne", "ro"}, {"ki", "mu", "sa"}, {"le", "po", "vu"}, {"da", "gi", "nu"}};
    std::vector<std::vector<std::string>> slot_tags = {
        {"A1", "A2", "A3"}, {"B1", "B2", "B3"}, {"C1", "C2", "C3"}, {"D1", "D2", "D3"}};

    std::string syllable(Rng& rng, bool novel) const {
        const auto& cons = novel ? novel_consonants : base_consonants;
        return cons[rng.bounded(cons.size())] + vowels[rng.bounded(vowels.size())];
    }

    std::string stem(Rng& rng, bool novel = false) const {
        return syllable(rng, novel) + syllable(rng, novel);
    }

    InflectionExample inflect(const std::string& stem, const std::vector<std::size_t>& choice) const {
        InflectionExample ex;
        ex.lemma = stem;
        ex.target = stem;
        for (std::size_t slot = 0; slot < slot_suffixes.size(); ++slot) {
            ex.tags.push_back(slot_tags[slot][choice[slot]]);
            ex.target += slot_suffixes[slot][choice[slot]];
        }
        ex.pos = Pos::Verb;
        ex.paradigm_id = InflectionExample::make_paradigm_id(ex.lemma, ex.pos);
        return ex;
    }

    std::vector<std::size_t> random_choice(Rng& rng) const {
        std::vector<std::size_t> choice;
        for (std::size_t slot = 0; slot < slot_suffixes.size(); ++slot)
            choice.push_back(rng.bounded(slot_tags[slot].size()));
        return choice;
    }
};

struct SyntheticSplit {
    Dataset train;
    Dataset dev;
    Lexicon lexicon;  // unlabeled inflected forms, disjoint from train/dev pairs
};

// n_train + n_dev distinct (stem, tag-combo) pairs over a shared stem pool;
// every dev stem is attested in train. novel_dev_fraction of the dev rows
// instead use stems built from the held-out consonant pool (and those stems
// are covered by the unlabeled lexicon, not by train).
inline SyntheticSplit make_synthetic_split(std::size_t n_train, std::size_t n_dev,
                                           std::size_t n_lexicon, std::uint64_t seed,
                                           double novel_dev_fraction = 0.0) {
    SyntheticLanguage lang;
    Rng rng(seed);
    SyntheticSplit split;

    const std::size_t per_stem = 8;
    const std::size_t n_pairs = n_train + n_dev;
    const std::size_t n_stems = (n_pairs + per_stem - 1) / per_stem;

    std::vector<std::string> stems;
    std::unordered_set<std::string> seen_stems;
    while (stems.size() < n_stems) {
        std::string s = lang.stem(rng);
        if (seen_stems.insert(s).second) stems.push_back(s);
    }

    // Distinct tag combos per stem.
    std::vector<InflectionExample> pairs;
    for (const auto& s : stems) {
        std::unordered_set<std::string> combos;
        while (combos.size() < per_stem && pairs.size() < n_pairs + per_stem) {
            const auto choice = lang.random_choice(rng);
            std::string key;
            for (auto c : choice) key += static_cast<char>('0' + c);
            if (!combos.insert(key).second) continue;
            pairs.push_back(lang.inflect(s, choice));
        }
    }
    rng.shuffle(pairs);
    pairs.resize(n_pairs);

    // Keep the first train occurrence of each stem in train so dev stems
    // stay attested.
    std::unordered_set<std::string> stem_in_train;
    std::vector<InflectionExample> dev_pool;
    for (auto& ex : pairs) {
        if (split.train.size() < n_train || !stem_in_train.count(ex.lemma)) {
            if (stem_in_train.insert(ex.lemma).second || split.train.size() < n_train) {
                split.train.examples.push_back(ex);
                continue;
            }
        }
        dev_pool.push_back(ex);
    }
    while (split.train.size() > n_train) {
        dev_pool.push_back(split.train.examples.back());
        split.train.examples.pop_back();
    }
    for (auto& ex : dev_pool)
        if (split.dev.size() < n_dev) split.dev.examples.push_back(ex);

    // Replace a slice of dev with novel-stem inflections.
    const auto n_novel = static_cast<std::size_t>(novel_dev_fraction * split.dev.size());
    std::vector<std::string> novel_stems;
    for (std::size_t i = 0; i < n_novel; ++i) {
        std::string s = lang.stem(rng, /*novel=*/true);
        if (!seen_stems.insert(s).second) {
            --i;
            continue;
        }
        novel_stems.push_back(s);
        split.dev.examples[i] = lang.inflect(s, lang.random_choice(rng));
    }

    // Unlabeled words: inflected forms over both stem pools, none equal to a
    // supervised pair's target.
    std::unordered_set<std::string> supervised_targets;
    for (const auto& ex : split.train.examples) supervised_targets.insert(ex.target);
    for (const auto& ex : split.dev.examples) supervised_targets.insert(ex.target);
    std::unordered_set<std::string> lex_seen;
    while (split.lexicon.size() < n_lexicon) {
        const bool novel = !novel_stems.empty() && rng.real() < 0.5;
        std::string s;
        if (novel && !novel_stems.empty() && rng.real() < 0.6) {
            s = novel_stems[rng.bounded(novel_stems.size())];
        } else {
            s = lang.stem(rng, novel);
        }
        const auto word = lang.inflect(s, lang.random_choice(rng)).target;
        if (supervised_targets.count(word) || !lex_seen.insert(word).second) continue;
        LexiconEntry e;
        e.word = word;
        split.lexicon.entries.push_back(std::move(e));
    }
    return split;
}

}  // namespace inflab::testing
