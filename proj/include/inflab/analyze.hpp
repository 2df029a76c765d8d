#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "inflab/corpus.hpp"
#include "inflab/errors.hpp"
#include "inflab/utf8.hpp"

// Copy-vs-generate trigram analysis and cross-run result aggregation.
// copy_pct measures how much of a prediction is attested in the lemma's
// trigrams; train_pct how much is attested in the training output forms.

namespace inflab {

// All contiguous 3-character substrings; words shorter than 3 characters
// give the empty set.
inline std::unordered_set<std::string> char_trigrams(const std::string& word) {
    std::unordered_set<std::string> out;
    const std::u32string u = utf8::decode(word);
    for (std::size_t i = 0; i + 3 <= u.size(); ++i) out.insert(utf8::encode(u.substr(i, 3)));
    return out;
}

// The set of all character trigrams in the training data output forms.
inline std::unordered_set<std::string> training_output_trigrams(const Dataset& train) {
    std::unordered_set<std::string> out;
    for (const auto& ex : train.examples)
        for (auto& t : char_trigrams(ex.target)) out.insert(t);
    return out;
}

// Percentages are absent (not zero) when the prediction has no trigrams.
struct CopyRecord {
    std::size_t example_id = 0;
    std::optional<double> copy_pct;
    std::optional<double> train_pct;
};

inline CopyRecord copy_record(const std::string& prediction, const std::string& lemma,
                              const std::unordered_set<std::string>& train_trigrams,
                              std::size_t example_id = 0) {
    CopyRecord rec;
    rec.example_id = example_id;
    const auto pred = char_trigrams(prediction);
    if (pred.empty()) return rec;
    const auto lem = char_trigrams(lemma);
    std::size_t in_lemma = 0;
    std::size_t in_train = 0;
    for (const auto& t : pred) {
        if (lem.count(t)) ++in_lemma;
        if (train_trigrams.count(t)) ++in_train;
    }
    rec.copy_pct = static_cast<double>(in_lemma) / static_cast<double>(pred.size());
    rec.train_pct = static_cast<double>(in_train) / static_cast<double>(pred.size());
    return rec;
}

struct DisagreementReport {
    std::size_t disagreements = 0;
    // Means over defined records on the disagreement subset; absent when no
    // record is defined.
    std::optional<double> mean_copy_a, mean_train_a;
    std::optional<double> mean_copy_b, mean_train_b;
    std::vector<CopyRecord> records_a, records_b;
};

// Restricts to dev examples where the two prediction files differ and
// reports per-model mean copy and train percentages.
inline DisagreementReport disagreement_analysis(const std::vector<std::string>& preds_a,
                                                const std::vector<std::string>& preds_b,
                                                const Dataset& dev, const Dataset& train) {
    if (preds_a.size() != dev.size() || preds_b.size() != dev.size())
        throw ValidationError("prediction files do not cover the same dev examples");
    const auto train_tri = training_output_trigrams(train);

    DisagreementReport rep;
    double sum_copy_a = 0, sum_train_a = 0, sum_copy_b = 0, sum_train_b = 0;
    std::size_t n_a = 0, n_b = 0;
    for (std::size_t i = 0; i < dev.size(); ++i) {
        if (preds_a[i] == preds_b[i]) continue;
        ++rep.disagreements;
        const auto& lemma = dev.examples[i].lemma;
        const CopyRecord a = copy_record(preds_a[i], lemma, train_tri, i);
        const CopyRecord b = copy_record(preds_b[i], lemma, train_tri, i);
        rep.records_a.push_back(a);
        rep.records_b.push_back(b);
        if (a.copy_pct) {
            sum_copy_a += *a.copy_pct;
            sum_train_a += *a.train_pct;
            ++n_a;
        }
        if (b.copy_pct) {
            sum_copy_b += *b.copy_pct;
            sum_train_b += *b.train_pct;
            ++n_b;
        }
    }
    if (n_a) {
        rep.mean_copy_a = sum_copy_a / static_cast<double>(n_a);
        rep.mean_train_a = sum_train_a / static_cast<double>(n_a);
    }
    if (n_b) {
        rep.mean_copy_b = sum_copy_b / static_cast<double>(n_b);
        rep.mean_train_b = sum_train_b / static_cast<double>(n_b);
    }
    return rep;
}

// One accuracy record per run, keyed for the results-table layout.
struct RunResult {
    std::string language;
    std::string dataset;
    std::string setup;
    double accuracy = 0.0;
};

struct ResultsTable {
    std::vector<std::string> datasets;  // row order, first appearance
    std::vector<std::string> setups;    // column order, first appearance
    // (dataset, setup) -> accuracies over languages
    std::map<std::pair<std::string, std::string>, std::vector<double>> cells;

    std::optional<double> mean(const std::string& dataset, const std::string& setup) const {
        const auto it = cells.find({dataset, setup});
        if (it == cells.end() || it->second.empty()) return std::nullopt;
        double sum = 0;
        for (double a : it->second) sum += a;
        return sum / static_cast<double>(it->second.size());
    }

    // Markdown with the best mean per row bolded and the second best
    // underlined.
    std::string to_markdown() const {
        std::string out = "| dataset |";
        for (const auto& s : setups) out += " " + s + " |";
        out += "\n|---|";
        for (std::size_t i = 0; i < setups.size(); ++i) out += "---|";
        out += "\n";
        char buf[64];
        for (const auto& d : datasets) {
            std::vector<std::pair<double, std::size_t>> ranked;
            for (std::size_t i = 0; i < setups.size(); ++i)
                if (auto m = mean(d, setups[i])) ranked.push_back({*m, i});
            std::sort(ranked.begin(), ranked.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
            out += "| " + d + " |";
            for (std::size_t i = 0; i < setups.size(); ++i) {
                const auto m = mean(d, setups[i]);
                if (!m) {
                    out += " - |";
                    continue;
                }
                std::snprintf(buf, sizeof(buf), "%.2f", *m);
                std::string cell = buf;
                if (!ranked.empty() && ranked[0].second == i) cell = "**" + cell + "**";
                else if (ranked.size() > 1 && ranked[1].second == i) cell = "<u>" + cell + "</u>";
                out += " " + cell + " |";
            }
            out += "\n";
        }
        return out;
    }
};

inline ResultsTable aggregate(const std::vector<RunResult>& results) {
    ResultsTable table;
    for (const auto& r : results) {
        if (std::find(table.datasets.begin(), table.datasets.end(), r.dataset) ==
            table.datasets.end())
            table.datasets.push_back(r.dataset);
        if (std::find(table.setups.begin(), table.setups.end(), r.setup) == table.setups.end())
            table.setups.push_back(r.setup);
        table.cells[{r.dataset, r.setup}].push_back(r.accuracy);
    }
    return table;
}

}  // namespace inflab
