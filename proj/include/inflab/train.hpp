#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "inflab/corpus.hpp"
#include "inflab/errors.hpp"
#include "inflab/model.hpp"
#include "inflab/noise.hpp"
#include "inflab/rng.hpp"

// Multitask training loop: supervised inflection and freshly noised
// auxiliary instances mixed in shared batches, Adam with a warmup
// inverse-square-root schedule, periodic greedy-decode evaluation and
// best-dev checkpoint selection.

namespace inflab {

struct TrainConfig {
    double lr_peak = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-8;
    int warmup_steps = 4000;
    int batch_size = 400;
    int max_epochs = 800;
    int eval_every = 16;         // epochs between dev evaluations
    int patience = 0;            // evaluations without improvement; 0 disables
    long long max_steps = 0;     // hard step cap; 0 disables
    double target_dev_accuracy = 0.0;  // stop once reached; 0 disables
    int threads = 8;
    std::uint64_t seed = 0;

    void validate() const {
        if (lr_peak <= 0 || beta1 <= 0 || beta2 <= 0 || adam_eps <= 0 || warmup_steps < 1 ||
            batch_size < 1 || max_epochs < 0 || eval_every < 1 || patience < 0 || threads < 1)
            throw ConfigError("invalid training configuration");
    }
};

enum class TaskKind { Supervised, Auxiliary };

struct TrainingInstance {
    std::vector<int> source;  // BOS ... tags-or-TASK ... EOS
    std::vector<int> target;  // BOS ... EOS
    TaskKind task = TaskKind::Supervised;
};

struct EvalPoint {
    int epoch = 0;
    double accuracy = 0.0;
};

struct TrainReport {
    std::vector<double> loss_curve;  // per-epoch mean batch loss
    std::vector<EvalPoint> dev_curve;
    std::string best_checkpoint_id = "initial";
    double best_dev_accuracy = 0.0;
    std::optional<double> final_test_accuracy;
    long long steps = 0;
    int epochs_run = 0;
    std::size_t truncated_predictions = 0;  // decodes that hit the length cap at the best eval
};

// Warmup inverse square root schedule: peak at warmup_steps.
inline double lr_at(long long step, const TrainConfig& config) {
    if (step < 1) throw ConfigError("lr_at requires step >= 1");
    const double s = static_cast<double>(step);
    const double w = static_cast<double>(config.warmup_steps);
    return config.lr_peak * std::min(s / w, std::sqrt(w / s));
}

inline std::vector<int> encode_target_word(const std::string& word, const Vocabulary& vocab) {
    std::vector<int> ids{vocab.bos()};
    for (char32_t c : utf8::decode(word)) ids.push_back(vocab.id_or_unk(utf8::encode(c)));
    ids.push_back(vocab.eos());
    return ids;
}

// Supervised source layout: BOS, lemma characters, tag tokens, EOS.
inline TrainingInstance encode_supervised(const InflectionExample& ex, const Vocabulary& vocab) {
    TrainingInstance inst;
    inst.task = TaskKind::Supervised;
    inst.source.push_back(vocab.bos());
    for (char32_t c : utf8::decode(ex.lemma)) inst.source.push_back(vocab.id_or_unk(utf8::encode(c)));
    for (const auto& t : ex.tags) inst.source.push_back(vocab.id_or_unk(t));
    inst.source.push_back(vocab.eos());
    inst.target = encode_target_word(ex.target, vocab);
    return inst;
}

// Auxiliary source layout: BOS, corrupted symbols, TASK, EOS.
inline TrainingInstance encode_auxiliary(const NoisedPair& pair, const Vocabulary& vocab) {
    TrainingInstance inst;
    inst.task = TaskKind::Auxiliary;
    inst.source.push_back(vocab.bos());
    for (const auto& tok : pair.source) {
        const auto internal = vocab.id_of_internal(tok);
        if (internal && vocab.is_reserved(*internal))
            inst.source.push_back(*internal);  // <MASK>, <SENT_k>
        else
            inst.source.push_back(vocab.id_or_unk(tok));
    }
    inst.source.push_back(vocab.task());
    inst.source.push_back(vocab.eos());
    inst.target = encode_target_word(pair.target, vocab);
    return inst;
}

// The union of both instance sets shuffled jointly and cut into batches of
// batch_size (last batch smaller); tasks are never segregated.
inline std::vector<std::vector<const TrainingInstance*>> build_epoch_batches(
    const std::vector<TrainingInstance>& supervised, const std::vector<TrainingInstance>& auxiliary,
    std::size_t batch_size, Rng& rng) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (supervised.empty() && auxiliary.empty()) throw ConfigError("no instances to batch");
    std::vector<const TrainingInstance*> all;
    all.reserve(supervised.size() + auxiliary.size());
    for (const auto& i : supervised) all.push_back(&i);
    for (const auto& i : auxiliary) all.push_back(&i);
    rng.shuffle(all);
    std::vector<std::vector<const TrainingInstance*>> batches;
    for (std::size_t start = 0; start < all.size(); start += batch_size) {
        const std::size_t end = std::min(all.size(), start + batch_size);
        batches.emplace_back(all.begin() + start, all.begin() + end);
    }
    return batches;
}

struct DecodeResult {
    std::string text;
    bool truncated = false;
};

// Greedy decoding from BOS until EOS or max_len_out; the cap defaults to
// max(32, 2 * source length). EOS is stripped and ids map back to surfaces.
inline DecodeResult greedy_decode(const Model& model, const Vocabulary& vocab,
                                  const std::vector<int>& source, std::size_t max_len_out = 0) {
    if (max_len_out == 0) max_len_out = std::max<std::size_t>(32, 2 * source.size());
    max_len_out = std::min<std::size_t>(max_len_out, static_cast<std::size_t>(model.config().max_len) - 1);
    const Mat enc_out = encode_source(model, source);
    std::vector<int> prefix{vocab.bos()};
    DecodeResult out;
    out.truncated = true;
    for (std::size_t step = 0; step < max_len_out; ++step) {
        const Mat logits = decode_prefix(model, prefix, enc_out);
        Eigen::Index best = 0;
        logits.row(logits.rows() - 1).maxCoeff(&best);
        const int next = static_cast<int>(best);
        if (next == vocab.eos()) {
            out.truncated = false;
            break;
        }
        prefix.push_back(next);
        out.text += vocab.surface(next);
    }
    return out;
}

namespace detail {

// Fixed round-robin sharding; shard results are reduced in shard order so
// outputs do not depend on thread scheduling.
template <typename F>
void run_sharded(int shards, F&& fn) {
    if (shards <= 1) {
        fn(0);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(shards - 1);
    for (int s = 1; s < shards; ++s) pool.emplace_back(std::ref(fn), s);
    fn(0);
    for (auto& t : pool) t.join();
}

}  // namespace detail

struct EvaluationResult {
    double accuracy = 0.0;
    std::vector<std::string> predictions;
    std::size_t truncated = 0;
};

// Exact-match accuracy with per-example predictions.
inline EvaluationResult evaluate_detailed(const Model& model, const Dataset& dataset,
                                          const Vocabulary& vocab, int threads = 1) {
    if (dataset.empty()) throw ConfigError("cannot evaluate on an empty dataset");
    EvaluationResult res;
    res.predictions.assign(dataset.size(), {});
    std::vector<unsigned char> truncated(dataset.size(), 0);
    std::vector<unsigned char> correct(dataset.size(), 0);
    auto worker = [&](int shard) {
        for (std::size_t i = shard; i < dataset.size(); i += static_cast<std::size_t>(threads)) {
            const auto inst = encode_supervised(dataset.examples[i], vocab);
            const DecodeResult dec = greedy_decode(model, vocab, inst.source);
            res.predictions[i] = dec.text;
            truncated[i] = dec.truncated ? 1 : 0;
            correct[i] = dec.text == dataset.examples[i].target ? 1 : 0;
        }
    };
    detail::run_sharded(std::max(1, threads), worker);
    std::size_t n_correct = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        n_correct += correct[i];
        res.truncated += truncated[i];
    }
    res.accuracy = static_cast<double>(n_correct) / static_cast<double>(dataset.size());
    return res;
}

// Fraction of examples whose decoded string equals the target exactly.
inline double evaluate(const Model& model, const Dataset& dataset, const Vocabulary& vocab,
                       int threads = 1) {
    return evaluate_detailed(model, dataset, vocab, threads).accuracy;
}

namespace detail {

inline void check_symbol_coverage(const Dataset& supervised, const Lexicon& lexicon,
                                  const Vocabulary& vocab) {
    auto check_word = [&](const std::string& w) {
        for (char32_t c : utf8::decode(w))
            if (!vocab.knows(utf8::encode(c)))
                throw ConfigError("vocabulary does not cover character \"" + utf8::encode(c) +
                                  "\" in \"" + w + "\"");
    };
    for (const auto& ex : supervised.examples) {
        check_word(ex.lemma);
        check_word(ex.target);
        for (const auto& t : ex.tags)
            if (!vocab.knows(t)) throw ConfigError("vocabulary does not cover tag \"" + t + "\"");
    }
    for (const auto& e : lexicon.entries) check_word(e.word);
}

// Stream tags for the independent rng lanes of one run.
constexpr std::uint64_t kStreamBatches = 1;
constexpr std::uint64_t kStreamNoise = 2;
constexpr std::uint64_t kStreamDropout = 3;

}  // namespace detail

// Multitask training. Auxiliary instances are regenerated from the lexicon
// every epoch (dynamic noising); both tasks share the label-smoothed
// cross-entropy, summed over each batch and normalized by its non-PAD token
// count. The model holds the best-dev parameters on return (final
// parameters when no evaluation ran).
inline TrainReport train(Model& model, const Dataset& supervised, const Lexicon& lexicon,
                         const std::optional<NoiseSpec>& noise_spec, const TrainConfig& config,
                         const Dataset& dev, const Vocabulary& vocab, const Dataset* test = nullptr,
                         std::FILE* log = nullptr) {
    config.validate();
    if (noise_spec) noise_spec->validate();
    if (supervised.empty() && (lexicon.empty() || !noise_spec))
        throw ConfigError("nothing to train on");
    detail::check_symbol_coverage(supervised, lexicon, vocab);

    std::vector<TrainingInstance> sup_instances;
    sup_instances.reserve(supervised.size());
    for (const auto& ex : supervised.examples) sup_instances.push_back(encode_supervised(ex, vocab));

    const std::size_t n_params = model.parameter_count();
    const double smoothing = model.config().label_smoothing;
    const int threads = config.threads;
    std::vector<std::vector<double>> shard_grads(threads);
    std::vector<double> grad(n_params, 0.0);
    std::vector<double> adam_m(n_params, 0.0);
    std::vector<double> adam_v(n_params, 0.0);

    TrainReport report;
    std::vector<double> best_params;
    int evals_since_improvement = 0;
    bool have_best = false;
    bool stop = false;

    const std::uint64_t batch_seed = Rng::derive(config.seed, detail::kStreamBatches);
    const std::uint64_t noise_seed = Rng::derive(config.seed, detail::kStreamNoise);
    const std::uint64_t dropout_seed = Rng::derive(config.seed, detail::kStreamDropout);

    auto run_eval = [&](int epoch) {
        if (dev.empty()) return;
        const EvaluationResult ev = evaluate_detailed(model, dev, vocab, threads);
        report.dev_curve.push_back({epoch, ev.accuracy});
        if (log)
            std::fprintf(log, "[inflab] epoch %d dev_accuracy %.4f (%zu truncated)\n", epoch,
                         ev.accuracy, ev.truncated);
        if (!have_best || ev.accuracy > report.best_dev_accuracy) {
            have_best = true;
            report.best_dev_accuracy = ev.accuracy;
            report.best_checkpoint_id = "epoch-" + std::to_string(epoch);
            report.truncated_predictions = ev.truncated;
            best_params = model.params();
            evals_since_improvement = 0;
        } else {
            ++evals_since_improvement;
        }
        if (config.patience > 0 && evals_since_improvement >= config.patience) stop = true;
        if (config.target_dev_accuracy > 0.0 && ev.accuracy >= config.target_dev_accuracy)
            stop = true;
    };

    for (int epoch = 1; epoch <= config.max_epochs && !stop; ++epoch) {
        // Fresh auxiliary noising for this epoch.
        std::vector<TrainingInstance> aux_instances;
        if (noise_spec && !lexicon.empty()) {
            aux_instances.reserve(lexicon.size());
            for (std::size_t i = 0; i < lexicon.entries.size(); ++i) {
                Rng noise_rng = Rng::stream(noise_seed, static_cast<std::uint64_t>(epoch), i);
                aux_instances.push_back(
                    encode_auxiliary(noise_example(lexicon.entries[i], *noise_spec, vocab, noise_rng),
                                     vocab));
            }
        }

        Rng batch_rng = Rng::stream(batch_seed, static_cast<std::uint64_t>(epoch));
        const auto batches = build_epoch_batches(sup_instances, aux_instances,
                                                 static_cast<std::size_t>(config.batch_size),
                                                 batch_rng);

        double epoch_loss = 0.0;
        std::size_t epoch_batches = 0;
        for (const auto& batch : batches) {
            const long long step = report.steps + 1;
            std::vector<double> shard_loss(threads, 0.0);
            std::vector<std::size_t> shard_tokens(threads, 0);
            auto worker = [&](int shard) {
                auto& g = shard_grads[shard];
                g.assign(n_params, 0.0);
                for (std::size_t i = shard; i < batch.size(); i += static_cast<std::size_t>(threads)) {
                    Rng drop_rng = Rng::stream(dropout_seed, static_cast<std::uint64_t>(step), i);
                    const auto r = forward_backward(
                        model, batch[i]->source, batch[i]->target, smoothing, g,
                        model.config().dropout > 0.0 ? &drop_rng : nullptr);
                    shard_loss[shard] += r.loss_sum;
                    shard_tokens[shard] += r.tokens;
                }
            };
            detail::run_sharded(threads, worker);

            double loss_sum = 0.0;
            std::size_t tokens = 0;
            for (int s = 0; s < threads; ++s) {
                loss_sum += shard_loss[s];
                tokens += shard_tokens[s];
            }
            Eigen::Map<Eigen::ArrayXd> g(grad.data(), static_cast<Eigen::Index>(n_params));
            g.setZero();
            for (int s = 0; s < threads; ++s)
                g += Eigen::Map<const Eigen::ArrayXd>(shard_grads[s].data(),
                                                      static_cast<Eigen::Index>(n_params));

            const double batch_loss = loss_sum / static_cast<double>(tokens);
            if (!std::isfinite(batch_loss))
                throw TrainingError(
                    "non-finite loss; diagnostic state: epoch=" + std::to_string(epoch) +
                    " step=" + std::to_string(step) + " batch_size=" + std::to_string(batch.size()) +
                    " tokens=" + std::to_string(tokens) + " lr=" + std::to_string(lr_at(step, config)) +
                    " loss_sum=" + std::to_string(loss_sum));
            g /= static_cast<double>(tokens);

            // Adam with bias correction and the warmup schedule.
            const double lr = lr_at(step, config);
            Eigen::Map<Eigen::ArrayXd> p(model.params().data(), static_cast<Eigen::Index>(n_params));
            Eigen::Map<Eigen::ArrayXd> m(adam_m.data(), static_cast<Eigen::Index>(n_params));
            Eigen::Map<Eigen::ArrayXd> v(adam_v.data(), static_cast<Eigen::Index>(n_params));
            m = config.beta1 * m + (1.0 - config.beta1) * g;
            v = config.beta2 * v + (1.0 - config.beta2) * g.square();
            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            p -= lr * (m / bc1) / ((v / bc2).sqrt() + config.adam_eps);

            report.steps = step;
            epoch_loss += batch_loss;
            ++epoch_batches;
            if (config.max_steps > 0 && report.steps >= config.max_steps) {
                stop = true;
                break;
            }
        }

        report.epochs_run = epoch;
        report.loss_curve.push_back(epoch_loss / static_cast<double>(epoch_batches));
        if (log && epoch % std::max(1, config.eval_every) == 0)
            std::fprintf(log, "[inflab] epoch %d mean_loss %.6f steps %lld\n", epoch,
                         report.loss_curve.back(), report.steps);

        if (epoch % config.eval_every == 0) run_eval(epoch);
    }

    // Trailing evaluation when the last epoch fell between eval points.
    if (!dev.empty() && report.epochs_run > 0 &&
        (report.dev_curve.empty() || report.dev_curve.back().epoch != report.epochs_run))
        run_eval(report.epochs_run);

    if (have_best)
        model.params() = best_params;
    else if (report.epochs_run > 0)
        report.best_checkpoint_id = "final";
    if (test && !test->empty())
        report.final_test_accuracy = evaluate(model, *test, vocab, threads);
    return report;
}

}  // namespace inflab
