#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "inflab/corpus.hpp"
#include "inflab/errors.hpp"
#include "inflab/model.hpp"

// Versioned binary checkpoint: magic, format version, a JSON block holding
// the model config and vocabulary, then the raw parameter buffer. The file
// is byte-stable across save/load round-trips.

namespace inflab {

namespace detail {

constexpr char kCheckpointMagic[8] = {'I', 'N', 'F', 'L', 'A', 'B', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"layers_enc", c.layers_enc}, {"layers_dec", c.layers_dec}, {"d_model", c.d_model},
            {"d_ff", c.d_ff},             {"heads", c.heads},           {"dropout", c.dropout},
            {"max_len", c.max_len},       {"vocab_size", c.vocab_size},
            {"label_smoothing", c.label_smoothing}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.layers_enc = j.at("layers_enc").get<int>();
    c.layers_dec = j.at("layers_dec").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.heads = j.at("heads").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.max_len = j.at("max_len").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.label_smoothing = j.at("label_smoothing").get<double>();
    return c;
}

inline nlohmann::json vocab_to_json(const Vocabulary& v) {
    std::vector<std::uint32_t> chars;
    chars.reserve(v.alphabet().size());
    for (char32_t c : v.alphabet().symbols) chars.push_back(static_cast<std::uint32_t>(c));
    return {{"sentinels", v.sentinel_count()}, {"tags", v.tags()}, {"chars", chars}};
}

inline Vocabulary vocab_from_json(const nlohmann::json& j) {
    std::vector<char32_t> chars;
    for (std::uint32_t c : j.at("chars").get<std::vector<std::uint32_t>>())
        chars.push_back(static_cast<char32_t>(c));
    return Vocabulary(j.at("tags").get<std::vector<std::string>>(), std::move(chars),
                      j.at("sentinels").get<int>());
}

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw IoError("truncated checkpoint");
    return value;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Model& model, const Vocabulary& vocab) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    detail::write_raw(out, detail::kCheckpointVersion);

    const std::string header = nlohmann::json{{"config", detail::config_to_json(model.config())},
                                              {"vocab", detail::vocab_to_json(vocab)}}
                                   .dump();
    detail::write_raw(out, static_cast<std::uint64_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    const auto& p = model.params();
    detail::write_raw(out, static_cast<std::uint64_t>(p.size()));
    out.write(reinterpret_cast<const char*>(p.data()),
              static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

struct LoadedCheckpoint {
    Model model;
    Vocabulary vocab;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0)
        throw ParseError("not an inflab checkpoint: " + path);
    const auto version = detail::read_raw<std::uint32_t>(in);
    if (version != detail::kCheckpointVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version));

    const auto header_len = detail::read_raw<std::uint64_t>(in);
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw IoError("truncated checkpoint header");
    const auto j = nlohmann::json::parse(header);

    LoadedCheckpoint ck{Model(detail::config_from_json(j.at("config"))),
                        detail::vocab_from_json(j.at("vocab"))};
    const auto n = detail::read_raw<std::uint64_t>(in);
    if (n != ck.model.parameter_count())
        throw ParseError("checkpoint parameter count mismatch");
    in.read(reinterpret_cast<char*>(ck.model.params().data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint parameters");
    return ck;
}

}  // namespace inflab
