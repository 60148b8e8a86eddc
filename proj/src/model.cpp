#include "trace/model.hpp"

#include <cstring>
#include <sstream>

namespace trace::model {

using nlohmann::ordered_json;

nlohmann::ordered_json TransformerConfig::to_json() const {
    ordered_json j;
    j["model_type"] = model_type;
    j["vocab_size"] = vocab_size;
    j["d_model"] = d_model;
    j["num_heads"] = num_heads;
    j["num_decoder_layers"] = num_decoder_layers;
    j["d_ff"] = d_ff;
    j["max_seq_length"] = max_seq_length;
    j["dropout"] = dropout;
    return j;
}

TransformerConfig TransformerConfig::from_json(const nlohmann::json& j) {
    TransformerConfig c;
    try {
        c.model_type = j.value("model_type", c.model_type);
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.d_model = j.value("d_model", c.d_model);
        c.num_heads = j.value("num_heads", c.num_heads);
        c.num_decoder_layers = j.value("num_decoder_layers", c.num_decoder_layers);
        c.d_ff = j.value("d_ff", c.d_ff);
        c.max_seq_length = j.value("max_seq_length", c.max_seq_length);
        c.dropout = j.value("dropout", c.dropout);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed model config: ") + e.what());
    }
    c.validate();
    return c;
}

TransformerConfig TransformerConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed model config ") + path + ": " + e.what());
    }
    return from_json(j);
}

Tokenizer Tokenizer::build(const corpusgen::Corpus& corpus) {
    if (corpus.sentences.empty()) throw DataError("cannot build tokenizer from empty corpus");
    Tokenizer t;
    t.vocab_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
    for (size_t i = 0; i < t.vocab_.size(); ++i) t.ids_[t.vocab_[i]] = static_cast<int>(i);
    for (const auto& s : corpus.sentences) {
        for (const auto& tok : s.tokens) {
            if (t.ids_.emplace(tok, static_cast<int>(t.vocab_.size())).second)
                t.vocab_.push_back(tok);
        }
    }
    return t;
}

Tokenizer Tokenizer::from_vocab(std::vector<std::string> vocab) {
    if (vocab.size() < 4) throw DataError("tokenizer vocab must include the four specials");
    Tokenizer t;
    t.vocab_ = std::move(vocab);
    for (size_t i = 0; i < t.vocab_.size(); ++i) {
        if (!t.ids_.emplace(t.vocab_[i], static_cast<int>(i)).second)
            throw DataError("duplicate token in tokenizer vocab: " + t.vocab_[i]);
    }
    return t;
}

const std::string& Tokenizer::token(int id) const {
    if (id < 0 || id >= size()) throw UsageError("token id out of range: " + std::to_string(id));
    return vocab_[static_cast<size_t>(id)];
}

std::vector<int> Tokenizer::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& tok : tokens) out.push_back(id(tok));
    return out;
}

std::vector<std::string> Tokenizer::decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(token(i));
    return out;
}

std::vector<int> Tokenizer::sequence_ids(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size() + 2);
    out.push_back(kBos);
    for (const auto& tok : tokens) out.push_back(id(tok));
    out.push_back(kEos);
    return out;
}

void write_checkpoint_file(const std::string& path, const ordered_json& manifest,
                           const std::vector<float>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    const std::string text = manifest.dump();
    out.write(kCheckpointMagic, static_cast<std::streamsize>(std::strlen(kCheckpointMagic)));
    const uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(params.data()),
              static_cast<std::streamsize>(params.size() * sizeof(float)));
    if (!out) throw DataError("short write to checkpoint: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    const size_t magic_len = std::strlen(kCheckpointMagic);
    std::string magic(magic_len, '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic_len));
    if (!in || magic != kCheckpointMagic)
        throw DataError("not a checkpoint file (bad magic): " + path);
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in) throw DataError("truncated checkpoint manifest: " + path);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("truncated checkpoint manifest: " + path);

    CheckpointData ckpt;
    try {
        const auto manifest = nlohmann::json::parse(text);
        ckpt.config = TransformerConfig::from_json(manifest.at("config"));
        ckpt.vocab = manifest.at("vocab").get<std::vector<std::string>>();
        ckpt.step = manifest.at("step").get<long long>();
        ckpt.run_seed = manifest.value("run_seed", 0ull);
        if (manifest.contains("components")) {
            for (const auto& [label, ranges] : manifest.at("components").items())
                for (const auto& r : ranges)
                    ckpt.components.push_back(
                        {label, {r.at("begin").get<size_t>(), r.at("end").get<size_t>()}});
        }
        const auto count = manifest.at("param_count").get<size_t>();
        ckpt.params.resize(count);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint manifest: ") + e.what());
    }
    in.read(reinterpret_cast<char*>(ckpt.params.data()),
            static_cast<std::streamsize>(ckpt.params.size() * sizeof(float)));
    if (!in) throw DataError("truncated checkpoint parameter block: " + path);
    return ckpt;
}

} // namespace trace::model
