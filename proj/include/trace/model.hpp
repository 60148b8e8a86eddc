#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "trace/common.hpp"
#include "trace/corpus.hpp"
#include "trace/tensor.hpp"

namespace trace::model {

struct TransformerConfig {
    std::string model_type = "decoder_only";
    int vocab_size = 0; // recorded from config files; the live size comes from the tokenizer
    int d_model = 96;
    int num_heads = 3;
    int num_decoder_layers = 2;
    int d_ff = 384;
    int max_seq_length = 16;
    double dropout = 0.1;

    void validate() const {
        if (model_type != "decoder_only")
            throw ConfigError("unsupported model_type: " + model_type);
        if (d_model < 1 || num_heads < 1 || num_decoder_layers < 1 || d_ff < 1)
            throw ConfigError("model dimensions must be positive");
        if (d_model % num_heads != 0)
            throw ConfigError("d_model " + std::to_string(d_model) +
                              " not divisible by num_heads " + std::to_string(num_heads));
        if (max_seq_length < 2) throw ConfigError("max_seq_length must be >= 2");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    }

    nlohmann::ordered_json to_json() const;
    static TransformerConfig from_json(const nlohmann::json& j);
    static TransformerConfig from_json_file(const std::string& path);
};

// Word-level tokenizer; ids 0-3 are PAD/BOS/EOS/UNK, corpus tokens follow in
// first-appearance order.
class Tokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    static Tokenizer build(const corpusgen::Corpus& corpus);
    static Tokenizer from_vocab(std::vector<std::string> vocab); // specials included

    int size() const { return static_cast<int>(vocab_.size()); }
    int id(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? kUnk : it->second;
    }
    const std::string& token(int id) const;
    const std::vector<std::string>& vocab() const { return vocab_; }

    std::vector<int> encode(const std::vector<std::string>& tokens) const;
    std::vector<std::string> decode(const std::vector<int>& ids) const;
    // BOS + token ids + EOS.
    std::vector<int> sequence_ids(const std::vector<std::string>& tokens) const;

private:
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, int> ids_;
};

template <class T>
struct ForwardResultT {
    TensorT<T> logits;               // (batch*len) x vocab
    std::vector<TensorT<T>> hidden;  // post-block output per layer, (batch*len) x d_model
};

template <class T>
class DecoderModelT {
public:
    DecoderModelT() = default;

    // Xavier-uniform affine weights, zero biases, N(0, d_model^-1/2) token
    // embeddings; draws happen in registration order, so a seed pins the
    // whole parameter vector.
    static DecoderModelT init(const TransformerConfig& cfg, uint64_t seed, int vocab_size) {
        DecoderModelT m = build_structure(cfg, vocab_size);
        Rng rng(seed);
        const double emb_std = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
        for (auto& item : m.params_.items()) {
            auto& t = item.tensor;
            if (item.name == "tok_emb") {
                for (auto& v : t.data()) v = static_cast<T>(rng.normal() * emb_std);
            } else if (t.ndim() == 2) {
                const double limit =
                    std::sqrt(6.0 / static_cast<double>(t.dim(0) + t.dim(1)));
                for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-limit, limit));
            } else if (item.name.find("ln_gain") != std::string::npos) {
                for (auto& v : t.data()) v = T(1);
            } // biases and ln offsets stay zero
        }
        return m;
    }

    const TransformerConfig& config() const { return cfg_; }
    int vocab_size() const { return vocab_; }
    ParameterSetT<T>& params() { return params_; }
    const ParameterSetT<T>& params() const { return params_; }

    DecoderModelT clone() const {
        DecoderModelT m = build_structure(cfg_, vocab_);
        m.params_.set_params(params_.param_vector());
        return m;
    }

    // Teacher-forced forward over a padded id batch. `rng` drives dropout and
    // is only touched in train mode.
    ForwardResultT<T> forward(const std::vector<int>& ids, int batch, int len, bool train_mode,
                              Rng* rng = nullptr) const {
        if (len < 1 || batch < 1 || ids.size() != static_cast<size_t>(batch) * len)
            throw DimError("forward: id buffer does not match batch " + std::to_string(batch) +
                           " x len " + std::to_string(len));
        if (len > cfg_.max_seq_length)
            throw DimError("sequence length " + std::to_string(len) +
                           " exceeds max_seq_length " + std::to_string(cfg_.max_seq_length));
        if (train_mode && cfg_.dropout > 0.0 && rng == nullptr)
            throw UsageError("train-mode forward requires an rng for dropout");

        const int d = cfg_.d_model;
        const int heads = cfg_.num_heads;
        const int dh = d / heads;
        const int rows = batch * len;

        TensorT<T> x = embedding_lookup(tok_emb_, ids);
        x = add(x, positional_slice(batch, len));
        if (train_mode && cfg_.dropout > 0.0) x = dropout(x, cfg_.dropout, rng->next());

        TensorT<T> mask = causal_mask(len);
        ForwardResultT<T> result;
        result.hidden.reserve(static_cast<size_t>(cfg_.num_decoder_layers));

        for (int l = 0; l < cfg_.num_decoder_layers; ++l) {
            const auto& L = layers_[static_cast<size_t>(l)];
            TensorT<T> a = layer_norm(x, L.ln1_gain, L.ln1_bias);
            TensorT<T> q = add(matmul(a, L.wq), L.bq);
            TensorT<T> k = add(matmul(a, L.wk), L.bk);
            TensorT<T> v = add(matmul(a, L.wv), L.bv);

            std::vector<TensorT<T>> batch_ctx;
            batch_ctx.reserve(static_cast<size_t>(batch));
            for (int b = 0; b < batch; ++b) {
                TensorT<T> qb = slice(q, 0, b * len, len);
                TensorT<T> kb = slice(k, 0, b * len, len);
                TensorT<T> vb = slice(v, 0, b * len, len);
                std::vector<TensorT<T>> head_ctx;
                head_ctx.reserve(static_cast<size_t>(heads));
                for (int h = 0; h < heads; ++h) {
                    TensorT<T> qh = slice(qb, 1, h * dh, dh);
                    TensorT<T> kh = slice(kb, 1, h * dh, dh);
                    TensorT<T> vh = slice(vb, 1, h * dh, dh);
                    TensorT<T> scores =
                        scale(matmul(qh, kh, false, true), 1.0 / std::sqrt(static_cast<double>(dh)));
                    scores = add(scores, mask);
                    TensorT<T> attn = softmax(scores, -1);
                    head_ctx.push_back(matmul(attn, vh));
                }
                batch_ctx.push_back(heads == 1 ? head_ctx[0] : concat(head_ctx, 1));
            }
            TensorT<T> ctx = batch == 1 ? batch_ctx[0] : concat(batch_ctx, 0);
            TensorT<T> o = add(matmul(ctx, L.wo), L.bo);
            if (train_mode && cfg_.dropout > 0.0) o = dropout(o, cfg_.dropout, rng->next());
            x = add(x, o);

            TensorT<T> f = layer_norm(x, L.ln2_gain, L.ln2_bias);
            TensorT<T> hmid = relu(add(matmul(f, L.w1), L.b1));
            TensorT<T> hout = add(matmul(hmid, L.w2), L.b2);
            if (train_mode && cfg_.dropout > 0.0) hout = dropout(hout, cfg_.dropout, rng->next());
            x = add(x, hout);
            result.hidden.push_back(x);
        }
        TensorT<T> fin = layer_norm(x, lnf_gain_, lnf_bias_);
        result.logits = add(matmul(fin, head_w_), head_b_);
        (void)rows;
        return result;
    }

    // Greedy next-token prediction per position (no recording).
    std::vector<int> argmax_predictions(const std::vector<int>& ids, int batch, int len) const {
        NoGradGuard guard;
        auto fwd = forward(ids, batch, len, false, nullptr);
        const auto& logits = fwd.logits.data();
        const int v = vocab_;
        std::vector<int> out(static_cast<size_t>(batch) * len);
        for (size_t r = 0; r < out.size(); ++r) {
            const T* row = logits.data() + r * static_cast<size_t>(v);
            int best = 0;
            for (int j = 1; j < v; ++j)
                if (row[j] > row[best]) best = j;
            out[r] = best;
        }
        return out;
    }

    // Parameter subset plus flat mask for one component label.
    std::pair<std::vector<NamedParam<T>>, std::vector<uint8_t>> parameters_of(
        const std::string& label) const {
        std::vector<NamedParam<T>> subset;
        for (const auto& item : params_.items())
            if (item.component == label) subset.push_back(item);
        return {subset, params_.component_mask(label)};
    }

private:
    struct Layer {
        TensorT<T> ln1_gain, ln1_bias;
        TensorT<T> wq, bq, wk, bk, wv, bv, wo, bo;
        TensorT<T> ln2_gain, ln2_bias;
        TensorT<T> w1, b1, w2, b2;
    };

    static DecoderModelT build_structure(const TransformerConfig& cfg, int vocab_size) {
        cfg.validate();
        if (vocab_size < 1) throw ConfigError("vocab size must be positive");
        DecoderModelT m;
        m.cfg_ = cfg;
        m.vocab_ = vocab_size;
        const int d = cfg.d_model;

        m.tok_emb_ = TensorT<T>::zeros({vocab_size, d});
        m.params_.add("tok_emb", "embedding", m.tok_emb_);

        m.layers_.resize(static_cast<size_t>(cfg.num_decoder_layers));
        for (int l = 0; l < cfg.num_decoder_layers; ++l) {
            auto& L = m.layers_[static_cast<size_t>(l)];
            const std::string p = "layer" + std::to_string(l) + ".";
            L.ln1_gain = TensorT<T>::zeros({d});
            L.ln1_bias = TensorT<T>::zeros({d});
            m.params_.add(p + "ln_gain1", "norm", L.ln1_gain);
            m.params_.add(p + "ln_bias1", "norm", L.ln1_bias);
            L.wq = TensorT<T>::zeros({d, d});
            L.bq = TensorT<T>::zeros({d});
            L.wk = TensorT<T>::zeros({d, d});
            L.bk = TensorT<T>::zeros({d});
            L.wv = TensorT<T>::zeros({d, d});
            L.bv = TensorT<T>::zeros({d});
            L.wo = TensorT<T>::zeros({d, d});
            L.bo = TensorT<T>::zeros({d});
            m.params_.add(p + "attn_wq", "attention", L.wq);
            m.params_.add(p + "attn_bq", "attention", L.bq);
            m.params_.add(p + "attn_wk", "attention", L.wk);
            m.params_.add(p + "attn_bk", "attention", L.bk);
            m.params_.add(p + "attn_wv", "attention", L.wv);
            m.params_.add(p + "attn_bv", "attention", L.bv);
            m.params_.add(p + "attn_wo", "attention", L.wo);
            m.params_.add(p + "attn_bo", "attention", L.bo);
            L.ln2_gain = TensorT<T>::zeros({d});
            L.ln2_bias = TensorT<T>::zeros({d});
            m.params_.add(p + "ln_gain2", "norm", L.ln2_gain);
            m.params_.add(p + "ln_bias2", "norm", L.ln2_bias);
            L.w1 = TensorT<T>::zeros({d, cfg.d_ff});
            L.b1 = TensorT<T>::zeros({cfg.d_ff});
            L.w2 = TensorT<T>::zeros({cfg.d_ff, d});
            L.b2 = TensorT<T>::zeros({d});
            m.params_.add(p + "ff_w1", "feed_forward", L.w1);
            m.params_.add(p + "ff_b1", "feed_forward", L.b1);
            m.params_.add(p + "ff_w2", "feed_forward", L.w2);
            m.params_.add(p + "ff_b2", "feed_forward", L.b2);
        }
        m.lnf_gain_ = TensorT<T>::zeros({d});
        m.lnf_bias_ = TensorT<T>::zeros({d});
        m.params_.add("ln_gain_final", "norm", m.lnf_gain_);
        m.params_.add("ln_bias_final", "norm", m.lnf_bias_);
        m.head_w_ = TensorT<T>::zeros({d, vocab_size});
        m.head_b_ = TensorT<T>::zeros({vocab_size});
        m.params_.add("head_w", "head", m.head_w_);
        m.params_.add("head_b", "head", m.head_b_);

        // Sinusoidal positional table, parameter-free.
        m.pos_table_.assign(static_cast<size_t>(cfg.max_seq_length) * d, T(0));
        for (int pos = 0; pos < cfg.max_seq_length; ++pos) {
            for (int i = 0; i < d; i += 2) {
                const double angle =
                    pos / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
                m.pos_table_[static_cast<size_t>(pos) * d + i] = static_cast<T>(std::sin(angle));
                if (i + 1 < d)
                    m.pos_table_[static_cast<size_t>(pos) * d + i + 1] =
                        static_cast<T>(std::cos(angle));
            }
        }
        return m;
    }

    TensorT<T> positional_slice(int batch, int len) const {
        const int d = cfg_.d_model;
        std::vector<T> data(static_cast<size_t>(batch) * len * d);
        for (int b = 0; b < batch; ++b)
            std::copy_n(pos_table_.data(), static_cast<size_t>(len) * d,
                        data.data() + static_cast<size_t>(b) * len * d);
        return TensorT<T>::from_data({batch * len, d}, std::move(data));
    }

    TensorT<T> causal_mask(int len) const {
        std::vector<T> data(static_cast<size_t>(len) * len, T(0));
        for (int i = 0; i < len; ++i)
            for (int j = i + 1; j < len; ++j)
                data[static_cast<size_t>(i) * len + j] = T(-1e30);
        return TensorT<T>::from_data({len, len}, std::move(data));
    }

    TransformerConfig cfg_;
    int vocab_ = 0;
    ParameterSetT<T> params_;
    TensorT<T> tok_emb_;
    std::vector<Layer> layers_;
    TensorT<T> lnf_gain_, lnf_bias_;
    TensorT<T> head_w_, head_b_;
    std::vector<T> pos_table_;
};

using DecoderModel = DecoderModelT<float>;

// Closed-form parameter count for a config; checked against the registry.
inline long long parameter_count(const TransformerConfig& cfg, int vocab) {
    const long long d = cfg.d_model, ff = cfg.d_ff, v = vocab;
    const long long per_layer = 4 * d * d + 4 * d + 2 * 2 * d + (d * ff + ff) + (ff * d + d);
    return v * d + cfg.num_decoder_layers * per_layer + 2 * d + (d * v + v);
}

// ---- checkpoints ----------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "TRACECKPT1\n";

struct CheckpointData {
    TransformerConfig config;
    std::vector<std::string> vocab;
    long long step = 0;
    uint64_t run_seed = 0;
    std::vector<std::pair<std::string, std::pair<size_t, size_t>>> components;
    std::vector<float> params;
};

void write_checkpoint_file(const std::string& path, const nlohmann::ordered_json& manifest,
                           const std::vector<float>& params);
CheckpointData load_checkpoint(const std::string& path);

template <class T>
void save_checkpoint(const DecoderModelT<T>& model, const Tokenizer& tokenizer, long long step,
                     uint64_t run_seed, const std::string& path) {
    nlohmann::ordered_json manifest;
    manifest["config"] = model.config().to_json();
    manifest["vocab"] = tokenizer.vocab();
    manifest["step"] = step;
    manifest["run_seed"] = run_seed;
    nlohmann::ordered_json comps = nlohmann::ordered_json::object();
    for (const auto& label : model.params().component_labels()) {
        nlohmann::ordered_json ranges = nlohmann::ordered_json::array();
        for (const auto& [b, e] : model.params().component_ranges(label))
            ranges.push_back({{"begin", b}, {"end", e}});
        comps[label] = ranges;
    }
    manifest["components"] = comps;
    manifest["param_count"] = model.params().total_size();

    const auto flat = model.params().param_vector();
    std::vector<float> f32(flat.size());
    for (size_t i = 0; i < flat.size(); ++i) f32[i] = static_cast<float>(flat[i]);
    write_checkpoint_file(path, manifest, f32);
}

template <class T>
DecoderModelT<T> model_from_checkpoint(const CheckpointData& ckpt) {
    DecoderModelT<T> m = DecoderModelT<T>::init(ckpt.config, 0, static_cast<int>(ckpt.vocab.size()));
    if (m.params().total_size() != ckpt.params.size())
        throw DataError("checkpoint parameter count " + std::to_string(ckpt.params.size()) +
                        " does not match model size " + std::to_string(m.params().total_size()));
    std::vector<T> flat(ckpt.params.size());
    for (size_t i = 0; i < flat.size(); ++i) flat[i] = static_cast<T>(ckpt.params[i]);
    m.params().set_params(flat);
    return m;
}

} // namespace trace::model
