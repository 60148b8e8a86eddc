#include <doctest.h>

#include <cmath>

#include "trace/model.hpp"
#include "helpers.hpp"

using namespace trace;
using namespace trace::model;
namespace cg = trace::corpusgen;

namespace {

cg::Corpus two_sentence_corpus() {
    cg::AnnotatedSentence a;
    a.tokens = {"noun1", "motion_verb1s", "location1"};
    a.pos_tags = {"NN", "VB", "NN"};
    a.roles = {{0, "Agent"}, {1, "Action"}, {2, "Destination"}};
    a.meta = {"simple", "motion", 3, 1.0};
    cg::AnnotatedSentence b;
    b.tokens = {"noun2", "motion_verb1s", "location2", "noun3"};
    b.pos_tags = {"NN", "VB", "NN", "NN"};
    b.roles = {{0, "Agent"}, {1, "Action"}};
    b.meta = {"simple", "motion", 4, 1.0};
    cg::Corpus c;
    c.sentences = {a, b};
    c.stats = cg::corpus_stats(c.sentences);
    return c;
}

TransformerConfig tiny_config() {
    TransformerConfig cfg;
    cfg.d_model = 8;
    cfg.num_heads = 2;
    cfg.num_decoder_layers = 2;
    cfg.d_ff = 16;
    cfg.max_seq_length = 8;
    cfg.dropout = 0.1;
    return cfg;
}

} // namespace

TEST_SUITE("model.tokenizer") {
    TEST_CASE("vocab is specials plus distinct tokens in first-appearance order") {
        auto tok = Tokenizer::build(two_sentence_corpus());
        CHECK(tok.size() == 10); // 6 distinct + 4 specials
        CHECK(tok.id("<pad>") == 0);
        CHECK(tok.token(Tokenizer::kBos) == "<bos>");
        CHECK(tok.id("noun1") == 4);
        CHECK(tok.id("motion_verb1s") == 5);
        CHECK(tok.id("location1") == 6);
        CHECK(tok.id("noun2") == 7);
        CHECK(tok.id("noun3") == 9);
        CHECK(tok.id("location2") == 8);
    }

    TEST_CASE("unseen tokens map to UNK and round trips hold in vocab") {
        auto tok = Tokenizer::build(two_sentence_corpus());
        CHECK(tok.id("never_seen1") == Tokenizer::kUnk);
        std::vector<std::string> sent = {"noun1", "motion_verb1s", "location2"};
        CHECK(tok.decode(tok.encode(sent)) == sent);
        auto seq = tok.sequence_ids(sent);
        REQUIRE(seq.size() == 5);
        CHECK(seq.front() == Tokenizer::kBos);
        CHECK(seq.back() == Tokenizer::kEos);
    }
}

TEST_SUITE("model.config") {
    TEST_CASE("validation rejects bad configs") {
        TransformerConfig cfg = tiny_config();
        cfg.num_heads = 3; // 8 % 3 != 0
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = tiny_config();
        cfg.max_seq_length = 1;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = tiny_config();
        cfg.dropout = 1.0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = tiny_config();
        cfg.model_type = "encoder_decoder";
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }

    TEST_CASE("json round trip") {
        auto cfg = tiny_config();
        auto j = cfg.to_json();
        auto back = TransformerConfig::from_json(j);
        CHECK(back.d_model == cfg.d_model);
        CHECK(back.dropout == cfg.dropout);
        CHECK(back.max_seq_length == cfg.max_seq_length);
    }
}

TEST_SUITE("model.decoder") {
    TEST_CASE("initialization is deterministic with zero biases") {
        auto a = DecoderModelT<double>::init(tiny_config(), 7, 12);
        auto b = DecoderModelT<double>::init(tiny_config(), 7, 12);
        CHECK(a.params().param_vector() == b.params().param_vector());
        auto c = DecoderModelT<double>::init(tiny_config(), 8, 12);
        CHECK(a.params().param_vector() != c.params().param_vector());
        for (const auto& item : a.params().items()) {
            if (item.name.find("_b") != std::string::npos ||
                item.name.find("ln_bias") != std::string::npos) {
                for (double v : item.tensor.data()) CHECK(v == 0.0);
            }
        }
    }

    TEST_CASE("xavier variance near target on a large weight") {
        TransformerConfig cfg;
        cfg.d_model = 96;
        cfg.num_heads = 3;
        cfg.num_decoder_layers = 1;
        cfg.d_ff = 384;
        auto m = DecoderModelT<double>::init(cfg, 3, 50);
        for (const auto& item : m.params().items()) {
            if (item.name != "layer0.ff_w1") continue;
            const auto& w = item.tensor.data(); // 96*384 = 36864 entries
            REQUIRE(w.size() >= 10000);
            double mean = 0;
            for (double v : w) mean += v;
            mean /= static_cast<double>(w.size());
            double var = 0;
            for (double v : w) var += (v - mean) * (v - mean);
            var /= static_cast<double>(w.size());
            const double target = 2.0 / (96.0 + 384.0);
            CHECK(var > 0.8 * target);
            CHECK(var < 1.2 * target);
        }
    }

    TEST_CASE("parameter count matches the closed form") {
        auto cfg = tiny_config();
        auto m = DecoderModelT<double>::init(cfg, 1, 12);
        CHECK(static_cast<long long>(m.params().total_size()) == parameter_count(cfg, 12));

        TransformerConfig paper;
        auto big = DecoderModelT<float>::init(paper, 1, 734);
        CHECK(static_cast<long long>(big.params().total_size()) == parameter_count(paper, 734));
    }

    TEST_CASE("component partition covers all parameters disjointly") {
        auto m = DecoderModelT<double>::init(tiny_config(), 2, 12);
        const auto labels = m.params().component_labels();
        size_t total = 0;
        std::vector<uint8_t> seen(m.params().total_size(), 0);
        for (const auto& label : labels) {
            auto [subset, mask] = m.parameters_of(label);
            for (size_t i = 0; i < mask.size(); ++i) {
                if (!mask[i]) continue;
                ++total;
                CHECK(seen[i] == 0);
                seen[i] = 1;
            }
        }
        CHECK(total == m.params().total_size());

        auto [attn, attn_mask] = m.parameters_of("attention");
        CHECK(attn.size() == 16); // 2 layers x (4 weights + 4 biases)
        int mats = 0;
        for (const auto& p : attn)
            if (p.tensor.ndim() == 2) ++mats;
        CHECK(mats == 8);
        CHECK_THROWS_AS(m.parameters_of("bogus"), UsageError);
    }

    TEST_CASE("forward shape, determinism, finiteness") {
        auto m = DecoderModelT<double>::init(tiny_config(), 5, 12);
        std::vector<int> ids = {4};
        auto r = m.forward(ids, 1, 1, false);
        CHECK(r.logits.shape() == std::vector<int>{1, 12});
        REQUIRE(r.hidden.size() == 2);
        CHECK(r.hidden[0].shape() == std::vector<int>{1, 8});

        std::vector<int> batch = {1, 4, 5, 6, 1, 7, 8, 2};
        auto a = m.forward(batch, 2, 4, false);
        auto b = m.forward(batch, 2, 4, false);
        CHECK(a.logits.data() == b.logits.data());
        for (double v : a.logits.data()) CHECK(std::isfinite(v));

        std::vector<int> too_long(2 * 9, 4);
        CHECK_THROWS_AS(m.forward(too_long, 2, 9, false), DimError);
    }

    TEST_CASE("causal masking: future tokens cannot move earlier logits") {
        Rng rng(13);
        for (int len = 2; len <= 8; ++len) {
            auto cfg = tiny_config();
            auto m = DecoderModelT<double>::init(cfg, 100 + static_cast<uint64_t>(len), 12);
            std::vector<int> ids(static_cast<size_t>(len));
            for (auto& v : ids) v = static_cast<int>(rng.below(12));
            auto base = m.forward(ids, 1, len, false);
            auto mutated = ids;
            mutated[static_cast<size_t>(len - 1)] =
                (ids[static_cast<size_t>(len - 1)] + 1) % 12;
            auto out = m.forward(mutated, 1, len, false);
            const int v = 12;
            for (int t = 0; t + 1 < len; ++t)
                for (int j = 0; j < v; ++j)
                    REQUIRE(base.logits.data()[static_cast<size_t>(t) * v + j] ==
                            out.logits.data()[static_cast<size_t>(t) * v + j]);
        }
    }

    TEST_CASE("dropout only active in train mode") {
        auto m = DecoderModelT<double>::init(tiny_config(), 5, 12);
        std::vector<int> ids = {1, 4, 5, 2};
        Rng r1(3), r2(3), r3(4);
        auto t1 = m.forward(ids, 1, 4, true, &r1);
        auto t2 = m.forward(ids, 1, 4, true, &r2);
        auto t3 = m.forward(ids, 1, 4, true, &r3);
        CHECK(t1.logits.data() == t2.logits.data()); // same dropout stream
        CHECK(t1.logits.data() != t3.logits.data()); // different stream
        auto e = m.forward(ids, 1, 4, false);
        CHECK(e.logits.data() != t1.logits.data());
    }

    TEST_CASE("perturb and restore parameters returns the loss bit-exactly") {
        auto m = DecoderModelT<double>::init(tiny_config(), 5, 12);
        std::vector<int> ids = {1, 4, 5, 6, 7, 2};
        std::vector<int> targets = {4, 5, 6, 7, 2, -1};
        auto loss0 = cross_entropy(m.forward(ids, 1, 6, false).logits, targets, -1).item();
        auto flat = m.params().param_vector();
        auto perturbed = flat;
        Rng rng(9);
        for (auto& v : perturbed) v += rng.uniform(-0.01, 0.01);
        m.params().set_params(perturbed);
        auto loss1 = cross_entropy(m.forward(ids, 1, 6, false).logits, targets, -1).item();
        CHECK(loss1 != loss0);
        m.params().set_params(flat);
        auto loss2 = cross_entropy(m.forward(ids, 1, 6, false).logits, targets, -1).item();
        CHECK(loss2 == loss0); // bit-identical
    }
}

TEST_SUITE("model.checkpoint") {
    TEST_CASE("checkpoint round trip preserves everything") {
        auto dir = testutil::scratch_dir("ckpt");
        auto tok = Tokenizer::build(two_sentence_corpus());
        auto cfg = tiny_config();
        auto m = DecoderModelT<float>::init(cfg, 21, tok.size());
        const std::string path = dir + "/step_42.ckpt";
        save_checkpoint(m, tok, 42, 777, path);

        auto ckpt = load_checkpoint(path);
        CHECK(ckpt.step == 42);
        CHECK(ckpt.run_seed == 777);
        CHECK(ckpt.vocab == tok.vocab());
        CHECK(ckpt.config.d_model == cfg.d_model);
        CHECK(ckpt.params.size() == m.params().total_size());
        CHECK(!ckpt.components.empty());

        auto m2 = model_from_checkpoint<float>(ckpt);
        CHECK(m2.params().param_vector() == m.params().param_vector());

        std::vector<int> ids = {1, 4, 5, 2};
        auto a = m.forward(ids, 1, 4, false);
        auto b = m2.forward(ids, 1, 4, false);
        CHECK(a.logits.data() == b.logits.data());
    }

    TEST_CASE("bad magic rejected") {
        auto dir = testutil::scratch_dir("ckpt_bad");
        const std::string path = dir + "/bogus.ckpt";
        {
            std::ofstream out(path, std::ios::binary);
            out << "NOTACKPT0\n" << std::string(64, 'x');
        }
        CHECK_THROWS_AS(load_checkpoint(path), DataError);
        CHECK_THROWS_AS(load_checkpoint(dir + "/missing.ckpt"), DataError);
    }
}
