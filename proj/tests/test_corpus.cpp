#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "trace/common.hpp"
#include "trace/corpus.hpp"
#include "helpers.hpp"

using namespace trace;
using namespace trace::corpusgen;

namespace {

Lexicon tiny_uniform_lexicon(int pool_size) {
    std::map<std::string, std::vector<LexEntry>> pools;
    for (const auto& cat : categories()) {
        std::vector<LexEntry> entries;
        for (int r = 1; r <= pool_size; ++r)
            entries.push_back({cat + std::to_string(r), 1.0, (r - 1) % 2});
        pools[cat] = std::move(entries);
    }
    return Lexicon(std::move(pools), LexiconParams{2, 1.0, 0.0, 7});
}

const SemanticFrame& frame_by_name(const std::string& name) {
    for (const auto& f : default_frames())
        if (f.name == name) return f;
    throw std::runtime_error("no frame " + name);
}

} // namespace

TEST_SUITE("corpusgen.lexicon") {
    TEST_CASE("reference vocabulary totals 728 tokens") {
        auto lex = build_lexicon(VocabularySpec::defaults(), LexiconParams::defaults());
        CHECK(lex.total_tokens() == 728);
        CHECK(lex.pool("noun").size() == 300);
        CHECK(lex.pool("location").size() == 150);
        CHECK(lex.pool("preposition").size() == 15);
    }

    TEST_CASE("degenerate single-token pool") {
        VocabularySpec spec;
        spec.sizes = {{"noun", 1}};
        auto lex = build_lexicon(spec, LexiconParams{1, 2.0, 0.0, 0});
        REQUIRE(lex.pool("noun").size() == 1);
        CHECK(lex.pool("noun")[0].name == "noun1");
        CHECK(lex.pool("noun")[0].weight == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("alpha=1 weights over four ranks") {
        VocabularySpec spec;
        spec.sizes = {{"noun", 4}};
        auto lex = build_lexicon(spec, LexiconParams{1, 1.0, 0.0, 0});
        const auto& pool = lex.pool("noun");
        // 1/r scaled by 1/(1 + 1/2 + 1/3 + 1/4) = 12/25.
        CHECK(pool[0].weight == doctest::Approx(0.48).epsilon(1e-12));
        CHECK(pool[1].weight == doctest::Approx(0.24).epsilon(1e-12));
        CHECK(pool[2].weight == doctest::Approx(0.16).epsilon(1e-12));
        CHECK(pool[3].weight == doctest::Approx(0.12).epsilon(1e-12));
    }

    TEST_CASE("weights normalized and non-increasing, clusters round-robin") {
        auto lex = build_lexicon(VocabularySpec::defaults(), LexiconParams::defaults());
        for (const auto& cat : categories()) {
            const auto& pool = lex.pool(cat);
            double sum = 0.0;
            for (size_t i = 0; i < pool.size(); ++i) {
                sum += pool[i].weight;
                if (i) CHECK(pool[i].weight <= pool[i - 1].weight);
                CHECK(pool[i].cluster == static_cast<int>(i) % 5);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }

    TEST_CASE("unknown category rejected") {
        VocabularySpec spec;
        spec.sizes = {{"gerund", 5}};
        CHECK_THROWS_AS(build_lexicon(spec, LexiconParams::defaults()), ConfigError);
        auto lex = tiny_uniform_lexicon(2);
        Rng rng(1);
        CHECK_THROWS_AS(sample_token(lex, "gerund", rng), ConfigError);
    }

    TEST_CASE("surface lookup strips the verb suffix") {
        auto lex = build_lexicon(VocabularySpec::defaults(), LexiconParams::defaults());
        auto info = lex.lookup("transitive_verb8s");
        CHECK(info.category == "transitive_verb");
        CHECK(info.rank == 8);
        CHECK_THROWS_AS(lex.lookup("noun9999"), DataError);
        // A bare "s" strip must not apply to non-verb categories.
        CHECK_THROWS_AS(lex.lookup("nouns"), DataError);
    }
}

TEST_SUITE("corpusgen.sampling") {
    TEST_CASE("zipf rank-frequency slope near -alpha") {
        VocabularySpec spec;
        spec.sizes = {{"noun", 300}};
        auto lex = build_lexicon(spec, LexiconParams{5, 1.05, 0.0, 11});
        Rng rng(11);
        std::map<std::string, long long> counts;
        for (int i = 0; i < 100000; ++i) counts[sample_token(lex, "noun", rng)]++;
        std::vector<long long> freq;
        for (auto& [tok, c] : counts) freq.push_back(c);
        const double slope = testutil::zipf_loglog_slope(freq, 50);
        CHECK(slope > -1.20);
        CHECK(slope < -0.90);
    }

    TEST_CASE("pool of one always returns the same token") {
        VocabularySpec spec;
        spec.sizes = {{"noun", 1}};
        auto lex = build_lexicon(spec, LexiconParams{1, 1.0, 0.0, 0});
        Rng rng(3);
        for (int i = 0; i < 100; ++i) CHECK(sample_token(lex, "noun", rng) == "noun1");
    }

    TEST_CASE("seeded draws are reproducible") {
        auto lex = build_lexicon(VocabularySpec::defaults(), LexiconParams::defaults());
        Rng a(99), b(99);
        for (int i = 0; i < 1000; ++i)
            CHECK(sample_token(lex, "noun", a) == sample_token(lex, "noun", b));
    }
}

TEST_SUITE("corpusgen.sentence") {
    TEST_CASE("transitive_action matches the published annotation shape") {
        auto lex = build_lexicon(VocabularySpec::defaults(), LexiconParams::defaults());
        Rng rng(5);
        auto s = generate_sentence(frame_by_name("transitive_action"), lex, rng);
        REQUIRE(s.tokens.size() == 5);
        CHECK(s.pos_tags == std::vector<std::string>{"NN", "VB", "NN", "IN", "NN"});
        REQUIRE(s.roles.size() == 3);
        CHECK(s.roles[0].position == 0);
        CHECK(s.roles[0].role == "Agent");
        CHECK(s.roles[1].position == 2);
        CHECK(s.roles[1].role == "Patient");
        CHECK(s.roles[2].position == 4);
        CHECK(s.roles[2].role == "Location");
        CHECK(s.meta.complexity == "medium");
        CHECK(s.meta.length == 5);
        CHECK(s.tokens[1].back() == 's'); // verb surface form
        CHECK(s.tokens[0].rfind("noun", 0) == 0);
        CHECK(s.tokens[4].rfind("location", 0) == 0);
    }

    TEST_CASE("single-slot frame generates a one-token sentence") {
        auto lex = tiny_uniform_lexicon(3);
        SemanticFrame f{"solo", {{"noun", "Agent"}}, "simple"};
        Rng rng(2);
        auto s = generate_sentence(f, lex, rng);
        CHECK(s.tokens.size() == 1);
        REQUIRE(s.roles.size() == 1);
        CHECK(s.roles[0].position == 0);
    }

    TEST_CASE("one frame produces one POS sequence") {
        auto lex = build_lexicon(VocabularySpec::defaults(), LexiconParams::defaults());
        const auto& f = frame_by_name("instrumental_action");
        Rng rng(17);
        auto first = generate_sentence(f, lex, rng);
        for (int i = 0; i < 10000; ++i) {
            auto s = generate_sentence(f, lex, rng);
            REQUIRE(s.pos_tags == first.pos_tags);
        }
    }

    TEST_CASE("role positions index tokens of the slot category") {
        auto lex = build_lexicon(VocabularySpec::defaults(), LexiconParams::defaults());
        Rng rng(23);
        for (const auto& f : default_frames()) {
            for (int i = 0; i < 200; ++i) {
                auto s = generate_sentence(f, lex, rng);
                for (const auto& r : s.roles) {
                    const auto& slot = f.slots[static_cast<size_t>(r.position)];
                    CHECK(slot.role == r.role);
                    auto info = lex.lookup(s.tokens[static_cast<size_t>(r.position)]);
                    CHECK(info.category == slot.category);
                }
            }
        }
    }
}

TEST_SUITE("corpusgen.entropy") {
    TEST_CASE("uniform four-token pools give exactly two bits") {
        auto lex = tiny_uniform_lexicon(4);
        Rng rng(1);
        auto s = generate_sentence(frame_by_name("motion"), lex, rng);
        CHECK(s.meta.entropy == doctest::Approx(2.0).epsilon(1e-12));
    }

    TEST_CASE("single-token pools give zero entropy") {
        auto lex = tiny_uniform_lexicon(1);
        Rng rng(1);
        auto s = generate_sentence(frame_by_name("intransitive_action"), lex, rng);
        CHECK(s.meta.entropy == doctest::Approx(0.0).epsilon(1e-12));
    }

    TEST_CASE("hand-set weights match hand-computed mean surprisal") {
        std::map<std::string, std::vector<LexEntry>> pools;
        pools["noun"] = {{"noun1", 0.5, 0}, {"noun2", 0.25, 0}, {"noun3", 0.25, 0}};
        pools["transitive_verb"] = {{"transitive_verb1", 0.75, 0}, {"transitive_verb2", 0.25, 0}};
        pools["preposition"] = {{"preposition1", 1.0, 0}};
        pools["location"] = {{"location1", 0.5, 0}, {"location2", 0.5, 0}};
        Lexicon lex(std::move(pools), LexiconParams{1, 1.0, 0.0, 0});

        AnnotatedSentence s;
        s.tokens = {"noun1", "transitive_verb2s", "noun3", "preposition1", "location2"};
        // -log2 p: 1, 2, 2, 0, 1 -> mean 6/5.
        CHECK(sentence_entropy(s, lex) == doctest::Approx(1.2).epsilon(1e-12));

        s.tokens.push_back("mystery1");
        CHECK_THROWS_AS(sentence_entropy(s, lex), DataError);
    }

    TEST_CASE("entropy bounded by the rarest token surprisal") {
        auto lex = build_lexicon(VocabularySpec::defaults(), LexiconParams::defaults());
        double min_weight = 1.0;
        for (const auto& cat : categories())
            for (const auto& e : lex.pool(cat)) min_weight = std::min(min_weight, e.weight);
        const double bound = -std::log2(min_weight);
        Rng rng(31);
        for (const auto& f : default_frames()) {
            for (int i = 0; i < 50; ++i) {
                auto s = generate_sentence(f, lex, rng);
                CHECK(s.meta.entropy >= 0.0);
                CHECK(s.meta.entropy <= bound);
            }
        }
    }
}

TEST_SUITE("corpusgen.corpus") {
    TEST_CASE("single-sentence corpus") {
        auto lex = build_lexicon(VocabularySpec::defaults(), LexiconParams::defaults());
        auto c = generate_corpus(1, default_complexity_distribution(),
                                 default_frame_distribution(), lex, default_frames(), 4);
        REQUIRE(c.sentences.size() == 1);
        CHECK(c.stats.num_sentences == 1);
        CHECK(c.sentences[0].pos_tags.size() == c.sentences[0].tokens.size());
    }

    TEST_CASE("same seed yields byte-identical JSON") {
        auto lex = build_lexicon(VocabularySpec::defaults(), LexiconParams::defaults());
        auto a = generate_corpus(200, default_complexity_distribution(),
                                 default_frame_distribution(), lex, default_frames(), 99);
        auto b = generate_corpus(200, default_complexity_distribution(),
                                 default_frame_distribution(), lex, default_frames(), 99);
        CHECK(corpus_to_json(a) == corpus_to_json(b));
        auto c = generate_corpus(200, default_complexity_distribution(),
                                 default_frame_distribution(), lex, default_frames(), 100);
        CHECK(corpus_to_json(a) != corpus_to_json(c));
    }

    TEST_CASE("empirical class fractions track the request") {
        auto lex = build_lexicon(VocabularySpec::defaults(), LexiconParams::defaults());
        const int n = 4000;
        auto c = generate_corpus(n, default_complexity_distribution(),
                                 default_frame_distribution(), lex, default_frames(), 8);
        for (const auto& [cls, frac] : default_complexity_distribution()) {
            const double got =
                static_cast<double>(c.stats.complexity_counts[cls]) / static_cast<double>(n);
            const double tol = 3.0 * std::sqrt(frac * (1 - frac) / n);
            CHECK(std::abs(got - frac) <= tol);
        }
        // Default frame weights are class-consistent, so requested fractions
        // are also marginal probabilities.
        for (const auto& [name, frac] : default_frame_distribution()) {
            const double got =
                static_cast<double>(c.stats.frame_counts[name]) / static_cast<double>(n);
            CHECK(std::abs(got - frac) <= 3.0 * std::sqrt(frac * (1 - frac) / n));
        }
    }

    TEST_CASE("bad distributions rejected") {
        auto lex = build_lexicon(VocabularySpec::defaults(), LexiconParams::defaults());
        std::map<std::string, double> bad = {{"simple", 0.5}, {"medium", 0.4}};
        CHECK_THROWS_AS(generate_corpus(10, bad, default_frame_distribution(), lex,
                                        default_frames(), 1),
                        ConfigError);
        // Complex mass but only simple frames registered with weight.
        std::map<std::string, double> frames_only_simple = {{"motion", 1.0}};
        CHECK_THROWS_AS(generate_corpus(10, default_complexity_distribution(),
                                        frames_only_simple, lex, default_frames(), 1),
                        ConfigError);
        std::map<std::string, double> unknown_frame = {{"imaginary_frame", 1.0}};
        CHECK_THROWS_AS(generate_corpus(10, default_complexity_distribution(), unknown_frame,
                                        lex, default_frames(), 1),
                        ConfigError);
    }

    TEST_CASE("stats of a hand-built corpus") {
        AnnotatedSentence a;
        a.tokens = {"noun1", "motion_verb1s", "location1"};
        a.pos_tags = {"NN", "VB", "NN"};
        a.roles = {{0, "Agent"}, {1, "Action"}, {2, "Destination"}};
        a.meta = {"simple", "motion", 3, 1.0};
        AnnotatedSentence b;
        b.tokens = {"noun2", "intransitive_verb1s"};
        b.pos_tags = {"NN", "VB"};
        b.roles = {{0, "Agent"}, {1, "Action"}};
        b.meta = {"simple", "intransitive_action", 2, 1.0};
        AnnotatedSentence c;
        c.tokens = {"noun1", "intransitive_verb1s"};
        c.pos_tags = {"NN", "VB"};
        c.roles = {{0, "Agent"}, {1, "Action"}};
        c.meta = {"simple", "intransitive_action", 2, 1.0};

        auto st = corpus_stats({a, b, c});
        CHECK(st.num_sentences == 3);
        CHECK(st.vocabulary == 5);
        CHECK(st.avg_length == doctest::Approx(7.0 / 3.0).epsilon(1e-12));
        CHECK(st.role_frequencies["Agent"] == 3);
        CHECK(st.role_frequencies["Action"] == 3);
        CHECK(st.role_frequencies["Destination"] == 1);
        CHECK(st.complexity_counts["simple"] == 3);
        CHECK(st.frame_counts["intransitive_action"] == 2);
        CHECK(st.length_histogram[2] == 2);
        CHECK(st.length_histogram[3] == 1);

        auto single = corpus_stats({a});
        CHECK(single.avg_length == doctest::Approx(5.0 / 1.0 * 3.0 / 5.0)); // 3 tokens
        CHECK(single.num_sentences == 1);

        CHECK_THROWS_AS(corpus_stats({}), DataError);
    }
}

TEST_SUITE("corpusgen.serialization") {
    TEST_CASE("round trip preserves fields and bytes") {
        auto lex = build_lexicon(VocabularySpec::defaults(), LexiconParams::defaults());
        auto c = generate_corpus(1000, default_complexity_distribution(),
                                 default_frame_distribution(), lex, default_frames(), 21);
        const auto dir = testutil::scratch_dir("corpus_rt");
        const auto path = dir + "/corpus.json";
        save_corpus(c, path, 2);
        auto loaded = load_corpus(path);
        REQUIRE(loaded.sentences.size() == c.sentences.size());
        for (size_t i = 0; i < c.sentences.size(); ++i) {
            const auto& x = c.sentences[i];
            const auto& y = loaded.sentences[i];
            REQUIRE(x.tokens == y.tokens);
            REQUIRE(x.pos_tags == y.pos_tags);
            REQUIRE(x.roles.size() == y.roles.size());
            for (size_t r = 0; r < x.roles.size(); ++r) {
                REQUIRE(x.roles[r].position == y.roles[r].position);
                REQUIRE(x.roles[r].role == y.roles[r].role);
            }
            REQUIRE(x.meta.complexity == y.meta.complexity);
            REQUIRE(x.meta.frame == y.meta.frame);
            REQUIRE(x.meta.length == y.meta.length);
            REQUIRE(x.meta.entropy == y.meta.entropy);
        }
        const auto path2 = dir + "/corpus2.json";
        save_corpus(loaded, path2, 2);
        CHECK(testutil::read_file(path) == testutil::read_file(path2));
    }

    TEST_CASE("out-of-range role position names the sentence") {
        const char* text = R"({"sentences": [
            {"sentence": "noun1 intransitive_verb1s", "pos_tags": ["NN","VB"],
             "roles_by_position": [{"position": 5, "role": "Agent"}],
             "metadata": {"complexity": "simple", "frame": "intransitive_action",
                          "length": 2, "entropy": 0.5}}]})";
        CHECK_THROWS_WITH_AS(corpus_from_json(text),
                             doctest::Contains("sentence 0"), DataError);
    }

    TEST_CASE("token-keyed role map parses to positioned roles") {
        const char* text = R"({
          "sentences": [{
            "sentence": "noun139 transitive_verb8s noun40 preposition4 location2",
            "semantic_roles": {
              "noun139": {"role": "Agent", "position": 0},
              "noun40": {"role": "Patient", "position": 2},
              "location2": {"role": "Location", "position": 4}
            },
            "pos_tags": ["NN", "VB", "NN", "IN", "NN"],
            "metadata": {"complexity": "medium", "frame": "transitive_action",
                         "length": 5, "entropy": 2.25}
          }]})";
        auto c = corpus_from_json(text);
        REQUIRE(c.sentences.size() == 1);
        const auto& s = c.sentences[0];
        CHECK(s.tokens == std::vector<std::string>{"noun139", "transitive_verb8s", "noun40",
                                                   "preposition4", "location2"});
        REQUIRE(s.roles.size() == 3);
        CHECK(s.roles[0].position == 0);
        CHECK(s.roles[0].role == "Agent");
        CHECK(s.roles[1].position == 2);
        CHECK(s.roles[1].role == "Patient");
        CHECK(s.roles[2].position == 4);
        CHECK(s.roles[2].role == "Location");
        CHECK(s.meta.entropy == doctest::Approx(2.25));
    }

    TEST_CASE("malformed JSON rejected") {
        CHECK_THROWS_AS(corpus_from_json("{not json"), DataError);
        CHECK_THROWS_AS(corpus_from_json(R"({"sentences": []})"), DataError);
    }
}
