#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "trace/rng.hpp"

namespace trace::corpusgen {

// Closed set of lexical categories. Category names are also the token name
// prefixes (`noun139`, `transitive_verb8`, ...).
const std::vector<std::string>& categories();
bool is_category(const std::string& name);
bool is_verb_category(const std::string& name);

// Deterministic category -> coarse POS tag mapping.
std::string pos_tag_for(const std::string& category);

// Canonical label inventories used by probes and diagnostics.
const std::vector<std::string>& pos_tagset();
const std::vector<std::string>& role_inventory(); // includes NONE at index 0

struct VocabularySpec {
    std::map<std::string, int> sizes;

    int total() const;
    void validate() const; // unknown category or count < 1 -> ConfigError
    static VocabularySpec defaults();
};

struct LexiconParams {
    int num_clusters = 5;
    double zipfian_alpha = 1.0;
    double error_bias = 0.0;
    uint64_t random_seed = 0;

    void validate() const;
    static LexiconParams defaults();
};

struct LexEntry {
    std::string name;  // base name, e.g. "noun3" (verbs are stored unsuffixed)
    double weight;     // normalized Zipf weight within the category pool
    int cluster;
};

// Looked-up information for a surface token.
struct TokenInfo {
    std::string category;
    int rank;       // 1-based rank within the pool
    double weight;  // normalized weight within the pool
};

class Lexicon {
public:
    Lexicon() = default;
    // Direct construction from explicit pools (weights are normalized here).
    Lexicon(std::map<std::string, std::vector<LexEntry>> pools, LexiconParams params);

    const std::vector<LexEntry>& pool(const std::string& category) const;
    bool has_category(const std::string& category) const;
    const LexiconParams& params() const { return params_; }
    int total_tokens() const;

    // Resolves a surface token (with the verb "s" suffix allowed) to its
    // pool entry. Unknown token -> DataError.
    TokenInfo lookup(const std::string& surface) const;
    bool contains(const std::string& surface) const;

    // Cumulative weights for inverse-CDF sampling.
    const std::vector<double>& cumulative(const std::string& category) const;

private:
    void build_index();

    std::map<std::string, std::vector<LexEntry>> pools_;
    std::map<std::string, std::vector<double>> cumulative_;
    std::unordered_map<std::string, std::pair<std::string, int>> index_; // base -> (category, rank-1)
    LexiconParams params_;
};

// Zipf(alpha)-weighted pools with round-robin cluster assignment.
Lexicon build_lexicon(const VocabularySpec& spec, const LexiconParams& params);

// One weighted draw from a category pool; with probability error_bias the
// draw is replaced by a uniform same-category token. Returns the base name.
std::string sample_token(const Lexicon& lexicon, const std::string& category, Rng& rng);

struct Slot {
    std::string category;
    std::string role; // empty when the slot bears no semantic role
};

struct SemanticFrame {
    std::string name;
    std::vector<Slot> slots;
    std::string complexity; // simple | medium | complex

    void validate(const Lexicon& lexicon) const;
};

// The nine built-in frames. Complexity classes follow the slot-count rule:
// <=3 simple, 4-5 medium, >=6 or multi-clause complex.
const std::vector<SemanticFrame>& default_frames();
std::string complexity_class_for(const SemanticFrame& frame);

struct RoleAt {
    int position;
    std::string role;
};

struct SentenceMeta {
    std::string complexity;
    std::string frame;
    int length = 0;
    double entropy = 0.0;
};

struct AnnotatedSentence {
    std::vector<std::string> tokens;
    std::vector<std::string> pos_tags;
    std::vector<RoleAt> roles;
    SentenceMeta meta;

    std::string text() const; // tokens joined by single spaces
};

AnnotatedSentence generate_sentence(const SemanticFrame& frame, const Lexicon& lexicon, Rng& rng);

// Mean per-token surprisal -log2 p under the category-internal pool weights.
double sentence_entropy(const AnnotatedSentence& sentence, const Lexicon& lexicon);

struct CorpusStats {
    int num_sentences = 0;
    int vocabulary = 0; // distinct surface tokens
    double avg_length = 0.0;
    std::map<std::string, int> role_frequencies;
    std::map<std::string, int> complexity_counts;
    std::map<std::string, int> frame_counts;
    std::map<int, int> length_histogram;
};

struct CorpusMetadata {
    uint64_t seed = 0;
    std::map<std::string, double> complexity_distribution;
    std::map<std::string, double> frame_distribution;
    std::string generator_version;
};

struct Corpus {
    CorpusMetadata metadata;
    std::vector<AnnotatedSentence> sentences;
    CorpusStats stats;
};

CorpusStats corpus_stats(const std::vector<AnnotatedSentence>& sentences);

Corpus generate_corpus(int num_sentences,
                       const std::map<std::string, double>& complexity_distribution,
                       const std::map<std::string, double>& frame_distribution,
                       const Lexicon& lexicon,
                       const std::vector<SemanticFrame>& frames,
                       uint64_t seed);

// Default distributions (all nine frames, 55/35/10 complexity mix).
const std::map<std::string, double>& default_complexity_distribution();
const std::map<std::string, double>& default_frame_distribution();

// JSON (de)serialization. `indent` < 0 writes compact JSON, otherwise the
// given indent width. load validates annotations and names the offending
// sentence index in errors; statistics are recomputed from the sentences.
void save_corpus(const Corpus& corpus, const std::string& path, int indent = 2);
std::string corpus_to_json(const Corpus& corpus, int indent = 2);
Corpus load_corpus(const std::string& path);
Corpus corpus_from_json(const std::string& text);

// Configuration for the `generate` CLI subcommand.
struct GeneratorConfig {
    VocabularySpec vocabulary = VocabularySpec::defaults();
    LexiconParams lexicon = LexiconParams::defaults();
    std::map<std::string, double> complexity_distribution = default_complexity_distribution();
    std::map<std::string, double> frame_distribution = default_frame_distribution();
    bool lexicon_seed_set = false; // when false, the corpus seed is reused

    static GeneratorConfig from_json_file(const std::string& path);
    static GeneratorConfig from_json_text(const std::string& text);
};

} // namespace trace::corpusgen
