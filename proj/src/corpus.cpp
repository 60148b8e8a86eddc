#include "trace/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "trace/common.hpp"

namespace trace::corpusgen {

using ordered_json = nlohmann::ordered_json;

const std::vector<std::string>& categories() {
    static const std::vector<std::string> cats = {
        "noun",        "transitive_verb", "intransitive_verb", "communication_verb",
        "motion_verb", "change_verb",     "adjective",         "adverb",
        "location",    "temporal",        "instrument",        "preposition",
        "conjunction", "determiner"};
    return cats;
}

bool is_category(const std::string& name) {
    const auto& cats = categories();
    return std::find(cats.begin(), cats.end(), name) != cats.end();
}

bool is_verb_category(const std::string& name) {
    // "adverb" ends in "verb" as well, hence the underscore check.
    return name.size() > 5 && name.compare(name.size() - 5, 5, "_verb") == 0;
}

std::string pos_tag_for(const std::string& category) {
    if (category == "noun" || category == "location") return "NN";
    if (is_verb_category(category)) return "VB";
    if (category == "adjective") return "JJ";
    if (category == "adverb") return "RB";
    if (category == "determiner") return "DT";
    if (category == "conjunction") return "CC";
    if (category == "temporal") return "NNT";
    if (category == "instrument") return "NNI";
    if (category == "preposition") return "IN";
    throw ConfigError("unknown lexical category: " + category);
}

const std::vector<std::string>& pos_tagset() {
    static const std::vector<std::string> tags = {"NN", "VB", "IN",  "JJ", "RB",
                                                  "DT", "CC", "NNT", "NNI"};
    return tags;
}

const std::vector<std::string>& role_inventory() {
    static const std::vector<std::string> roles = {
        "NONE",   "Agent",       "Action", "Patient", "Location", "Destination",
        "Source", "Temporal",    "Instrument", "Result", "Relation"};
    return roles;
}

int VocabularySpec::total() const {
    int sum = 0;
    for (const auto& [cat, n] : sizes) sum += n;
    return sum;
}

void VocabularySpec::validate() const {
    if (sizes.empty()) throw ConfigError("vocabulary spec is empty");
    for (const auto& [cat, n] : sizes) {
        if (!is_category(cat)) throw ConfigError("unknown lexical category: " + cat);
        if (n < 1) throw ConfigError("vocabulary size for " + cat + " must be >= 1");
    }
}

VocabularySpec VocabularySpec::defaults() {
    VocabularySpec spec;
    spec.sizes = {{"noun", 300},        {"transitive_verb", 40}, {"intransitive_verb", 25},
                  {"communication_verb", 20}, {"motion_verb", 20},     {"change_verb", 15},
                  {"adjective", 40},    {"adverb", 25},          {"location", 150},
                  {"temporal", 35},     {"instrument", 25},      {"preposition", 15},
                  {"conjunction", 10},  {"determiner", 8}};
    return spec;
}

void LexiconParams::validate() const {
    if (num_clusters < 1) throw ConfigError("num_clusters must be >= 1");
    if (!(zipfian_alpha > 0.0)) throw ConfigError("zipfian_alpha must be > 0");
    if (!(error_bias >= 0.0 && error_bias < 1.0))
        throw ConfigError("error_bias must lie in [0, 1)");
}

LexiconParams LexiconParams::defaults() {
    LexiconParams p;
    p.num_clusters = 5;
    p.zipfian_alpha = 1.05;
    p.error_bias = 0.00001;
    p.random_seed = 42;
    return p;
}

Lexicon::Lexicon(std::map<std::string, std::vector<LexEntry>> pools, LexiconParams params)
    : pools_(std::move(pools)), params_(params) {
    for (auto& [cat, entries] : pools_) {
        if (entries.empty()) throw ConfigError("empty pool for category " + cat);
        double sum = 0.0;
        for (const auto& e : entries) sum += e.weight;
        if (!(sum > 0.0)) throw ConfigError("non-positive pool weight sum for " + cat);
        for (auto& e : entries) e.weight /= sum;
    }
    build_index();
}

void Lexicon::build_index() {
    cumulative_.clear();
    index_.clear();
    for (const auto& [cat, entries] : pools_) {
        std::vector<double> cum;
        cum.reserve(entries.size());
        double acc = 0.0;
        for (size_t i = 0; i < entries.size(); ++i) {
            acc += entries[i].weight;
            cum.push_back(acc);
            auto [it, inserted] =
                index_.emplace(entries[i].name, std::make_pair(cat, static_cast<int>(i)));
            if (!inserted) throw ConfigError("duplicate token name: " + entries[i].name);
        }
        cum.back() = 1.0;
        cumulative_[cat] = std::move(cum);
    }
}

const std::vector<LexEntry>& Lexicon::pool(const std::string& category) const {
    auto it = pools_.find(category);
    if (it == pools_.end()) throw ConfigError("unknown lexical category: " + category);
    return it->second;
}

bool Lexicon::has_category(const std::string& category) const {
    return pools_.count(category) > 0;
}

int Lexicon::total_tokens() const {
    int sum = 0;
    for (const auto& [cat, entries] : pools_) sum += static_cast<int>(entries.size());
    return sum;
}

const std::vector<double>& Lexicon::cumulative(const std::string& category) const {
    auto it = cumulative_.find(category);
    if (it == cumulative_.end()) throw ConfigError("unknown lexical category: " + category);
    return it->second;
}

TokenInfo Lexicon::lookup(const std::string& surface) const {
    auto it = index_.find(surface);
    if (it == index_.end() && !surface.empty() && surface.back() == 's') {
        // Verb surface forms carry a third-person "s" suffix.
        auto base = surface.substr(0, surface.size() - 1);
        auto bit = index_.find(base);
        if (bit != index_.end() && is_verb_category(bit->second.first)) it = bit;
    }
    if (it == index_.end()) throw DataError("token not in lexicon: " + surface);
    const auto& [cat, idx] = it->second;
    const auto& entry = pools_.at(cat)[static_cast<size_t>(idx)];
    return TokenInfo{cat, idx + 1, entry.weight};
}

bool Lexicon::contains(const std::string& surface) const {
    try {
        lookup(surface);
        return true;
    } catch (const DataError&) {
        return false;
    }
}

Lexicon build_lexicon(const VocabularySpec& spec, const LexiconParams& params) {
    spec.validate();
    params.validate();
    std::map<std::string, std::vector<LexEntry>> pools;
    for (const auto& [cat, n] : spec.sizes) {
        std::vector<LexEntry> entries;
        entries.reserve(static_cast<size_t>(n));
        double norm = 0.0;
        for (int r = 1; r <= n; ++r) norm += std::pow(static_cast<double>(r), -params.zipfian_alpha);
        for (int r = 1; r <= n; ++r) {
            LexEntry e;
            e.name = cat + std::to_string(r);
            e.weight = std::pow(static_cast<double>(r), -params.zipfian_alpha) / norm;
            e.cluster = (r - 1) % params.num_clusters;
            entries.push_back(std::move(e));
        }
        pools[cat] = std::move(entries);
    }
    return Lexicon(std::move(pools), params);
}

std::string sample_token(const Lexicon& lexicon, const std::string& category, Rng& rng) {
    const auto& pool = lexicon.pool(category);
    const auto& cum = lexicon.cumulative(category);
    const double u = rng.uniform();
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    size_t idx = static_cast<size_t>(it - cum.begin());
    if (idx >= pool.size()) idx = pool.size() - 1;
    const double e = rng.uniform();
    if (e < lexicon.params().error_bias) idx = rng.below(pool.size());
    return pool[idx].name;
}

void SemanticFrame::validate(const Lexicon& lexicon) const {
    if (slots.empty()) throw ConfigError("frame " + name + " has an empty template");
    for (const auto& slot : slots) {
        if (!is_category(slot.category))
            throw ConfigError("frame " + name + " uses unknown category " + slot.category);
        if (!slot.role.empty() && !lexicon.has_category(slot.category))
            throw ConfigError("frame " + name + " role slot category " + slot.category +
                              " missing from lexicon");
    }
}

std::string complexity_class_for(const SemanticFrame& frame) {
    if (frame.name == "multi_action" || frame.name == "temporal_complex") return "complex";
    const size_t n = frame.slots.size();
    if (n <= 3) return "simple";
    if (n <= 5) return "medium";
    return "complex";
}

const std::vector<SemanticFrame>& default_frames() {
    static const std::vector<SemanticFrame> frames = [] {
        std::vector<SemanticFrame> f;
        auto add = [&f](std::string name, std::vector<Slot> slots) {
            SemanticFrame fr{std::move(name), std::move(slots), ""};
            fr.complexity = complexity_class_for(fr);
            f.push_back(std::move(fr));
        };
        add("intransitive_action", {{"noun", "Agent"}, {"intransitive_verb", "Action"}});
        add("motion", {{"noun", "Agent"}, {"motion_verb", "Action"}, {"location", "Destination"}});
        add("temporal_action",
            {{"noun", "Agent"}, {"intransitive_verb", "Action"}, {"temporal", "Temporal"}});
        add("transitive_action", {{"noun", "Agent"},
                                  {"transitive_verb", ""},
                                  {"noun", "Patient"},
                                  {"preposition", ""},
                                  {"location", "Location"}});
        add("transitive_with_location", {{"noun", "Agent"},
                                         {"transitive_verb", "Action"},
                                         {"adjective", ""},
                                         {"noun", "Patient"},
                                         {"location", "Location"}});
        add("motion_with_source",
            {{"noun", "Agent"}, {"motion_verb", "Action"}, {"preposition", ""}, {"location", "Source"}});
        add("instrumental_action", {{"noun", "Agent"},
                                    {"transitive_verb", "Action"},
                                    {"noun", "Patient"},
                                    {"preposition", ""},
                                    {"instrument", "Instrument"}});
        add("multi_action", {{"noun", "Agent"},
                             {"transitive_verb", "Action"},
                             {"noun", "Patient"},
                             {"conjunction", "Relation"},
                             {"communication_verb", "Action"},
                             {"noun", "Result"},
                             {"adverb", ""}});
        add("temporal_complex", {{"temporal", "Temporal"},
                                 {"determiner", ""},
                                 {"noun", "Agent"},
                                 {"change_verb", "Action"},
                                 {"determiner", ""},
                                 {"noun", "Patient"},
                                 {"preposition", ""},
                                 {"location", "Location"}});
        return f;
    }();
    return frames;
}

std::string AnnotatedSentence::text() const {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

AnnotatedSentence generate_sentence(const SemanticFrame& frame, const Lexicon& lexicon, Rng& rng) {
    frame.validate(lexicon);
    AnnotatedSentence s;
    s.tokens.reserve(frame.slots.size());
    s.pos_tags.reserve(frame.slots.size());
    for (size_t i = 0; i < frame.slots.size(); ++i) {
        const auto& slot = frame.slots[i];
        std::string tok = sample_token(lexicon, slot.category, rng);
        if (is_verb_category(slot.category)) tok += 's';
        s.tokens.push_back(std::move(tok));
        s.pos_tags.push_back(pos_tag_for(slot.category));
        if (!slot.role.empty()) s.roles.push_back({static_cast<int>(i), slot.role});
    }
    s.meta.complexity = frame.complexity;
    s.meta.frame = frame.name;
    s.meta.length = static_cast<int>(s.tokens.size());
    s.meta.entropy = sentence_entropy(s, lexicon);
    return s;
}

double sentence_entropy(const AnnotatedSentence& sentence, const Lexicon& lexicon) {
    if (sentence.tokens.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& tok : sentence.tokens) {
        const TokenInfo info = lexicon.lookup(tok);
        acc += -std::log2(info.weight);
    }
    return acc / static_cast<double>(sentence.tokens.size());
}

CorpusStats corpus_stats(const std::vector<AnnotatedSentence>& sentences) {
    if (sentences.empty()) throw DataError("corpus is empty");
    CorpusStats st;
    st.num_sentences = static_cast<int>(sentences.size());
    std::set<std::string> vocab;
    long long total_len = 0;
    for (const auto& s : sentences) {
        total_len += s.meta.length;
        st.length_histogram[s.meta.length] += 1;
        st.complexity_counts[s.meta.complexity] += 1;
        st.frame_counts[s.meta.frame] += 1;
        for (const auto& t : s.tokens) vocab.insert(t);
        for (const auto& r : s.roles) st.role_frequencies[r.role] += 1;
    }
    st.vocabulary = static_cast<int>(vocab.size());
    st.avg_length = static_cast<double>(total_len) / static_cast<double>(sentences.size());
    return st;
}

namespace {

void check_distribution(const std::map<std::string, double>& dist, const std::string& what) {
    if (dist.empty()) throw ConfigError(what + " distribution is empty");
    double sum = 0.0;
    for (const auto& [k, v] : dist) {
        if (v < 0.0) throw ConfigError(what + " fraction for " + k + " is negative");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError(what + " distribution sums to " + std::to_string(sum) + ", expected 1");
}

// Draw a key from an (ordered) discrete distribution given cum weights.
template <class Items>
size_t draw_index(const Items& cum, double total, Rng& rng) {
    const double u = rng.uniform() * total;
    size_t lo = 0;
    while (lo + 1 < cum.size() && u >= cum[lo]) ++lo;
    return lo;
}

} // namespace

const std::map<std::string, double>& default_complexity_distribution() {
    static const std::map<std::string, double> d = {
        {"simple", 0.55}, {"medium", 0.35}, {"complex", 0.10}};
    return d;
}

const std::map<std::string, double>& default_frame_distribution() {
    // Per-class masses sum to the default complexity masses, so requested
    // frame fractions are also the marginal frame probabilities.
    static const std::map<std::string, double> d = {
        {"motion", 0.20},           {"intransitive_action", 0.20},
        {"temporal_action", 0.15},  {"transitive_action", 0.10},
        {"transitive_with_location", 0.08}, {"motion_with_source", 0.08},
        {"instrumental_action", 0.09}, {"multi_action", 0.06},
        {"temporal_complex", 0.04}};
    return d;
}

Corpus generate_corpus(int num_sentences,
                       const std::map<std::string, double>& complexity_distribution,
                       const std::map<std::string, double>& frame_distribution,
                       const Lexicon& lexicon,
                       const std::vector<SemanticFrame>& frames,
                       uint64_t seed) {
    if (num_sentences < 1) throw ConfigError("num_sentences must be >= 1");
    check_distribution(complexity_distribution, "complexity");
    check_distribution(frame_distribution, "frame");

    std::map<std::string, const SemanticFrame*> by_name;
    for (const auto& f : frames) {
        f.validate(lexicon);
        if (f.slots.size() < 2)
            throw ConfigError("registered frame " + f.name + " template shorter than 2 slots");
        by_name[f.name] = &f;
    }
    for (const auto& [name, w] : frame_distribution)
        if (!by_name.count(name)) throw ConfigError("frame not registered: " + name);

    // Class order is fixed for reproducible sampling.
    const std::vector<std::string> class_order = {"simple", "medium", "complex"};
    std::vector<double> class_cum;
    double class_total = 0.0;
    for (const auto& c : class_order) {
        auto it = complexity_distribution.find(c);
        class_total += (it == complexity_distribution.end() ? 0.0 : it->second);
        class_cum.push_back(class_total);
    }
    for (const auto& [c, w] : complexity_distribution)
        if (std::find(class_order.begin(), class_order.end(), c) == class_order.end())
            throw ConfigError("unknown complexity class: " + c);

    // Per-class conditional frame pools in frame registration order.
    std::map<std::string, std::vector<const SemanticFrame*>> class_frames;
    std::map<std::string, std::vector<double>> class_frame_cum;
    for (const auto& c : class_order) {
        std::vector<const SemanticFrame*> pool;
        std::vector<double> cum;
        double acc = 0.0;
        for (const auto& f : frames) {
            auto it = frame_distribution.find(f.name);
            if (it == frame_distribution.end() || it->second <= 0.0) continue;
            if (f.complexity != c) continue;
            pool.push_back(&f);
            acc += it->second;
            cum.push_back(acc);
        }
        const auto ci = complexity_distribution.find(c);
        const double cmass = ci == complexity_distribution.end() ? 0.0 : ci->second;
        if (cmass > 0.0 && pool.empty())
            throw ConfigError("no frame with positive weight for complexity class " + c);
        class_frames[c] = std::move(pool);
        class_frame_cum[c] = std::move(cum);
    }

    Corpus corpus;
    corpus.metadata.seed = seed;
    corpus.metadata.complexity_distribution = complexity_distribution;
    corpus.metadata.frame_distribution = frame_distribution;
    corpus.metadata.generator_version = kVersion;
    corpus.sentences.reserve(static_cast<size_t>(num_sentences));

    for (int i = 0; i < num_sentences; ++i) {
        Rng rng = Rng::substream(seed, static_cast<uint64_t>(i));
        const size_t ci = draw_index(class_cum, class_total, rng);
        const std::string& cls = class_order[ci];
        const auto& pool = class_frames[cls];
        const auto& cum = class_frame_cum[cls];
        const size_t fi = draw_index(cum, cum.back(), rng);
        corpus.sentences.push_back(generate_sentence(*pool[fi], lexicon, rng));
    }
    corpus.stats = corpus_stats(corpus.sentences);
    return corpus;
}

namespace {

ordered_json sentence_to_json(const AnnotatedSentence& s) {
    ordered_json j;
    j["sentence"] = s.text();
    j["tokens"] = s.tokens;
    j["pos_tags"] = s.pos_tags;
    ordered_json roles_map = ordered_json::object();
    for (const auto& r : s.roles) {
        ordered_json entry;
        entry["role"] = r.role;
        entry["position"] = r.position;
        roles_map[s.tokens[static_cast<size_t>(r.position)]] = entry;
    }
    j["semantic_roles"] = roles_map;
    ordered_json roles_list = ordered_json::array();
    for (const auto& r : s.roles) {
        ordered_json entry;
        entry["position"] = r.position;
        entry["role"] = r.role;
        roles_list.push_back(entry);
    }
    j["roles_by_position"] = roles_list;
    ordered_json meta;
    meta["complexity"] = s.meta.complexity;
    meta["frame"] = s.meta.frame;
    meta["length"] = s.meta.length;
    meta["entropy"] = s.meta.entropy;
    j["metadata"] = meta;
    return j;
}

std::vector<std::string> split_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

AnnotatedSentence sentence_from_json(const ordered_json& j, size_t index) {
    auto fail = [index](const std::string& msg) -> DataError {
        return DataError("sentence " + std::to_string(index) + ": " + msg);
    };
    AnnotatedSentence s;
    if (j.contains("tokens")) {
        s.tokens = j.at("tokens").get<std::vector<std::string>>();
    } else if (j.contains("sentence")) {
        s.tokens = split_tokens(j.at("sentence").get<std::string>());
    } else {
        throw fail("missing tokens");
    }
    if (s.tokens.empty()) throw fail("empty token list");
    if (!j.contains("pos_tags")) throw fail("missing pos_tags");
    s.pos_tags = j.at("pos_tags").get<std::vector<std::string>>();
    if (s.pos_tags.size() != s.tokens.size())
        throw fail("pos_tags length does not match token count");

    const int len = static_cast<int>(s.tokens.size());
    std::set<int> seen;
    auto add_role = [&](int pos, const std::string& role) {
        if (pos < 0 || pos >= len)
            throw fail("role position " + std::to_string(pos) + " out of range");
        if (!seen.insert(pos).second)
            throw fail("duplicate role position " + std::to_string(pos));
        s.roles.push_back({pos, role});
    };
    if (j.contains("roles_by_position")) {
        for (const auto& e : j.at("roles_by_position"))
            add_role(e.at("position").get<int>(), e.at("role").get<std::string>());
    } else if (j.contains("semantic_roles")) {
        // Paper-style token-keyed map; positions are carried in the values.
        std::vector<std::pair<int, std::string>> entries;
        for (const auto& [tok, e] : j.at("semantic_roles").items()) {
            (void)tok;
            entries.emplace_back(e.at("position").get<int>(), e.at("role").get<std::string>());
        }
        std::sort(entries.begin(), entries.end());
        for (const auto& [pos, role] : entries) add_role(pos, role);
    }

    s.meta.length = len;
    if (j.contains("metadata")) {
        const auto& m = j.at("metadata");
        s.meta.complexity = m.value("complexity", std::string());
        s.meta.frame = m.value("frame", std::string());
        s.meta.entropy = m.value("entropy", 0.0);
        if (m.contains("length") && m.at("length").get<int>() != len)
            throw fail("metadata length does not match token count");
    }
    return s;
}

} // namespace

std::string corpus_to_json(const Corpus& corpus, int indent) {
    ordered_json j;
    ordered_json meta;
    meta["seed"] = corpus.metadata.seed;
    ordered_json dists;
    dists["complexity"] = corpus.metadata.complexity_distribution;
    dists["frames"] = corpus.metadata.frame_distribution;
    meta["distributions"] = dists;
    meta["generator_version"] = corpus.metadata.generator_version;
    j["metadata"] = meta;

    const CorpusStats st = corpus_stats(corpus.sentences);
    ordered_json stats;
    stats["num_sentences"] = st.num_sentences;
    stats["vocabulary"] = st.vocabulary;
    stats["avg_length"] = st.avg_length;
    stats["role_frequencies"] = st.role_frequencies;
    stats["complexity_counts"] = st.complexity_counts;
    stats["frame_counts"] = st.frame_counts;
    ordered_json hist = ordered_json::object();
    for (const auto& [len, count] : st.length_histogram) hist[std::to_string(len)] = count;
    stats["length_histogram"] = hist;
    j["statistics"] = stats;

    ordered_json sentences = ordered_json::array();
    for (const auto& s : corpus.sentences) sentences.push_back(sentence_to_json(s));
    j["sentences"] = sentences;
    return indent >= 0 ? j.dump(indent) : j.dump();
}

void save_corpus(const Corpus& corpus, const std::string& path, int indent) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out << corpus_to_json(corpus, indent);
    out << '\n';
}

Corpus corpus_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed corpus JSON: ") + e.what());
    }
    Corpus corpus;
    try {
        if (j.contains("metadata")) {
            const auto& m = j.at("metadata");
            corpus.metadata.seed = m.value("seed", 0ull);
            corpus.metadata.generator_version = m.value("generator_version", std::string());
            if (m.contains("distributions")) {
                const auto& d = m.at("distributions");
                if (d.contains("complexity"))
                    corpus.metadata.complexity_distribution =
                        d.at("complexity").get<std::map<std::string, double>>();
                if (d.contains("frames"))
                    corpus.metadata.frame_distribution =
                        d.at("frames").get<std::map<std::string, double>>();
            }
        }
        if (!j.contains("sentences")) throw DataError("corpus JSON has no sentences array");
        const auto& arr = j.at("sentences");
        corpus.sentences.reserve(arr.size());
        for (size_t i = 0; i < arr.size(); ++i)
            corpus.sentences.push_back(sentence_from_json(arr[i], i));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed corpus JSON: ") + e.what());
    }
    if (corpus.sentences.empty()) throw DataError("corpus JSON has no sentences");
    corpus.stats = corpus_stats(corpus.sentences);
    return corpus;
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return corpus_from_json(buf.str());
}

GeneratorConfig GeneratorConfig::from_json_text(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed generator config: ") + e.what());
    }
    GeneratorConfig cfg;
    try {
        if (j.contains("vocabulary")) {
            cfg.vocabulary.sizes = j.at("vocabulary").get<std::map<std::string, int>>();
        }
        if (j.contains("lexicon")) {
            const auto& l = j.at("lexicon");
            cfg.lexicon.num_clusters = l.value("num_clusters", cfg.lexicon.num_clusters);
            cfg.lexicon.zipfian_alpha = l.value("zipfian_alpha", cfg.lexicon.zipfian_alpha);
            cfg.lexicon.error_bias = l.value("error_bias", cfg.lexicon.error_bias);
            if (l.contains("random_seed")) {
                cfg.lexicon.random_seed = l.at("random_seed").get<uint64_t>();
                cfg.lexicon_seed_set = true;
            }
        }
        if (j.contains("complexity_distribution"))
            cfg.complexity_distribution =
                j.at("complexity_distribution").get<std::map<std::string, double>>();
        if (j.contains("frame_distribution"))
            cfg.frame_distribution =
                j.at("frame_distribution").get<std::map<std::string, double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed generator config: ") + e.what());
    }
    cfg.vocabulary.validate();
    cfg.lexicon.validate();
    return cfg;
}

GeneratorConfig GeneratorConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open generator config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

} // namespace trace::corpusgen
