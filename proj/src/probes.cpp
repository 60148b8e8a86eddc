#include "trace/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "trace/common.hpp"

namespace trace::probes {

std::vector<double> ProbeModel::predict_probs(const double* row) const {
    const int k = static_cast<int>(labels.size());
    std::vector<double> logits(static_cast<size_t>(k));
    for (int c = 0; c < k; ++c) {
        double z = bias[static_cast<size_t>(c)];
        const double* w = weights.data() + static_cast<size_t>(c) * d_model;
        for (int j = 0; j < d_model; ++j) z += w[j] * row[j];
        logits[static_cast<size_t>(c)] = z;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (auto& z : logits) {
        z = std::exp(z - mx);
        sum += z;
    }
    for (auto& z : logits) z /= sum;
    return logits;
}

int ProbeModel::predict(const double* row) const {
    const auto p = predict_probs(row);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

ProbeModel train_probe(const ProbeDataset& dataset, const std::vector<std::string>& labels,
                       int layer, const std::string& stack, int epochs, double lr,
                       uint64_t seed, double weight_decay) {
    (void)seed; // deterministic: zero init + full-batch updates
    const int n = dataset.rows();
    const int d = dataset.d;
    const int k = static_cast<int>(labels.size());
    if (n < 1 || d < 1) throw UsageError("train_probe: empty dataset");
    if (k < 2) throw UsageError("train_probe: need at least two labels");
    std::set<int> distinct(dataset.labels.begin(), dataset.labels.end());
    for (int l : dataset.labels)
        if (l < 0 || l >= k) throw UsageError("train_probe: label index out of range");
    if (distinct.size() < 2)
        throw DegenerateDataError("train_probe: dataset carries a single label");

    // Standardize each feature and scale by 1/sqrt(d); folded back below.
    std::vector<double> mean(static_cast<size_t>(d), 0.0), scale(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += dataset.x[static_cast<size_t>(i) * d + j];
    for (auto& m : mean) m /= static_cast<double>(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            const double diff = dataset.x[static_cast<size_t>(i) * d + j] - mean[static_cast<size_t>(j)];
            scale[static_cast<size_t>(j)] += diff * diff;
        }
    const double sqrt_d = std::sqrt(static_cast<double>(d));
    for (auto& s : scale) {
        const double sd = std::sqrt(s / static_cast<double>(n));
        s = 1.0 / (std::max(sd, 1e-8) * sqrt_d);
    }
    std::vector<double> xs(dataset.x.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            xs[static_cast<size_t>(i) * d + j] =
                (dataset.x[static_cast<size_t>(i) * d + j] - mean[static_cast<size_t>(j)]) *
                scale[static_cast<size_t>(j)];

    std::vector<double> w(static_cast<size_t>(k) * d, 0.0), b(static_cast<size_t>(k), 0.0);
    std::vector<double> gw(w.size()), gb(b.size());
    std::vector<double> logits(static_cast<size_t>(k));
    ProbeModel probe;
    probe.train_loss_history.reserve(static_cast<size_t>(epochs));

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        double loss = 0.0;
        for (int i = 0; i < n; ++i) {
            const double* row = xs.data() + static_cast<size_t>(i) * d;
            for (int c = 0; c < k; ++c) {
                double z = b[static_cast<size_t>(c)];
                const double* wc = w.data() + static_cast<size_t>(c) * d;
                for (int j = 0; j < d; ++j) z += wc[j] * row[j];
                logits[static_cast<size_t>(c)] = z;
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double sum = 0.0;
            for (auto& z : logits) {
                z = std::exp(z - mx);
                sum += z;
            }
            const int gold = dataset.labels[static_cast<size_t>(i)];
            loss += -std::log(logits[static_cast<size_t>(gold)] / sum);
            for (int c = 0; c < k; ++c) {
                const double p = logits[static_cast<size_t>(c)] / sum;
                const double err = p - (c == gold ? 1.0 : 0.0);
                gb[static_cast<size_t>(c)] += err;
                double* gwc = gw.data() + static_cast<size_t>(c) * d;
                for (int j = 0; j < d; ++j) gwc[j] += err * row[j];
            }
        }
        loss /= static_cast<double>(n);
        double penalty = 0.0;
        for (double v : w) penalty += v * v;
        probe.train_loss_history.push_back(loss + 0.5 * weight_decay * penalty);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (size_t idx = 0; idx < w.size(); ++idx)
            w[idx] -= lr * (gw[idx] * inv_n + weight_decay * w[idx]);
        for (size_t idx = 0; idx < b.size(); ++idx) b[idx] -= lr * gb[idx] * inv_n;
    }

    // Fold standardization into the affine map: W'x + b' == W xs + b.
    probe.layer = layer;
    probe.stack = stack;
    probe.labels = labels;
    probe.d_model = d;
    probe.weights.assign(static_cast<size_t>(k) * d, 0.0);
    probe.bias.assign(static_cast<size_t>(k), 0.0);
    for (int c = 0; c < k; ++c) {
        double shift = b[static_cast<size_t>(c)];
        for (int j = 0; j < d; ++j) {
            const double wj = w[static_cast<size_t>(c) * d + j] * scale[static_cast<size_t>(j)];
            probe.weights[static_cast<size_t>(c) * d + j] = wj;
            shift -= wj * mean[static_cast<size_t>(j)];
        }
        probe.bias[static_cast<size_t>(c)] = shift;
    }
    // Quantize to the float32 persistence format so save/load round trips
    // are bit-exact.
    for (auto& v : probe.weights) v = static_cast<double>(static_cast<float>(v));
    for (auto& v : probe.bias) v = static_cast<double>(static_cast<float>(v));
    return probe;
}

ProbeReport probe_confidence(const ProbeModel& probe, const ProbeDataset& dataset) {
    if (probe.d_model != dataset.d)
        throw CompatibilityError("probe d_model " + std::to_string(probe.d_model) +
                                 " does not match dataset width " + std::to_string(dataset.d));
    const int k = static_cast<int>(probe.labels.size());
    std::vector<double> conf(static_cast<size_t>(k), 0.0);
    std::vector<long long> correct(static_cast<size_t>(k), 0), count(static_cast<size_t>(k), 0);
    const int n = dataset.rows();
    for (int i = 0; i < n; ++i) {
        const int gold = dataset.labels[static_cast<size_t>(i)];
        if (gold < 0 || gold >= k) throw UsageError("probe_confidence: label out of range");
        const auto p = probe.predict_probs(dataset.x.data() + static_cast<size_t>(i) * dataset.d);
        conf[static_cast<size_t>(gold)] += p[static_cast<size_t>(gold)];
        const int pred = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        if (pred == gold) ++correct[static_cast<size_t>(gold)];
        ++count[static_cast<size_t>(gold)];
    }
    ProbeReport report;
    for (int c = 0; c < k; ++c) {
        if (count[static_cast<size_t>(c)] == 0) continue; // no confidence value for empty labels
        LabelStat stat;
        stat.label = probe.labels[static_cast<size_t>(c)];
        stat.count = count[static_cast<size_t>(c)];
        stat.confidence = conf[static_cast<size_t>(c)] / static_cast<double>(stat.count);
        stat.accuracy =
            static_cast<double>(correct[static_cast<size_t>(c)]) / static_cast<double>(stat.count);
        report.per_label.push_back(std::move(stat));
    }
    return report;
}

std::optional<long long> emergence_step(const std::vector<std::pair<long long, double>>& series,
                                        double threshold, int patience) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw UsageError("emergence threshold must lie in (0, 1)");
    if (patience < 1) throw UsageError("emergence patience must be >= 1");
    if (series.empty()) return std::nullopt;
    for (size_t i = 1; i < series.size(); ++i)
        if (series[i].first <= series[i - 1].first)
            throw UsageError("emergence series must be sorted by step");
    const size_t n = series.size();
    for (size_t i = 0; i + static_cast<size_t>(patience) <= n; ++i) {
        bool sustained = true;
        for (size_t j = i; j < i + static_cast<size_t>(patience); ++j) {
            if (series[j].second < threshold) {
                sustained = false;
                break;
            }
        }
        if (sustained) return series[i].first;
    }
    return std::nullopt;
}

namespace {
constexpr char kProbeMagic[] = "TRACEPROBE1\n";
}

void save_probe(const ProbeModel& probe, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open probe file for writing: " + path);
    nlohmann::ordered_json manifest;
    manifest["layer"] = probe.layer;
    manifest["stack"] = probe.stack;
    manifest["labels"] = probe.labels;
    manifest["d_model"] = probe.d_model;
    const std::string text = manifest.dump();
    out.write(kProbeMagic, static_cast<std::streamsize>(std::strlen(kProbeMagic)));
    const uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::vector<float> block;
    block.reserve(probe.weights.size() + probe.bias.size());
    for (double v : probe.weights) block.push_back(static_cast<float>(v));
    for (double v : probe.bias) block.push_back(static_cast<float>(v));
    out.write(reinterpret_cast<const char*>(block.data()),
              static_cast<std::streamsize>(block.size() * sizeof(float)));
    if (!out) throw DataError("short write to probe file: " + path);
}

ProbeModel load_probe(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open probe file: " + path);
    const size_t magic_len = std::strlen(kProbeMagic);
    std::string magic(magic_len, '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic_len));
    if (!in || magic != kProbeMagic) throw DataError("not a probe file (bad magic): " + path);
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("truncated probe manifest: " + path);
    ProbeModel probe;
    try {
        const auto manifest = nlohmann::json::parse(text);
        probe.layer = manifest.at("layer").get<int>();
        probe.stack = manifest.at("stack").get<std::string>();
        probe.labels = manifest.at("labels").get<std::vector<std::string>>();
        probe.d_model = manifest.at("d_model").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed probe manifest: ") + e.what());
    }
    const size_t k = probe.labels.size();
    const size_t total = k * static_cast<size_t>(probe.d_model) + k;
    std::vector<float> block(total);
    in.read(reinterpret_cast<char*>(block.data()),
            static_cast<std::streamsize>(total * sizeof(float)));
    if (!in) throw DataError("truncated probe weight block: " + path);
    probe.weights.assign(block.begin(), block.begin() + static_cast<long>(k * probe.d_model));
    probe.bias.assign(block.begin() + static_cast<long>(k * probe.d_model), block.end());
    return probe;
}

void check_probe_compatibility(const ProbeModel& probe, int d_model, int num_layers,
                               const std::vector<std::string>& expected_labels) {
    if (probe.d_model != d_model)
        throw CompatibilityError("probe trained for d_model " + std::to_string(probe.d_model) +
                                 ", current model uses " + std::to_string(d_model));
    if (probe.layer < 0 || probe.layer >= num_layers)
        throw CompatibilityError("probe layer " + std::to_string(probe.layer) +
                                 " out of range for " + std::to_string(num_layers) + " layers");
    if (!expected_labels.empty() && probe.labels != expected_labels)
        throw CompatibilityError("probe label set does not match the expected label set");
}

} // namespace trace::probes
