#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace trace::probes {

struct ProbeDataset {
    int d = 0;
    std::vector<double> x;  // rows * d, row-major
    std::vector<int> labels; // index into the probe's label list
    int rows() const { return d == 0 ? 0 : static_cast<int>(x.size()) / d; }
};

// Multinomial linear probe (affine map + softmax) over hidden states for one
// (layer, stack) pair.
struct ProbeModel {
    int layer = 0;
    std::string stack = "decoder";
    std::vector<std::string> labels;
    int d_model = 0;
    std::vector<double> weights; // K x d
    std::vector<double> bias;    // K
    std::vector<double> train_loss_history;

    std::vector<double> predict_probs(const double* row) const;
    int predict(const double* row) const;
};

// Full-batch gradient descent with L2 weight decay on a softmax regression.
// Features are standardized internally and the affine map is re-folded to
// raw coordinates afterwards, so the result is still a plain linear probe.
ProbeModel train_probe(const ProbeDataset& dataset, const std::vector<std::string>& labels,
                       int layer, const std::string& stack, int epochs, double lr,
                       uint64_t seed, double weight_decay = 1e-4);

struct LabelStat {
    std::string label;
    double confidence = 0.0; // mean gold-class probability
    double accuracy = 0.0;
    long long count = 0;
};

struct ProbeReport {
    long long step = 0;
    std::vector<LabelStat> per_label; // labels with count > 0 only
};

ProbeReport probe_confidence(const ProbeModel& probe, const ProbeDataset& dataset);

// Earliest step whose confidence stays at or above the threshold for
// `patience` consecutive tracking events; nullopt when never sustained.
std::optional<long long> emergence_step(const std::vector<std::pair<long long, double>>& series,
                                        double threshold, int patience);

void save_probe(const ProbeModel& probe, const std::string& path);
ProbeModel load_probe(const std::string& path);

// Raises CompatibilityError on (d_model, layer, label set) mismatches.
void check_probe_compatibility(const ProbeModel& probe, int d_model, int num_layers,
                               const std::vector<std::string>& expected_labels);

} // namespace trace::probes
