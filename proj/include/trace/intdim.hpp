#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace trace::intdim {

struct PointCloud {
    int n = 0;
    int d = 0;
    std::vector<double> data; // row-major n x d

    const double* row(int i) const { return data.data() + static_cast<size_t>(i) * d; }
    bool has_duplicates() const;
};

// TwoNN maximum-likelihood estimate from the ratios of second to first
// nearest-neighbor distances. Exact-duplicate rows are collapsed before
// neighbor search; the largest `discard_fraction` of the ratios is dropped.
double twonn_estimate(const PointCloud& points, double discard_fraction = 0.1);

// Smallest k whose top-k covariance eigenvalues reach the variance threshold.
int pca_estimate(const PointCloud& points, double variance_threshold = 0.95);

struct IdRecord {
    long long step = 0;
    std::string layer;  // "0", "1", ... or "AVG"
    std::string method; // TwoNN | PCA
    double estimate = 0.0; // NaN when the estimator failed
    int count = 0;
};

PointCloud subsample(const PointCloud& points, int row_cap, uint64_t seed);

// One record per layer plus the AVG row (arithmetic mean over layers that
// produced an estimate). Estimator errors become NaN records, not throws.
std::vector<IdRecord> layer_id_report(const std::vector<PointCloud>& layer_clouds,
                                      const std::string& method, long long step, int row_cap,
                                      uint64_t subsample_seed);

} // namespace trace::intdim
