#include "trace/intdim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <unordered_set>

#include <Eigen/Dense>

#include "trace/common.hpp"
#include "trace/rng.hpp"

namespace trace::intdim {

namespace {

struct RowHash {
    const PointCloud* pc;
    size_t operator()(int i) const {
        const double* r = pc->row(i);
        size_t h = 1469598103934665603ull;
        for (int j = 0; j < pc->d; ++j) {
            uint64_t bits;
            std::memcpy(&bits, &r[j], sizeof(bits));
            h = (h ^ bits) * 1099511628211ull;
        }
        return h;
    }
};

struct RowEq {
    const PointCloud* pc;
    bool operator()(int a, int b) const {
        return std::equal(pc->row(a), pc->row(a) + pc->d, pc->row(b));
    }
};

std::vector<int> unique_rows(const PointCloud& pc) {
    std::unordered_set<int, RowHash, RowEq> seen(16, RowHash{&pc}, RowEq{&pc});
    std::vector<int> keep;
    keep.reserve(static_cast<size_t>(pc.n));
    for (int i = 0; i < pc.n; ++i)
        if (seen.insert(i).second) keep.push_back(i);
    return keep;
}

double sq_dist(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
        const double diff = a[j] - b[j];
        s += diff * diff;
    }
    return s;
}

} // namespace

bool PointCloud::has_duplicates() const { return static_cast<int>(unique_rows(*this).size()) < n; }

double twonn_estimate(const PointCloud& points, double discard_fraction) {
    if (points.n < 20)
        throw SampleSizeError("TwoNN needs at least 20 points, got " + std::to_string(points.n));
    if (discard_fraction < 0.0 || discard_fraction >= 1.0)
        throw UsageError("discard_fraction must lie in [0, 1)");

    const auto keep = unique_rows(points);
    const int m = static_cast<int>(keep.size());
    if (m < 3)
        throw DegenerateDataError("TwoNN: fewer than 3 distinct points (all distances zero)");

    std::vector<double> mu;
    mu.reserve(static_cast<size_t>(m));
    for (int ii = 0; ii < m; ++ii) {
        const double* p = points.row(keep[static_cast<size_t>(ii)]);
        double r1 = std::numeric_limits<double>::infinity();
        double r2 = std::numeric_limits<double>::infinity();
        for (int jj = 0; jj < m; ++jj) {
            if (jj == ii) continue;
            const double dsq = sq_dist(p, points.row(keep[static_cast<size_t>(jj)]), points.d);
            if (dsq <= 0.0) continue; // numerically coincident: treated as duplicate
            if (dsq < r1) {
                r2 = r1;
                r1 = dsq;
            } else if (dsq < r2) {
                r2 = dsq;
            }
        }
        if (!std::isfinite(r1) || !std::isfinite(r2))
            throw DegenerateDataError("TwoNN: point with fewer than two distinct neighbors");
        mu.push_back(std::sqrt(r2 / r1));
    }

    std::sort(mu.begin(), mu.end());
    const int discard = static_cast<int>(std::floor(discard_fraction * static_cast<double>(m)));
    const int retained = m - discard;
    double log_sum = 0.0;
    for (int i = 0; i < retained; ++i) log_sum += std::log(mu[static_cast<size_t>(i)]);
    if (log_sum <= 0.0)
        throw DegenerateDataError("TwoNN: degenerate neighbor ratios (all mu equal 1)");
    return static_cast<double>(retained) / log_sum;
}

int pca_estimate(const PointCloud& points, double variance_threshold) {
    if (points.n < 2)
        throw SampleSizeError("PCA estimator needs at least 2 points, got " +
                              std::to_string(points.n));
    if (variance_threshold <= 0.0 || variance_threshold > 1.0)
        throw UsageError("variance threshold must lie in (0, 1]");

    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
        points.data.data(), points.n, points.d);
    Eigen::RowVectorXd mean = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - mean;
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(points.n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericError("PCA eigensolver failed");

    std::vector<double> ev(solver.eigenvalues().data(), solver.eigenvalues().data() + points.d);
    std::sort(ev.begin(), ev.end(), std::greater<>());
    double total = 0.0;
    for (auto& v : ev) {
        if (v < 0.0) v = 0.0; // numeric noise
        total += v;
    }
    if (total <= 0.0) throw DegenerateDataError("PCA estimator: zero total variance");

    double cum = 0.0;
    for (int k = 1; k < points.d; ++k) {
        cum += ev[static_cast<size_t>(k - 1)];
        if (cum / total >= variance_threshold - 1e-12) return k;
    }
    return points.d;
}

PointCloud subsample(const PointCloud& points, int row_cap, uint64_t seed) {
    if (row_cap <= 0) throw UsageError("row cap must be positive");
    if (points.n <= row_cap) return points;
    std::vector<int> idx(static_cast<size_t>(points.n));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx.begin(), idx.end());
    idx.resize(static_cast<size_t>(row_cap));
    std::sort(idx.begin(), idx.end());
    PointCloud out;
    out.n = row_cap;
    out.d = points.d;
    out.data.reserve(static_cast<size_t>(row_cap) * points.d);
    for (int i : idx) out.data.insert(out.data.end(), points.row(i), points.row(i) + points.d);
    return out;
}

std::vector<IdRecord> layer_id_report(const std::vector<PointCloud>& layer_clouds,
                                      const std::string& method, long long step, int row_cap,
                                      uint64_t subsample_seed) {
    if (method != "TwoNN" && method != "PCA")
        throw ConfigError("unknown id_method: " + method);
    std::vector<IdRecord> records;
    double sum = 0.0;
    int finite = 0;
    for (size_t layer = 0; layer < layer_clouds.size(); ++layer) {
        PointCloud cloud = subsample(layer_clouds[layer], row_cap,
                                     mix_seed(subsample_seed, static_cast<uint64_t>(layer)));
        IdRecord rec;
        rec.step = step;
        rec.layer = std::to_string(layer);
        rec.method = method;
        rec.count = cloud.n;
        try {
            rec.estimate = method == "TwoNN" ? twonn_estimate(cloud)
                                             : static_cast<double>(pca_estimate(cloud));
            sum += rec.estimate;
            ++finite;
        } catch (const Error&) {
            rec.estimate = std::numeric_limits<double>::quiet_NaN();
        }
        records.push_back(std::move(rec));
    }
    IdRecord avg;
    avg.step = step;
    avg.layer = "AVG";
    avg.method = method;
    avg.count = finite;
    avg.estimate =
        finite > 0 ? sum / static_cast<double>(finite) : std::numeric_limits<double>::quiet_NaN();
    records.push_back(std::move(avg));
    return records;
}

} // namespace trace::intdim
