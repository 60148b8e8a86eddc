#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace trace::hessian {

// Gradient of the analysis loss as a function of the flat parameter vector.
using GradFn = std::function<std::vector<double>(const std::vector<double>&)>;
// Any H*v routine: finite-difference oracle, explicit matrix, masked wrapper.
using MatVec = std::function<std::vector<double>(const std::vector<double>&)>;

// Central-difference Hessian-vector product around theta:
//   H v ~ (g(theta + eps vhat) - g(theta - eps vhat)) * ||v|| / (2 eps),
// eps = eps_scale * (1 + ||theta||_inf).
std::vector<double> hvp(const GradFn& lossgrad, const std::vector<double>& theta,
                        const std::vector<double>& v, double eps_scale);

// Default perturbation scales for the two storage precisions.
inline constexpr double kEpsScale32 = 1e-3;
inline constexpr double kEpsScale64 = 1e-5;

class HvpOracle {
public:
    HvpOracle(GradFn lossgrad, std::vector<double> theta, double eps_scale);

    std::vector<double> operator()(const std::vector<double>& v) const;
    size_t dim() const { return theta_.size(); }
    int probes_used() const { return probes_; }
    MatVec as_matvec() const;

private:
    GradFn gradfn_;
    std::vector<double> theta_;
    double eps_scale_;
    mutable int probes_ = 0;
};

// Zeroes direction entries outside the mask before and after the product
// (block-restricted Rayleigh quotient).
MatVec masked_matvec(const MatVec& base, std::vector<uint8_t> mask);

struct LanczosResult {
    std::vector<double> eigenvalues; // descending, at most k
    std::vector<double> residuals;   // |beta_m * y_last| per Ritz pair
    std::vector<double> top_ritz_vector; // dim entries, oriented toward the start vector
    int iterations = 0;
    bool breakdown = false;
};

// m-step Lanczos with full reorthogonalization from a seeded random unit
// start vector. Ritz values come from the tridiagonal eigenproblem.
LanczosResult lanczos(const MatVec& oracle, size_t dim, int k, int max_iters, uint64_t seed);

struct TraceEstimate {
    double value = 0.0;
    double std_error = 0.0;
    int probes = 0;
};

// Mean of z^T (H z) over Rademacher probes z.
TraceEstimate hutchinson_trace(const MatVec& oracle, size_t dim, int n_probes, uint64_t seed);

// Cosine between the gradient and the dominant Ritz vector; NaN for a zero
// gradient (recorded as missing).
double gradient_alignment(const std::vector<double>& grad,
                          const std::vector<double>& top_eigenvector);

struct SpectrumRecord {
    long long step = 0;
    std::string split;     // train | val
    std::string component; // all | attention | feed_forward | embedding | head | norm
    std::vector<double> eigenvalues;
    double trace = 0.0;
    double trace_std_error = 0.0;
    double grad_norm = 0.0;
    double grad_alignment = 0.0; // NaN when untracked or undefined
    double divergence = 0.0;     // NaN until paired with the sibling split
    int hv_probes = 0;
    bool breakdown = false;
};

struct SpectrumOptions {
    int n_components = 10;
    int max_iters = 0; // 0 -> max(3k, 30)
    int hutchinson_probes = 20;
    bool track_alignment = true;
    uint64_t seed = 0;
};

// Lanczos top-k + Hutchinson trace + alignment in one pass over an oracle.
SpectrumRecord analyze_spectrum(const MatVec& oracle, size_t dim,
                                const std::vector<double>& grad, const SpectrumOptions& opts);

// |l1_t - l1_v| / (|l1_t| + |l1_v| + 1e-12) averaged equally with the same
// expression over traces; in [0, 1].
double landscape_divergence(const SpectrumRecord& train_record,
                            const SpectrumRecord& val_record);

} // namespace trace::hessian
