#include "trace/hessian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "trace/common.hpp"
#include "trace/rng.hpp"

namespace trace::hessian {

namespace {

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

std::vector<double> hvp(const GradFn& lossgrad, const std::vector<double>& theta,
                        const std::vector<double>& v, double eps_scale) {
    const double vnorm = norm2(v);
    if (!(vnorm > 0.0)) throw UsageError("hvp: direction has zero norm");
    double theta_inf = 0.0;
    for (double x : theta) theta_inf = std::max(theta_inf, std::abs(x));
    const double eps = eps_scale * (1.0 + theta_inf);

    std::vector<double> plus(theta.size()), minus(theta.size());
    for (size_t i = 0; i < theta.size(); ++i) {
        const double dir = v[i] / vnorm;
        plus[i] = theta[i] + eps * dir;
        minus[i] = theta[i] - eps * dir;
    }
    const std::vector<double> gp = lossgrad(plus);
    const std::vector<double> gm = lossgrad(minus);
    if (gp.size() != theta.size() || gm.size() != theta.size())
        throw DimError("hvp: gradient length does not match parameter length");
    std::vector<double> out(theta.size());
    const double scale = vnorm / (2.0 * eps);
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = (gp[i] - gm[i]) * scale;
        if (!std::isfinite(out[i]))
            throw NumericError("hvp: non-finite perturbed gradient at eps=" +
                               std::to_string(eps));
    }
    return out;
}

HvpOracle::HvpOracle(GradFn lossgrad, std::vector<double> theta, double eps_scale)
    : gradfn_(std::move(lossgrad)), theta_(std::move(theta)), eps_scale_(eps_scale) {
    if (theta_.empty()) throw UsageError("HvpOracle: empty parameter vector");
}

std::vector<double> HvpOracle::operator()(const std::vector<double>& v) const {
    ++probes_;
    return hvp(gradfn_, theta_, v, eps_scale_);
}

MatVec HvpOracle::as_matvec() const {
    return [this](const std::vector<double>& v) { return (*this)(v); };
}

MatVec masked_matvec(const MatVec& base, std::vector<uint8_t> mask) {
    return [base, mask = std::move(mask)](const std::vector<double>& v) {
        std::vector<double> in(v.size(), 0.0);
        bool any = false;
        for (size_t i = 0; i < v.size(); ++i) {
            if (mask[i]) {
                in[i] = v[i];
                if (v[i] != 0.0) any = true;
            }
        }
        if (!any) {
            // Fully outside the block: restriction maps to zero.
            return std::vector<double>(v.size(), 0.0);
        }
        std::vector<double> out = base(in);
        for (size_t i = 0; i < out.size(); ++i)
            if (!mask[i]) out[i] = 0.0;
        return out;
    };
}

LanczosResult lanczos(const MatVec& oracle, size_t dim, int k, int max_iters, uint64_t seed) {
    if (dim == 0) throw UsageError("lanczos: zero dimension");
    if (k < 1) throw UsageError("lanczos: k must be >= 1");
    const int m_target = std::min<int>(max_iters, static_cast<int>(dim));
    if (k > m_target)
        throw UsageError("lanczos: k > max_iters (or dimension): " + std::to_string(k) + " > " +
                         std::to_string(m_target));

    Rng rng(seed);
    std::vector<std::vector<double>> basis;
    std::vector<double> alphas, betas;
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal();
    const double vn = norm2(v);
    for (auto& x : v) x /= vn;
    basis.push_back(v);

    bool breakdown = false;
    double final_beta = 0.0; // norm of the discarded continuation vector
    for (int j = 0; j < m_target; ++j) {
        std::vector<double> w = oracle(basis.back());
        if (w.size() != dim) throw DimError("lanczos: oracle returned wrong dimension");
        const double alpha = dot(basis.back(), w);
        alphas.push_back(alpha);
        for (size_t i = 0; i < dim; ++i) w[i] -= alpha * basis.back()[i];
        if (basis.size() > 1) {
            const double beta_prev = betas.back();
            const auto& prev = basis[basis.size() - 2];
            for (size_t i = 0; i < dim; ++i) w[i] -= beta_prev * prev[i];
        }
        // Full reorthogonalization, two passes; finite-difference products are
        // noisy enough to lose three-term orthogonality quickly.
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& u : basis) {
                const double c = dot(u, w);
                for (size_t i = 0; i < dim; ++i) w[i] -= c * u[i];
            }
        }
        const double beta = norm2(w);
        final_beta = beta;
        if (j + 1 == m_target) break; // tridiagonal of size m_target complete
        if (beta < 1e-12) {
            breakdown = true;
            break;
        }
        betas.push_back(beta);
        for (auto& x : w) x /= beta;
        basis.push_back(std::move(w));
    }

    const int m = static_cast<int>(alphas.size());
    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        tri(i, i) = alphas[static_cast<size_t>(i)];
        if (i + 1 < m) {
            tri(i, i + 1) = betas[static_cast<size_t>(i)];
            tri(i + 1, i) = betas[static_cast<size_t>(i)];
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(tri);
    if (solver.info() != Eigen::Success) throw NumericError("lanczos: tridiagonal eigensolver failed");

    const double beta_m = breakdown ? 0.0 : final_beta;

    LanczosResult result;
    result.iterations = m;
    result.breakdown = breakdown;
    const int count = std::min(k, m);
    for (int i = 0; i < count; ++i) {
        const int col = m - 1 - i; // eigenvalues ascend in Eigen
        result.eigenvalues.push_back(solver.eigenvalues()(col));
        result.residuals.push_back(std::abs(beta_m * solver.eigenvectors()(m - 1, col)));
    }
    // Dominant Ritz vector in the original space, oriented so that its inner
    // product with the start vector is non-negative.
    result.top_ritz_vector.assign(dim, 0.0);
    const int top_col = m - 1;
    for (int j = 0; j < m; ++j) {
        const double y = solver.eigenvectors()(j, top_col);
        const auto& u = basis[static_cast<size_t>(j)];
        for (size_t i = 0; i < dim; ++i) result.top_ritz_vector[i] += y * u[i];
    }
    if (dot(result.top_ritz_vector, basis[0]) < 0.0)
        for (auto& x : result.top_ritz_vector) x = -x;
    return result;
}

TraceEstimate hutchinson_trace(const MatVec& oracle, size_t dim, int n_probes, uint64_t seed) {
    if (n_probes < 1) throw UsageError("hutchinson_trace: n_probes must be >= 1");
    Rng rng(seed);
    std::vector<double> samples;
    samples.reserve(static_cast<size_t>(n_probes));
    std::vector<double> z(dim);
    for (int p = 0; p < n_probes; ++p) {
        for (auto& x : z) x = rng.below(2) == 0 ? -1.0 : 1.0;
        const std::vector<double> hz = oracle(z);
        samples.push_back(dot(z, hz));
    }
    TraceEstimate est;
    est.probes = n_probes;
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(n_probes);
    est.value = mean;
    if (n_probes > 1) {
        double var = 0.0;
        for (double s : samples) var += (s - mean) * (s - mean);
        var /= static_cast<double>(n_probes - 1);
        est.std_error = std::sqrt(var / static_cast<double>(n_probes));
    }
    return est;
}

double gradient_alignment(const std::vector<double>& grad,
                          const std::vector<double>& top_eigenvector) {
    const double gn = norm2(grad);
    const double en = norm2(top_eigenvector);
    if (!(gn > 0.0) || !(en > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return dot(grad, top_eigenvector) / (gn * en);
}

SpectrumRecord analyze_spectrum(const MatVec& oracle, size_t dim,
                                const std::vector<double>& grad, const SpectrumOptions& opts) {
    const int k = opts.n_components;
    const int m = opts.max_iters > 0 ? opts.max_iters : std::max(3 * k, 30);
    int probes = 0;
    MatVec counted = [&oracle, &probes](const std::vector<double>& v) {
        ++probes;
        return oracle(v);
    };
    SpectrumRecord rec;
    auto lz = lanczos(counted, dim, std::min<int>(k, std::min<int>(m, static_cast<int>(dim))),
                      m, opts.seed);
    rec.eigenvalues = lz.eigenvalues;
    rec.breakdown = lz.breakdown;
    auto tr = hutchinson_trace(counted, dim, opts.hutchinson_probes, mix_seed(opts.seed, 0x7a11));
    rec.trace = tr.value;
    rec.trace_std_error = tr.std_error;
    rec.grad_norm = norm2(grad);
    rec.grad_alignment = opts.track_alignment
                             ? gradient_alignment(grad, lz.top_ritz_vector)
                             : std::numeric_limits<double>::quiet_NaN();
    rec.divergence = std::numeric_limits<double>::quiet_NaN();
    rec.hv_probes = probes;
    return rec;
}

double landscape_divergence(const SpectrumRecord& train_record,
                            const SpectrumRecord& val_record) {
    if (train_record.step != val_record.step ||
        train_record.component != val_record.component)
        throw UsageError("landscape_divergence: records must share step and component");
    if (train_record.eigenvalues.empty() || val_record.eigenvalues.empty())
        return std::numeric_limits<double>::quiet_NaN();
    const double lt = train_record.eigenvalues.front();
    const double lv = val_record.eigenvalues.front();
    const double eig_term = std::abs(lt - lv) / (std::abs(lt) + std::abs(lv) + 1e-12);
    const double trace_term = std::abs(train_record.trace - val_record.trace) /
                              (std::abs(train_record.trace) + std::abs(val_record.trace) + 1e-12);
    return 0.5 * eig_term + 0.5 * trace_term;
}

} // namespace trace::hessian
