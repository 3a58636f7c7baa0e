#include "rasper/concordance.hpp"

#include "rasper/error.hpp"

#include <algorithm>
#include <cctype>
#include <random>

namespace rasper {

const char* to_string(Measure measure) noexcept
{
    return measure == Measure::Spearman ? "spearman" : "kendall";
}

Measure parse_measure(const std::string& name)
{
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "spearman") return Measure::Spearman;
    if (lower == "kendall") return Measure::Kendall;
    throw Error(ErrorCode::InvalidArgument, "unknown measure \"" + name + "\" (spearman, kendall)");
}

void ConcordanceSpec::validate() const
{
    if (!(nu > 0.0) || !std::isfinite(nu)) throw Error(ErrorCode::InvalidArgument, "nu must be positive and finite");
    if (samples < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be at least 1");
}

std::vector<int> exact_rank_params(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta)
{
    if (x.cols() != beta.size()) throw Error(ErrorCode::DimensionMismatch, "beta length differs from column count");
    if (!beta.allFinite()) throw Error(ErrorCode::InvalidArgument, "beta is not finite");
    const auto n = x.rows();
    std::vector<int> psi(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        int count = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if ((x.row(i) - x.row(j)).dot(beta) >= 0.0) ++count;
        }
        psi[static_cast<std::size_t>(i)] = count;
    }
    return psi;
}

Eigen::VectorXd smooth_rank_params(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta, double nu)
{
    if (!(nu > 0.0)) throw Error(ErrorCode::InvalidArgument, "nu must be positive");
    if (x.cols() != beta.size()) throw Error(ErrorCode::DimensionMismatch, "beta length differs from column count");
    const auto n = x.rows();
    const Eigen::VectorXd eta = x * beta / nu;
    Eigen::VectorXd psi = Eigen::VectorXd::Constant(n, 0.5);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double s = logistic(eta(i) - eta(j));
            psi(i) += s;
            psi(j) += 1.0 - s;
        }
    }
    return psi;
}

PairWeights pair_weights(const ExternalRanks& ranks, Measure measure)
{
    const auto n = static_cast<Eigen::Index>(ranks.size());
    if (n < 1) throw Error(ErrorCode::EmptyData, "no ranks");
    PairWeights weights;
    weights.measure = measure;
    weights.w.setZero(n, n);
    const double nd = static_cast<double>(n);
    if (measure == Measure::Spearman) {
        for (Eigen::Index i = 0; i < n; ++i) {
            weights.w.row(i).setConstant(ranks.r[static_cast<std::size_t>(i)] / (4.0 * nd * nd));
        }
    } else {
        if (n < 2) return weights;
        const double scale = 2.0 / (nd * (nd - 1.0));
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                if (ranks.r[static_cast<std::size_t>(i)] > ranks.r[static_cast<std::size_t>(j)]) weights.w(i, j) = scale;
            }
        }
    }
    return weights;
}

Eigen::MatrixXd literal_kendall_weights(const ExternalRanks& ranks)
{
    const auto n = static_cast<Eigen::Index>(ranks.size());
    if (n < 2) throw Error(ErrorCode::EmptyData, "need at least two ranks");
    const double nd = static_cast<double>(n);
    Eigen::MatrixXd w(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double ind = ranks.r[static_cast<std::size_t>(i)] > ranks.r[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
            w(i, j) = (2.0 * ind - 1.0) / (nd * (nd - 1.0));
        }
    }
    return w;
}

std::vector<Eigen::MatrixXd> MarginalSampler::draw_tables(const Eigen::MatrixXd& z) const
{
    const auto n = z.rows();
    const auto q = z.cols();
    const auto m = cross_covariance.rows();
    if (cross_covariance.cols() != q) throw Error(ErrorCode::DimensionMismatch, "conventional block width differs from sampler");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Eigen::MatrixXd> tables;
    tables.reserve(static_cast<std::size_t>(samples));
    const Eigen::MatrixXd mean = z * cross_covariance.transpose();
    Eigen::VectorXd eps(m);
    for (int s = 0; s < samples; ++s) {
        Eigen::MatrixXd table(n, q + m);
        table.leftCols(q) = z;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index k = 0; k < m; ++k) eps(k) = normal(rng);
            table.row(i).tail(m) = mean.row(i) + (conditional_factor * eps).transpose();
        }
        tables.push_back(std::move(table));
    }
    return tables;
}

MarginalSampler build_marginal_sampler(const Eigen::MatrixXd& z, const Eigen::MatrixXd& b, int samples,
                                       std::uint64_t seed)
{
    if (z.rows() != b.rows()) throw Error(ErrorCode::DimensionMismatch, "conventional and novel blocks differ in rows");
    if (z.rows() < 1) throw Error(ErrorCode::EmptyData, "no rows");
    if (samples < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be at least 1");

    MarginalSampler sampler;
    sampler.samples = samples;
    sampler.seed = seed;
    const auto m = b.cols();
    sampler.cross_covariance = b.transpose() * z / static_cast<double>(z.rows());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(m, m) -
                          sampler.cross_covariance * sampler.cross_covariance.transpose();
    cov = (0.5 * (cov + cov.transpose())).eval();
    if (m > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        const Eigen::VectorXd values = eig.eigenvalues().cwiseMax(0.0);
        sampler.conditional_covariance = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
        sampler.conditional_factor = eig.eigenvectors() * values.cwiseSqrt().asDiagonal();
    } else {
        sampler.conditional_covariance = cov;
        sampler.conditional_factor = cov;
    }
    return sampler;
}

ConcordanceTerm::ConcordanceTerm(Eigen::MatrixXd x, PairWeights weights, double nu)
    : ConcordanceTerm(std::vector<Eigen::MatrixXd>{std::move(x)}, std::move(weights), nu)
{
}

ConcordanceTerm::ConcordanceTerm(std::vector<Eigen::MatrixXd> tables, PairWeights weights, double nu)
    : tables_(std::move(tables)), weights_(std::move(weights)), nu_(nu)
{
    if (!(nu_ > 0.0) || !std::isfinite(nu_)) throw Error(ErrorCode::InvalidArgument, "nu must be positive and finite");
    if (tables_.empty()) throw Error(ErrorCode::EmptyData, "no design tables");
    const auto n = weights_.size();
    for (const auto& t : tables_) {
        if (t.rows() != n || t.cols() != tables_.front().cols()) {
            throw Error(ErrorCode::DimensionMismatch, "design table shape differs from weights");
        }
    }
    if ((weights_.w.array() < 0.0).any() || !weights_.w.allFinite()) {
        throw Error(ErrorCode::InvalidArgument, "pair weights must be finite and nonnegative");
    }
    if (!(weights_.total() > 0.0)) throw Error(ErrorCode::DegenerateWeights, "all pair weights are zero");
    prepare();
}

void ConcordanceTerm::prepare()
{
    // Pair (i, j) and (j, i) share one sigmoid: w_ij s + w_ji (1 - s) = w_ji + (w_ij - w_ji) s.
    const auto& w = weights_.w;
    difference_ = w - w.transpose();
    baseline_ = 0.5 * w.diagonal().sum() + w.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().sum();
}

namespace {

/// s = g_1(u) elementwise; exp(-u) may overflow to inf, which gives s = 0.
inline Eigen::ArrayXd logistic_array(const Eigen::ArrayXd& u)
{
    return 1.0 / (1.0 + (-u).exp());
}

} // namespace

double ConcordanceTerm::value(const Eigen::VectorXd& beta) const
{
    if (beta.size() != cols()) throw Error(ErrorCode::DimensionMismatch, "beta length differs from column count");
    const auto n = rows();
    double total = 0.0;
    for (const auto& x : tables_) {
        const Eigen::ArrayXd eta = (x * beta / nu_).array();
        double sum = baseline_;
        for (Eigen::Index j = 0; j + 1 < n; ++j) {
            const auto len = n - j - 1;
            const Eigen::ArrayXd s = logistic_array(eta.tail(len) - eta(j));
            sum += (difference_.col(j).tail(len).array() * s).sum();
        }
        total += sum;
    }
    return total * table_factor();
}

Eigen::VectorXd ConcordanceTerm::gradient(const Eigen::VectorXd& beta) const
{
    if (beta.size() != cols()) throw Error(ErrorCode::DimensionMismatch, "beta length differs from column count");
    const auto n = rows();
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(cols());
    Eigen::ArrayXd g(n);
    for (const auto& x : tables_) {
        const Eigen::ArrayXd eta = (x * beta / nu_).array();
        g.setZero();
        for (Eigen::Index j = 0; j + 1 < n; ++j) {
            const auto len = n - j - 1;
            const Eigen::ArrayXd s = logistic_array(eta.tail(len) - eta(j));
            const Eigen::ArrayXd d = difference_.col(j).tail(len).array() * s * (1.0 - s);
            g.tail(len) += d;
            g(j) -= d.sum();
        }
        grad.noalias() += x.transpose() * g.matrix();
    }
    return grad * (table_factor() / nu_);
}

ConcordanceDerivatives ConcordanceTerm::derivatives(const Eigen::VectorXd& beta) const
{
    if (beta.size() != cols()) throw Error(ErrorCode::DimensionMismatch, "beta length differs from column count");
    const auto n = rows();
    const auto p = cols();
    ConcordanceDerivatives out;
    out.gradient.setZero(p);
    out.hessian.setZero(p, p);
    Eigen::ArrayXd g(n);
    Eigen::ArrayXd diag(n);
    // Weighted graph Laplacian of sigma''; only the strict lower triangle and
    // the diagonal are written, and the product reads it as symmetric.
    Eigen::MatrixXd laplacian(n, n);
    for (const auto& x : tables_) {
        const Eigen::ArrayXd eta = (x * beta / nu_).array();
        double sum = baseline_;
        g.setZero();
        diag.setZero();
        for (Eigen::Index j = 0; j + 1 < n; ++j) {
            const auto len = n - j - 1;
            const Eigen::ArrayXd s = logistic_array(eta.tail(len) - eta(j));
            const auto dw = difference_.col(j).tail(len).array();
            const Eigen::ArrayXd first = dw * s * (1.0 - s);
            const Eigen::ArrayXd second = first * (1.0 - 2.0 * s);
            sum += (dw * s).sum();
            g.tail(len) += first;
            g(j) -= first.sum();
            laplacian.col(j).tail(len) = -second.matrix();
            diag.tail(len) += second;
            diag(j) += second.sum();
        }
        laplacian.diagonal() = diag.matrix();
        out.value += sum;
        out.gradient.noalias() += x.transpose() * g.matrix();
        out.hessian.noalias() += x.transpose() * (laplacian.selfadjointView<Eigen::Lower>() * x);
    }
    const double f = table_factor();
    out.value *= f;
    out.gradient *= f / nu_;
    out.hessian *= f / (nu_ * nu_);
    out.hessian = (0.5 * (out.hessian + out.hessian.transpose())).eval();
    return out;
}

double concordance_value(const ConcordanceTerm& term, const Eigen::VectorXd& beta)
{
    return term.value(beta);
}

Eigen::VectorXd concordance_gradient(const ConcordanceTerm& term, const Eigen::VectorXd& beta)
{
    return term.gradient(beta);
}

double literal_kendall_value(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta, double nu,
                             const ExternalRanks& ranks)
{
    const Eigen::MatrixXd w = literal_kendall_weights(ranks);
    const Eigen::VectorXd eta = x * beta / nu;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.rows(); ++j) sum += w(i, j) * logistic(eta(i) - eta(j));
    }
    return sum;
}

ConcordanceTerm make_concordance_term(const Eigen::MatrixXd& x, Eigen::Index q, const ExternalRanks& ranks,
                                      const ConcordanceSpec& spec)
{
    spec.validate();
    if (static_cast<Eigen::Index>(ranks.size()) != x.rows()) {
        throw Error(ErrorCode::DimensionMismatch, "rank count differs from design rows");
    }
    PairWeights weights = pair_weights(ranks, spec.measure);
    if (!spec.marginalized || q >= x.cols()) return ConcordanceTerm(x, std::move(weights), spec.nu);
    const MarginalSampler sampler = build_marginal_sampler(x.leftCols(q), x.rightCols(x.cols() - q),
                                                           spec.samples, spec.seed);
    return ConcordanceTerm(sampler.draw_tables(x.leftCols(q)), std::move(weights), spec.nu);
}

} // namespace rasper
