#include "rasper/baselines.hpp"

#include "rasper/error.hpp"

#include <cmath>
#include <limits>

namespace rasper {

namespace {

constexpr double kMinReciprocalCondition = 1e-13;

void check_shapes(const Eigen::MatrixXd& x, const Eigen::VectorXd& y)
{
    if (x.rows() != y.size()) throw Error(ErrorCode::DimensionMismatch, "design rows differ from outcome length");
    if (y.size() < 1) throw Error(ErrorCode::EmptyData, "no observations");
}

} // namespace

Eigen::VectorXd LinearFit::predict(const Eigen::MatrixXd& x) const
{
    return (x * beta).array() + intercept;
}

LinearFit penalized_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha,
                                  const Eigen::VectorXd& offset)
{
    check_shapes(x, y);
    if (!(alpha >= 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be nonnegative");
    const auto p = x.cols();
    if (offset.size() != p) throw Error(ErrorCode::DimensionMismatch, "offset length differs from column count");

    LinearFit fit;
    const double ybar = y.mean();
    if (p == 0) {
        fit.intercept = ybar;
        fit.beta.resize(0);
        return fit;
    }
    const Eigen::RowVectorXd xbar = x.colwise().mean();
    const Eigen::MatrixXd xc = x.rowwise() - xbar;
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += alpha;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success || llt.rcond() < kMinReciprocalCondition) {
        throw Error(ErrorCode::SingularDesign, "X'X + alpha I is singular");
    }
    fit.beta = llt.solve(xc.transpose() * (y.array() - ybar).matrix() + offset);
    fit.intercept = ybar - xbar.dot(fit.beta);
    return fit;
}

LinearFit fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y)
{
    return penalized_least_squares(x, y, 0.0, Eigen::VectorXd::Zero(x.cols()));
}

LinearFit fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha)
{
    return penalized_least_squares(x, y, alpha, Eigen::VectorXd::Zero(x.cols()));
}

LinearFit fit_dtl(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha, const Eigen::VectorXd& beta_external)
{
    return penalized_least_squares(x, y, alpha, alpha * beta_external);
}

LinearFit fit_atl(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha, double lambda,
                  const Eigen::VectorXd& beta_external)
{
    if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be nonnegative");
    return penalized_least_squares(x, y, alpha, lambda * beta_external);
}

Eigen::VectorXd StackingFit::predict(const Eigen::MatrixXd& x, const Eigen::VectorXd& ranks) const
{
    const auto p = x.cols();
    Eigen::VectorXd out = (x * fit.beta.head(p)).array() + fit.intercept;
    out += fit.beta(p) * ((ranks.array() - rank_mean) / rank_scale).matrix();
    return out;
}

StackingFit fit_stacking(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ExternalRanks& ranks)
{
    check_shapes(x, y);
    const auto n = x.rows();
    if (static_cast<Eigen::Index>(ranks.size()) != n) throw Error(ErrorCode::DimensionMismatch, "rank count differs from rows");
    StackingFit out;
    const Eigen::VectorXd r = ranks.as_vector();
    out.rank_mean = r.mean();
    const double ss = (r.array() - out.rank_mean).square().sum();
    if (n < 2 || ss <= 0.0) throw Error(ErrorCode::SingularDesign, "external ranks are constant");
    out.rank_scale = std::sqrt(ss / static_cast<double>(n - 1));

    Eigen::MatrixXd augmented(n, x.cols() + 1);
    augmented.leftCols(x.cols()) = x;
    augmented.col(x.cols()) = (r.array() - out.rank_mean) / out.rank_scale;

    const Eigen::MatrixXd centered = augmented.rowwise() - augmented.colwise().mean();
    Eigen::VectorXd sd = (centered.colwise().squaredNorm() / static_cast<double>(n - 1)).cwiseSqrt().transpose();
    if ((sd.array() > 0.0).all()) {
        const Eigen::MatrixXd scaled = centered * sd.cwiseInverse().asDiagonal();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled.transpose() * scaled);
        const auto& ev = eig.eigenvalues();
        out.near_collinear = ev.minCoeff() < 1e-8 * ev.maxCoeff();
    } else {
        out.near_collinear = true;
    }
    out.fit = fit_ols(augmented, y);
    return out;
}

Eigen::VectorXd projection_target(const Eigen::MatrixXd& z, const Eigen::VectorXd& mu_external, Eigen::Index p)
{
    if (z.rows() != mu_external.size()) throw Error(ErrorCode::DimensionMismatch, "score length differs from rows");
    if (p < z.cols()) throw Error(ErrorCode::DimensionMismatch, "p smaller than conventional block");
    Eigen::LLT<Eigen::MatrixXd> llt(z.transpose() * z);
    if (llt.info() != Eigen::Success || llt.rcond() < kMinReciprocalCondition) {
        throw Error(ErrorCode::SingularDesign, "Z'Z is singular");
    }
    Eigen::VectorXd target = Eigen::VectorXd::Zero(p);
    target.head(z.cols()) = llt.solve(z.transpose() * mu_external);
    return target;
}

double closed_form_loo(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha,
                       const Eigen::VectorXd& offset)
{
    check_shapes(x, y);
    const auto n = x.rows();
    const auto p = x.cols();
    Eigen::MatrixXd w(n, p + 1);
    w.col(0).setOnes();
    w.rightCols(p) = x;
    Eigen::MatrixXd gram = w.transpose() * w;
    gram.diagonal().tail(p).array() += alpha;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success || llt.rcond() < kMinReciprocalCondition) {
        throw Error(ErrorCode::SingularDesign, "penalized Gram matrix is singular");
    }
    Eigen::VectorXd rhs = w.transpose() * y;
    rhs.tail(p) += offset;
    const Eigen::VectorXd theta = llt.solve(rhs);
    const Eigen::MatrixXd solved = llt.solve(w.transpose());
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = w.row(i).dot(solved.col(i));
        if (!(h < 1.0 - 1e-12)) throw Error(ErrorCode::SingularSystem, "leverage of row " + std::to_string(i) + " is 1");
        const double e = (y(i) - w.row(i).dot(theta)) / (1.0 - h);
        total += 0.5 * e * e;
    }
    return total / static_cast<double>(n);
}

namespace {

template <class Fit>
TunedFit tune(const std::vector<double>& alphas, const std::vector<double>& lambdas, Fit&& loo_and_fit)
{
    if (alphas.empty() || lambdas.empty()) throw Error(ErrorCode::InvalidArgument, "empty tuning grid");
    TunedFit best;
    best.loo = std::numeric_limits<double>::infinity();
    bool found = false;
    for (double lambda : lambdas) {
        for (double alpha : alphas) {
            double score;
            try {
                score = loo_and_fit(alpha, lambda, nullptr);
            } catch (const Error&) {
                continue;
            }
            if (score < best.loo) {
                best.loo = score;
                best.alpha = alpha;
                best.lambda = lambda;
                found = true;
            }
        }
    }
    if (!found) throw Error(ErrorCode::SingularSystem, "no tuning candidate could be evaluated");
    loo_and_fit(best.alpha, best.lambda, &best.fit);
    return best;
}

} // namespace

TunedFit tune_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& alphas)
{
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(x.cols());
    return tune(alphas, {0.0}, [&](double alpha, double, LinearFit* fit) {
        if (fit) {
            *fit = fit_ridge(x, y, alpha);
            return 0.0;
        }
        return closed_form_loo(x, y, alpha, zero);
    });
}

TunedFit tune_dtl(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& alphas,
                  const Eigen::VectorXd& beta_external)
{
    return tune(alphas, {0.0}, [&](double alpha, double, LinearFit* fit) {
        if (fit) {
            *fit = fit_dtl(x, y, alpha, beta_external);
            return 0.0;
        }
        return closed_form_loo(x, y, alpha, alpha * beta_external);
    });
}

TunedFit tune_atl(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& alphas,
                  const std::vector<double>& lambdas, const Eigen::VectorXd& beta_external)
{
    return tune(alphas, lambdas, [&](double alpha, double lambda, LinearFit* fit) {
        if (fit) {
            *fit = fit_atl(x, y, alpha, lambda, beta_external);
            return 0.0;
        }
        return closed_form_loo(x, y, alpha, lambda * beta_external);
    });
}

} // namespace rasper
