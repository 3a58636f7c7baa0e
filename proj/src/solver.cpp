#include "rasper/solver.hpp"

#include "rasper/baselines.hpp"
#include "rasper/error.hpp"

#include <cmath>

namespace rasper {

void PenalizedProblem::validate() const
{
    if (x.rows() != y.size()) throw Error(ErrorCode::DimensionMismatch, "design rows differ from outcome length");
    if (concordance.rows() != x.rows() || concordance.cols() != x.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "concordance term shape differs from design");
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::InvalidArgument, "lambda must be finite and nonnegative");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(ErrorCode::InvalidArgument, "alpha must be finite and nonnegative");
}

NuChoice default_nu(const Eigen::MatrixXd& x, const Eigen::VectorXd& y)
{
    NuChoice choice;
    try {
        choice.nu = 0.1 * fit_ols(x, y).beta.norm();
        choice.source = "ols";
    } catch (const Error& e) {
        if (e.code() != ErrorCode::SingularDesign) throw;
        const double alpha = 1e-4 * static_cast<double>(x.rows());
        choice.nu = 0.1 * fit_ridge(x, y, alpha).beta.norm();
        choice.source = "ridge-fallback";
        choice.warnings.push_back("design is singular; nu taken from a ridge fit with alpha = " + std::to_string(alpha));
    }
    if (!(choice.nu >= kNuFloor)) {
        choice.warnings.push_back("unpenalized fit is numerically zero (nu = " + std::to_string(choice.nu) +
                                  "); using floor " + std::to_string(kNuFloor));
        choice.nu = kNuFloor;
        choice.source = "floor";
    }
    return choice;
}

double jj_coefficient(double u)
{
    if (std::abs(u) <= 1e-4) return 0.125 - u * u / 96.0;
    return std::tanh(0.5 * u) / (4.0 * u);
}

double local_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double intercept,
                       const Eigen::VectorXd& beta, double alpha)
{
    const Eigen::VectorXd resid = (y - x * beta).array() - intercept;
    return 0.5 * resid.squaredNorm() + 0.5 * alpha * beta.squaredNorm();
}

double penalized_objective(const PenalizedProblem& problem, double intercept, const Eigen::VectorXd& beta)
{
    const double local = local_objective(problem.x, problem.y, intercept, beta, problem.alpha);
    if (problem.lambda == 0.0) return local;
    const double d = problem.concordance.value(beta);
    if (!(d > 0.0)) throw Error(ErrorCode::NonpositiveConcordance, "concordance is not positive");
    return local - problem.lambda * std::log(d);
}

Eigen::VectorXd penalized_gradient(const PenalizedProblem& problem, double intercept, const Eigen::VectorXd& beta)
{
    const Eigen::VectorXd fitted_minus_y = (problem.x * beta).array() + intercept - problem.y.array();
    Eigen::VectorXd grad(beta.size() + 1);
    grad(0) = fitted_minus_y.sum();
    grad.tail(beta.size()) = problem.x.transpose() * fitted_minus_y + problem.alpha * beta;
    if (problem.lambda != 0.0) {
        const double d = problem.concordance.value(beta);
        if (!(d > 0.0)) throw Error(ErrorCode::NonpositiveConcordance, "concordance is not positive");
        grad.tail(beta.size()) -= problem.lambda / d * problem.concordance.gradient(beta);
    }
    return grad;
}

Surrogate::Surrogate(const PenalizedProblem& problem, double intercept, const Eigen::VectorXd& beta)
    : problem_(&problem), anchor_(beta)
{
    const auto& term = problem.concordance;
    const auto n = term.rows();
    const auto p = term.cols();
    if (beta.size() != p) throw Error(ErrorCode::DimensionMismatch, "beta length differs from column count");
    const double nu = term.nu();
    const double f = term.table_factor();
    const auto& w = term.weights().w;

    double d = 0.0;
    linear_.setZero(p);
    curvature_.setZero(p, p);
    Eigen::ArrayXd g(n);
    Eigen::ArrayXd diag(n);
    // Strict lower triangle plus diagonal; the product reads it as symmetric.
    Eigen::MatrixXd laplacian(n, n);
    for (const auto& x : term.tables()) {
        const Eigen::ArrayXd eta = (x * beta / nu).array();
        d += f * 0.5 * w.diagonal().sum();
        g.setZero();
        diag.setZero();
        for (Eigen::Index j = 0; j + 1 < n; ++j) {
            const auto len = n - j - 1;
            const Eigen::ArrayXd u = eta.tail(len) - eta(j);
            const Eigen::ArrayXd s = 1.0 / (1.0 + (-u).exp());
            const Eigen::ArrayXd vij = f * w.col(j).tail(len).array() * s;
            const Eigen::ArrayXd vji = f * w.row(j).tail(len).transpose().array() * (1.0 - s);
            // tanh(u/2) / (4u) with tanh(u/2) = 2s - 1, and its series near 0.
            const Eigen::ArrayXd jj = (u.abs() <= 1e-4).select(0.125 - u.square() / 96.0, (2.0 * s - 1.0) / (4.0 * u));
            const Eigen::ArrayXd m = 2.0 * (vij + vji) * jj;
            d += (vij + vji).sum();
            g.tail(len) += vij - vji;
            g(j) -= (vij - vji).sum();
            laplacian.col(j).tail(len) = -m.matrix();
            diag.tail(len) += m;
            diag(j) += m.sum();
        }
        laplacian.diagonal() = diag.matrix();
        linear_.noalias() += x.transpose() * g.matrix();
        curvature_.noalias() += x.transpose() * (laplacian.selfadjointView<Eigen::Lower>() * x);
    }
    if (!(d > 0.0)) throw Error(ErrorCode::NonpositiveConcordance, "concordance is not positive");
    anchor_concordance_ = d;
    linear_ /= d * nu;
    curvature_ /= d * nu * nu;
    curvature_ = (0.5 * (curvature_ + curvature_.transpose())).eval();
    anchor_objective_ = local_objective(problem.x, problem.y, intercept, beta, problem.alpha) -
                        problem.lambda * std::log(d);
}

double Surrogate::value(double intercept, const Eigen::VectorXd& beta) const
{
    const auto& pr = *problem_;
    const double quad = beta.dot(curvature_ * beta) - anchor_.dot(curvature_ * anchor_);
    return local_objective(pr.x, pr.y, intercept, beta, pr.alpha) +
           pr.lambda * (-std::log(anchor_concordance_) - 0.5 * linear_.dot(beta - anchor_) + 0.5 * quad);
}

Eigen::MatrixXd Surrogate::system_matrix() const
{
    const auto& pr = *problem_;
    const Eigen::MatrixXd xc = pr.x.rowwise() - pr.x.colwise().mean();
    Eigen::MatrixXd a = xc.transpose() * xc + pr.lambda * curvature_;
    a.diagonal().array() += pr.alpha;
    return a;
}

std::pair<double, Eigen::VectorXd> Surrogate::minimize() const
{
    const auto& pr = *problem_;
    const Eigen::RowVectorXd xbar = pr.x.colwise().mean();
    const double ybar = pr.y.mean();
    const Eigen::MatrixXd xc = pr.x.rowwise() - xbar;
    Eigen::MatrixXd a = xc.transpose() * xc + pr.lambda * curvature_;
    a.diagonal().array() += pr.alpha;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonSPDSystem, "MM system matrix is not positive definite");
    const Eigen::VectorXd rhs = xc.transpose() * (pr.y.array() - ybar).matrix() + 0.5 * pr.lambda * linear_;
    Eigen::VectorXd beta = llt.solve(rhs);
    const double intercept = ybar - xbar.dot(beta);
    return {intercept, std::move(beta)};
}

std::optional<MmIterate> newton_step(const PenalizedProblem& problem, const Eigen::VectorXd& beta,
                                     const ConcordanceDerivatives& at)
{
    if (!(at.value > 0.0)) throw Error(ErrorCode::NonpositiveConcordance, "concordance is not positive");
    const Eigen::RowVectorXd xbar = problem.x.colwise().mean();
    const Eigen::MatrixXd xc = problem.x.rowwise() - xbar;
    const Eigen::VectorXd yc = problem.y.array() - problem.y.mean();
    const Eigen::VectorXd log_gradient = at.gradient / at.value;
    const Eigen::MatrixXd log_hessian = at.hessian / at.value - log_gradient * log_gradient.transpose();
    Eigen::MatrixXd h = xc.transpose() * xc - problem.lambda * log_hessian;
    h.diagonal().array() += problem.alpha;
    const Eigen::VectorXd grad = xc.transpose() * (xc * beta - yc) + problem.alpha * beta - problem.lambda * log_gradient;
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) return std::nullopt;
    MmIterate next;
    next.beta = beta - llt.solve(grad);
    if (!next.beta.allFinite()) return std::nullopt;
    next.intercept = problem.y.mean() - xbar.dot(next.beta);
    return next;
}

MmIterate mm_step(const PenalizedProblem& problem, double intercept, const Eigen::VectorXd& beta)
{
    problem.validate();
    const Surrogate surrogate(problem, intercept, beta);
    auto [b0, b] = surrogate.minimize();
    return {b0, std::move(b)};
}

FitResult fit_rasper(const PenalizedProblem& problem, const std::optional<Eigen::VectorXd>& init,
                     const FitOptions& options, std::string init_source)
{
    problem.validate();
    FitResult result;
    result.lambda = problem.lambda;
    result.alpha = problem.alpha;
    result.nu = problem.concordance.nu();

    Eigen::VectorXd beta;
    if (init) {
        if (init->size() != problem.x.cols()) throw Error(ErrorCode::DimensionMismatch, "init length differs from column count");
        beta = *init;
        result.init_source = init_source.empty() ? "user" : std::move(init_source);
    } else {
        beta = fit_ridge(problem.x, problem.y, problem.alpha).beta;
        result.init_source = "local";
    }
    double intercept = (problem.y - problem.x * beta).mean();

    const auto objective_of = [&](double b0, const Eigen::VectorXd& b, double d) {
        if (!(d > 0.0)) throw Error(ErrorCode::NonpositiveConcordance, "concordance is not positive");
        return local_objective(problem.x, problem.y, b0, b, problem.alpha) - problem.lambda * std::log(d);
    };
    const bool newton = options.accelerate && problem.lambda > 0.0;
    std::optional<ConcordanceDerivatives> exact;
    double current;
    double concordance;
    if (newton) {
        exact = problem.concordance.derivatives(beta);
        concordance = exact->value;
    } else {
        concordance = problem.concordance.value(beta);
    }
    current = objective_of(intercept, beta, concordance);
    result.trace.push_back(current);
    for (int it = 0; it < options.max_iterations; ++it) {
        result.iterations = it + 1;
        const double before = current;
        bool accepted = false;
        double after = before;
        if (newton) {
            // Exact second-order step, kept only if it descends.
            if (auto step = newton_step(problem, beta, *exact)) {
                auto derivs = problem.concordance.derivatives(step->beta);
                if (derivs.value > 0.0) {
                    const double value = objective_of(step->intercept, step->beta, derivs.value);
                    if (value < before) {
                        intercept = step->intercept;
                        beta = std::move(step->beta);
                        exact = std::move(derivs);
                        concordance = exact->value;
                        after = value;
                        accepted = true;
                        ++result.newton_steps;
                    }
                }
            }
        }
        if (!accepted) {
            const Surrogate surrogate(problem, intercept, beta);
            auto [next_b0, next_beta] = surrogate.minimize();
            std::optional<ConcordanceDerivatives> derivs;
            double d;
            if (newton) {
                derivs = problem.concordance.derivatives(next_beta);
                d = derivs->value;
            } else {
                d = problem.concordance.value(next_beta);
            }
            const double value = objective_of(next_b0, next_beta, d);
            // A step that fails to descend can only come from rounding at the
            // optimum; it is not accepted as an iterate.
            if (value <= before) {
                intercept = next_b0;
                beta = std::move(next_beta);
                exact = std::move(derivs);
                concordance = d;
                after = value;
                accepted = true;
            }
        }
        if (!accepted) {
            result.converged = true;
            break;
        }
        current = after;
        result.trace.push_back(after);
        if (std::abs(before - after) <= options.tolerance * std::max(1.0, std::abs(before))) {
            result.converged = true;
            break;
        }
    }
    result.intercept = intercept;
    result.beta = std::move(beta);
    result.concordance = concordance;
    return result;
}

} // namespace rasper
