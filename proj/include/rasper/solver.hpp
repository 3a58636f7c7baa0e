#pragma once

#include "rasper/concordance.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace rasper {

/// Least squares + ridge - lambda log D on a standardized design.
struct PenalizedProblem {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    ConcordanceTerm concordance;
    double lambda = 0.0;
    double alpha = 0.0;

    void validate() const;
};

struct FitOptions {
    double tolerance = 1e-8;   ///< relative objective change that stops the iteration
    int max_iterations = 500;
    /// Try a Newton step on the exact objective before each MM step and keep
    /// it only when it lowers the objective. Every accepted step still descends.
    bool accelerate = true;
};

struct FitResult {
    double intercept = 0.0;
    Eigen::VectorXd beta;            ///< standardized scale
    double lambda = 0.0;
    double alpha = 0.0;
    double nu = 0.0;
    std::vector<double> trace;       ///< objective at the start and after every step
    double concordance = 0.0;        ///< D at the returned coefficients
    bool converged = false;
    int iterations = 0;
    int newton_steps = 0;            ///< accepted accelerated steps
    std::string init_source;

    double objective() const { return trace.back(); }
};

struct NuChoice {
    double nu = 0.0;
    std::string source;              ///< "ols", "ridge-fallback" or "floor"
    std::vector<std::string> warnings;
};

/// Smallest floor applied when the unpenalized fit is (numerically) zero.
inline constexpr double kNuFloor = 1e-3;

/// nu = 0.1 ||beta_OLS||. Singular designs fall back to a ridge fit with
/// alpha = 1e-4 n; a vanishing fit falls back to kNuFloor.
NuChoice default_nu(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

/// tanh(u/2) / (4u), the Jaakkola-Jordan coefficient; 1/8 - u^2/96 near 0.
double jj_coefficient(double u);

/// 1/2 ||y - b0 - X beta||^2 + alpha/2 ||beta||^2
double local_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double intercept,
                       const Eigen::VectorXd& beta, double alpha);

double penalized_objective(const PenalizedProblem& problem, double intercept, const Eigen::VectorXd& beta);

/// Gradient with respect to (b0, beta), intercept first.
Eigen::VectorXd penalized_gradient(const PenalizedProblem& problem, double intercept, const Eigen::VectorXd& beta);

struct MmIterate {
    double intercept = 0.0;
    Eigen::VectorXd beta;
};

/// Quadratic majorizer of the penalized objective anchored at (b0_t, beta_t):
///
///   L_I(b0, beta) + lambda [ -log D_t - 1/2 g'(beta - beta_t)
///                            + 1/2 (beta'K beta - beta_t'K beta_t) ]
///
/// with quasi-probabilities q_k = v_k / D_t, g = sum_k q_k a_k and
/// K = sum_k 2 q_k jj(u_k) a_k a_k'. Equal to the objective at the anchor and
/// above it everywhere else.
class Surrogate {
public:
    Surrogate(const PenalizedProblem& problem, double intercept, const Eigen::VectorXd& beta);

    double value(double intercept, const Eigen::VectorXd& beta) const;
    const Eigen::VectorXd& anchor() const { return anchor_; }
    double objective_at_anchor() const { return anchor_objective_; }
    double concordance_at_anchor() const { return anchor_concordance_; }

    const Eigen::VectorXd& linear() const { return linear_; }
    const Eigen::MatrixXd& curvature() const { return curvature_; }

    /// Xc'Xc + alpha I + lambda K, with Xc the column-centered design.
    Eigen::MatrixXd system_matrix() const;

    /// Joint minimizer over (b0, beta). Throws NonSPDSystem.
    std::pair<double, Eigen::VectorXd> minimize() const;

private:
    const PenalizedProblem* problem_;
    Eigen::VectorXd anchor_;
    double anchor_concordance_ = 0.0;
    double anchor_objective_ = 0.0;
    Eigen::VectorXd linear_;
    Eigen::MatrixXd curvature_;
};

/// Newton step for the objective with the intercept profiled out, from the
/// exact derivatives of D at beta. Empty when the Hessian is not positive definite.
std::optional<MmIterate> newton_step(const PenalizedProblem& problem, const Eigen::VectorXd& beta,
                                     const ConcordanceDerivatives& at);

/// One majorize-minimize update from (b0_t, beta_t).
MmIterate mm_step(const PenalizedProblem& problem, double intercept, const Eigen::VectorXd& beta);

/// Iterates mm_step from `init` (default: the ridge/OLS minimizer of the local
/// objective) until the relative objective change drops below the tolerance.
/// With options.accelerate, a descending Newton step replaces the MM step.
FitResult fit_rasper(const PenalizedProblem& problem, const std::optional<Eigen::VectorXd>& init = std::nullopt,
                     const FitOptions& options = {}, std::string init_source = {});

} // namespace rasper
