#pragma once

#include "rasper/data.hpp"

#include <Eigen/Dense>

#include <vector>

namespace rasper {

/// Intercept plus slopes; intercepts are never penalized.
struct LinearFit {
    double intercept = 0.0;
    Eigen::VectorXd beta;

    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

/// Minimizes 1/2 ||y - b0 - X beta||^2 + alpha/2 ||beta||^2 - offset'beta.
/// All closed-form estimators below are special cases of this one.
LinearFit penalized_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha,
                                  const Eigen::VectorXd& offset);

LinearFit fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
LinearFit fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha);
/// (X'X + alpha I)^{-1} (X'Y + alpha beta_E): shrinks toward beta_E.
LinearFit fit_dtl(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha, const Eigen::VectorXd& beta_external);
/// (X'X + alpha I)^{-1} (X'Y + lambda beta_E)
LinearFit fit_atl(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha, double lambda,
                  const Eigen::VectorXd& beta_external);

/// OLS on [X | standardized external ranks]. The last slope belongs to the rank column.
struct StackingFit {
    LinearFit fit;
    double rank_mean = 0.0;
    double rank_scale = 1.0;
    bool near_collinear = false;

    /// Predictions need the external ranks of the new rows as well.
    Eigen::VectorXd predict(const Eigen::MatrixXd& x, const Eigen::VectorXd& ranks) const;
};

StackingFit fit_stacking(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ExternalRanks& ranks);

/// (Z'Z)^{-1} Z' mu_E, zero-padded to length p.
Eigen::VectorXd projection_target(const Eigen::MatrixXd& z, const Eigen::VectorXd& mu_external, Eigen::Index p);

/// Leave-one-out score (mean of squared deleted residuals / 2) for
/// penalized_least_squares, via the hat-matrix identity e_i / (1 - h_ii).
double closed_form_loo(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha,
                       const Eigen::VectorXd& offset);

struct TunedFit {
    LinearFit fit;
    double alpha = 0.0;
    double lambda = 0.0;
    double loo = 0.0;
};

/// LOOCV tuning over candidate grids; ties keep the earlier candidate.
TunedFit tune_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& alphas);
TunedFit tune_dtl(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& alphas,
                  const Eigen::VectorXd& beta_external);
TunedFit tune_atl(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& alphas,
                  const std::vector<double>& lambdas, const Eigen::VectorXd& beta_external);

} // namespace rasper
