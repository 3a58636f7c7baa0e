#pragma once

#include "rasper/concordance.hpp"
#include "rasper/csv.hpp"
#include "rasper/data.hpp"
#include "rasper/solver.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace rasper {

/// lambdas[0] = alphas[0] = 0; lambdas[j] = lambda_min exp((j - 1) ln(lambda_max / lambda_min) / J)
/// for j = 1..J+1, so lambdas[1] = lambda_min and lambdas[J+1] = lambda_max.
struct HyperGrid {
    std::vector<double> lambdas;
    std::vector<double> alphas;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double alpha_min = 0.0;
    double alpha_max = 0.0;
    int j_count = 0;
    int k_count = 0;

    std::size_t size() const { return lambdas.size() * alphas.size(); }
};

HyperGrid build_grid(double lambda_min, double lambda_max, int j_count, double alpha_min, double alpha_max, int k_count);

/// J = K = 10, lambda in [1e-2 n, 1e3 n], alpha in [1e-4 n, 1e2 n].
HyperGrid default_grid(Eigen::Index n);

/// Explicit candidate lists (no zero is prepended). Both must be nonempty,
/// nonnegative and strictly increasing.
HyperGrid explicit_grid(std::vector<double> lambdas, std::vector<double> alphas);

/// Standardized internal data plus the external ranking information.
struct RasperData {
    Eigen::MatrixXd x;                      ///< standardized, conventional columns first
    Eigen::VectorXd y;
    Eigen::Index q = 0;
    std::optional<Eigen::VectorXd> scores;  ///< raw external scores, when known
    ExternalRanks ranks;

    Eigen::Index rows() const { return x.rows(); }
    void validate() const;
};

/// Ranks follow from the scores.
RasperData make_rasper_data(Eigen::MatrixXd x, Eigen::VectorXd y, Eigen::Index q, Eigen::VectorXd scores);
/// Only ranks are known.
RasperData make_rasper_data(Eigen::MatrixXd x, Eigen::VectorXd y, Eigen::Index q, ExternalRanks ranks);

/// Ranks of a subset of rows, recomputed among the retained rows only.
ExternalRanks rerank_subset(const ExternalRanks& ranks, const std::vector<Eigen::Index>& keep);

/// Drops row i. Ranks are recomputed from the scores when present and from
/// the retained ranks otherwise; both give the same result.
RasperData without_row(const RasperData& data, Eigen::Index row);

PenalizedProblem make_problem(const RasperData& data, const ConcordanceSpec& spec, double lambda, double alpha);

/// fit_rasper started from whichever of the warm start and the local
/// minimizer has the lower penalized objective.
FitResult fit_warm(const PenalizedProblem& problem, const std::optional<Eigen::VectorXd>& warm,
                   const FitOptions& options = {});

/// fit_rasper started from the candidate (or the local minimizer) with the
/// lowest penalized objective. Later candidates win ties; the local minimizer
/// loses them.
FitResult fit_best_start(const PenalizedProblem& problem, const std::vector<Eigen::VectorXd>& starts,
                         const FitOptions& options = {});

/// (1/n) sum_i 1/2 (y_i - b0^(-i) - x_i'beta^(-i))^2 with cold-started folds.
/// Throws FoldFailure if any fold fails.
double loocv_score(const RasperData& data, const ConcordanceSpec& spec, double lambda, double alpha,
                   const FitOptions& options = {}, int threads = 1);

struct DegreesOfFreedom {
    double value = 0.0;
    bool clamped = false;  ///< system not SPD; value reported as p
};

/// tr{(Xc'Xc + alpha I + lambda K0)^{-1} Xc'Xc}, with K0 the MM curvature at
/// beta = 0: (1/4) sum_k q_k a_k a_k' / nu^2, q_k = w_k / sum w.
DegreesOfFreedom degrees_of_freedom(const Eigen::MatrixXd& x, const ConcordanceTerm& term, double lambda,
                                    double alpha);

/// Curvature matrix K0 used by degrees_of_freedom.
Eigen::MatrixXd zero_curvature(const ConcordanceTerm& term);

/// 2 L_I(b0, beta; alpha) + 2 df.
double aic(const FitResult& fit, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double df);

enum class Criterion { LOOCV, AIC };

const char* to_string(Criterion criterion) noexcept;
Criterion parse_criterion(const std::string& name);

struct GridRecord {
    double lambda = 0.0;
    double alpha = 0.0;
    std::optional<double> loo;     ///< empty when not computed or a fold failed
    int failed_folds = 0;
    double df = 0.0;
    bool df_clamped = false;
    double aic = 0.0;
    FitResult fit;
};

struct SelectionReport {
    Criterion criterion = Criterion::LOOCV;
    std::vector<GridRecord> records;    ///< lambda-major, both axes increasing
    std::optional<std::size_t> chosen_loocv;
    std::optional<std::size_t> chosen_aic;

    /// Index for the criterion used. Throws FoldFailure when no point qualifies.
    std::size_t chosen() const;
    const GridRecord& chosen_record() const { return records[chosen()]; }

    CsvTable to_csv() const;
    std::string to_json() const;
};

struct SelectOptions {
    FitOptions fit;
    int threads = 1;
    bool compute_loo = true;  ///< forced on for Criterion::LOOCV
};

/// Fits every grid point (warm-started along increasing lambda within each
/// alpha, in folds as well) and picks the criterion minimizer; ties go to the
/// smaller lambda, then the smaller alpha.
SelectionReport select(const RasperData& data, const ConcordanceSpec& spec, const HyperGrid& grid,
                       Criterion criterion, const SelectOptions& options = {});

/// Index minimizing `values` among entries that are set; first index wins ties.
std::optional<std::size_t> argmin_first(const std::vector<std::optional<double>>& values);

} // namespace rasper
