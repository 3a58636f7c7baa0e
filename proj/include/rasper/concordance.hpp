#pragma once

#include "rasper/data.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace rasper {

enum class Measure { Spearman, Kendall };

const char* to_string(Measure measure) noexcept;
Measure parse_measure(const std::string& name);

/// Which concordance D is penalized and how it is smoothed.
struct ConcordanceSpec {
    Measure measure = Measure::Spearman;
    bool marginalized = false;
    double nu = 1.0;          ///< logistic smoothing scale, linear-predictor units
    int samples = 1;          ///< draws of the novel block when marginalized
    std::uint64_t seed = 0;   ///< seeds the marginal sampler

    void validate() const;
};

/// Unit-scale logistic g_1(u) = 1 / (1 + exp(-u)), evaluated without overflow.
inline double logistic(double u)
{
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

/// Derivative of the unit logistic.
inline double logistic_density(double u)
{
    const double s = logistic(u);
    return s * (1.0 - s);
}

/// psi_i = #{j : (x_i - x_j)'beta >= 0}, diagonal included.
std::vector<int> exact_rank_params(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta);

/// psi_i^nu = sum_j g_nu((x_i - x_j)'beta); the j = i term is exactly 1/2.
Eigen::VectorXd smooth_rank_params(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta, double nu);

/// Dense n x n pair weights w_ij. Spearman: r_i / (4 n^2). Kendall:
/// 2 I(r_i > r_j) / (n (n - 1)), the nonnegative form of the Kendall weights.
struct PairWeights {
    Measure measure = Measure::Spearman;
    Eigen::MatrixXd w;

    Eigen::Index size() const { return w.rows(); }
    double total() const { return w.sum(); }
};

PairWeights pair_weights(const ExternalRanks& ranks, Measure measure);

/// Kendall weights exactly as (2 I(r_i > r_j) - 1) / (n (n - 1)); may be negative.
/// Only used for diagnostics, never inside the objective.
Eigen::MatrixXd literal_kendall_weights(const ExternalRanks& ranks);

/// Gaussian conditional sampler for the novel block given the conventional
/// block: b | z ~ N(S_bz z, I - S_bz S_bz'), with S_bz = (1/n) sum_i b_i z_i'.
struct MarginalSampler {
    Eigen::MatrixXd cross_covariance;        ///< (p - q) x q
    Eigen::MatrixXd conditional_covariance;  ///< symmetrized, eigenvalues clamped at 0
    Eigen::MatrixXd conditional_factor;      ///< F with F F' = conditional_covariance
    int samples = 1;
    std::uint64_t seed = 0;

    /// S design tables [Z | B^(s)], drawn from a generator seeded with `seed`.
    std::vector<Eigen::MatrixXd> draw_tables(const Eigen::MatrixXd& z) const;
};

MarginalSampler build_marginal_sampler(const Eigen::MatrixXd& z, const Eigen::MatrixXd& b,
                                       int samples, std::uint64_t seed);

/// D with its exact gradient and Hessian in beta.
struct ConcordanceDerivatives {
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

/// D(beta) = (1/S) sum_s sum_ij w_ij g_nu((x_i^(s) - x_j^(s))'beta) over one or
/// more design tables. With a single table this is the non-marginalized D.
/// Pair sums stream over i < j; the n^2 x p difference operator is never formed.
class ConcordanceTerm {
public:
    ConcordanceTerm(Eigen::MatrixXd x, PairWeights weights, double nu);
    ConcordanceTerm(std::vector<Eigen::MatrixXd> tables, PairWeights weights, double nu);

    const std::vector<Eigen::MatrixXd>& tables() const { return tables_; }
    const PairWeights& weights() const { return weights_; }
    double nu() const { return nu_; }
    double table_factor() const { return 1.0 / static_cast<double>(tables_.size()); }
    Eigen::Index rows() const { return weights_.size(); }
    Eigen::Index cols() const { return tables_.front().cols(); }

    double value(const Eigen::VectorXd& beta) const;
    Eigen::VectorXd gradient(const Eigen::VectorXd& beta) const;
    /// One pass over the pairs for value, gradient and Hessian.
    ConcordanceDerivatives derivatives(const Eigen::VectorXd& beta) const;

    /// w_ij - w_ji; only the strictly lower triangle is meaningful.
    const Eigen::MatrixXd& weight_difference() const { return difference_; }
    /// Value of a single table's pair sum when every sigmoid is 0:
    /// (1/2) tr(w) + sum_{i>j} w_ji.
    double baseline() const { return baseline_; }

private:
    void prepare();

    std::vector<Eigen::MatrixXd> tables_;
    PairWeights weights_;
    double nu_;
    Eigen::MatrixXd difference_;
    double baseline_ = 0.0;
};

double concordance_value(const ConcordanceTerm& term, const Eigen::VectorXd& beta);
Eigen::VectorXd concordance_gradient(const ConcordanceTerm& term, const Eigen::VectorXd& beta);

/// D with the literal (signed) Kendall weights, for comparison against the
/// implemented nonnegative form. Differs from it by a beta-independent constant.
double literal_kendall_value(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta, double nu,
                             const ExternalRanks& ranks);

/// Builds the term for a standardized design whose first q columns are the
/// conventional block. Marginalized specs draw spec.samples tables once.
ConcordanceTerm make_concordance_term(const Eigen::MatrixXd& x, Eigen::Index q,
                                      const ExternalRanks& ranks, const ConcordanceSpec& spec);

} // namespace rasper
