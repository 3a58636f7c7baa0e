#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rasper {

/// Internal dataset as loaded: outcome, conventional block Z (n x q), novel
/// block B (n x (p - q), possibly empty) and optional external risk scores.
struct RawDataset {
    Eigen::VectorXd outcome;
    Eigen::MatrixXd conventional;
    Eigen::MatrixXd novel;
    std::optional<Eigen::VectorXd> scores;
    std::vector<std::string> ids;
    std::vector<std::string> conventional_names;
    std::vector<std::string> novel_names;

    Eigen::Index rows() const { return outcome.size(); }
    Eigen::Index q() const { return conventional.cols(); }
    Eigen::Index p() const { return conventional.cols() + novel.cols(); }

    /// Throws if the block shapes disagree or n < 2 / q < 1.
    void validate() const;
};

/// Column-standardized design, conventional columns first. Every column has
/// zero mean and sum of squares n - 1; `mean` and `scale` undo the transform.
struct StandardizedDesign {
    Eigen::MatrixXd x;
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;
    Eigen::Index q = 0;

    Eigen::Index rows() const { return x.rows(); }
    Eigen::Index cols() const { return x.cols(); }

    /// Slopes on the original covariate scale for standardized coefficients.
    Eigen::VectorXd original_slopes(const Eigen::VectorXd& beta) const;
    /// Intercept on the original scale: b0 - sum_j beta_j mean_j / scale_j.
    double original_intercept(double intercept, const Eigen::VectorXd& beta) const;
    /// Applies the stored centering and scaling to new rows (same column order).
    Eigen::MatrixXd transform(const Eigen::MatrixXd& raw) const;
};

StandardizedDesign standardize(const RawDataset& raw);
StandardizedDesign standardize(const Eigen::MatrixXd& columns, Eigen::Index q);

/// r_i = #{j : s_i >= s_j}, i.e. max-style ranks with the diagonal counted.
struct ExternalRanks {
    std::vector<int> r;
    bool ties = false;

    std::size_t size() const { return r.size(); }
    Eigen::VectorXd as_vector() const;
};

ExternalRanks external_ranks(std::span<const double> scores);
ExternalRanks external_ranks(const Eigen::VectorXd& scores);

/// Column names for load_dataset. `score` and `id` are optional.
struct Schema {
    std::string outcome;
    std::vector<std::string> conventional;
    std::vector<std::string> novel;
    std::optional<std::string> score;
    std::optional<std::string> id;
};

Schema load_schema(const std::string& path);
RawDataset load_dataset(const std::string& path, const Schema& schema);

} // namespace rasper
