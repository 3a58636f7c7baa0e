#pragma once

#include "rasper/selection.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace rasper {

enum class Study { S1a, S1b, S2 };

const char* to_string(Study study) noexcept;
Study parse_study(const std::string& name);

enum class Method { OLS, Ridge, DTL, ATL, Stacking, RasperSpearman, RasperKendall, RasperMarginal, RasperSpearmanAic };

const char* to_string(Method method) noexcept;
Method parse_method(const std::string& name);

/// Where the fifth conventional covariate of the study-2 external score comes from.
enum class Z5Mode {
    Extra,  ///< an extra N(0, 1) draw seen by the external score only
    Z4,     ///< reuse z4
};

struct GridBounds {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    int j_count = 10;
    double alpha_min = 0.0;
    double alpha_max = 0.0;
    int k_count = 10;
};

struct SimSetting {
    std::string name;
    Study study = Study::S1a;
    Eigen::VectorXd beta_external;  ///< q entries; unused by study 2
    Eigen::VectorXd beta_internal;  ///< p entries
    double theta2 = 0.0, theta3 = 0.0, theta4 = 0.0, theta5 = 0.0;
    Z5Mode z5_mode = Z5Mode::Extra;
    int n_internal = 100;
    int n_test = 1000;
    double sigma = 1.0;
    int replications = 200;
    std::uint64_t seed = 1;
    std::vector<Method> methods;
    std::optional<GridBounds> grid;   ///< default_grid(n_internal) when empty
    int samples = 10;                 ///< marginal draws
    std::optional<double> nu;         ///< default_nu per replication when empty
    FitOptions fit;

    Eigen::Index q() const;           ///< conventional columns in the internal design
    Eigen::Index p() const;
    HyperGrid hyper_grid() const;
    void validate() const;
};

SimSetting load_setting(const std::string& path);
SimSetting parse_setting(const std::string& json_text);
std::string setting_to_json(const SimSetting& setting);

/// One simulated replication. Designs are on the raw covariate scale.
struct SimDraw {
    Eigen::MatrixXd x;               ///< n_internal x p, conventional columns first
    Eigen::VectorXd y;
    Eigen::VectorXd mu_internal;
    Eigen::VectorXd mu_external;
    ExternalRanks ranks;
    Eigen::VectorXd external_target; ///< DTL/ATL target on the raw scale, p entries
    Eigen::MatrixXd x_test;
    Eigen::VectorXd mu_internal_test;
    Eigen::VectorXd mu_external_test;
};

SimDraw gen_study1(const SimSetting& setting, std::mt19937_64& rng);
SimDraw gen_study2(const SimSetting& setting, std::mt19937_64& rng);
SimDraw generate(const SimSetting& setting, std::mt19937_64& rng);

/// f1(u) = 1/(1 + e^-u) - 1/(1 + e^(1-u))
double study2_f1(double u);
/// f2(u) = 0.5 (u - 2)^2 for u < 7, 12.5 otherwise
double study2_f2(double u);

/// Generator for replication `rep`, keyed by (seed, rep) only.
std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t rep);

/// Pearson correlation of midranks. Throws InvalidArgument on constant input.
double spearman_rc(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// (concordant - discordant) / (n (n - 1) / 2); tied pairs count as neither.
double kendall_tau(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct MethodSummary {
    Method method = Method::OLS;
    double mean_relative_mse = 0.0;
    double se_relative_mse = 0.0;
    std::optional<double> mean_diff_vs_ridge;  ///< paired relative-MSE difference
    std::optional<double> se_diff_vs_ridge;
};

struct BenchReport {
    SimSetting setting;
    std::vector<MethodSummary> methods;
    std::vector<std::vector<double>> relative_mse;  ///< [replication][method], successful replications only
    std::vector<int> replication_index;
    int failed_replications = 0;
    double mean_rank_correlation = 0.0;
    double mean_distance = 0.0;                     ///< sum_i (mu_I - mu_E)^2 over the internal cohort

    const MethodSummary& summary(Method method) const;
    CsvTable to_csv() const;
    std::string to_json() const;
};

/// Test-set MSE of each method for one draw, in setting.methods order.
std::vector<double> evaluate_methods(const SimSetting& setting, const SimDraw& draw);

BenchReport run_benchmark(const SimSetting& setting, int threads = 1);

} // namespace rasper
