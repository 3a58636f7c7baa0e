#pragma once

#include "rasper/concordance.hpp"
#include "rasper/data.hpp"
#include "rasper/solver.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>

#include <unistd.h>

namespace rasper::testing {

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

inline Eigen::VectorXd gaussian_vector(Eigen::Index size, std::mt19937_64& rng)
{
    return gaussian_matrix(size, 1, rng).col(0);
}

/// Standardized random design, noisy linear outcome and external scores
/// correlated with the truth.
struct Instance {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    Eigen::VectorXd scores;
    ExternalRanks ranks;
};

inline Instance random_instance(Eigen::Index n, Eigen::Index p, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    Instance out;
    out.x = standardize(gaussian_matrix(n, p, rng), p).x;
    const Eigen::VectorXd beta = gaussian_vector(p, rng);
    out.y = out.x * beta + gaussian_vector(n, rng);
    out.scores = out.x * beta + 0.5 * gaussian_vector(n, rng);
    out.ranks = external_ranks(out.scores);
    return out;
}

inline PenalizedProblem random_problem(Eigen::Index n, Eigen::Index p, std::uint64_t seed, double lambda,
                                       double alpha, Measure measure = Measure::Spearman)
{
    auto inst = random_instance(n, p, seed);
    const double nu = default_nu(inst.x, inst.y).nu;
    ConcordanceTerm term(inst.x, pair_weights(inst.ranks, measure), nu);
    return PenalizedProblem{inst.x, inst.y, std::move(term), lambda, alpha};
}

} // namespace rasper::testing

#include <filesystem>
#include <fstream>
#include <string>

namespace rasper::testing {

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
        : path_(std::filesystem::temp_directory_path() / ("rasper_" + tag + "_" + std::to_string(::getpid())))
    {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string write(const std::string& name, const std::string& text) const
    {
        std::ofstream(file(name)) << text;
        return file(name);
    }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace rasper::testing
