#include "rasper/data.hpp"

#include "rasper/csv.hpp"
#include "rasper/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace rasper {

void RawDataset::validate() const
{
    const auto n = rows();
    if (n < 2) throw Error(ErrorCode::EmptyData, "need at least two observations");
    if (conventional.cols() < 1) throw Error(ErrorCode::EmptyData, "need at least one conventional covariate");
    if (conventional.rows() != n || (novel.cols() > 0 && novel.rows() != n)) {
        throw Error(ErrorCode::DimensionMismatch, "covariate blocks and outcome have different row counts");
    }
    if (scores && scores->size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "score column length differs from outcome");
    }
}

Eigen::VectorXd StandardizedDesign::original_slopes(const Eigen::VectorXd& beta) const
{
    return beta.cwiseQuotient(scale);
}

double StandardizedDesign::original_intercept(double intercept, const Eigen::VectorXd& beta) const
{
    return intercept - original_slopes(beta).dot(mean);
}

Eigen::MatrixXd StandardizedDesign::transform(const Eigen::MatrixXd& raw) const
{
    if (raw.cols() != x.cols()) throw Error(ErrorCode::DimensionMismatch, "column count differs from design");
    Eigen::MatrixXd out = raw.rowwise() - mean.transpose();
    return out.array().rowwise() / scale.transpose().array();
}

StandardizedDesign standardize(const Eigen::MatrixXd& columns, Eigen::Index q)
{
    const auto n = columns.rows();
    const auto p = columns.cols();
    if (n < 2 || p < 1) throw Error(ErrorCode::EmptyData, "need at least two rows and one column");
    if (q < 0 || q > p) throw Error(ErrorCode::InvalidArgument, "conventional count out of range");

    StandardizedDesign design;
    design.q = q;
    design.mean.resize(p);
    design.scale.resize(p);
    design.x.resize(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double mu = columns.col(j).mean();
        Eigen::VectorXd centered = columns.col(j).array() - mu;
        const double ss = centered.squaredNorm();
        if (!std::isfinite(ss)) throw Error(ErrorCode::MissingValue, "non-finite value in column " + std::to_string(j));
        if (ss <= 1e-24 * static_cast<double>(n) * std::max(1.0, mu * mu)) {
            throw Error(ErrorCode::ConstantColumn, "column " + std::to_string(j) + " has zero variance");
        }
        const double s = std::sqrt(ss / static_cast<double>(n - 1));
        design.mean(j) = mu;
        design.scale(j) = s;
        design.x.col(j) = centered / s;
    }
    return design;
}

StandardizedDesign standardize(const RawDataset& raw)
{
    raw.validate();
    Eigen::MatrixXd columns(raw.rows(), raw.p());
    columns.leftCols(raw.q()) = raw.conventional;
    if (raw.novel.cols() > 0) columns.rightCols(raw.novel.cols()) = raw.novel;
    return standardize(columns, raw.q());
}

Eigen::VectorXd ExternalRanks::as_vector() const
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(r.size()));
    for (std::size_t i = 0; i < r.size(); ++i) v(static_cast<Eigen::Index>(i)) = r[i];
    return v;
}

ExternalRanks external_ranks(std::span<const double> scores)
{
    const std::size_t n = scores.size();
    if (n == 0) throw Error(ErrorCode::EmptyData, "no scores");
    for (double s : scores) {
        if (!std::isfinite(s)) throw Error(ErrorCode::NonFiniteScore, "external score is not finite");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    ExternalRanks ranks;
    ranks.r.assign(n, 0);
    // Walk tie blocks in ascending order; every member gets the block's last position.
    std::size_t start = 0;
    while (start < n) {
        std::size_t stop = start + 1;
        while (stop < n && scores[order[stop]] == scores[order[start]]) ++stop;
        if (stop - start > 1) ranks.ties = true;
        for (std::size_t k = start; k < stop; ++k) ranks.r[order[k]] = static_cast<int>(stop);
        start = stop;
    }
    return ranks;
}

ExternalRanks external_ranks(const Eigen::VectorXd& scores)
{
    return external_ranks(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())));
}

Schema load_schema(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open schema " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, "schema " + path + ": " + e.what());
    }
    Schema schema;
    try {
        schema.outcome = j.at("outcome").get<std::string>();
        schema.conventional = j.at("conventional").get<std::vector<std::string>>();
        if (j.contains("novel")) schema.novel = j.at("novel").get<std::vector<std::string>>();
        if (j.contains("score") && !j.at("score").is_null()) schema.score = j.at("score").get<std::string>();
        if (j.contains("id") && !j.at("id").is_null()) schema.id = j.at("id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, "schema " + path + ": " + e.what());
    }
    return schema;
}

RawDataset load_dataset(const std::string& path, const Schema& schema)
{
    const CsvTable table = read_csv(path);
    const auto n = static_cast<Eigen::Index>(table.rows.size());

    auto numeric_column = [&](const std::string& name) {
        const std::size_t j = table.require_column(name);
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const std::string& cell = table.rows[static_cast<std::size_t>(i)][j];
            if (is_missing_cell(cell)) {
                throw Error(ErrorCode::MissingValue,
                            "column \"" + name + "\" row " + std::to_string(i + 1) + " is missing");
            }
            try {
                v(i) = parse_number(cell);
            } catch (const Error& e) {
                throw Error(ErrorCode::ParseError, "column \"" + name + "\" row " + std::to_string(i + 1) + ": " + e.what());
            }
        }
        return v;
    };

    // Resolve every column name first so a schema mismatch wins over cell errors.
    table.require_column(schema.outcome);
    for (const auto& c : schema.conventional) table.require_column(c);
    for (const auto& c : schema.novel) table.require_column(c);
    if (schema.score) table.require_column(*schema.score);
    if (schema.id) table.require_column(*schema.id);

    RawDataset raw;
    raw.outcome = numeric_column(schema.outcome);
    raw.conventional.resize(n, static_cast<Eigen::Index>(schema.conventional.size()));
    for (std::size_t k = 0; k < schema.conventional.size(); ++k) {
        raw.conventional.col(static_cast<Eigen::Index>(k)) = numeric_column(schema.conventional[k]);
    }
    raw.novel.resize(n, static_cast<Eigen::Index>(schema.novel.size()));
    for (std::size_t k = 0; k < schema.novel.size(); ++k) {
        raw.novel.col(static_cast<Eigen::Index>(k)) = numeric_column(schema.novel[k]);
    }
    if (schema.score) raw.scores = numeric_column(*schema.score);
    raw.ids.reserve(static_cast<std::size_t>(n));
    if (schema.id) {
        const std::size_t j = table.require_column(*schema.id);
        for (const auto& row : table.rows) raw.ids.push_back(row[j]);
    } else {
        for (Eigen::Index i = 0; i < n; ++i) raw.ids.push_back(std::to_string(i + 1));
    }
    raw.conventional_names = schema.conventional;
    raw.novel_names = schema.novel;
    if (n == 0) throw Error(ErrorCode::EmptyData, path + " has no data rows");
    return raw;
}

} // namespace rasper
