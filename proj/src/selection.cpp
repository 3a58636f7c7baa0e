#include "rasper/selection.hpp"

#include "rasper/baselines.hpp"
#include "rasper/error.hpp"
#include "rasper/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rasper {

namespace {

std::vector<double> log_spaced_with_zero(double lo, double hi, int count)
{
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(count) + 2);
    values.push_back(0.0);
    const double step = std::log(hi / lo) / count;
    for (int j = 1; j <= count + 1; ++j) values.push_back(lo * std::exp((j - 1) * step));
    // exp(log(hi / lo)) need not round back to hi.
    values.back() = hi;
    return values;
}

void check_increasing(const std::vector<double>& values, const char* what)
{
    if (values.empty()) throw Error(ErrorCode::InvalidBounds, std::string(what) + " list is empty");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]) || values[i] < 0.0)
            throw Error(ErrorCode::InvalidBounds, std::string(what) + " values must be finite and nonnegative");
        if (i > 0 && !(values[i] > values[i - 1]))
            throw Error(ErrorCode::InvalidBounds, std::string(what) + " values must be strictly increasing");
    }
}

double held_out_loss(const RasperData& data, Eigen::Index row, const FitResult& fit)
{
    const double residual = data.y(row) - fit.intercept - data.x.row(row).dot(fit.beta);
    return 0.5 * residual * residual;
}

} // namespace

HyperGrid build_grid(double lambda_min, double lambda_max, int j_count, double alpha_min, double alpha_max, int k_count)
{
    const auto valid = [](double lo, double hi) {
        return std::isfinite(lo) && std::isfinite(hi) && lo > 0.0 && hi > lo;
    };
    if (!valid(lambda_min, lambda_max)) throw Error(ErrorCode::InvalidBounds, "need 0 < lambda_min < lambda_max");
    if (!valid(alpha_min, alpha_max)) throw Error(ErrorCode::InvalidBounds, "need 0 < alpha_min < alpha_max");
    if (j_count < 1 || k_count < 1) throw Error(ErrorCode::InvalidBounds, "J and K must be at least 1");

    HyperGrid grid;
    grid.lambda_min = lambda_min;
    grid.lambda_max = lambda_max;
    grid.alpha_min = alpha_min;
    grid.alpha_max = alpha_max;
    grid.j_count = j_count;
    grid.k_count = k_count;
    grid.lambdas = log_spaced_with_zero(lambda_min, lambda_max, j_count);
    grid.alphas = log_spaced_with_zero(alpha_min, alpha_max, k_count);
    return grid;
}

HyperGrid default_grid(Eigen::Index n)
{
    const double scale = static_cast<double>(n);
    return build_grid(1e-2 * scale, 1e3 * scale, 10, 1e-4 * scale, 1e2 * scale, 10);
}

HyperGrid explicit_grid(std::vector<double> lambdas, std::vector<double> alphas)
{
    check_increasing(lambdas, "lambda");
    check_increasing(alphas, "alpha");
    HyperGrid grid;
    grid.lambda_min = lambdas.front();
    grid.lambda_max = lambdas.back();
    grid.alpha_min = alphas.front();
    grid.alpha_max = alphas.back();
    grid.j_count = static_cast<int>(lambdas.size());
    grid.k_count = static_cast<int>(alphas.size());
    grid.lambdas = std::move(lambdas);
    grid.alphas = std::move(alphas);
    return grid;
}

void RasperData::validate() const
{
    if (x.rows() != y.size()) throw Error(ErrorCode::DimensionMismatch, "design rows differ from outcome length");
    if (static_cast<Eigen::Index>(ranks.size()) != y.size())
        throw Error(ErrorCode::DimensionMismatch, "rank count differs from outcome length");
    if (scores && scores->size() != y.size())
        throw Error(ErrorCode::DimensionMismatch, "score count differs from outcome length");
    if (q < 0 || q > x.cols()) throw Error(ErrorCode::DimensionMismatch, "conventional block exceeds the design");
}

RasperData make_rasper_data(Eigen::MatrixXd x, Eigen::VectorXd y, Eigen::Index q, Eigen::VectorXd scores)
{
    RasperData data;
    data.ranks = external_ranks(scores);
    data.x = std::move(x);
    data.y = std::move(y);
    data.q = q;
    data.scores = std::move(scores);
    data.validate();
    return data;
}

RasperData make_rasper_data(Eigen::MatrixXd x, Eigen::VectorXd y, Eigen::Index q, ExternalRanks ranks)
{
    RasperData data;
    data.x = std::move(x);
    data.y = std::move(y);
    data.q = q;
    data.ranks = std::move(ranks);
    data.validate();
    return data;
}

ExternalRanks rerank_subset(const ExternalRanks& ranks, const std::vector<Eigen::Index>& keep)
{
    // Max-style ranks are a monotone function of the scores, so ranking the
    // retained ranks reproduces the ranks of the retained scores.
    std::vector<double> values;
    values.reserve(keep.size());
    for (auto i : keep) values.push_back(static_cast<double>(ranks.r.at(static_cast<std::size_t>(i))));
    return external_ranks(std::span<const double>(values));
}

RasperData without_row(const RasperData& data, Eigen::Index row)
{
    const Eigen::Index n = data.rows();
    if (row < 0 || row >= n) throw Error(ErrorCode::InvalidArgument, "row index out of range");
    std::vector<Eigen::Index> keep;
    keep.reserve(static_cast<std::size_t>(n - 1));
    for (Eigen::Index i = 0; i < n; ++i)
        if (i != row) keep.push_back(i);

    RasperData out;
    out.q = data.q;
    out.x = data.x(keep, Eigen::all);
    out.y = data.y(keep);
    if (data.scores) {
        Eigen::VectorXd s = (*data.scores)(keep);
        out.ranks = external_ranks(s);
        out.scores = std::move(s);
    } else {
        out.ranks = rerank_subset(data.ranks, keep);
    }
    return out;
}

PenalizedProblem make_problem(const RasperData& data, const ConcordanceSpec& spec, double lambda, double alpha)
{
    data.validate();
    return PenalizedProblem{data.x, data.y, make_concordance_term(data.x, data.q, data.ranks, spec), lambda, alpha};
}

FitResult fit_warm(const PenalizedProblem& problem, const std::optional<Eigen::VectorXd>& warm, const FitOptions& options)
{
    if (!warm) return fit_rasper(problem, std::nullopt, options);
    return fit_best_start(problem, {*warm}, options);
}

FitResult fit_best_start(const PenalizedProblem& problem, const std::vector<Eigen::VectorXd>& starts,
                         const FitOptions& options)
{
    const auto start_objective = [&](const Eigen::VectorXd& beta) {
        const double b0 = (problem.y - problem.x * beta).mean();
        try {
            return penalized_objective(problem, b0, beta);
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    // The local minimizer goes last so that a warm start wins ties.
    Eigen::VectorXd best = fit_ridge(problem.x, problem.y, problem.alpha).beta;
    double best_value = start_objective(best);
    bool warm = false;
    for (const auto& start : starts) {
        if (start.size() != problem.x.cols()) throw Error(ErrorCode::DimensionMismatch, "start length differs from column count");
        const double value = start_objective(start);
        if (value <= best_value) {
            best = start;
            best_value = value;
            warm = true;
        }
    }
    return fit_rasper(problem, best, options, warm ? "warm" : "local");
}

double loocv_score(const RasperData& data, const ConcordanceSpec& spec, double lambda, double alpha,
                   const FitOptions& options, int threads)
{
    data.validate();
    const Eigen::Index n = data.rows();
    if (n < 3) throw Error(ErrorCode::EmptyData, "leave-one-out needs at least 3 rows");
    std::vector<double> losses(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        const auto row = static_cast<Eigen::Index>(i);
        try {
            const auto fold = without_row(data, row);
            const auto fit = fit_rasper(make_problem(fold, spec, lambda, alpha), std::nullopt, options);
            losses[i] = held_out_loss(data, row, fit);
        } catch (const Error&) {
            // recorded as NaN below
        }
    });
    const auto failed = std::count_if(losses.begin(), losses.end(), [](double v) { return std::isnan(v); });
    if (failed > 0)
        throw Error(ErrorCode::FoldFailure, std::to_string(failed) + " of " + std::to_string(n) + " folds failed");
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(n);
}

Eigen::MatrixXd zero_curvature(const ConcordanceTerm& term)
{
    // Symmetrized pair weights act through the graph Laplacian:
    // sum_{i<j} m_ij (x_i - x_j)(x_i - x_j)' = X' (diag(m 1) - m) X.
    const Eigen::MatrixXd& w = term.weights().w;
    const Eigen::MatrixXd m = w + w.transpose();
    Eigen::MatrixXd laplacian = -m;
    laplacian.diagonal() += m.rowwise().sum();

    const double nu = term.nu();
    const double scale = term.table_factor() / (4.0 * nu * nu * term.weights().total());
    const auto p = term.cols();
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(p, p);
    for (const auto& table : term.tables()) k.noalias() += table.transpose() * laplacian * table;
    k *= scale;
    return 0.5 * (k + k.transpose());
}

DegreesOfFreedom degrees_of_freedom(const Eigen::MatrixXd& x, const ConcordanceTerm& term, double lambda, double alpha)
{
    if (!(lambda >= 0.0) || !(alpha >= 0.0)) throw Error(ErrorCode::InvalidArgument, "penalties must be nonnegative");
    if (term.cols() != x.cols()) throw Error(ErrorCode::DimensionMismatch, "design and concordance widths differ");
    const auto p = x.cols();
    const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd gram = xc.transpose() * xc;
    Eigen::MatrixXd system = gram;
    system.diagonal().array() += alpha;
    if (lambda > 0.0) system += lambda * zero_curvature(term);

    Eigen::LLT<Eigen::MatrixXd> llt(system);
    if (llt.info() != Eigen::Success) return {static_cast<double>(p), true};
    // tr(G^{-1} G) is p; returning it directly keeps the identity exact.
    if (lambda == 0.0 && alpha == 0.0) return {static_cast<double>(p), false};
    return {llt.solve(gram).trace(), false};
}

double aic(const FitResult& fit, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double df)
{
    return 2.0 * local_objective(x, y, fit.intercept, fit.beta, fit.alpha) + 2.0 * df;
}

const char* to_string(Criterion criterion) noexcept
{
    return criterion == Criterion::LOOCV ? "loocv" : "aic";
}

Criterion parse_criterion(const std::string& name)
{
    if (name == "loocv" || name == "LOOCV") return Criterion::LOOCV;
    if (name == "aic" || name == "AIC") return Criterion::AIC;
    throw Error(ErrorCode::InvalidArgument, "unknown criterion '" + name + "'");
}

std::optional<std::size_t> argmin_first(const std::vector<std::optional<double>>& values)
{
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!values[i]) continue;
        if (!best || *values[i] < *values[*best]) best = i;
    }
    return best;
}

std::size_t SelectionReport::chosen() const
{
    const auto& pick = criterion == Criterion::LOOCV ? chosen_loocv : chosen_aic;
    if (!pick) throw Error(ErrorCode::FoldFailure, "no grid point has a usable criterion value");
    return *pick;
}

CsvTable SelectionReport::to_csv() const
{
    CsvTable table;
    table.header = {"lambda", "alpha", "loocv", "failed_folds", "df", "df_clamped", "aic",
                    "objective", "concordance", "converged", "iterations", "intercept"};
    const auto p = records.empty() ? 0 : records.front().fit.beta.size();
    for (Eigen::Index j = 0; j < p; ++j) table.header.push_back("beta_" + std::to_string(j + 1));
    for (const auto& r : records) {
        std::vector<std::string> row{format_double(r.lambda),
                                     format_double(r.alpha),
                                     r.loo ? format_double(*r.loo) : std::string("NA"),
                                     std::to_string(r.failed_folds),
                                     format_double(r.df),
                                     r.df_clamped ? "1" : "0",
                                     format_double(r.aic),
                                     format_double(r.fit.objective()),
                                     format_double(r.fit.concordance),
                                     r.fit.converged ? "1" : "0",
                                     std::to_string(r.fit.iterations),
                                     format_double(r.fit.intercept)};
        for (Eigen::Index j = 0; j < p; ++j) row.push_back(format_double(r.fit.beta(j)));
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string SelectionReport::to_json() const
{
    using nlohmann::ordered_json;
    ordered_json out;
    out["criterion"] = to_string(criterion);
    const auto index_or_null = [](const std::optional<std::size_t>& i) {
        return i ? ordered_json(*i) : ordered_json(nullptr);
    };
    out["chosen_index"] = index_or_null(criterion == Criterion::LOOCV ? chosen_loocv : chosen_aic);
    out["chosen_loocv_index"] = index_or_null(chosen_loocv);
    out["chosen_aic_index"] = index_or_null(chosen_aic);
    ordered_json list = ordered_json::array();
    for (const auto& r : records) {
        ordered_json item;
        item["lambda"] = r.lambda;
        item["alpha"] = r.alpha;
        item["loocv"] = r.loo ? ordered_json(*r.loo) : ordered_json(nullptr);
        item["failed_folds"] = r.failed_folds;
        item["df"] = r.df;
        item["df_clamped"] = r.df_clamped;
        item["aic"] = r.aic;
        item["objective"] = r.fit.objective();
        item["concordance"] = r.fit.concordance;
        item["converged"] = r.fit.converged;
        item["iterations"] = r.fit.iterations;
        item["intercept"] = r.fit.intercept;
        item["beta"] = std::vector<double>(r.fit.beta.data(), r.fit.beta.data() + r.fit.beta.size());
        list.push_back(std::move(item));
    }
    out["records"] = std::move(list);
    return out.dump(2);
}

SelectionReport select(const RasperData& data, const ConcordanceSpec& spec, const HyperGrid& grid,
                       Criterion criterion, const SelectOptions& options)
{
    data.validate();
    check_increasing(grid.lambdas, "lambda");
    check_increasing(grid.alphas, "alpha");
    const std::size_t nl = grid.lambdas.size();
    const std::size_t na = grid.alphas.size();
    const auto index = [na](std::size_t j, std::size_t k) { return j * na + k; };

    SelectionReport report;
    report.criterion = criterion;
    report.records.resize(grid.size());

    // Full-data path: alpha columns are independent, lambda runs warm within each.
    auto base = make_problem(data, spec, 0.0, 0.0);
    parallel_for(na, options.threads, [&](std::size_t k) {
        PenalizedProblem problem = base;
        problem.alpha = grid.alphas[k];
        std::optional<Eigen::VectorXd> warm;
        for (std::size_t j = 0; j < nl; ++j) {
            problem.lambda = grid.lambdas[j];
            auto& record = report.records[index(j, k)];
            record.lambda = problem.lambda;
            record.alpha = problem.alpha;
            record.fit = fit_warm(problem, warm, options.fit);
            warm = record.fit.beta;
            const auto df = degrees_of_freedom(data.x, base.concordance, problem.lambda, problem.alpha);
            record.df = df.value;
            record.df_clamped = df.clamped;
            record.aic = aic(record.fit, data.x, data.y, df.value);
        }
    });

    std::vector<std::optional<double>> aic_values(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g)
        if (!report.records[g].df_clamped) aic_values[g] = report.records[g].aic;
    report.chosen_aic = argmin_first(aic_values);

    if (options.compute_loo || criterion == Criterion::LOOCV) {
        const Eigen::Index n = data.rows();
        if (n < 3) throw Error(ErrorCode::EmptyData, "leave-one-out needs at least 3 rows");
        const double nan = std::numeric_limits<double>::quiet_NaN();
        std::vector<std::vector<double>> losses(static_cast<std::size_t>(n), std::vector<double>(grid.size(), nan));
        parallel_for(static_cast<std::size_t>(n), options.threads, [&](std::size_t i) {
            const auto row = static_cast<Eigen::Index>(i);
            std::optional<PenalizedProblem> problem;
            try {
                problem = make_problem(without_row(data, row), spec, 0.0, 0.0);
            } catch (const Error&) {
                return;
            }
            for (std::size_t k = 0; k < na; ++k) {
                problem->alpha = grid.alphas[k];
                std::optional<Eigen::VectorXd> warm;
                for (std::size_t j = 0; j < nl; ++j) {
                    problem->lambda = grid.lambdas[j];
                    // Candidates: the previous lambda in this fold and the
                    // full-data fit at the same grid point.
                    std::vector<Eigen::VectorXd> starts{report.records[index(j, k)].fit.beta};
                    if (warm) starts.push_back(*warm);
                    try {
                        const auto fit = fit_best_start(*problem, starts, options.fit);
                        losses[i][index(j, k)] = held_out_loss(data, row, fit);
                        warm = fit.beta;
                    } catch (const Error&) {
                        warm.reset();
                    }
                }
            }
        });
        std::vector<std::optional<double>> loo_values(grid.size());
        for (std::size_t g = 0; g < grid.size(); ++g) {
            double sum = 0.0;
            int failed = 0;
            for (const auto& fold : losses) {
                if (std::isnan(fold[g])) ++failed;
                else sum += fold[g];
            }
            auto& record = report.records[g];
            record.failed_folds = failed;
            if (failed == 0) record.loo = sum / static_cast<double>(n);
            loo_values[g] = record.loo;
        }
        report.chosen_loocv = argmin_first(loo_values);
    }
    return report;
}

} // namespace rasper
