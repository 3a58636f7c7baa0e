#include "rasper/simbench.hpp"

#include "rasper/baselines.hpp"
#include "rasper/error.hpp"
#include "rasper/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace rasper {

namespace {

using nlohmann::ordered_json;

struct NameTable {
    Method method;
    const char* name;
};

constexpr NameTable kMethodNames[] = {
    {Method::OLS, "ols"},
    {Method::Ridge, "ridge"},
    {Method::DTL, "dtl"},
    {Method::ATL, "atl"},
    {Method::Stacking, "stacking"},
    {Method::RasperSpearman, "rasper_s"},
    {Method::RasperKendall, "rasper_k"},
    {Method::RasperMarginal, "rasper_m"},
    {Method::RasperSpearmanAic, "rasper_s_aic"},
};

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    // Row-major fill so a row's draws are contiguous in the stream.
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

/// b1 = 0.4 z1 + e1, b2 = 0.25 z1 + 0.5 z3 + 0.1 z4 + e2
Eigen::MatrixXd novel_block(const Eigen::MatrixXd& z, const Eigen::MatrixXd& e)
{
    Eigen::MatrixXd b(z.rows(), 2);
    b.col(0) = 0.4 * z.col(0) + e.col(0);
    b.col(1) = 0.25 * z.col(0) + 0.5 * z.col(2) + 0.1 * z.col(3) + e.col(1);
    return b;
}

std::vector<double> to_std_vector(const Eigen::VectorXd& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd to_eigen(const std::vector<double>& v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::VectorXd midranks(const Eigen::VectorXd& a)
{
    const auto n = a.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return a(i) < a(j); });
    Eigen::VectorXd r(n);
    std::size_t k = 0;
    while (k < order.size()) {
        std::size_t end = k + 1;
        while (end < order.size() && a(order[end]) == a(order[k])) ++end;
        const double mid = 0.5 * static_cast<double>(k + 1 + end);
        for (std::size_t t = k; t < end; ++t) r(order[t]) = mid;
        k = end;
    }
    return r;
}

double mean_of(const std::vector<double>& v)
{
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double standard_error(const std::vector<double>& v)
{
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

/// Rank a new score would take among the internal scores if it joined the cohort.
Eigen::VectorXd inserted_ranks(const Eigen::VectorXd& internal, const Eigen::VectorXd& fresh)
{
    std::vector<double> sorted(internal.data(), internal.data() + internal.size());
    std::sort(sorted.begin(), sorted.end());
    Eigen::VectorXd r(fresh.size());
    for (Eigen::Index i = 0; i < fresh.size(); ++i) {
        const auto below = std::upper_bound(sorted.begin(), sorted.end(), fresh(i)) - sorted.begin();
        r(i) = static_cast<double>(below + 1);
    }
    return r;
}

} // namespace

const char* to_string(Study study) noexcept
{
    switch (study) {
    case Study::S1a: return "1a";
    case Study::S1b: return "1b";
    case Study::S2: return "2";
    }
    return "?";
}

Study parse_study(const std::string& name)
{
    if (name == "1a") return Study::S1a;
    if (name == "1b") return Study::S1b;
    if (name == "2") return Study::S2;
    throw Error(ErrorCode::InvalidArgument, "unknown study '" + name + "' (expected 1a, 1b or 2)");
}

const char* to_string(Method method) noexcept
{
    for (const auto& entry : kMethodNames)
        if (entry.method == method) return entry.name;
    return "?";
}

Method parse_method(const std::string& name)
{
    for (const auto& entry : kMethodNames)
        if (name == entry.name) return entry.method;
    throw Error(ErrorCode::InvalidArgument, "unknown method '" + name + "'");
}

Eigen::Index SimSetting::q() const
{
    return study == Study::S2 ? 4 : 5;
}

Eigen::Index SimSetting::p() const
{
    return study == Study::S1a ? 5 : q() + 2;
}

HyperGrid SimSetting::hyper_grid() const
{
    if (!grid) return default_grid(n_internal);
    return build_grid(grid->lambda_min, grid->lambda_max, grid->j_count, grid->alpha_min, grid->alpha_max,
                      grid->k_count);
}

void SimSetting::validate() const
{
    if (beta_internal.size() != p())
        throw Error(ErrorCode::DimensionMismatch, "beta_internal needs " + std::to_string(p()) + " entries");
    if (study != Study::S2 && beta_external.size() != q())
        throw Error(ErrorCode::DimensionMismatch, "beta_external needs " + std::to_string(q()) + " entries");
    if (n_internal < p() + 2) throw Error(ErrorCode::InvalidArgument, "n_internal must be at least p + 2");
    if (n_test < 1) throw Error(ErrorCode::InvalidArgument, "n_test must be positive");
    if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
    if (replications < 1) throw Error(ErrorCode::InvalidArgument, "replications must be positive");
    if (samples < 1) throw Error(ErrorCode::InvalidArgument, "samples must be positive");
    if (nu && !(*nu > 0.0)) throw Error(ErrorCode::InvalidArgument, "nu must be positive");
    if (methods.empty() || methods.front() != Method::OLS)
        throw Error(ErrorCode::InvalidArgument, "methods must start with ols, the relative-MSE reference");
    hyper_grid();
}

SimSetting parse_setting(const std::string& json_text)
{
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("setting is not valid JSON: ") + e.what());
    }
    SimSetting s;
    try {
        s.name = j.value("name", std::string());
        s.study = parse_study(j.at("study").get<std::string>());
        if (j.contains("beta_external")) s.beta_external = to_eigen(j.at("beta_external").get<std::vector<double>>());
        s.beta_internal = to_eigen(j.at("beta_internal").get<std::vector<double>>());
        if (j.contains("theta")) {
            const auto theta = j.at("theta").get<std::vector<double>>();
            if (theta.size() != 4) throw Error(ErrorCode::SchemaMismatch, "theta needs 4 entries (theta2..theta5)");
            s.theta2 = theta[0];
            s.theta3 = theta[1];
            s.theta4 = theta[2];
            s.theta5 = theta[3];
        }
        const auto z5 = j.value("z5_mode", std::string("extra"));
        if (z5 == "extra") s.z5_mode = Z5Mode::Extra;
        else if (z5 == "z4") s.z5_mode = Z5Mode::Z4;
        else throw Error(ErrorCode::SchemaMismatch, "z5_mode must be 'extra' or 'z4'");
        s.n_internal = j.value("n_internal", s.n_internal);
        s.n_test = j.value("n_test", s.n_test);
        s.sigma = j.value("sigma", s.sigma);
        s.replications = j.value("replications", s.replications);
        s.seed = j.value("seed", s.seed);
        if (j.contains("methods")) {
            for (const auto& m : j.at("methods")) s.methods.push_back(parse_method(m.get<std::string>()));
        } else {
            s.methods = {Method::OLS, Method::Ridge, Method::RasperSpearman};
        }
        // OLS is the relative-MSE reference and always runs first.
        std::erase(s.methods, Method::OLS);
        s.methods.insert(s.methods.begin(), Method::OLS);
        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            GridBounds b;
            b.lambda_min = g.at("lambda_min").get<double>();
            b.lambda_max = g.at("lambda_max").get<double>();
            b.j_count = g.value("J", b.j_count);
            b.alpha_min = g.at("alpha_min").get<double>();
            b.alpha_max = g.at("alpha_max").get<double>();
            b.k_count = g.value("K", b.k_count);
            s.grid = b;
        }
        s.samples = j.value("samples", s.samples);
        if (j.contains("nu") && !j.at("nu").is_null()) s.nu = j.at("nu").get<double>();
        s.fit.tolerance = j.value("tolerance", s.fit.tolerance);
        s.fit.max_iterations = j.value("max_iterations", s.fit.max_iterations);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, std::string("bad setting field: ") + e.what());
    }
    s.validate();
    return s;
}

SimSetting load_setting(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open setting file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_setting(buffer.str());
}

std::string setting_to_json(const SimSetting& s)
{
    ordered_json j;
    j["name"] = s.name;
    j["study"] = to_string(s.study);
    if (s.study != Study::S2) j["beta_external"] = to_std_vector(s.beta_external);
    j["beta_internal"] = to_std_vector(s.beta_internal);
    if (s.study == Study::S2) {
        j["theta"] = {s.theta2, s.theta3, s.theta4, s.theta5};
        j["z5_mode"] = s.z5_mode == Z5Mode::Extra ? "extra" : "z4";
    }
    j["n_internal"] = s.n_internal;
    j["n_test"] = s.n_test;
    j["sigma"] = s.sigma;
    j["replications"] = s.replications;
    j["seed"] = s.seed;
    ordered_json methods = ordered_json::array();
    for (auto m : s.methods) methods.push_back(to_string(m));
    j["methods"] = methods;
    const auto grid = s.hyper_grid();
    j["grid"] = {{"lambda_min", grid.lambda_min}, {"lambda_max", grid.lambda_max}, {"J", grid.j_count},
                 {"alpha_min", grid.alpha_min},   {"alpha_max", grid.alpha_max},   {"K", grid.k_count}};
    j["samples"] = s.samples;
    j["nu"] = s.nu ? ordered_json(*s.nu) : ordered_json(nullptr);
    j["tolerance"] = s.fit.tolerance;
    j["max_iterations"] = s.fit.max_iterations;
    return j.dump(2);
}

double study2_f1(double u)
{
    return logistic(u) - logistic(u - 1.0);
}

double study2_f2(double u)
{
    return u < 7.0 ? 0.5 * (u - 2.0) * (u - 2.0) : 12.5;
}

SimDraw gen_study1(const SimSetting& setting, std::mt19937_64& rng)
{
    const Eigen::Index q = setting.q();
    const auto draw_cohort = [&](Eigen::Index n, Eigen::MatrixXd& x, Eigen::VectorXd& mu_e) {
        const Eigen::MatrixXd z = normal_matrix(n, q, rng);
        if (setting.study == Study::S1b) {
            x.resize(n, setting.p());
            x << z, novel_block(z, normal_matrix(n, 2, rng));
        } else {
            x = z;
        }
        mu_e = z * setting.beta_external;
    };
    SimDraw d;
    draw_cohort(setting.n_internal, d.x, d.mu_external);
    d.mu_internal = d.x * setting.beta_internal;
    std::normal_distribution<double> noise(0.0, setting.sigma);
    d.y.resize(setting.n_internal);
    for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y(i) = d.mu_internal(i) + noise(rng);
    d.ranks = external_ranks(d.mu_external);
    d.external_target = Eigen::VectorXd::Zero(setting.p());
    d.external_target.head(q) = setting.beta_external;
    draw_cohort(setting.n_test, d.x_test, d.mu_external_test);
    d.mu_internal_test = d.x_test * setting.beta_internal;
    return d;
}

SimDraw gen_study2(const SimSetting& setting, std::mt19937_64& rng)
{
    const auto draw_cohort = [&](Eigen::Index n, Eigen::MatrixXd& x, Eigen::VectorXd& mu_e) {
        const Eigen::MatrixXd z = normal_matrix(n, 4, rng);
        const Eigen::MatrixXd e = normal_matrix(n, 2, rng);
        const Eigen::VectorXd z5 = setting.z5_mode == Z5Mode::Extra ? Eigen::VectorXd(normal_matrix(n, 1, rng).col(0))
                                                                    : Eigen::VectorXd(z.col(3));
        x.resize(n, 6);
        x << z, novel_block(z, e);
        mu_e.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double f1 = study2_f1(z(i, 0));
            const double f2 = study2_f2(z(i, 1));
            const double exponent = (z(i, 2) < 2.0 ? -setting.theta4 : 10.0 * setting.theta4) - setting.theta5 * z5(i);
            mu_e(i) = (1.0 + f1 + setting.theta2 * f2 + setting.theta3 * f1 * f2) * std::exp(exponent);
        }
    };
    SimDraw d;
    draw_cohort(setting.n_internal, d.x, d.mu_external);
    d.mu_internal = d.x * setting.beta_internal;
    std::normal_distribution<double> noise(0.0, setting.sigma);
    d.y.resize(setting.n_internal);
    for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y(i) = d.mu_internal(i) + noise(rng);
    d.ranks = external_ranks(d.mu_external);
    d.external_target = projection_target(d.x.leftCols(4), d.mu_external, setting.p());
    draw_cohort(setting.n_test, d.x_test, d.mu_external_test);
    d.mu_internal_test = d.x_test * setting.beta_internal;
    return d;
}

SimDraw generate(const SimSetting& setting, std::mt19937_64& rng)
{
    return setting.study == Study::S2 ? gen_study2(setting, rng) : gen_study1(setting, rng);
}

std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t rep)
{
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ rep));
}

double spearman_rc(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "inputs differ in length");
    if (a.size() < 2) throw Error(ErrorCode::EmptyData, "rank correlation needs at least 2 values");
    const Eigen::VectorXd ra = midranks(a);
    const Eigen::VectorXd rb = midranks(b);
    const Eigen::VectorXd ca = ra.array() - ra.mean();
    const Eigen::VectorXd cb = rb.array() - rb.mean();
    const double sa = ca.squaredNorm();
    const double sb = cb.squaredNorm();
    if (sa == 0.0 || sb == 0.0) throw Error(ErrorCode::InvalidArgument, "rank correlation of a constant input");
    return ca.dot(cb) / std::sqrt(sa * sb);
}

double kendall_tau(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "inputs differ in length");
    const auto n = a.size();
    if (n < 2) throw Error(ErrorCode::EmptyData, "Kendall tau needs at least 2 values");
    long long net = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double s = (a(i) - a(j)) * (b(i) - b(j));
            net += (s > 0.0) - (s < 0.0);
        }
    return static_cast<double>(net) / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

std::vector<double> evaluate_methods(const SimSetting& setting, const SimDraw& draw)
{
    const Eigen::Index q = setting.q();
    const auto design = standardize(draw.x, q);
    const Eigen::MatrixXd& x = design.x;
    const Eigen::MatrixXd x_test = design.transform(draw.x_test);
    const Eigen::VectorXd target = draw.external_target.cwiseProduct(design.scale);
    const HyperGrid grid = setting.hyper_grid();
    const double nu = setting.nu ? *setting.nu : default_nu(x, draw.y).nu;
    const RasperData data = make_rasper_data(x, draw.y, q, draw.mu_external);

    const auto mse = [&](const Eigen::VectorXd& prediction) {
        return (draw.mu_internal_test - prediction).squaredNorm() / static_cast<double>(prediction.size());
    };
    SelectOptions select_options;
    select_options.fit = setting.fit;
    const auto rasper_select = [&](Measure measure, bool marginalized, Criterion criterion) {
        ConcordanceSpec spec;
        spec.measure = measure;
        spec.marginalized = marginalized;
        spec.nu = nu;
        spec.samples = setting.samples;
        spec.seed = setting.seed;
        select_options.compute_loo = criterion == Criterion::LOOCV;
        return select(data, spec, grid, criterion, select_options);
    };
    const auto rasper_prediction = [&](const GridRecord& record) {
        return Eigen::VectorXd((x_test * record.fit.beta).array() + record.fit.intercept);
    };

    // The Spearman LOOCV path also carries AIC, so both variants share it.
    std::optional<SelectionReport> spearman;
    const bool need_loo = std::find(setting.methods.begin(), setting.methods.end(), Method::RasperSpearman) !=
                          setting.methods.end();

    std::vector<double> out;
    out.reserve(setting.methods.size());
    for (auto method : setting.methods) {
        switch (method) {
        case Method::OLS:
            out.push_back(mse(fit_ols(x, draw.y).predict(x_test)));
            break;
        case Method::Ridge:
            out.push_back(mse(tune_ridge(x, draw.y, grid.alphas).fit.predict(x_test)));
            break;
        case Method::DTL:
            out.push_back(mse(tune_dtl(x, draw.y, grid.alphas, target).fit.predict(x_test)));
            break;
        case Method::ATL:
            out.push_back(mse(tune_atl(x, draw.y, grid.alphas, grid.alphas, target).fit.predict(x_test)));
            break;
        case Method::Stacking: {
            const auto fit = fit_stacking(x, draw.y, draw.ranks);
            out.push_back(mse(fit.predict(x_test, inserted_ranks(draw.mu_external, draw.mu_external_test))));
            break;
        }
        case Method::RasperSpearman:
        case Method::RasperSpearmanAic: {
            if (!spearman)
                spearman = rasper_select(Measure::Spearman, false, need_loo ? Criterion::LOOCV : Criterion::AIC);
            const auto index = method == Method::RasperSpearman ? spearman->chosen_loocv : spearman->chosen_aic;
            if (!index) throw Error(ErrorCode::FoldFailure, "no usable grid point");
            out.push_back(mse(rasper_prediction(spearman->records[*index])));
            break;
        }
        case Method::RasperKendall:
            out.push_back(mse(rasper_prediction(rasper_select(Measure::Kendall, false, Criterion::LOOCV).chosen_record())));
            break;
        case Method::RasperMarginal:
            out.push_back(mse(rasper_prediction(rasper_select(Measure::Spearman, true, Criterion::LOOCV).chosen_record())));
            break;
        }
    }
    return out;
}

const MethodSummary& BenchReport::summary(Method method) const
{
    for (const auto& m : methods)
        if (m.method == method) return m;
    throw Error(ErrorCode::InvalidArgument, std::string("method not in report: ") + to_string(method));
}

BenchReport run_benchmark(const SimSetting& setting, int threads)
{
    setting.validate();
    struct Slot {
        bool ok = false;
        std::vector<double> relative;
        double rc = 0.0;
        double distance = 0.0;
    };
    const auto reps = static_cast<std::size_t>(setting.replications);
    std::vector<Slot> slots(reps);
    parallel_for(reps, threads, [&](std::size_t rep) {
        auto rng = replication_rng(setting.seed, rep);
        const SimDraw draw = generate(setting, rng);
        Slot& slot = slots[rep];
        slot.rc = spearman_rc(draw.mu_external, draw.mu_internal);
        slot.distance = (draw.mu_internal - draw.mu_external).squaredNorm();
        try {
            const auto mses = evaluate_methods(setting, draw);
            slot.relative.reserve(mses.size());
            for (double m : mses) slot.relative.push_back(m / mses.front());
            slot.ok = true;
        } catch (const Error&) {
            slot.ok = false;
        }
    });

    BenchReport report;
    report.setting = setting;
    std::vector<double> rcs;
    std::vector<double> distances;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        rcs.push_back(slots[rep].rc);
        distances.push_back(slots[rep].distance);
        if (!slots[rep].ok) {
            ++report.failed_replications;
            continue;
        }
        report.relative_mse.push_back(slots[rep].relative);
        report.replication_index.push_back(static_cast<int>(rep));
    }
    report.mean_rank_correlation = mean_of(rcs);
    report.mean_distance = mean_of(distances);
    if (report.relative_mse.empty()) throw Error(ErrorCode::FoldFailure, "every replication failed");

    const auto ridge = std::find(setting.methods.begin(), setting.methods.end(), Method::Ridge);
    for (std::size_t m = 0; m < setting.methods.size(); ++m) {
        std::vector<double> values;
        std::vector<double> diffs;
        for (const auto& row : report.relative_mse) {
            values.push_back(row[m]);
            if (ridge != setting.methods.end())
                diffs.push_back(row[m] - row[static_cast<std::size_t>(ridge - setting.methods.begin())]);
        }
        MethodSummary summary;
        summary.method = setting.methods[m];
        summary.mean_relative_mse = mean_of(values);
        summary.se_relative_mse = standard_error(values);
        if (!diffs.empty()) {
            summary.mean_diff_vs_ridge = mean_of(diffs);
            summary.se_diff_vs_ridge = standard_error(diffs);
        }
        report.methods.push_back(summary);
    }
    return report;
}

CsvTable BenchReport::to_csv() const
{
    CsvTable table;
    table.header = {"setting", "study", "method", "mean_relative_mse", "se_relative_mse", "diff_vs_ridge",
                    "se_diff_vs_ridge", "replications_used", "replications_failed", "mean_rank_correlation",
                    "mean_distance"};
    const auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); };
    for (const auto& m : methods) {
        table.rows.push_back({setting.name, to_string(setting.study), to_string(m.method),
                              format_double(m.mean_relative_mse), format_double(m.se_relative_mse),
                              opt(m.mean_diff_vs_ridge), opt(m.se_diff_vs_ridge),
                              std::to_string(relative_mse.size()), std::to_string(failed_replications),
                              format_double(mean_rank_correlation), format_double(mean_distance)});
    }
    return table;
}

std::string BenchReport::to_json() const
{
    ordered_json j;
    j["setting"] = ordered_json::parse(setting_to_json(setting));
    j["replications_used"] = relative_mse.size();
    j["replications_failed"] = failed_replications;
    j["mean_rank_correlation"] = mean_rank_correlation;
    j["mean_distance"] = mean_distance;
    ordered_json list = ordered_json::array();
    for (const auto& m : methods) {
        ordered_json item;
        item["method"] = to_string(m.method);
        item["mean_relative_mse"] = m.mean_relative_mse;
        item["se_relative_mse"] = m.se_relative_mse;
        item["diff_vs_ridge"] = m.mean_diff_vs_ridge ? ordered_json(*m.mean_diff_vs_ridge) : ordered_json(nullptr);
        item["se_diff_vs_ridge"] = m.se_diff_vs_ridge ? ordered_json(*m.se_diff_vs_ridge) : ordered_json(nullptr);
        list.push_back(std::move(item));
    }
    j["methods"] = std::move(list);
    return j.dump(2);
}

} // namespace rasper
