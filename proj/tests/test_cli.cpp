#include "support.hpp"

#include "rasper/baselines.hpp"
#include "rasper/cli.hpp"
#include "rasper/csv.hpp"
#include "rasper/data.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

using namespace rasper;
using namespace rasper::testing;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = 0;
    std::string out;
    std::string err;
};

CliRun run(std::vector<std::string> args)
{
    std::ostringstream out, err;
    CliRun r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

// id, y, two conventional columns, one novel column, external score.
std::string model_csv(int n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::ostringstream s;
    s.precision(17);
    s << "id,y,c1,c2,n1,score\n";
    for (int i = 0; i < n; ++i) {
        const double c1 = z(rng), c2 = 2.0 + 3.0 * z(rng), n1 = z(rng);
        const double y = 0.5 * c1 + 0.2 * c2 + 0.4 * n1 + z(rng);
        const double score = c1 + 0.1 * c2 + 0.5 * z(rng);
        s << "p" << i << ',' << y << ',' << c1 << ',' << c2 << ',' << n1 << ',' << score << '\n';
    }
    return s.str();
}

std::string survival_csv(int n, std::uint64_t seed, bool censor)
{
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> t(1.0 / 20.0);
    std::bernoulli_distribution e(censor ? 0.7 : 1.0);
    std::ostringstream s;
    s.precision(17);
    s << "id,time,event\n";
    for (int i = 0; i < n; ++i) s << i << ',' << t(rng) << ',' << (e(rng) ? 1 : 0) << '\n';
    return s.str();
}

std::vector<std::string> model_args(const std::string& cmd, const std::string& data, const std::string& out)
{
    return {cmd, "--data", data, "--outcome", "y", "--conventional", "c1,c2", "--novel", "n1",
            "--score", "score", "--id", "id", "--out", out};
}

std::vector<std::string> with_threads(std::vector<std::string> args, int threads)
{
    args.insert(args.begin(), {"--threads", std::to_string(threads)});
    return args;
}

std::vector<std::string> dir_listing(const fs::path& dir)
{
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

// Runs at two thread counts into the same directory and compares every output file.
void check_deterministic(const std::vector<std::string>& args, const fs::path& out)
{
    REQUIRE(run(with_threads(args, 1)).code == kExitOk);
    std::vector<std::pair<std::string, std::string>> first;
    for (const auto& name : dir_listing(out)) first.emplace_back(name, slurp(out / name));
    REQUIRE_FALSE(first.empty());
    const auto second = run(with_threads(args, 3));
    REQUIRE(second.code == kExitOk);
    CHECK(dir_listing(out).size() == first.size());
    for (const auto& [name, text] : first) {
        INFO(name);
        CHECK(slurp(out / name) == text);
    }
}

double cell(const CsvTable& t, std::size_t row, const std::string& column)
{
    return parse_number(t.rows[row][t.require_column(column)]);
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("outputs do not depend on the thread count")
{
    TempDir tmp("cli_det");
    const auto data = tmp.write("d.csv", model_csv(25, 5));
    const auto out = tmp.file("out");

    SUBCASE("fit")
    {
        auto args = model_args("fit", data, out);
        args.insert(args.end(), {"--lambda", "3", "--alpha", "0.5"});
        check_deterministic(args, out);
    }
    SUBCASE("select")
    {
        auto args = model_args("select", data, out);
        args.insert(args.end(), {"--lambda-min", "1", "--lambda-max", "100", "--J", "1", "--alpha-min", "0.1",
                                 "--alpha-max", "10", "--K", "1", "--trace-lambda"});
        check_deterministic(args, out);
    }
    SUBCASE("select marginalized kendall")
    {
        auto args = model_args("select", data, out);
        args.insert(args.end(), {"--lambdas", "0,10", "--alphas", "0.1,1", "--measure", "kendall", "--marginalized",
                                 "--samples", "3", "--seed", "9"});
        check_deterministic(args, out);
    }
    SUBCASE("pseudo")
    {
        const auto surv = tmp.write("s.csv", survival_csv(30, 6, true));
        check_deterministic({"pseudo", "--data", surv, "--tau", "25", "--out", out}, out);
    }
    SUBCASE("score")
    {
        const auto clin = tmp.write("c.csv", "psa,visceral_mets,ecog,days_to_progression\n"
                                             "10,0,1,400\n45,1,2,30\n31,0,0,200\n");
        check_deterministic({"score", "--data", clin, "--out", out}, out);
    }
    SUBCASE("simulate")
    {
        const auto setting = tmp.write("setting.json", R"({"name": "tiny", "study": "1b",
            "beta_external": [0.3, 0.25, 0.2, 0.15, 0.1], "beta_internal": [0.3, 0.25, 0.2, 0.15, 0.1, 0.2, 0.1],
            "n_internal": 25, "n_test": 100, "replications": 3, "seed": 4, "samples": 2,
            "methods": ["ols", "ridge", "dtl", "atl", "stacking", "rasper_s", "rasper_k", "rasper_m"],
            "grid": {"lambda_min": 1, "lambda_max": 10, "J": 1, "alpha_min": 0.1, "alpha_max": 10, "K": 1}})");
        check_deterministic({"simulate", "--setting", setting, "--out", out}, out);
    }
}

TEST_CASE("missing input file")
{
    TempDir tmp("cli_missing");
    const auto absent = tmp.file("absent.csv");
    for (const auto& args : std::vector<std::vector<std::string>>{
             model_args("fit", absent, tmp.file("o1")),
             model_args("select", absent, tmp.file("o2")),
             {"pseudo", "--data", absent, "--out", tmp.file("o3")},
             {"score", "--data", absent, "--out", tmp.file("o4")},
             {"simulate", "--setting", absent, "--out", tmp.file("o5")}}) {
        const auto r = run(args);
        CHECK(r.code == kExitMissingInput);
        CHECK(r.err.find(absent) != std::string::npos);
    }
}

TEST_CASE("fit with zero concordance weight is ridge")
{
    TempDir tmp("cli_ridge");
    const auto data = tmp.write("d.csv", model_csv(30, 8));
    const auto out = tmp.file("out");
    auto args = model_args("fit", data, out);
    args.insert(args.end(), {"--lambda", "0", "--alpha", "2"});
    REQUIRE(run(args).code == kExitOk);
    const auto fit = nlohmann::json::parse(slurp(fs::path(out) / "fit.json"));

    const auto t = read_csv(data);
    Eigen::MatrixXd x(30, 3);
    Eigen::VectorXd y(30);
    for (std::size_t i = 0; i < 30; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        y(r) = cell(t, i, "y");
        x(r, 0) = cell(t, i, "c1");
        x(r, 1) = cell(t, i, "c2");
        x(r, 2) = cell(t, i, "n1");
    }
    const auto design = standardize(x, 2);
    const auto ridge = fit_ridge(design.x, y, 2.0);
    const auto beta = fit["standardized"]["beta"].get<std::vector<double>>();
    REQUIRE(beta.size() == 3);
    for (Eigen::Index j = 0; j < 3; ++j)
        CHECK(beta[static_cast<std::size_t>(j)] == doctest::Approx(ridge.beta(j)).epsilon(1e-6));
    CHECK(fit["standardized"]["intercept"].get<double>() == doctest::Approx(ridge.intercept).epsilon(1e-9));
    CHECK(fit["lambda"].get<double>() == 0.0);
}

TEST_CASE("pseudovalues without censoring are truncated times")
{
    TempDir tmp("cli_pseudo");
    const auto surv = tmp.write("s.csv", survival_csv(40, 10, false));
    const auto out = tmp.file("out");
    REQUIRE(run({"pseudo", "--data", surv, "--tau", "20", "--out", out}).code == kExitOk);
    const auto t = read_csv((fs::path(out) / "pseudovalues.csv").string());
    REQUIRE(t.rows.size() == 40);
    CHECK(t.header.back() == "pseudovalue");
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        CHECK(cell(t, i, "pseudovalue") == doctest::Approx(std::min(cell(t, i, "time"), 20.0)).epsilon(1e-10));
}

TEST_CASE("score of a patient with every risk factor absent is zero")
{
    TempDir tmp("cli_score");
    const auto clin = tmp.write("c.csv", "psa,visceral_mets,ecog,days_to_progression\n5,0,0,720\n40,1,3,0\n");
    const auto out = tmp.file("out");
    REQUIRE(run({"score", "--data", clin, "--out", out}).code == kExitOk);
    const auto t = read_csv((fs::path(out) / "scores.csv").string());
    REQUIRE(t.rows.size() == 2);
    CHECK(cell(t, 0, "nomogram_score") == 0.0);
    CHECK(cell(t, 1, "nomogram_score") == doctest::Approx(0.74 + 0.49 + 0.65 + 0.9));
    CHECK(cell(t, 0, "oriented_score") == 0.0);
    CHECK(cell(t, 0, "external_rank") == 2.0);
    CHECK(cell(t, 1, "external_rank") == 1.0);
}

TEST_CASE("simulate with OLS only")
{
    TempDir tmp("cli_sim");
    const auto setting = tmp.write("setting.json", R"({"study": "1a", "beta_external": [1, 0, 0, 0, 0],
        "beta_internal": [0.3, 0.25, 0.2, 0.15, 0.1], "n_internal": 20, "n_test": 50, "replications": 4,
        "methods": ["ols"]})");
    const auto out = tmp.file("out");
    const auto r = run({"simulate", "--setting", setting, "--replications", "3", "--out", out});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("simulate: 3 replications") == 0);
    const auto reps = read_csv((fs::path(out) / "replications.csv").string());
    REQUIRE(reps.rows.size() == 3);
    for (std::size_t i = 0; i < reps.rows.size(); ++i) CHECK(cell(reps, i, "ols") == 1.0);
    const auto report = read_csv((fs::path(out) / "report.csv").string());
    REQUIRE(report.rows.size() == 1);
    CHECK(cell(report, 0, "mean_relative_mse") == 1.0);
}

TEST_CASE("single-point grid gives one report row")
{
    TempDir tmp("cli_one");
    const auto data = tmp.write("d.csv", model_csv(15, 12));
    const auto out = tmp.file("out");
    auto args = model_args("select", data, out);
    args.insert(args.end(), {"--lambdas", "5", "--alphas", "1"});
    REQUIRE(run(args).code == kExitOk);
    const auto report = read_csv((fs::path(out) / "selection_report.csv").string());
    CHECK(report.rows.size() == 1);
    const auto fit = nlohmann::json::parse(slurp(fs::path(out) / "fit.json"));
    CHECK(fit["lambda"].get<double>() == 5.0);
    CHECK(fit["alpha"].get<double>() == 1.0);
}

TEST_CASE("argument errors")
{
    CHECK(run({}).code != kExitOk);
    CHECK(run({"fit", "--data", "x.csv"}).code != kExitOk);
    CHECK(run({"bogus"}).code != kExitOk);
}

}
