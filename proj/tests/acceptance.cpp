// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include "support.hpp"

#include "rasper/baselines.hpp"
#include "rasper/cli.hpp"
#include "rasper/selection.hpp"
#include "rasper/simbench.hpp"
#include "rasper/survival.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace rasper;
using namespace rasper::testing;
namespace fs = std::filesystem;

namespace {

/// Outcome of one criterion: pass flag plus a short measured summary.
struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double v, const char* spec = "%.3g")
{
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

bool non_increasing(const std::vector<double>& trace, double slack)
{
    for (std::size_t t = 1; t < trace.size(); ++t)
        if (trace[t] > trace[t - 1] + slack) return false;
    return true;
}

template <class F>
Eigen::VectorXd numeric_gradient(F f, const Eigen::VectorXd& x, double h = 1e-5)
{
    Eigen::VectorXd g(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        Eigen::VectorXd up = x, down = x;
        up(k) += h;
        down(k) -= h;
        g(k) = (f(up) - f(down)) / (2.0 * h);
    }
    return g;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    return (a - b).norm() / std::max(1e-12, b.norm());
}

Verdict reductions()
{
    Verdict v;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto pr = random_problem(30, 5, 1000 + seed, 0.0, 1.5);
        // Ridge closed form on the centered design.
        const Eigen::MatrixXd xc = pr.x.rowwise() - pr.x.colwise().mean();
        Eigen::MatrixXd a = xc.transpose() * xc;
        const Eigen::VectorXd rhs = xc.transpose() * (pr.y.array() - pr.y.mean()).matrix();
        const Eigen::VectorXd ols = a.ldlt().solve(rhs);
        a.diagonal().array() += pr.alpha;
        const Eigen::VectorXd ridge = a.ldlt().solve(rhs);

        worst = std::max(worst, (fit_rasper(pr).beta - ridge).cwiseAbs().maxCoeff());
        auto zero = pr;
        zero.alpha = 0.0;
        worst = std::max(worst, (fit_rasper(zero).beta - ols).cwiseAbs().maxCoeff());
    }
    v.require(worst < 1e-8, "coefficient gap " + fmt(worst));
    v.note("max gap " + fmt(worst) + " over 20 instances");
    return v;
}

Verdict descent()
{
    Verdict v;
    int traces = 0, bad = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (double lambda : {0.0, 1.0, 10.0, 100.0}) {
            for (bool accelerate : {false, true}) {
                const auto pr = random_problem(20, 5, 2000 + seed, lambda, 0.1,
                                               seed % 2 ? Measure::Kendall : Measure::Spearman);
                FitOptions opt;
                opt.accelerate = accelerate;
                const auto fit = fit_rasper(pr, std::nullopt, opt);
                ++traces;
                bad += !non_increasing(fit.trace, 1e-10);
            }
        }
    }
    v.require(bad == 0, std::to_string(bad) + " increasing traces");
    v.note(std::to_string(traces) + " traces, plain and accelerated");
    return v;
}

Verdict surrogate()
{
    Verdict v;
    std::mt19937_64 rng(3);
    double touch = 0.0, violation = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto pr = random_problem(12, 4, 3000 + seed, 25.0, 0.2, seed % 2 ? Measure::Kendall : Measure::Spearman);
        const Eigen::VectorXd anchor = gaussian_vector(4, rng);
        const double b0 = 0.3 * gaussian_vector(1, rng)(0);
        const Surrogate s(pr, b0, anchor);
        touch = std::max(touch, std::abs(s.value(b0, anchor) - penalized_objective(pr, b0, anchor)));
        for (int k = 0; k < 50; ++k) {
            const Eigen::VectorXd beta = anchor + 2.0 * gaussian_vector(4, rng);
            const double b = b0 + gaussian_vector(1, rng)(0);
            violation = std::max(violation, penalized_objective(pr, b, beta) - s.value(b, beta));
        }
    }
    v.require(touch <= 1e-8, "touching gap " + fmt(touch));
    v.require(violation <= 0.0, "bound violated by " + fmt(violation));
    v.note("touching gap " + fmt(touch) + ", 500 bound checks");
    return v;
}

Verdict lattice()
{
    Verdict v;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        for (double lambda : {1.0, 10.0}) {
            const auto pr = random_problem(6, 2, 4000 + seed, lambda, 0.1);
            const auto fit = fit_rasper(pr);
            const double radius = 3.0 * fit_ols(pr.x, pr.y).beta.norm();
            double best = std::numeric_limits<double>::infinity();
            for (int a = 0; a < 200; ++a)
                for (int b = 0; b < 200; ++b) {
                    const Eigen::Vector2d beta(-radius + 2.0 * radius * a / 199.0, -radius + 2.0 * radius * b / 199.0);
                    best = std::min(best, penalized_objective(pr, (pr.y - pr.x * beta).mean(), beta));
                }
            worst = std::max(worst, fit.objective() - best);
        }
    }
    v.require(worst <= 1e-6, "fit above lattice minimum by " + fmt(worst));
    v.note("max(fit - lattice) " + fmt(worst) + " over 10 instances");
    return v;
}

Verdict identities()
{
    Verdict v;
    for (int n = 2; n <= 50; ++n) {
        std::vector<double> psi(static_cast<std::size_t>(n));
        std::iota(psi.begin(), psi.end(), 1.0);
        std::mt19937_64 rng(static_cast<std::uint64_t>(n));
        std::shuffle(psi.begin(), psi.end(), rng);
        const double mean = std::accumulate(psi.begin(), psi.end(), 0.0) / n;
        double ss = 0.0;
        for (double x : psi) ss += (x - mean) * (x - mean);
        const double nd = n;
        v.require(ss == (nd * nd * nd - nd) / 12.0, "Spearman identity at n = " + std::to_string(n));
    }
    std::vector<int> psi{1, 2, 3, 4};
    int checked = 0, bad = 0;
    do {
        std::vector<int> r{1, 2, 3, 4};
        do {
            int lhs = 0, rhs = 0;
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) {
                    lhs += (psi[i] - psi[j]) * (r[i] - r[j]) > 0;
                    rhs += (r[i] < r[j]) + (psi[i] > psi[j]) * (2 * (r[i] > r[j]) - 1);
                }
            bad += lhs != rhs;
            ++checked;
        } while (std::next_permutation(r.begin(), r.end()));
    } while (std::next_permutation(psi.begin(), psi.end()));
    v.require(checked == 576 && bad == 0, std::to_string(bad) + " Kendall mismatches");
    v.note("n = 2..50 exact, " + std::to_string(checked) + " permutation pairs");
    return v;
}

Verdict gradients()
{
    Verdict v;
    std::mt19937_64 rng(6);
    double worst_d = 0.0, worst_obj = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto pr = random_problem(15, 4, 6000 + seed, 5.0, 0.3, seed % 2 ? Measure::Kendall : Measure::Spearman);
        const Eigen::VectorXd beta = gaussian_vector(4, rng);
        const double b0 = 0.2;
        const auto d = [&](const Eigen::VectorXd& b) { return pr.concordance.value(b); };
        worst_d = std::max(worst_d, relative_error(pr.concordance.gradient(beta), numeric_gradient(d, beta)));
        Eigen::VectorXd theta(5);
        theta << b0, beta;
        const auto obj = [&](const Eigen::VectorXd& t) { return penalized_objective(pr, t(0), t.tail(4)); };
        worst_obj = std::max(worst_obj, relative_error(penalized_gradient(pr, b0, beta), numeric_gradient(obj, theta)));
    }
    v.require(worst_d < 1e-4, "concordance gradient error " + fmt(worst_d));
    v.require(worst_obj < 1e-4, "objective gradient error " + fmt(worst_obj));
    v.note("relative errors " + fmt(worst_d) + " (D), " + fmt(worst_obj) + " (objective)");
    return v;
}

Verdict pseudovalue_identity()
{
    Verdict v;
    std::mt19937_64 rng(7);
    std::exponential_distribution<double> t(1.0 / 20.0);
    std::bernoulli_distribution censored(0.35);
    double worst_exact = 0.0, worst_mean = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
        SurvivalSample full, cens;
        full.tau = cens.tau = 24.0;
        for (int i = 0; i < 60; ++i) {
            const double ti = t(rng);
            full.times.push_back(ti);
            full.events.push_back(true);
            cens.times.push_back(ti);
            cens.events.push_back(!censored(rng));
        }
        const auto pv = pseudovalues(full);
        for (std::size_t i = 0; i < full.size(); ++i)
            worst_exact = std::max(worst_exact, std::abs(pv(static_cast<Eigen::Index>(i)) - std::min(full.times[i], 24.0)));
        worst_mean = std::max(worst_mean, std::abs(pseudovalues(cens).mean() - rmst(cens)));
    }
    v.require(worst_exact <= 1e-10, "uncensored gap " + fmt(worst_exact));
    v.require(worst_mean <= 1e-10, "mean vs RMST gap " + fmt(worst_mean));
    v.note("uncensored gap " + fmt(worst_exact) + ", mean gap " + fmt(worst_mean));
    return v;
}

Verdict nomogram()
{
    Verdict v;
    NomogramInput none;
    none.psa = 12.0;
    none.days_to_progression = 360.0;
    NomogramInput all;
    all.psa = 31.0;
    all.visceral_mets = true;
    all.ecog_ge2 = true;
    all.days_to_progression = 0.0;
    const double lo = nomogram_score(none), hi = nomogram_score(all);
    v.require(lo == 0.0, "absent factors scored " + fmt(lo, "%.17g"));
    v.require(std::abs(hi - 2.78) <= 4.0 * std::numeric_limits<double>::epsilon(), "all factors scored " + fmt(hi, "%.17g"));
    v.note("scores " + fmt(lo) + " and " + fmt(hi));
    return v;
}

Verdict reproduction()
{
    Verdict v;
    const fs::path dir = RASPER_PRESET_DIR;
    for (const char* name : {"study1a_high_rc.json", "study1a_low_rc.json"}) {
        const auto setting = load_setting((dir / name).string());
        const auto start = std::chrono::steady_clock::now();
        const auto report = run_benchmark(setting);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const auto& rasper = report.summary(Method::RasperSpearman);
        const auto& ridge = report.summary(Method::Ridge);
        const double diff = *rasper.mean_diff_vs_ridge;
        const double paired_se = *rasper.se_diff_vs_ridge;
        const double unpaired_se = std::hypot(rasper.se_relative_mse, ridge.se_relative_mse);
        const std::string tag = setting.name;
        v.require(static_cast<int>(report.relative_mse.size()) == 200, tag + " used " +
                  std::to_string(report.relative_mse.size()) + " replications");
        v.require(seconds < 600.0, tag + " took " + fmt(seconds) + " s");
        if (std::string(name) == "study1a_high_rc.json") {
            v.require(std::abs(report.mean_rank_correlation - 0.7) <= 0.1, tag + " RC " + fmt(report.mean_rank_correlation));
            v.require(-diff >= 2.0 * paired_se, tag + " paired margin below 2 SE");
            v.require(-diff >= 2.0 * unpaired_se, tag + " unpaired margin below 2 SE");
        } else {
            v.require(report.mean_rank_correlation <= 0.1, tag + " RC " + fmt(report.mean_rank_correlation));
            v.require(diff <= 0.05, tag + " RASPER exceeds ridge by " + fmt(diff));
        }
        v.note(tag + ": RC " + fmt(report.mean_rank_correlation) + ", distance " + fmt(report.mean_distance) +
               ", RASPER " + fmt(rasper.mean_relative_mse, "%.4f") + " vs ridge " + fmt(ridge.mean_relative_mse, "%.4f") +
               ", diff " + fmt(diff, "%+.4f") + " (paired SE " + fmt(paired_se, "%.4f") + ", unpaired SE " +
               fmt(unpaired_se, "%.4f") + "), " + fmt(seconds, "%.0f") + " s");
    }
    return v;
}

Verdict selection_sanity()
{
    Verdict v;
    auto inst = random_instance(25, 4, 10);
    const auto data = make_rasper_data(inst.x, inst.y, 3, inst.scores);
    ConcordanceSpec spec;
    spec.nu = default_nu(data.x, data.y).nu;

    const auto term = make_concordance_term(data.x, data.q, data.ranks, spec);
    const double df = degrees_of_freedom(data.x, term, 0.0, 0.0).value;
    v.require(df == 4.0, "df(0, 0) = " + fmt(df, "%.17g"));

    Eigen::MatrixXd a(25, 5);
    a << Eigen::VectorXd::Ones(25), data.x;
    const Eigen::MatrixXd h = a * (a.transpose() * a).ldlt().solve(a.transpose());
    const Eigen::VectorXd e = data.y - h * data.y;
    double hat = 0.0;
    for (Eigen::Index i = 0; i < 25; ++i) hat += 0.5 * std::pow(e(i) / (1.0 - h(i, i)), 2) / 25.0;
    const double loo = loocv_score(data, spec, 0.0, 0.0);
    v.require(std::abs(loo - hat) <= 1e-8, "LOOCV gap " + fmt(std::abs(loo - hat)));

    const auto grid = build_grid(0.5, 50.0, 2, 0.1, 10.0, 2);
    const auto report = select(data, spec, grid, Criterion::LOOCV);
    const auto chosen = report.chosen();
    for (std::size_t g = 0; g < report.records.size(); ++g) {
        const auto& r = report.records[g];
        const double mine = *report.records[chosen].loo;
        v.require(r.loo.has_value(), "missing LOOCV at grid point " + std::to_string(g));
        if (!r.loo) continue;
        v.require(mine <= *r.loo, "grid point " + std::to_string(g) + " beats the chosen one");
        v.require(g >= chosen || mine < *r.loo, "tie at grid point " + std::to_string(g) + " not broken toward it");
        // Independent refit of the criterion at this point.
        const double recheck = loocv_score(data, spec, r.lambda, r.alpha);
        v.require(recheck >= mine - 1e-8 * std::max(1.0, mine), "cold refit at grid point " + std::to_string(g) +
                  " beats the chosen one");
    }
    v.note("df " + fmt(df) + ", LOOCV gap " + fmt(std::abs(loo - hat)) + ", " + std::to_string(report.records.size()) +
           " grid points rechecked");
    return v;
}

int run_quiet(std::vector<std::string> args)
{
    std::ostringstream out, err;
    return run_cli(args, out, err);
}

Verdict determinism()
{
    Verdict v;
    TempDir tmp("acceptance");
    std::mt19937_64 rng(11);
    std::normal_distribution<double> z;
    std::exponential_distribution<double> t(0.05);
    std::ostringstream model, surv, clin;
    model.precision(17);
    surv.precision(17);
    model << "id,y,c1,c2,n1,score\n";
    surv << "id,time,event\n";
    clin << "psa,visceral_mets,ecog,days_to_progression\n";
    for (int i = 0; i < 30; ++i) {
        const double c1 = z(rng), c2 = z(rng), n1 = z(rng);
        model << i << ',' << c1 + 0.5 * n1 + z(rng) << ',' << c1 << ',' << c2 << ',' << n1 << ',' << c1 - c2 + z(rng) << '\n';
        surv << i << ',' << t(rng) << ',' << (i % 3 ? 1 : 0) << '\n';
        clin << (i * 7) % 60 << ',' << i % 2 << ',' << i % 4 << ',' << (i * 37) % 500 << '\n';
    }
    const auto data = tmp.write("model.csv", model.str());
    const auto surv_path = tmp.write("surv.csv", surv.str());
    const auto clin_path = tmp.write("clin.csv", clin.str());
    const auto setting = tmp.write("setting.json", R"({"name": "det", "study": "2",
        "beta_internal": [0.05, -0.3, 0.2, 0.1, 0.15, 0.1], "theta": [1.0, 0.0, 0.1, 0.0],
        "n_internal": 30, "n_test": 100, "replications": 3, "seed": 5, "samples": 2,
        "methods": ["ols", "ridge", "dtl", "atl", "stacking", "rasper_s", "rasper_k", "rasper_m", "rasper_s_aic"],
        "grid": {"lambda_min": 1, "lambda_max": 10, "J": 1, "alpha_min": 0.1, "alpha_max": 10, "K": 1}})");
    const std::string out = tmp.file("out");
    const std::vector<std::string> model_flags{"--data", data, "--outcome", "y", "--conventional", "c1,c2",
                                               "--novel", "n1", "--score", "score", "--id", "id", "--out", out};
    const auto with = [](std::vector<std::string> head, const std::vector<std::string>& tail) {
        head.insert(head.end(), tail.begin(), tail.end());
        return head;
    };
    const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
        {"fit", with(with({"fit"}, model_flags), {"--lambda", "4", "--alpha", "0.5"})},
        {"fit-marginal", with(with({"fit"}, model_flags), {"--lambda", "4", "--alpha", "0.5", "--marginalized",
                                                           "--samples", "3", "--seed", "2", "--measure", "kendall"})},
        {"select", with(with({"select"}, model_flags), {"--lambda-min", "1", "--lambda-max", "30", "--J", "1",
                                                        "--alpha-min", "0.1", "--alpha-max", "10", "--K", "1",
                                                        "--trace-lambda"})},
        {"select-aic", with(with({"select"}, model_flags), {"--lambdas", "0,5", "--alphas", "0.1,1",
                                                            "--criterion", "aic"})},
        {"pseudo", {"pseudo", "--data", surv_path, "--tau", "20", "--out", out}},
        {"score", {"score", "--data", clin_path, "--out", out}},
        {"simulate", {"simulate", "--setting", setting, "--out", out}},
    };
    const auto snapshot = [&]() {
        std::vector<std::pair<std::string, std::string>> files;
        for (const auto& e : fs::directory_iterator(out)) files.emplace_back(e.path().filename().string(), slurp(e.path()));
        std::sort(files.begin(), files.end());
        return files;
    };
    int files = 0;
    for (const auto& [label, args] : commands) {
        fs::remove_all(out);
        std::vector<std::pair<std::string, std::string>> first;
        for (int threads : {1, 1, 3}) {
            auto call = args;
            call.insert(call.begin(), {"--threads", std::to_string(threads)});
            if (run_quiet(call) != kExitOk) {
                v.require(false, label + " exited with an error");
                break;
            }
            const auto now = snapshot();
            if (first.empty()) {
                first = now;
                files += static_cast<int>(now.size());
            } else {
                v.require(now == first, label + " output changed at --threads " + std::to_string(threads));
            }
        }
    }
    v.note(std::to_string(commands.size()) + " commands, " + std::to_string(files) +
           " files identical across reruns and --threads 1/3");
    return v;
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"reduction identities (lambda = 0 is ridge, lambda = alpha = 0 is OLS)", reductions},
        {"monotone MM descent", descent},
        {"surrogate touches and bounds the objective", surrogate},
        {"brute-force lattice optimality", lattice},
        {"rank identities (Spearman sum of squares, Kendall rewrite)", identities},
        {"gradient checks against finite differences", gradients},
        {"pseudovalue identities", pseudovalue_identity},
        {"nomogram worked values", nomogram},
        {"qualitative reproduction (high-RC win, low-RC parity)", reproduction},
        {"selection sanity (df, LOOCV hat matrix, grid argmin)", selection_sanity},
        {"CLI determinism across reruns and thread counts", determinism},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[k].second();
        } catch (const std::exception& e) {
            v.require(false, std::string("exception: ") + e.what());
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += !v.pass;
        std::printf("%s  %2zu. %s [%.1f s] %s\n", v.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(), seconds,
                    v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
