#include "rasper/cli.hpp"

#include "rasper/baselines.hpp"
#include "rasper/csv.hpp"
#include "rasper/data.hpp"
#include "rasper/error.hpp"
#include "rasper/parallel.hpp"
#include "rasper/selection.hpp"
#include "rasper/simbench.hpp"
#include "rasper/solver.hpp"
#include "rasper/survival.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace rasper {

namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

/// Raised when an input path does not exist; maps to kExitMissingInput.
struct MissingInput {
    std::string path;
};

void require_file(const std::string& path)
{
    if (path.empty() || !fs::is_regular_file(path)) throw MissingInput{path};
}

std::string prepare_out_dir(const std::string& dir)
{
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (text.empty() || text.back() != '\n') out << '\n';
}

std::vector<double> as_std(const Eigen::VectorXd& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

/// Options shared by fit and select.
struct ModelOptions {
    std::string data;
    std::string schema;
    std::string outcome;
    std::vector<std::string> conventional;
    std::vector<std::string> novel;
    std::string score;
    std::string id;
    std::string measure = "spearman";
    bool marginalized = false;
    int samples = 20;
    std::optional<double> nu;
    std::uint64_t seed = 0;
    double tolerance = 1e-8;
    int max_iterations = 500;
    std::string out;
};

void add_model_options(CLI::App& cmd, ModelOptions& o)
{
    cmd.add_option("--data", o.data, "Internal dataset (CSV)")->required();
    cmd.add_option("--schema", o.schema, "JSON sidecar naming outcome, conventional, novel, score and id columns");
    cmd.add_option("--outcome", o.outcome, "Outcome column (without --schema)");
    cmd.add_option("--conventional", o.conventional, "Conventional covariate columns")->delimiter(',');
    cmd.add_option("--novel", o.novel, "Novel covariate columns")->delimiter(',');
    cmd.add_option("--score", o.score, "External risk score column");
    cmd.add_option("--id", o.id, "Row identifier column");
    cmd.add_option("--measure", o.measure, "Concordance measure")->check(CLI::IsMember({"spearman", "kendall"}));
    cmd.add_flag("--marginalized", o.marginalized, "Marginalize the novel block in the ranking parameters");
    cmd.add_option("--samples", o.samples, "Draws of the novel block when marginalized")->check(CLI::PositiveNumber);
    cmd.add_option("--nu", o.nu, "Logistic smoothing scale (default 0.1 times the OLS norm)");
    cmd.add_option("--seed", o.seed, "Seed for the marginal sampler");
    cmd.add_option("--tolerance", o.tolerance, "Relative objective change that stops MM");
    cmd.add_option("--max-iterations", o.max_iterations, "MM iteration cap");
    cmd.add_option("--out", o.out, "Output directory")->required();
}

struct LoadedModel {
    RawDataset raw;
    StandardizedDesign design;
    RasperData data;
    ConcordanceSpec spec;
    NuChoice nu;
    Schema schema;
};

LoadedModel load_model(const ModelOptions& o)
{
    require_file(o.data);
    LoadedModel m;
    if (!o.schema.empty()) {
        require_file(o.schema);
        m.schema = load_schema(o.schema);
    } else {
        if (o.outcome.empty() || o.conventional.empty())
            throw Error(ErrorCode::InvalidArgument, "give --schema or both --outcome and --conventional");
        m.schema.outcome = o.outcome;
        m.schema.conventional = o.conventional;
        m.schema.novel = o.novel;
    }
    if (!o.score.empty()) m.schema.score = o.score;
    if (!o.id.empty()) m.schema.id = o.id;
    if (!m.schema.score) throw Error(ErrorCode::SchemaMismatch, "an external score column is required");

    m.raw = load_dataset(o.data, m.schema);
    m.raw.validate();
    m.design = standardize(m.raw);
    if (o.nu) {
        m.nu.nu = *o.nu;
        m.nu.source = "user";
    } else {
        m.nu = default_nu(m.design.x, m.raw.outcome);
    }
    m.spec.measure = parse_measure(o.measure);
    m.spec.marginalized = o.marginalized;
    m.spec.nu = m.nu.nu;
    m.spec.samples = o.samples;
    m.spec.seed = o.seed;
    m.spec.validate();
    m.data = make_rasper_data(m.design.x, m.raw.outcome, m.design.q, *m.raw.scores);
    return m;
}

ordered_json model_config(const std::string& command, const ModelOptions& o, const LoadedModel& m)
{
    ordered_json c;
    c["command"] = command;
    c["data"] = o.data;
    c["schema_file"] = o.schema.empty() ? ordered_json(nullptr) : ordered_json(o.schema);
    c["outcome"] = m.schema.outcome;
    c["conventional"] = m.schema.conventional;
    c["novel"] = m.schema.novel;
    c["score"] = *m.schema.score;
    c["id"] = m.schema.id ? ordered_json(*m.schema.id) : ordered_json(nullptr);
    c["measure"] = to_string(m.spec.measure);
    c["marginalized"] = m.spec.marginalized;
    c["samples"] = m.spec.samples;
    c["nu"] = m.spec.nu;
    c["nu_source"] = m.nu.source;
    c["seed"] = m.spec.seed;
    c["tolerance"] = o.tolerance;
    c["max_iterations"] = o.max_iterations;
    c["out"] = o.out;
    return c;
}

ordered_json fit_json(const FitResult& fit, const LoadedModel& m)
{
    ordered_json j;
    j["measure"] = to_string(m.spec.measure);
    j["marginalized"] = m.spec.marginalized;
    j["nu"] = fit.nu;
    j["nu_source"] = m.nu.source;
    j["nu_warnings"] = m.nu.warnings;
    j["lambda"] = fit.lambda;
    j["alpha"] = fit.alpha;
    std::vector<std::string> names = m.raw.conventional_names;
    names.insert(names.end(), m.raw.novel_names.begin(), m.raw.novel_names.end());
    j["covariates"] = names;
    j["standardized"] = {{"intercept", fit.intercept}, {"beta", as_std(fit.beta)}};
    j["original"] = {{"intercept", m.design.original_intercept(fit.intercept, fit.beta)},
                     {"beta", as_std(m.design.original_slopes(fit.beta))}};
    j["concordance"] = fit.concordance;
    j["objective"] = fit.objective();
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["init_source"] = fit.init_source;
    j["trace"] = {{"length", fit.trace.size()}, {"first", fit.trace.front()}, {"last", fit.trace.back()}};
    return j;
}

CsvTable rankings_table(const FitResult& fit, const LoadedModel& m)
{
    const Eigen::VectorXd fitted = (m.design.x * fit.beta).array() + fit.intercept;
    const auto internal = external_ranks(fitted);
    CsvTable t;
    t.header = {"id", "fitted", "internal_rank", "external_score", "external_rank"};
    for (Eigen::Index i = 0; i < fitted.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        t.rows.push_back({m.raw.ids[k], format_double(fitted(i)), std::to_string(internal.r[k]),
                          format_double((*m.raw.scores)(i)), std::to_string(m.data.ranks.r[k])});
    }
    return t;
}

FitOptions fit_options(const ModelOptions& o)
{
    FitOptions f;
    f.tolerance = o.tolerance;
    f.max_iterations = o.max_iterations;
    return f;
}

int cmd_fit(const ModelOptions& o, double lambda, double alpha, std::ostream& out)
{
    const auto m = load_model(o);
    const auto fit = fit_rasper(make_problem(m.data, m.spec, lambda, alpha), std::nullopt, fit_options(o));
    const fs::path dir = prepare_out_dir(o.out);
    auto config = model_config("fit", o, m);
    config["lambda"] = lambda;
    config["alpha"] = alpha;
    write_text(dir / "config.json", config.dump(2));
    write_text(dir / "fit.json", fit_json(fit, m).dump(2));
    write_csv((dir / "rankings.csv").string(), rankings_table(fit, m));
    out << "fit: objective " << format_double(fit.objective()) << ", " << fit.iterations << " iterations, wrote "
        << dir.string() << "\n";
    return kExitOk;
}

struct GridOptions {
    std::optional<double> lambda_min, lambda_max, alpha_min, alpha_max;
    int j_count = 10;
    int k_count = 10;
    std::vector<double> lambdas;
    std::vector<double> alphas;
};

HyperGrid resolve_grid(const GridOptions& g, Eigen::Index n)
{
    if (!g.lambdas.empty() || !g.alphas.empty()) {
        if (g.lambdas.empty() || g.alphas.empty())
            throw Error(ErrorCode::InvalidBounds, "--lambdas and --alphas must be given together");
        return explicit_grid(g.lambdas, g.alphas);
    }
    const double scale = static_cast<double>(n);
    return build_grid(g.lambda_min.value_or(1e-2 * scale), g.lambda_max.value_or(1e3 * scale), g.j_count,
                      g.alpha_min.value_or(1e-4 * scale), g.alpha_max.value_or(1e2 * scale), g.k_count);
}

int cmd_select(const ModelOptions& o, const GridOptions& g, const std::string& criterion_name, bool trace_lambda,
               int threads, std::ostream& out)
{
    const auto m = load_model(o);
    const auto grid = resolve_grid(g, m.data.rows());
    const Criterion criterion = parse_criterion(criterion_name);
    SelectOptions options;
    options.fit = fit_options(o);
    options.threads = threads;
    options.compute_loo = true;
    const auto report = select(m.data, m.spec, grid, criterion, options);
    const auto& chosen = report.chosen_record();

    const fs::path dir = prepare_out_dir(o.out);
    auto config = model_config("select", o, m);
    config["criterion"] = to_string(criterion);
    config["lambdas"] = grid.lambdas;
    config["alphas"] = grid.alphas;
    config["trace_lambda"] = trace_lambda;
    write_text(dir / "config.json", config.dump(2));
    write_csv((dir / "selection_report.csv").string(), report.to_csv());
    write_text(dir / "selection_report.json", report.to_json());
    write_text(dir / "fit.json", fit_json(chosen.fit, m).dump(2));
    write_csv((dir / "rankings.csv").string(), rankings_table(chosen.fit, m));

    if (trace_lambda) {
        CsvTable t;
        t.header = {"lambda", "alpha", "kendall_tau", "concordance"};
        for (const auto& r : report.records) {
            if (r.alpha != chosen.alpha) continue;
            const Eigen::VectorXd fitted = m.design.x * r.fit.beta;
            t.rows.push_back({format_double(r.lambda), format_double(r.alpha),
                              format_double(kendall_tau(fitted, *m.raw.scores)), format_double(r.fit.concordance)});
        }
        write_csv((dir / "lambda_trace.csv").string(), t);
    }
    out << "select (" << to_string(criterion) << "): lambda " << format_double(chosen.lambda) << ", alpha "
        << format_double(chosen.alpha) << ", wrote " << dir.string() << "\n";
    return kExitOk;
}

int cmd_pseudo(const std::string& data, const std::string& time_col, const std::string& event_col, double tau,
               const std::string& column, const std::string& out_dir, int threads, std::ostream& out)
{
    require_file(data);
    CsvTable table = read_csv(data);
    const auto ti = table.require_column(time_col);
    const auto ei = table.require_column(event_col);
    if (table.column(column)) throw Error(ErrorCode::SchemaMismatch, "column '" + column + "' already exists");
    SurvivalSample sample;
    sample.tau = tau;
    for (const auto& row : table.rows) {
        if (is_missing_cell(row[ti]) || is_missing_cell(row[ei]))
            throw Error(ErrorCode::MissingValue, "missing time or event value");
        sample.times.push_back(parse_number(row[ti]));
        const double e = parse_number(row[ei]);
        if (e != 0.0 && e != 1.0) throw Error(ErrorCode::ParseError, "event values must be 0 or 1");
        sample.events.push_back(e == 1.0);
    }
    const Eigen::VectorXd v = pseudovalues(sample, threads);
    table.header.push_back(column);
    for (std::size_t i = 0; i < table.rows.size(); ++i)
        table.rows[i].push_back(format_double(v(static_cast<Eigen::Index>(i))));

    const fs::path dir = prepare_out_dir(out_dir);
    ordered_json config;
    config["command"] = "pseudo";
    config["data"] = data;
    config["time"] = time_col;
    config["event"] = event_col;
    config["tau"] = tau;
    config["column"] = column;
    config["out"] = out_dir;
    config["rmst"] = rmst(sample);
    write_text(dir / "config.json", config.dump(2));
    write_csv((dir / "pseudovalues.csv").string(), table);
    out << "pseudo: " << sample.size() << " rows, RMST " << format_double(rmst(sample)) << ", wrote "
        << dir.string() << "\n";
    return kExitOk;
}

bool parse_flag(const std::string& cell)
{
    const double v = parse_number(cell);
    if (v != 0.0 && v != 1.0) throw Error(ErrorCode::ParseError, "indicator values must be 0 or 1, got '" + cell + "'");
    return v == 1.0;
}

int cmd_score(const std::string& data, const std::string& psa_col, const std::string& visceral_col,
              const std::string& ecog_col, const std::string& days_col, const std::string& out_dir, std::ostream& out)
{
    require_file(data);
    CsvTable table = read_csv(data);
    const auto pi = table.require_column(psa_col);
    const auto vi = table.require_column(visceral_col);
    const auto ei = table.require_column(ecog_col);
    const auto di = table.require_column(days_col);
    Eigen::VectorXd scores(static_cast<Eigen::Index>(table.rows.size()));
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        for (auto c : {pi, vi, ei, di})
            if (is_missing_cell(row[c])) throw Error(ErrorCode::MissingValue, "missing nomogram input");
        NomogramInput input;
        input.psa = parse_number(row[pi]);
        input.visceral_mets = parse_flag(row[vi]);
        input.ecog_ge2 = parse_number(row[ei]) >= 2.0;
        input.days_to_progression = parse_number(row[di]);
        scores(static_cast<Eigen::Index>(i)) = nomogram_score(input);
    }
    // Higher nomogram score means shorter survival; RMST outcomes need the reverse.
    const Eigen::VectorXd oriented = -scores;
    const auto ranks = table.rows.empty() ? ExternalRanks{} : external_ranks(oriented);
    table.header.insert(table.header.end(), {"nomogram_score", "oriented_score", "external_rank"});
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        table.rows[i].push_back(format_double(scores(k)));
        table.rows[i].push_back(format_double(oriented(k)));
        table.rows[i].push_back(std::to_string(ranks.r[i]));
    }
    const fs::path dir = prepare_out_dir(out_dir);
    ordered_json config;
    config["command"] = "score";
    config["data"] = data;
    config["psa"] = psa_col;
    config["visceral"] = visceral_col;
    config["ecog"] = ecog_col;
    config["days"] = days_col;
    config["orientation"] = "negated nomogram score";
    config["out"] = out_dir;
    write_text(dir / "config.json", config.dump(2));
    write_csv((dir / "scores.csv").string(), table);
    out << "score: " << table.rows.size() << " rows, wrote " << dir.string() << "\n";
    return kExitOk;
}

int cmd_simulate(const std::string& setting_path, std::optional<std::uint64_t> seed, std::optional<int> replications,
                 const std::string& out_dir, int threads, std::ostream& out)
{
    require_file(setting_path);
    SimSetting setting = load_setting(setting_path);
    if (seed) setting.seed = *seed;
    if (replications) setting.replications = *replications;
    setting.validate();
    const auto report = run_benchmark(setting, threads);
    const fs::path dir = prepare_out_dir(out_dir);
    ordered_json config;
    config["command"] = "simulate";
    config["setting_file"] = setting_path;
    config["setting"] = ordered_json::parse(setting_to_json(setting));
    config["out"] = out_dir;
    write_text(dir / "config.json", config.dump(2));
    write_csv((dir / "report.csv").string(), report.to_csv());
    write_text(dir / "report.json", report.to_json());
    CsvTable per_rep;
    per_rep.header = {"replication"};
    for (auto m : setting.methods) per_rep.header.push_back(to_string(m));
    for (std::size_t r = 0; r < report.relative_mse.size(); ++r) {
        std::vector<std::string> row{std::to_string(report.replication_index[r])};
        for (double v : report.relative_mse[r]) row.push_back(format_double(v));
        per_rep.rows.push_back(std::move(row));
    }
    write_csv((dir / "replications.csv").string(), per_rep);
    out << "simulate: " << report.relative_mse.size() << " replications (" << report.failed_replications
        << " failed), RC " << format_double(report.mean_rank_correlation) << ", wrote " << dir.string() << "\n";
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Rank-penalized regression with external risk rankings"};
    app.require_subcommand(1);
    app.fallthrough();
    int threads = default_thread_count();
    app.add_option("--threads", threads, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);

    ModelOptions fit_opts;
    double lambda = 0.0;
    double alpha = 0.0;
    auto* fit_cmd = app.add_subcommand("fit", "Fit at fixed lambda and alpha");
    add_model_options(*fit_cmd, fit_opts);
    fit_cmd->add_option("--lambda", lambda, "Concordance penalty weight")->check(CLI::NonNegativeNumber);
    fit_cmd->add_option("--alpha", alpha, "Ridge penalty weight")->check(CLI::NonNegativeNumber);

    ModelOptions select_opts;
    GridOptions grid;
    std::string criterion = "loocv";
    bool trace_lambda = false;
    auto* select_cmd = app.add_subcommand("select", "Choose lambda and alpha over a grid");
    add_model_options(*select_cmd, select_opts);
    select_cmd->add_option("--lambda-min", grid.lambda_min, "Smallest nonzero lambda (default 1e-2 n)");
    select_cmd->add_option("--lambda-max", grid.lambda_max, "Largest lambda (default 1e3 n)");
    select_cmd->add_option("--J", grid.j_count, "Lambda grid resolution")->check(CLI::PositiveNumber);
    select_cmd->add_option("--alpha-min", grid.alpha_min, "Smallest nonzero alpha (default 1e-4 n)");
    select_cmd->add_option("--alpha-max", grid.alpha_max, "Largest alpha (default 1e2 n)");
    select_cmd->add_option("--K", grid.k_count, "Alpha grid resolution")->check(CLI::PositiveNumber);
    select_cmd->add_option("--lambdas", grid.lambdas, "Explicit lambda list (replaces the log grid)")->delimiter(',');
    select_cmd->add_option("--alphas", grid.alphas, "Explicit alpha list (replaces the log grid)")->delimiter(',');
    select_cmd->add_option("--criterion", criterion, "Selection criterion")->check(CLI::IsMember({"loocv", "aic"}));
    select_cmd->add_flag("--trace-lambda", trace_lambda, "Write Kendall tau along the lambda path");

    std::string pseudo_data, pseudo_out, time_col = "time", event_col = "event", pseudo_col = "pseudovalue";
    double tau = 36.0;
    auto* pseudo_cmd = app.add_subcommand("pseudo", "Append RMST pseudovalues to a survival CSV");
    pseudo_cmd->add_option("--data", pseudo_data, "Survival CSV")->required();
    pseudo_cmd->add_option("--time", time_col, "Time column");
    pseudo_cmd->add_option("--event", event_col, "Event column (1 = event, 0 = censored)");
    pseudo_cmd->add_option("--tau", tau, "Truncation time")->check(CLI::PositiveNumber);
    pseudo_cmd->add_option("--column", pseudo_col, "Name of the new column");
    pseudo_cmd->add_option("--out", pseudo_out, "Output directory")->required();

    std::string score_data, score_out, psa_col = "psa", visceral_col = "visceral_mets", ecog_col = "ecog",
                                       days_col = "days_to_progression";
    auto* score_cmd = app.add_subcommand("score", "Nomogram scores and oriented external ranks");
    score_cmd->add_option("--data", score_data, "Clinical CSV")->required();
    score_cmd->add_option("--psa", psa_col, "PSA column (ng/ml)");
    score_cmd->add_option("--visceral", visceral_col, "Visceral metastases column (0/1)");
    score_cmd->add_option("--ecog", ecog_col, "ECOG performance status column");
    score_cmd->add_option("--days", days_col, "Days to progression on prior chemotherapy");
    score_cmd->add_option("--out", score_out, "Output directory")->required();

    std::string setting_path, sim_out;
    std::optional<std::uint64_t> sim_seed;
    std::optional<int> sim_reps;
    auto* sim_cmd = app.add_subcommand("simulate", "Monte-Carlo benchmark from a setting file");
    sim_cmd->add_option("--setting", setting_path, "Setting JSON")->required();
    sim_cmd->add_option("--seed", sim_seed, "Override the setting's seed");
    sim_cmd->add_option("--replications", sim_reps, "Override the replication count")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--out", sim_out, "Output directory")->required();

    std::vector<std::string> argv_storage{"rasper"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_storage) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*fit_cmd) return cmd_fit(fit_opts, lambda, alpha, out);
        if (*select_cmd) return cmd_select(select_opts, grid, criterion, trace_lambda, threads, out);
        if (*pseudo_cmd) return cmd_pseudo(pseudo_data, time_col, event_col, tau, pseudo_col, pseudo_out, threads, out);
        if (*score_cmd) return cmd_score(score_data, psa_col, visceral_col, ecog_col, days_col, score_out, out);
        if (*sim_cmd) return cmd_simulate(setting_path, sim_seed, sim_reps, sim_out, threads, out);
    } catch (const MissingInput& e) {
        err << "error: input file not found: " << e.path << "\n";
        return kExitMissingInput;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.code() == ErrorCode::IoError ? kExitMissingInput : kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}

} // namespace rasper
