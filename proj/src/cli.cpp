#include "survsr/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "survsr/baselines.hpp"
#include "survsr/coxcore.hpp"
#include "survsr/error.hpp"
#include "survsr/hash.hpp"
#include "survsr/multimodel.hpp"
#include "survsr/random.hpp"

namespace survsr {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// RunConfig

namespace {

/// Binds RunConfig fields to options of `app`. Vector-valued fields go through
/// a staging buffer; call finish() after parsing.
class RunOptions {
public:
    RunOptions(CLI::App& app, RunConfig& config) : config_(config) {
        auto& ev = config.evolution;
        op_probs_.assign(ev.op_probs.begin(), ev.op_probs.end());
        app.add_option("--dataset", config.dataset, "Survival CSV");
        app.add_option("--schema", config.schema, "Column declarations");
        app.add_flag("--normalize", config.normalize, "Z-score continuous and ordinal columns");
        app.add_option("--method", config.method, "sr, cx or st");
        app.add_option("--repetitions", config.repetitions, "Train/test repetitions");
        app.add_option("--seed", config.seed, "Base seed");
        app.add_option("--output", config.output, "Results directory");
        app.add_option("--train_fraction", config.train_fraction, "Training share of each split");
        app.add_option("--threads", config.threads, "Worker threads");
        app.add_flag("--checkpoints", config.checkpoints, "Write a checkpoint after every generation");
        app.add_option("--pop_size", ev.pop_size);
        app.add_option("--generations", ev.generations);
        app.add_option("--tournament_size", ev.tournament_size);
        app.add_option("--max_nodes", ev.max_nodes);
        app.add_option("--init_trees_min", ev.init_trees_min);
        app.add_option("--init_trees_max", ev.init_trees_max);
        app.add_option("--op_probs", op_probs_,
                       "add_expr del_expr expr_xover subtree_xover node_xover subtree_mut node_mut")
            ->expected(static_cast<int>(kVariationOpCount));
        app.add_option("--const_mut_offspring_frac", ev.const_mut_offspring_frac);
        app.add_option("--const_mut_node_prob", ev.const_mut_node_prob);
        app.add_option("--temperature", ev.temperature);
        app.add_option("--theta_lambda", ev.theta_lambda);
        app.add_option("--theta_l1_ratio", ev.theta_l1_ratio);
        app.add_option("--cx_l1_ratio", config.cx_l1_ratio);
        app.add_option("--cx_n_lambdas", config.cx_n_lambdas);
        app.add_option("--st_min_depth", config.st_min_depth);
        app.add_option("--st_max_depth", config.st_max_depth);
        app.add_option("--st_folds", config.st_folds);
    }

    void finish() {
        if (op_probs_.size() != kVariationOpCount) {
            throw ConfigError(fmt::format("op_probs needs {} values", kVariationOpCount));
        }
        std::copy(op_probs_.begin(), op_probs_.end(), config_.evolution.op_probs.begin());
    }

private:
    RunConfig& config_;
    std::vector<double> op_probs_;
};

std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

}  // namespace

std::string RunConfig::to_text() const {
    const auto& ev = evolution;
    std::string probs;
    for (std::size_t k = 0; k < ev.op_probs.size(); ++k) {
        probs += fmt::format("{}{}", k ? ", " : "", ev.op_probs[k]);
    }
    std::string out;
    out += "# survsr run configuration\n";
    out += fmt::format("dataset = {}\n", quoted(dataset.generic_string()));
    out += fmt::format("schema = {}\n", quoted(schema.generic_string()));
    out += fmt::format("normalize = {}\n", normalize);
    out += fmt::format("method = {}\n", quoted(method));
    out += fmt::format("repetitions = {}\n", repetitions);
    out += fmt::format("seed = {}\n", seed);
    out += fmt::format("output = {}\n", quoted(output.generic_string()));
    out += fmt::format("train_fraction = {}\n", train_fraction);
    out += fmt::format("threads = {}\n", threads);
    out += fmt::format("checkpoints = {}\n", checkpoints);
    out += "\n# symbolic regression\n";
    out += fmt::format("pop_size = {}\n", ev.pop_size);
    out += fmt::format("generations = {}\n", ev.generations);
    out += fmt::format("tournament_size = {}\n", ev.tournament_size);
    out += fmt::format("max_nodes = {}\n", ev.max_nodes);
    out += fmt::format("init_trees_min = {}\n", ev.init_trees_min);
    out += fmt::format("init_trees_max = {}\n", ev.init_trees_max);
    out += fmt::format("op_probs = [{}]\n", probs);
    out += fmt::format("const_mut_offspring_frac = {}\n", ev.const_mut_offspring_frac);
    out += fmt::format("const_mut_node_prob = {}\n", ev.const_mut_node_prob);
    out += fmt::format("temperature = {}\n", ev.temperature);
    out += fmt::format("theta_lambda = {}\n", ev.theta_lambda);
    out += fmt::format("theta_l1_ratio = {}\n", ev.theta_l1_ratio);
    out += "\n# baselines\n";
    out += fmt::format("cx_l1_ratio = {}\n", cx_l1_ratio);
    out += fmt::format("cx_n_lambdas = {}\n", cx_n_lambdas);
    out += fmt::format("st_min_depth = {}\n", st_min_depth);
    out += fmt::format("st_max_depth = {}\n", st_max_depth);
    out += fmt::format("st_folds = {}\n", st_folds);
    return out;
}

RunConfig RunConfig::parse(std::string_view text) {
    RunConfig config;
    CLI::App app;
    RunOptions options(app, config);
    app.allow_config_extras(CLI::config_extras_mode::error);
    std::istringstream in{std::string(text)};
    try {
        app.parse_from_stream(in);
    } catch (const CLI::Error& e) {
        throw ConfigError(std::string("bad run configuration: ") + e.what());
    }
    options.finish();
    return config;
}

RunConfig RunConfig::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse(text.str());
}

void RunConfig::validate() const {
    if (method != "sr" && method != "cx" && method != "st") {
        throw ConfigError("method must be sr, cx or st, got '" + method + "'");
    }
    if (repetitions < 1) {
        throw ConfigError("repetitions must be positive");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie in (0, 1)");
    }
    if (threads < 1) {
        throw ConfigError("threads must be positive");
    }
    if (!(cx_l1_ratio > 0.0 && cx_l1_ratio <= 1.0)) {
        throw ConfigError("cx_l1_ratio must lie in (0, 1]");
    }
    if (cx_n_lambdas < 2) {
        throw ConfigError("cx_n_lambdas must be at least 2");
    }
    if (st_min_depth < 1 || st_max_depth < st_min_depth) {
        throw ConfigError("need 1 <= st_min_depth <= st_max_depth");
    }
    if (st_folds < 2) {
        throw ConfigError("st_folds must be at least 2");
    }
    evolution.validate();
    if (dataset.empty()) {
        throw ConfigError("no dataset given");
    }
    if (!fs::is_regular_file(dataset)) {
        throw ConfigError("dataset file not found: " + dataset.string());
    }
    if (!schema.empty() && !fs::is_regular_file(schema)) {
        throw ConfigError("schema file not found: " + schema.string());
    }
}

std::string RunConfig::hash() const { return sha256_hex(to_text()); }

std::uint64_t repetition_seed(std::uint64_t base, int repetition) {
    return derive_seed(derive_seed(base, static_cast<std::uint64_t>(repetition)), 0x5EEDULL);
}

// ---------------------------------------------------------------------------
// One repetition

namespace {

/// Keep the nondominated training points and their test counterparts.
void align_fronts(RepetitionResult& r, const ParetoFront& train_raw, const ParetoFront& test_raw) {
    r.train = filter_nondominated(train_raw);
    r.train.split = "train";
    r.test.split = "test";
    for (const auto& p : r.train.points) {
        r.test.points.push_back(test_raw.points.at(p.model_index));
    }
}

double lower_median(std::vector<double> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

std::vector<double> event_grid(const SurvivalDataset& train) {
    std::vector<double> grid;
    for (Eigen::Index i = 0; i < train.rows(); ++i) {
        if (train.events[static_cast<std::size_t>(i)]) {
            grid.push_back(train.times[i]);
        }
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

std::vector<std::pair<double, double>> cox_curve(const Vector& eta_train, const Vector& eta_test,
                                                 const SurvivalDataset& train) {
    const StepFunction h0 = breslow_baseline(eta_train, train.times, train.events);
    std::vector<std::pair<double, double>> curve;
    std::vector<double> s(static_cast<std::size_t>(eta_test.size()));
    for (double t : event_grid(train)) {
        const double h = h0(t);
        for (Eigen::Index i = 0; i < eta_test.size(); ++i) {
            s[static_cast<std::size_t>(i)] = std::exp(-h * std::exp(eta_test[i]));
        }
        curve.emplace_back(t, lower_median(s));
    }
    return curve;
}

std::vector<std::pair<double, double>> tree_curve(const SurvivalTree& tree, const SurvivalDataset& train,
                                                  const SurvivalDataset& test) {
    std::vector<const StepFunction*> chf;
    for (Eigen::Index i = 0; i < test.rows(); ++i) {
        chf.push_back(&tree.leaf_for(test.features.row(i)).cumulative_hazard);
    }
    std::vector<std::pair<double, double>> curve;
    std::vector<double> s(chf.size());
    for (double t : event_grid(train)) {
        for (std::size_t i = 0; i < chf.size(); ++i) {
            s[i] = std::exp(-(*chf[i])(t));
        }
        curve.emplace_back(t, lower_median(s));
    }
    return curve;
}

void run_sr(RepetitionResult& r, const SurvivalDataset& train, const SurvivalDataset& test, const RunConfig& config,
            std::uint64_t seed, const RepetitionHooks& hooks) {
    EvolutionConfig ev = config.evolution;
    ev.seed = seed;
    ev.threads = config.threads;
    EvolutionHooks eh;
    eh.on_generation = [&](const GenerationReport& report, std::span<const Individual> population,
                           std::span<const Individual> archive) {
        if (hooks.log) {
            std::string best;
            for (const auto& [dims, ci] : report.best_ci_by_dims) {
                best += fmt::format(" {}:{:.4f}", dims, ci);
            }
            *hooks.log << fmt::format("rep {:03d} gen {:3d} archive_hv {:.3f} best_ci{}\n", r.repetition,
                                      report.generation, report.archive_hv, best);
            hooks.log->flush();
        }
        if (hooks.checkpoint) {
            hooks.checkpoint(checkpoint_json(report, population, archive));
        }
    };
    auto result = evolve(train, ev, eh);
    r.archive_hv = result.archive_hv;

    const IpcwConcordance ci(train.times, train.events);
    ParetoFront train_raw;
    ParetoFront test_raw;
    for (std::size_t k = 0; k < result.archive.size(); ++k) {
        const auto& ind = result.archive[k];
        const int terms = static_cast<int>(ind.model.n_trees());
        train_raw.points.push_back(FrontPoint{ind.objectives.dims, 1.0 - ind.objectives.neg_ci, k, terms});
        const auto obj = objectives(ind.model, test, ci);
        test_raw.points.push_back(FrontPoint{obj.dims, 1.0 - obj.neg_ci, k, terms});
    }
    align_fronts(r, train_raw, test_raw);

    const auto names = train.column_names();
    r.models = nlohmann::json::array();
    for (std::size_t k = 0; k < r.train.points.size(); ++k) {
        const auto idx = r.train.points[k].model_index;
        const auto& model = result.archive[idx].model;
        r.models.push_back({{"model_index", idx},
                            {"dims", r.train.points[k].dims},
                            {"n_terms", model.n_trees()},
                            {"train_ci", r.train.points[k].ci},
                            {"test_ci", r.test.points[k].ci},
                            {"formula", format_model(model, names)},
                            {"model", model}});
    }
    const auto& top = result.archive[r.train.points.back().model_index].model;
    r.survival_curve = cox_curve(risk_score(top, train.features), risk_score(top, test.features), train);
}

void run_cx(RepetitionResult& r, const SurvivalDataset& train, const SurvivalDataset& test, const RunConfig& config) {
    const auto models = cx_candidates(train, config.cx_l1_ratio, config.cx_n_lambdas);
    align_fronts(r, evaluate_cx(models, train, train), evaluate_cx(models, train, test));
    const auto names = train.column_names();
    r.models = nlohmann::json::array();
    for (std::size_t k = 0; k < r.train.points.size(); ++k) {
        const auto idx = r.train.points[k].model_index;
        const auto& fit = models[idx];
        nlohmann::json coef = nlohmann::json::object();
        for (Eigen::Index j = 0; j < fit.theta.size(); ++j) {
            if (fit.theta[j] != 0.0) {
                coef[names[static_cast<std::size_t>(j)]] = fit.theta[j];
            }
        }
        r.models.push_back({{"model_index", idx},
                            {"dims", r.train.points[k].dims},
                            {"lambda", fit.lambda},
                            {"l1_ratio", fit.l1_ratio},
                            {"converged", fit.converged},
                            {"train_ci", r.train.points[k].ci},
                            {"test_ci", r.test.points[k].ci},
                            {"coefficients", std::move(coef)}});
    }
    const auto& top = models[r.train.points.back().model_index];
    r.survival_curve = cox_curve(train.features * top.theta, test.features * top.theta, train);
}

void run_st(RepetitionResult& r, const SurvivalDataset& train, const SurvivalDataset& test, const RunConfig& config,
            std::uint64_t seed) {
    StSearchOptions options;
    options.min_depth = config.st_min_depth;
    options.max_depth = config.st_max_depth;
    options.folds = config.st_folds;
    options.seed = seed;
    options.threads = config.threads;
    const auto models = st_candidates(train, options);
    align_fronts(r, evaluate_st(models, train, train), evaluate_st(models, train, test));
    r.models = nlohmann::json::array();
    for (std::size_t k = 0; k < r.train.points.size(); ++k) {
        const auto idx = r.train.points[k].model_index;
        const auto& c = models[idx];
        r.models.push_back({{"model_index", idx},
                            {"dims", r.train.points[k].dims},
                            {"depth", c.depth},
                            {"min_samples_split", c.config.min_samples_split},
                            {"min_samples_leaf", c.config.min_samples_leaf},
                            {"max_features", c.config.max_features},
                            {"splitter", c.config.splitter == Splitter::best ? "best" : "random"},
                            {"cv_ci", c.cv_ci},
                            {"train_ci", r.train.points[k].ci},
                            {"test_ci", r.test.points[k].ci},
                            {"tree", c.tree}});
    }
    r.survival_curve = tree_curve(models[r.train.points.back().model_index].tree, train, test);
}

}  // namespace

RepetitionResult run_repetition(const SurvivalDataset& data, const RunConfig& config, int repetition,
                                const RepetitionHooks& hooks) {
    auto [train, test] = split(data, SplitSpec{config.seed, config.train_fraction,
                                               static_cast<std::uint64_t>(repetition)});
    if (config.normalize) {
        auto [train_z, stats] = zscore_normalize(train);
        test = zscore_normalize(test, stats).first;
        train = std::move(train_z);
    }
    RepetitionResult r;
    r.repetition = repetition;
    r.method = config.method;
    const auto seed = repetition_seed(config.seed, repetition);
    if (config.method == "sr") {
        run_sr(r, train, test, config, seed, hooks);
    } else if (config.method == "cx") {
        run_cx(r, train, test, config);
    } else if (config.method == "st") {
        run_st(r, train, test, config, seed);
    } else {
        throw ConfigError("unknown method '" + config.method + "'");
    }
    return r;
}

std::string front_csv(const RepetitionResult& result) {
    std::string out = "method,split,dims,neg_ci,ci,n_terms,model_index\n";
    for (std::size_t k = 0; k < result.train.points.size(); ++k) {
        for (const auto* front : {&result.train, &result.test}) {
            const auto& p = front->points[k];
            out += fmt::format("{},{},{},{:.17g},{:.17g},{},{}\n", result.method, front->split, p.dims, p.neg_ci(),
                               p.ci, p.n_terms, p.model_index);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// run

namespace {

fs::path write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw Error("write failed: " + path.string());
    }
    return path;
}

std::string curve_csv(const std::vector<std::pair<double, double>>& curve) {
    std::string out = "time,survival\n";
    for (const auto& [t, s] : curve) {
        out += fmt::format("{:.17g},{:.17g}\n", t, s);
    }
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

RunReport cmd_run(const RunConfig& config, std::ostream& log) {
    config.validate();
    const Schema schema = config.schema.empty() ? Schema{} : Schema::load(config.schema);
    const SurvivalDataset data = load_csv(config.dataset, schema);
    data.validate();

    const auto start = std::chrono::steady_clock::now();
    fs::create_directories(config.output);
    RunReport report;
    report.repetitions = config.repetitions;
    report.files.push_back(write_text(config.output / "config.txt", config.to_text()));

    nlohmann::json reps = nlohmann::json::array();
    for (int rep = 0; rep < config.repetitions; ++rep) {
        const auto rep_start = std::chrono::steady_clock::now();
        const std::string stem = fmt::format("rep{:03d}", rep);
        try {
            RepetitionHooks hooks;
            hooks.log = &log;
            const fs::path checkpoint = config.output / (stem + "_checkpoint.json");
            if (config.checkpoints) {
                hooks.checkpoint = [&](const nlohmann::json& doc) { write_text(checkpoint, doc.dump()); };
            }
            const auto result = run_repetition(data, config, rep, hooks);
            report.files.push_back(write_text(config.output / (stem + "_front.csv"), front_csv(result)));
            report.files.push_back(write_text(config.output / (stem + "_models.json"), result.models.dump(2) + "\n"));
            report.files.push_back(write_text(config.output / (stem + "_survival.csv"), curve_csv(result.survival_curve)));
            if (config.checkpoints && config.method == "sr") {
                report.files.push_back(checkpoint);
            }
            const double secs = seconds_since(rep_start);
            reps.push_back({{"repetition", rep}, {"status", "ok"}, {"seconds", secs}});
            log << fmt::format("rep {:03d} {} done: {} models on the front, {:.1f} s\n", rep, config.method,
                               result.train.points.size(), secs);
        } catch (const std::exception& e) {
            ++report.failed;
            reps.push_back({{"repetition", rep}, {"status", "failed"}, {"error", e.what()}});
            log << fmt::format("rep {:03d} failed: {}\n", rep, e.what());
        }
    }
    report.wall_seconds = seconds_since(start);

    nlohmann::json files = nlohmann::json::object();
    for (const auto& f : report.files) {
        files[f.filename().string()] = sha256_file(f);
    }
    nlohmann::json manifest = {
        {"version", kVersion},
        {"compiler", __VERSION__},
        {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
        {"method", config.method},
        {"dataset", config.dataset.stem().string()},
        {"dataset_hash", data.content_hash()},
        {"n_rows", data.rows()},
        {"n_features", data.cols()},
        {"normalize", config.normalize},
        {"config_hash", config.hash()},
        {"repetitions", std::move(reps)},
        {"failed", report.failed},
        {"wall_seconds", report.wall_seconds},
        {"files", std::move(files)},
    };
    write_text(config.output / "manifest.json", manifest.dump(2) + "\n");
    return report;
}

// ---------------------------------------------------------------------------
// aggregate

StoredFront read_front_csv(const fs::path& path) {
    const RawTable table = read_csv(path);
    const auto col = [&](std::string_view name) {
        const auto c = table.find(name);
        if (!c) {
            throw MissingColumn(std::string(name));
        }
        return *c;
    };
    const auto c_method = col("method");
    const auto c_split = col("split");
    const auto c_dims = col("dims");
    const auto c_ci = col("ci");
    const auto c_terms = col("n_terms");
    const auto c_index = col("model_index");
    StoredFront out;
    out.train.split = "train";
    out.test.split = "test";
    for (const auto& row : table.rows) {
        out.method = row[c_method];
        FrontPoint p{std::stoi(row[c_dims]), std::stod(row[c_ci]), std::stoul(row[c_index]), std::stoi(row[c_terms])};
        (row[c_split] == "train" ? out.train : out.test).points.push_back(p);
    }
    if (out.train.points.size() != out.test.points.size()) {
        throw CsvError("train and test rows differ in " + path.string());
    }
    const auto stem = path.filename().string();
    if (stem.rfind("rep", 0) == 0) {
        out.repetition = std::stoi(stem.substr(3, stem.find('_') - 3));
    }
    return out;
}

namespace {

struct MethodRuns {
    std::string method;
    std::string dataset;
    std::string normalization;
    double n_features = 1.0;
    fs::path dir;
    std::vector<StoredFront> fronts;
};

std::string k_label(int k) { return k == 0 ? "max" : std::to_string(k); }

std::string cell(const std::optional<Summary>& s, int precision) {
    if (!s) {
        return "(-)";
    }
    return fmt::format("{:.{}f} [{:.{}f}, {:.{}f}]", s->median, precision, s->q1, precision, s->q3, precision);
}

std::string summary_row(const MethodRuns& m, int k, std::string_view metric, const std::optional<Summary>& s) {
    if (!s) {
        return fmt::format("{},{},{},{},{},(-),(-),(-)\n", m.method, m.dataset, m.normalization, k_label(k), metric);
    }
    return fmt::format("{},{},{},{},{},{:.10g},{:.10g},{:.10g}\n", m.method, m.dataset, m.normalization, k_label(k),
                       metric, s->median, s->q1, s->q3);
}

std::string render_table(std::string_view title, const std::vector<std::string>& labels,
                         const std::vector<std::vector<std::string>>& rows, const std::vector<int>& ks) {
    std::vector<std::size_t> width(ks.size() + 1, 0);
    width[0] = 6;
    for (const auto& l : labels) {
        width[0] = std::max(width[0], l.size());
    }
    for (std::size_t c = 0; c < ks.size(); ++c) {
        width[c + 1] = std::max<std::size_t>(k_label(ks[c]).size() + 2, 3);
        for (const auto& r : rows) {
            width[c + 1] = std::max(width[c + 1], r[c].size());
        }
    }
    std::string out = fmt::format("{}\n{:<{}}", title, "method", width[0]);
    for (std::size_t c = 0; c < ks.size(); ++c) {
        out += fmt::format("  {:>{}}", "k=" + k_label(ks[c]), width[c + 1]);
    }
    out += "\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out += fmt::format("{:<{}}", labels[r], width[0]);
        for (std::size_t c = 0; c < ks.size(); ++c) {
            out += fmt::format("  {:>{}}", rows[r][c], width[c + 1]);
        }
        out += "\n";
    }
    return out;
}

}  // namespace

void cmd_aggregate(const AggregateConfig& config, std::ostream& out) {
    if (config.results.empty()) {
        throw ConfigError("no results directories given");
    }
    std::vector<MethodRuns> runs;
    std::string dataset_hash;
    for (const auto& dir : config.results) {
        const fs::path manifest_path = dir / "manifest.json";
        std::ifstream in(manifest_path);
        if (!in) {
            throw ConfigError("no manifest.json in " + dir.string());
        }
        const auto manifest = nlohmann::json::parse(in);
        const auto hash = manifest.at("dataset_hash").get<std::string>();
        if (dataset_hash.empty()) {
            dataset_hash = hash;
        } else if (hash != dataset_hash) {
            throw MixedSchema("results in " + dir.string() + " were produced on a different dataset");
        }
        MethodRuns m;
        m.method = manifest.at("method").get<std::string>();
        m.dataset = manifest.at("dataset").get<std::string>();
        m.normalization = manifest.at("normalize").get<bool>() ? "zscore" : "none";
        m.n_features = std::max(1.0, manifest.at("n_features").get<double>());
        m.dir = dir;
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            const auto name = entry.path().filename().string();
            if (name.rfind("rep", 0) == 0 && name.ends_with("_front.csv")) {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            m.fronts.push_back(read_front_csv(f));
        }
        if (m.fronts.empty()) {
            throw ConfigError("no front files in " + dir.string());
        }
        runs.push_back(std::move(m));
    }

    fs::create_directories(config.output);
    const std::string header = "method,dataset,normalization,k,metric,median,q1,q3\n";
    std::string hv_csv = header;
    std::string ci_csv = header;
    std::string counts_csv = "method,repetition,dims,n_terms\n";
    std::string corr_csv = "method,repetition,pearson\n";
    std::string curves_csv = "method,repetition,time,survival\n";
    std::vector<std::string> labels;
    std::vector<std::vector<std::string>> hv_rows;
    std::vector<std::vector<std::string>> ci_rows;
    std::string corr_summary;

    for (const auto& m : runs) {
        labels.push_back(m.normalization == "none" ? m.method : m.method + " (z)");
        const HVConfig hv{m.n_features};
        std::vector<std::string> hv_cells;
        std::vector<std::string> ci_cells;
        for (int k : config.ks) {
            std::vector<double> hvs;
            std::vector<double> cis;
            for (const auto& f : m.fronts) {
                ParetoFront test_up_to;
                test_up_to.split = "test";
                for (std::size_t i = 0; i < f.train.points.size(); ++i) {
                    if (k == 0 || f.train.points[i].dims <= k) {
                        test_up_to.points.push_back(f.test.points[i]);
                    }
                }
                hvs.push_back(hypervolume2d(filter_nondominated(test_up_to), hv));
                if (f.train.points.empty()) {
                    continue;
                }
                if (k == 0) {
                    cis.push_back(f.test.points.back().ci);
                } else {
                    for (std::size_t i = 0; i < f.train.points.size(); ++i) {
                        if (f.train.points[i].dims == k) {
                            cis.push_back(f.test.points[i].ci);
                            break;
                        }
                    }
                }
            }
            const std::optional<Summary> hv_s = aggregate_repetitions(hvs);
            const std::optional<Summary> ci_s =
                cis.empty() ? std::nullopt : std::optional<Summary>(aggregate_repetitions(cis));
            hv_csv += summary_row(m, k, "hv_test", hv_s);
            ci_csv += summary_row(m, k, "ci_test", ci_s);
            hv_cells.push_back(cell(hv_s, 1));
            ci_cells.push_back(cell(ci_s, 3));
        }
        hv_rows.push_back(std::move(hv_cells));
        ci_rows.push_back(std::move(ci_cells));

        std::vector<double> correlations;
        for (const auto& f : m.fronts) {
            std::vector<double> dims;
            std::vector<double> terms;
            for (const auto& p : f.train.points) {
                counts_csv += fmt::format("{},{},{},{}\n", m.method, f.repetition, p.dims, p.n_terms);
                dims.push_back(p.dims);
                terms.push_back(p.n_terms);
            }
            const double r = pearson(terms, dims);
            corr_csv += fmt::format("{},{},{:.10g}\n", m.method, f.repetition, r);
            if (std::isfinite(r)) {
                correlations.push_back(r);
            }

            const fs::path curve = m.dir / fmt::format("rep{:03d}_survival.csv", f.repetition);
            if (fs::is_regular_file(curve)) {
                const RawTable t = read_csv(curve);
                for (const auto& row : t.rows) {
                    curves_csv += fmt::format("{},{},{},{}\n", m.method, f.repetition, row.at(0), row.at(1));
                }
            }
        }
        if (!correlations.empty()) {
            const auto s = aggregate_repetitions(correlations);
            corr_summary += fmt::format("{}: median Pearson(expressions, dims) = {:.3f} over {} repetitions\n",
                                        labels.back(), s.median, s.count);
        }
    }

    const std::string dataset = runs.front().dataset;
    std::string tables = render_table("Test HV of models with up to k features (median [q1, q3]), dataset " + dataset,
                                      labels, hv_rows, config.ks);
    tables += "\n";
    tables += render_table("Test CI of the model with exactly k features (median [q1, q3]), dataset " + dataset,
                           labels, ci_rows, config.ks);
    if (!corr_summary.empty()) {
        tables += "\n" + corr_summary;
    }
    write_text(config.output / "hv_table.csv", hv_csv);
    write_text(config.output / "ci_table.csv", ci_csv);
    write_text(config.output / "expression_counts.csv", counts_csv);
    write_text(config.output / "expression_correlation.csv", corr_csv);
    write_text(config.output / "survival_curves.csv", curves_csv);
    write_text(config.output / "tables.txt", tables);
    out << tables;
}

// ---------------------------------------------------------------------------
// synth

Vector synth_score(const SynthSpec& spec, const Matrix& x) {
    const auto need = [&](Eigen::Index cols) {
        if (x.cols() < cols) {
            throw ConfigError(fmt::format("score '{}' needs at least {} features", spec.score, cols));
        }
    };
    if (spec.score == "linear") {
        need(static_cast<Eigen::Index>(spec.coefficients.size()));
        Vector s = Vector::Zero(x.rows());
        for (std::size_t j = 0; j < spec.coefficients.size(); ++j) {
            s += spec.coefficients[j] * x.col(static_cast<Eigen::Index>(j));
        }
        return s;
    }
    if (spec.score == "quadratic") {
        need(2);
        return x.col(0).array().square() - x.col(1).array();
    }
    if (spec.score == "log_interaction") {
        need(3);
        return (1.0 + (x.col(0).array() * x.col(1).array()).abs()).log() - x.col(2).array();
    }
    throw ConfigError("unknown score '" + spec.score + "' (linear, quadratic, log_interaction)");
}

SynthData synthesize(const SynthSpec& spec) {
    if (spec.n < 1 || spec.d < 1) {
        throw ConfigError("n and d must be positive");
    }
    if (!(spec.censoring >= 0.0 && spec.censoring < 0.9)) {
        throw ConfigError("censoring rate must lie in [0, 0.9)");
    }
    if (!(spec.baseline_hazard > 0.0)) {
        throw ConfigError("baseline hazard must be positive");
    }
    Rng rng = make_rng(spec.seed);
    std::normal_distribution<double> normal;
    std::exponential_distribution<double> expo(1.0);
    Matrix x(spec.n, spec.d);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            x(i, j) = normal(rng);
        }
    }
    SynthData out;
    out.score = synth_score(spec, x);
    std::vector<double> event_time(static_cast<std::size_t>(spec.n));
    std::vector<double> censor_draw(static_cast<std::size_t>(spec.n));
    for (std::size_t i = 0; i < event_time.size(); ++i) {
        const double rate = spec.baseline_hazard * std::exp(out.score[static_cast<Eigen::Index>(i)]);
        event_time[i] = std::max(expo(rng) / rate, std::numeric_limits<double>::min());
        censor_draw[i] = expo(rng);
    }
    // censored share for censoring rate exp(log_rate), nondecreasing in it
    const auto censored_share = [&](double log_rate) {
        const double rate = std::exp(log_rate);
        std::size_t c = 0;
        for (std::size_t i = 0; i < event_time.size(); ++i) {
            c += censor_draw[i] / rate < event_time[i] ? 1 : 0;
        }
        return static_cast<double>(c) / static_cast<double>(event_time.size());
    };
    double log_rate = -std::numeric_limits<double>::infinity();
    if (spec.censoring > 0.0) {
        double lo = -40.0;
        double hi = 40.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (censored_share(mid) < spec.censoring ? lo : hi) = mid;
        }
        log_rate = std::abs(censored_share(lo) - spec.censoring) <= std::abs(censored_share(hi) - spec.censoring) ? lo : hi;
    }

    auto& ds = out.dataset;
    ds.features = std::move(x);
    ds.times.resize(spec.n);
    ds.events.assign(static_cast<std::size_t>(spec.n), true);
    std::size_t censored = 0;
    for (std::size_t i = 0; i < event_time.size(); ++i) {
        double t = event_time[i];
        if (spec.censoring > 0.0) {
            const double c = std::max(censor_draw[i] / std::exp(log_rate), std::numeric_limits<double>::min());
            if (c < t) {
                t = c;
                ds.events[i] = false;
                ++censored;
            }
        }
        ds.times[static_cast<Eigen::Index>(i)] = t;
    }
    for (int j = 0; j < spec.d; ++j) {
        ds.columns.push_back(ColumnInfo{"x" + std::to_string(j), ColumnKind::continuous, "x" + std::to_string(j), {}});
    }
    out.censoring_rate = static_cast<double>(censored) / static_cast<double>(spec.n);
    return out;
}

std::vector<fs::path> write_synth(const SynthData& data, const fs::path& csv) {
    const auto& ds = data.dataset;
    if (csv.has_parent_path()) {
        fs::create_directories(csv.parent_path());
    }
    std::string text = "time,event";
    for (const auto& c : ds.columns) {
        text += "," + csv_escape(c.name);
    }
    text += "\n";
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        text += fmt::format("{:.17g},{}", ds.times[i], ds.events[static_cast<std::size_t>(i)] ? 1 : 0);
        for (Eigen::Index j = 0; j < ds.cols(); ++j) {
            text += fmt::format(",{:.17g}", ds.features(i, j));
        }
        text += "\n";
    }
    std::string truth = "row,score\n";
    for (Eigen::Index i = 0; i < data.score.size(); ++i) {
        truth += fmt::format("{},{:.17g}\n", i, data.score[i]);
    }
    Schema schema;
    for (const auto& c : ds.columns) {
        schema.columns[c.name] = ColumnSpec{RawKind::continuous, {}};
    }
    fs::path base = csv;
    base.replace_extension();
    return {write_text(csv, text), write_text(base.string() + ".truth.csv", truth),
            write_text(base.string() + ".schema", schema.to_text())};
}

// ---------------------------------------------------------------------------
// Command line

int run_cli(int argc, char** argv) {
    CLI::App app{"Symbolic-regression survival analysis with multi-expression Cox models"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    // A config file supplies the defaults that command-line flags then override,
    // so it is read before the flags are bound.
    RunConfig run_config;
    RunConfig baseline_config;
    baseline_config.method = "cx";
    try {
        for (int i = 1; i < argc; ++i) {
            const std::string_view arg = argv[i];
            std::optional<fs::path> file;
            if (arg == "--config" && i + 1 < argc) {
                file = argv[i + 1];
            } else if (arg.starts_with("--config=")) {
                file = arg.substr(9);
            }
            if (file) {
                run_config = RunConfig::load(*file);
                baseline_config = run_config;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    auto* run = app.add_subcommand("run", "Run repetitions of one method on a dataset");
    RunOptions run_options(*run, run_config);
    fs::path config_file;
    run->add_option("--config", config_file, "Read options from a key = value file; flags override it");

    auto* baseline = app.add_subcommand("baseline", "Same as run, restricted to the cx and st baselines");
    RunOptions baseline_options(*baseline, baseline_config);
    baseline->add_option("--config", config_file, "Read options from a key = value file; flags override it");

    AggregateConfig aggregate_config;
    std::vector<std::string> ks;
    auto* aggregate = app.add_subcommand("aggregate", "Summarize result directories into tables");
    aggregate->add_option("results", aggregate_config.results, "Result directories")->required();
    aggregate->add_option("--output", aggregate_config.output, "Table directory");
    aggregate->add_option("--k", ks, "Feature budgets; 'max' for the largest model")->delimiter(',');

    SynthSpec synth_spec;
    fs::path synth_output = "synthetic.csv";
    auto* synth = app.add_subcommand("synth", "Generate a synthetic survival dataset");
    synth->add_option("--score", synth_spec.score, "linear, quadratic or log_interaction");
    synth->add_option("--n", synth_spec.n, "Rows");
    synth->add_option("--d", synth_spec.d, "Features");
    synth->add_option("--censoring", synth_spec.censoring, "Target censored share");
    synth->add_option("--seed", synth_spec.seed);
    synth->add_option("--coefficients", synth_spec.coefficients, "Linear score coefficients")->delimiter(',');
    synth->add_option("--baseline_hazard", synth_spec.baseline_hazard);
    synth->add_option("--output", synth_output, "CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed() || baseline->parsed()) {
            RunConfig& config = run->parsed() ? run_config : baseline_config;
            (run->parsed() ? run_options : baseline_options).finish();
            if (baseline->parsed() && config.method != "cx" && config.method != "st") {
                throw ConfigError("baseline runs cx or st");
            }
            const auto report = cmd_run(config, std::cerr);
            std::cerr << fmt::format("{} of {} repetitions succeeded in {:.1f} s; results in {}\n",
                                     report.repetitions - report.failed, report.repetitions, report.wall_seconds,
                                     config.output.string());
            return report.too_many_failures() ? 1 : 0;
        }
        if (aggregate->parsed()) {
            if (!ks.empty()) {
                aggregate_config.ks.clear();
                for (const auto& k : ks) {
                    aggregate_config.ks.push_back(k == "max" ? 0 : std::stoi(k));
                }
            }
            cmd_aggregate(aggregate_config, std::cout);
            return 0;
        }
        if (synth->parsed()) {
            const auto data = synthesize(synth_spec);
            for (const auto& f : write_synth(data, synth_output)) {
                std::cerr << "wrote " << f.string() << "\n";
            }
            std::cerr << fmt::format("censored share {:.3f}\n", data.censoring_rate);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace survsr
