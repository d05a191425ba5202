#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "survsr/data.hpp"
#include "survsr/evolve.hpp"
#include "survsr/metrics.hpp"

namespace survsr {

inline constexpr std::string_view kVersion = "0.1.0";

/// Everything needed to reproduce a batch of repetitions.
///
/// The text form is one `key = value` line per field (TOML-compatible; `#`
/// starts a comment). Keys equal the long command-line flags without dashes.
struct RunConfig {
    std::filesystem::path dataset;
    /// Optional; when set the file must exist.
    std::filesystem::path schema;
    bool normalize = false;
    std::string method = "sr";  // sr | cx | st
    int repetitions = 50;
    std::uint64_t seed = 0;
    std::filesystem::path output = "results";
    double train_fraction = 0.7;
    int threads = 1;
    /// Rewrite repNNN_checkpoint.json after every generation (sr only).
    bool checkpoints = false;

    EvolutionConfig evolution;

    double cx_l1_ratio = 0.5;
    int cx_n_lambdas = 1000;

    int st_min_depth = 1;
    int st_max_depth = 25;
    int st_folds = 5;

    std::string to_text() const;
    static RunConfig parse(std::string_view text);
    static RunConfig load(const std::filesystem::path& path);
    /// Throws ConfigError on bad values or a missing schema/dataset file.
    void validate() const;
    /// SHA-256 of to_text().
    std::string hash() const;
};

/// Seeds of one repetition: split, then the method's own stream.
std::uint64_t repetition_seed(std::uint64_t base, int repetition);

/// Models of one front, evaluated on both sides of the split. `train` and
/// `test` are aligned: entry k of each refers to the same model.
struct RepetitionResult {
    int repetition = 0;
    std::string method;
    ParetoFront train;
    ParetoFront test;
    nlohmann::json models;
    /// (time, median over test subjects of S(t)) for the highest-dims model.
    std::vector<std::pair<double, double>> survival_curve;
    /// Archive HV per generation (sr only).
    std::vector<double> archive_hv;
};

struct RepetitionHooks {
    std::ostream* log = nullptr;
    /// sr only: checkpoint document after each generation.
    std::function<void(const nlohmann::json&)> checkpoint;
};

/// Split `data`, fit the configured method on the training part and evaluate
/// its training front on both parts.
RepetitionResult run_repetition(const SurvivalDataset& data, const RunConfig& config, int repetition,
                                const RepetitionHooks& hooks = {});

/// `method,split,dims,neg_ci,ci,n_terms,model_index` rows, train then test per model.
std::string front_csv(const RepetitionResult& result);

struct RunReport {
    int repetitions = 0;
    int failed = 0;
    double wall_seconds = 0.0;
    std::vector<std::filesystem::path> files;

    /// More than 10% of repetitions failed.
    bool too_many_failures() const noexcept { return failed * 10 > repetitions; }
};

/// Run every repetition and write, under config.output:
///   config.txt, repNNN_front.csv, repNNN_models.json, repNNN_survival.csv,
///   repNNN_checkpoint.json (optional) and manifest.json.
/// Failed repetitions are logged and skipped.
RunReport cmd_run(const RunConfig& config, std::ostream& log);

/// One repetition read back from a results directory.
struct StoredFront {
    std::string method;
    int repetition = 0;
    ParetoFront train;
    ParetoFront test;
};

StoredFront read_front_csv(const std::filesystem::path& path);

struct AggregateConfig {
    std::vector<std::filesystem::path> results;
    std::filesystem::path output = "tables";
    /// 0 stands for "max".
    std::vector<int> ks{3, 5, 7, 0};
};

/// Writes hv_table.csv, ci_table.csv, expression_counts.csv,
/// expression_correlation.csv, survival_curves.csv and tables.txt; prints the
/// two tables to `out`. Throws MixedSchema when the runs disagree on the dataset.
void cmd_aggregate(const AggregateConfig& config, std::ostream& out);

/// Built-in generative risk scores:
///   linear           sum_j coefficients[j] x_j
///   quadratic        x0^2 - x1
///   log_interaction  log(1 + |x0 x1|) - x2
struct SynthSpec {
    std::string score = "quadratic";
    int n = 1000;
    int d = 10;
    double censoring = 0.3;
    std::uint64_t seed = 0;
    std::vector<double> coefficients{1.0, -1.0, 0.5};
    double baseline_hazard = 1.0;
};

struct SynthData {
    SurvivalDataset dataset;
    Vector score;
    double censoring_rate = 0.0;
};

/// Features ~ N(0, 1), event times exponential with rate h0 exp(score),
/// independent exponential censoring whose rate is tuned by bisection to hit
/// spec.censoring.
SynthData synthesize(const SynthSpec& spec);

/// Risk score of the named generator on `x`.
Vector synth_score(const SynthSpec& spec, const Matrix& x);

/// Writes `csv`, `<stem>.truth.csv` (row, score) and `<stem>.schema`.
std::vector<std::filesystem::path> write_synth(const SynthData& data, const std::filesystem::path& csv);

/// Entry point of the `survsr` executable.
int run_cli(int argc, char** argv);

}  // namespace survsr
