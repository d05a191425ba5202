#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "survsr/coxcore.hpp"
#include "survsr/data.hpp"
#include "survsr/metrics.hpp"
#include "survsr/random.hpp"

namespace survsr {

// ---------------------------------------------------------------------------
// Elastic-net Cox front (CX)

struct CxFront {
    /// One fit per distinct support size, ascending dims.
    std::vector<CoxFit> models;
    /// CI of each model on the evaluation split; model_index into `models`.
    ParetoFront raw;
    /// Nondominated subset of `raw`.
    ParetoFront front;
};

/// Fit the lambda path on `train`, group fits by support size and keep the
/// median-lambda fit of each group (lower median for even groups).
std::vector<CoxFit> cx_candidates(const SurvivalDataset& train, double l1_ratio = 0.5, int n_lambdas = 1000);

/// Evaluate fits on `eval` (censoring distribution from `train`).
ParetoFront evaluate_cx(const std::vector<CoxFit>& models, const SurvivalDataset& train, const SurvivalDataset& eval);

CxFront cx_pareto_front(const SurvivalDataset& train, const SurvivalDataset& eval, double l1_ratio = 0.5,
                        int n_lambdas = 1000);

// ---------------------------------------------------------------------------
// Survival trees (ST)

enum class Splitter { best, random };

struct STConfig {
    int max_depth = 5;
    int min_samples_split = 2;
    int min_samples_leaf = 1;
    double max_features = 1.0;
    Splitter splitter = Splitter::best;
};

/// The hyper-parameter grid searched for every depth.
std::vector<STConfig> st_grid(int max_depth);

/// Binary survival tree; rows with x[feature] <= threshold go left. Leaves
/// hold the Nelson-Aalen cumulative hazard of their training rows.
class SurvivalTree {
public:
    struct Node {
        int feature = -1;  // -1 for leaves
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        int depth = 0;
        int n_samples = 0;
        StepFunction cumulative_hazard;
        /// Cumulative hazard at the last training event time.
        double risk = 0.0;
    };

    /// `event_times`: distinct training event times, ascending.
    SurvivalTree(std::vector<Node> nodes, std::vector<double> event_times);

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const std::vector<double>& event_times() const noexcept { return event_times_; }
    const Node& leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
    /// Leaf risk; larger means higher risk.
    Vector risk_scores(const Matrix& x) const;
    StepFunction survival_function(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
    /// Distinct split features, sorted.
    std::vector<int> split_features() const;
    int dims() const { return static_cast<int>(split_features().size()); }
    int depth() const;
    int n_leaves() const;

    friend void to_json(nlohmann::json& j, const SurvivalTree& tree);

private:
    std::vector<Node> nodes_;
    std::vector<double> event_times_;
};

/// Greedy recursive partitioning with the two-sample log-rank statistic as
/// split score.
SurvivalTree fit_survival_tree(const SurvivalDataset& train, const STConfig& config, Rng& rng);

/// Standardized log-rank statistic U^2 / V of splitting `times`/`events`
/// into the rows flagged in `left`. Returns 0 when V = 0.
double logrank_statistic(const Vector& times, const std::vector<bool>& events, const std::vector<bool>& left);

/// Fold id per row, stratified by event indicator, deterministic per seed.
std::vector<int> stratified_folds(const std::vector<bool>& events, int folds, std::uint64_t seed);

struct StCandidate {
    int depth = 0;
    STConfig config;
    double cv_ci = 0.0;
    SurvivalTree tree;
};

struct StFront {
    /// One tree per distinct dims value (smallest depth), ascending dims.
    std::vector<StCandidate> models;
    ParetoFront raw;
    ParetoFront front;
};

struct StSearchOptions {
    int min_depth = 1;
    int max_depth = 25;
    int folds = 5;
    std::uint64_t seed = 0;
    int threads = 1;
};

/// Cross-validated grid search for every depth, then one model per distinct
/// number of split features.
std::vector<StCandidate> st_candidates(const SurvivalDataset& train, const StSearchOptions& options);

ParetoFront evaluate_st(const std::vector<StCandidate>& models, const SurvivalDataset& train,
                        const SurvivalDataset& eval);

StFront st_pareto_front(const SurvivalDataset& train, const SurvivalDataset& eval, const StSearchOptions& options);

}  // namespace survsr
