#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "survsr/coxcore.hpp"
#include "survsr/data.hpp"
#include "survsr/exprtree.hpp"

namespace survsr {

/// Cox model whose risk score is a linear combination of evolved expressions:
/// eta(x) = sum_j theta_j f_j(x). There is no intercept.
class MultiExprModel {
public:
    /// Throws if `trees` is empty.
    explicit MultiExprModel(std::vector<ExprTree> trees);

    const std::vector<ExprTree>& trees() const noexcept { return trees_; }
    std::size_t n_trees() const noexcept { return trees_.size(); }
    const Vector& theta() const noexcept { return theta_; }
    bool fitted() const noexcept { return fitted_; }
    bool converged() const noexcept { return converged_; }
    const std::string& train_signature() const noexcept { return train_signature_; }

    /// Distinct features over all trees (cached).
    const std::vector<int>& features() const noexcept { return features_; }
    int dims() const noexcept { return static_cast<int>(features_.size()); }
    int total_nodes() const;

    /// Structural edits return a new, unfitted model.
    MultiExprModel with_trees(std::vector<ExprTree> trees) const { return MultiExprModel(std::move(trees)); }

    /// Set coefficients directly (marks the model fitted).
    void set_theta(Vector theta, std::string train_signature = {}, bool converged = true);

    friend void to_json(nlohmann::json& j, const MultiExprModel& m);
    static MultiExprModel from_json(const nlohmann::json& j);

private:
    std::vector<ExprTree> trees_;
    std::vector<int> features_;
    Vector theta_;
    bool fitted_ = false;
    bool converged_ = false;
    std::string train_signature_;
};

/// Distinct features by traversing every tree (independent of the cache).
int dims_by_traversal(const MultiExprModel& model);

struct ConstructedFeatures {
    Matrix values;                    // n x m
    std::vector<bool> zero_variance;  // per column
};

ConstructedFeatures construct_features(const MultiExprModel& model, const Matrix& x);

struct FitOptions {
    double lambda = 1e-6;
    double l1_ratio = 0.5;
    CoxnetOptions solver{};
};

/// Fit theta on standardized constructed features and map it back to the raw
/// feature scale. Zero-variance features get theta_j = 0.
MultiExprModel fit_theta(MultiExprModel model, const SurvivalDataset& train, const FitOptions& options = {});
/// Same, reusing precomputed risk sets of `train`.
/// `train_signature`, when given, is recorded instead of hashing `train`.
MultiExprModel fit_theta(MultiExprModel model, const SurvivalDataset& train, const RiskSets& risk_sets,
                         const FitOptions& options = {}, std::string_view train_signature = {});

/// eta = sum_j theta_j f_j(x). Throws NotFitted.
Vector risk_score(const MultiExprModel& model, const Matrix& x);

/// Objectives to minimize: 1 - CI and number of distinct features.
struct ObjectiveVector {
    double neg_ci = 0.5;
    int dims = 0;

    friend bool operator==(const ObjectiveVector&, const ObjectiveVector&) = default;
};

/// CI uses the censoring distribution of `train` and is measured on `eval`.
ObjectiveVector objectives(const MultiExprModel& model, const SurvivalDataset& eval, const SurvivalDataset& train);
ObjectiveVector objectives(const MultiExprModel& model, const SurvivalDataset& eval, const IpcwConcordance& ci);

/// Digest of the risk scores rounded to 12 significant digits; equal digests
/// mean numerically identical predictions.
std::string prediction_signature(const MultiExprModel& model, const Matrix& train_x);
std::string prediction_signature(const Vector& scores);

/// Model formula with column names, e.g. "0.5 * plog(age) + 1.2 * sex".
std::string format_model(const MultiExprModel& model, std::span<const std::string> column_names = {});

}  // namespace survsr
