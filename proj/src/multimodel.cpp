#include "survsr/multimodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

#include <nlohmann/json.hpp>

#include "survsr/error.hpp"
#include "survsr/hash.hpp"

namespace survsr {

MultiExprModel::MultiExprModel(std::vector<ExprTree> trees) : trees_(std::move(trees)) {
    if (trees_.empty()) {
        throw Error("a model needs at least one expression");
    }
    for (const auto& t : trees_) {
        features_.insert(features_.end(), t.features().begin(), t.features().end());
    }
    std::sort(features_.begin(), features_.end());
    features_.erase(std::unique(features_.begin(), features_.end()), features_.end());
}

int MultiExprModel::total_nodes() const {
    int total = 0;
    for (const auto& t : trees_) {
        total += t.size();
    }
    return total;
}

void MultiExprModel::set_theta(Vector theta, std::string train_signature, bool converged) {
    if (theta.size() != static_cast<Eigen::Index>(trees_.size())) {
        throw Error("theta has " + std::to_string(theta.size()) + " entries for " + std::to_string(trees_.size()) +
                    " expressions");
    }
    if (!theta.allFinite()) {
        throw Error("theta must be finite");
    }
    theta_ = std::move(theta);
    fitted_ = true;
    converged_ = converged;
    train_signature_ = std::move(train_signature);
}

void to_json(nlohmann::json& j, const MultiExprModel& m) {
    std::vector<std::string> trees;
    for (const auto& t : m.trees_) {
        trees.push_back(to_infix(t));
    }
    std::vector<std::string> theta;
    for (Eigen::Index k = 0; k < m.theta_.size(); ++k) {
        theta.push_back(format_constant(m.theta_[k]));
    }
    j = nlohmann::json{{"trees", trees},
                       {"theta", theta},
                       {"meta",
                        {{"fitted", m.fitted_},
                         {"converged", m.converged_},
                         {"dims", m.dims()},
                         {"features", m.features_},
                         {"train_signature", m.train_signature_}}}};
}

MultiExprModel MultiExprModel::from_json(const nlohmann::json& j) {
    std::vector<ExprTree> trees;
    for (const auto& t : j.at("trees")) {
        trees.push_back(parse_infix(t.get<std::string>()));
    }
    MultiExprModel m(std::move(trees));
    const auto& meta = j.contains("meta") ? j.at("meta") : nlohmann::json::object();
    if (meta.value("fitted", false)) {
        const auto& th = j.at("theta");
        Vector theta(static_cast<Eigen::Index>(th.size()));
        for (std::size_t k = 0; k < th.size(); ++k) {
            // theta entries use the constant format (with exact annotation)
            theta[static_cast<Eigen::Index>(k)] =
                th[k].is_number() ? th[k].get<double>() : parse_infix(th[k].get<std::string>()).nodes()[0].value;
        }
        m.set_theta(std::move(theta), meta.value("train_signature", std::string{}), meta.value("converged", true));
    }
    return m;
}

int dims_by_traversal(const MultiExprModel& model) {
    std::vector<bool> seen;
    int count = 0;
    for (const auto& t : model.trees()) {
        for (const auto& n : t.nodes()) {
            if (!n.uses_feature()) {
                continue;
            }
            if (static_cast<std::size_t>(n.index) >= seen.size()) {
                seen.resize(static_cast<std::size_t>(n.index) + 1, false);
            }
            if (!seen[static_cast<std::size_t>(n.index)]) {
                seen[static_cast<std::size_t>(n.index)] = true;
                ++count;
            }
        }
    }
    return count;
}

namespace {

/// Location and scale of a column computed on a pre-scaled copy so huge
/// (saturated) values do not overflow the sums.
struct ColumnScale {
    double maxabs = 0.0;
    double mean = 0.0;  // of column / maxabs
    double sd = 0.0;    // of column / maxabs
    bool degenerate = true;
};

ColumnScale column_scale(const Eigen::Ref<const Vector>& col) {
    ColumnScale s;
    s.maxabs = col.cwiseAbs().maxCoeff();
    if (!(s.maxabs > 0.0) || !std::isfinite(s.maxabs)) {
        return s;
    }
    const Eigen::ArrayXd scaled = col.array() / s.maxabs;
    s.mean = scaled.mean();
    s.sd = std::sqrt((scaled - s.mean).square().mean());
    s.degenerate = !(s.sd > 1e-12);
    return s;
}

}  // namespace

ConstructedFeatures construct_features(const MultiExprModel& model, const Matrix& x) {
    ConstructedFeatures out;
    const auto m = static_cast<Eigen::Index>(model.n_trees());
    out.values.resize(x.rows(), m);
    out.zero_variance.resize(model.n_trees());
    for (Eigen::Index j = 0; j < m; ++j) {
        out.values.col(j) = evaluate(model.trees()[static_cast<std::size_t>(j)], x);
        out.zero_variance[static_cast<std::size_t>(j)] = x.rows() == 0 || column_scale(out.values.col(j)).degenerate;
    }
    return out;
}

MultiExprModel fit_theta(MultiExprModel model, const SurvivalDataset& train, const RiskSets& risk_sets,
                         const FitOptions& options, std::string_view train_signature) {
    const auto m = static_cast<Eigen::Index>(model.n_trees());
    const auto n = train.rows();
    Matrix values(n, m);
    std::vector<ColumnScale> scales(static_cast<std::size_t>(m));
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < m; ++j) {
        values.col(j) = evaluate(model.trees()[static_cast<std::size_t>(j)], train.features);
        scales[static_cast<std::size_t>(j)] = column_scale(values.col(j));
        if (!scales[static_cast<std::size_t>(j)].degenerate) {
            active.push_back(j);
        }
    }
    Matrix z(n, static_cast<Eigen::Index>(active.size()));
    for (std::size_t a = 0; a < active.size(); ++a) {
        const auto& s = scales[static_cast<std::size_t>(active[a])];
        z.col(static_cast<Eigen::Index>(a)) = ((values.col(active[a]).array() / s.maxabs - s.mean) / s.sd).matrix();
    }
    const CoxFit fit = fit_coxnet(z, risk_sets, options.lambda, options.l1_ratio, options.solver);

    Vector theta = Vector::Zero(m);
    for (std::size_t a = 0; a < active.size(); ++a) {
        const auto& s = scales[static_cast<std::size_t>(active[a])];
        const double raw = fit.theta[static_cast<Eigen::Index>(a)] / s.sd / s.maxabs;
        theta[active[a]] = std::isfinite(raw) ? raw : 0.0;
    }
    model.set_theta(std::move(theta),
                    train_signature.empty() ? train.content_hash() : std::string(train_signature), fit.converged);
    return model;
}

MultiExprModel fit_theta(MultiExprModel model, const SurvivalDataset& train, const FitOptions& options) {
    const RiskSets rs(train.times, train.events);
    return fit_theta(std::move(model), train, rs, options);
}

Vector risk_score(const MultiExprModel& model, const Matrix& x) {
    if (!model.fitted()) {
        throw NotFitted();
    }
    // theta * saturated features can overflow; clamp every step to keep scores finite
    constexpr double kMax = std::numeric_limits<double>::max();
    Eigen::ArrayXd eta = Eigen::ArrayXd::Zero(x.rows());
    for (std::size_t j = 0; j < model.n_trees(); ++j) {
        const double th = model.theta()[static_cast<Eigen::Index>(j)];
        if (th != 0.0) {
            const Eigen::ArrayXd term = (th * evaluate(model.trees()[j], x).array()).max(-kMax).min(kMax);
            eta = (eta + term).max(-kMax).min(kMax);
        }
    }
    return eta.matrix();
}

ObjectiveVector objectives(const MultiExprModel& model, const SurvivalDataset& eval, const IpcwConcordance& ci) {
    const auto result = ci(eval.times, eval.events, risk_score(model, eval.features));
    ObjectiveVector out;
    out.neg_ci = std::clamp(1.0 - result.ci, 0.0, 1.0);
    out.dims = model.dims();
    return out;
}

ObjectiveVector objectives(const MultiExprModel& model, const SurvivalDataset& eval, const SurvivalDataset& train) {
    return objectives(model, eval, IpcwConcordance(train.times, train.events));
}

std::string prediction_signature(const Vector& scores) {
    Sha256 h;
    std::array<char, 40> buf{};
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        double v = scores[i];
        if (v == 0.0) {
            v = 0.0;
        }
        const int len = std::snprintf(buf.data(), buf.size(), "%.11e;", v);
        h.update(std::string_view(buf.data(), static_cast<std::size_t>(len)));
    }
    return h.hex_digest();
}

std::string prediction_signature(const MultiExprModel& model, const Matrix& train_x) {
    return prediction_signature(risk_score(model, train_x));
}

std::string format_model(const MultiExprModel& model, std::span<const std::string> column_names) {
    std::string out;
    for (std::size_t j = 0; j < model.n_trees(); ++j) {
        if (j > 0) {
            out += " + ";
        }
        if (model.fitted()) {
            std::array<char, 32> buf{};
            std::snprintf(buf.data(), buf.size(), "%.4g", model.theta()[static_cast<Eigen::Index>(j)]);
            out += buf.data();
            out += " * ";
        }
        out += to_infix(model.trees()[j], column_names, false);
    }
    return out;
}

}  // namespace survsr
