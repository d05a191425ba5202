#include "survsr/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "survsr/error.hpp"
#include "survsr/parallel.hpp"

namespace survsr {

// ---------------------------------------------------------------------------
// CX

std::vector<CoxFit> cx_candidates(const SurvivalDataset& train, double l1_ratio, int n_lambdas) {
    const auto path = lambda_path(train.features, train.times, train.events, l1_ratio, n_lambdas);
    std::map<int, std::vector<const CoxFit*>> by_dims;
    for (const auto& fit : path) {
        by_dims[fit.n_nonzero()].push_back(&fit);
    }
    std::vector<CoxFit> out;
    for (auto& [dims, group] : by_dims) {
        std::sort(group.begin(), group.end(), [](const CoxFit* a, const CoxFit* b) { return a->lambda < b->lambda; });
        out.push_back(*group[(group.size() - 1) / 2]);
    }
    return out;
}

ParetoFront evaluate_cx(const std::vector<CoxFit>& models, const SurvivalDataset& train, const SurvivalDataset& eval) {
    const IpcwConcordance ci(train.times, train.events);
    ParetoFront front;
    for (std::size_t k = 0; k < models.size(); ++k) {
        const Vector eta = eval.features * models[k].theta;
        const auto r = ci(eval.times, eval.events, eta);
        front.points.push_back(FrontPoint{models[k].n_nonzero(), r.ci, k, models[k].n_nonzero()});
    }
    return front;
}

CxFront cx_pareto_front(const SurvivalDataset& train, const SurvivalDataset& eval, double l1_ratio, int n_lambdas) {
    CxFront out;
    out.models = cx_candidates(train, l1_ratio, n_lambdas);
    out.raw = evaluate_cx(out.models, train, eval);
    out.front = filter_nondominated(out.raw);
    return out;
}

// ---------------------------------------------------------------------------
// Survival tree

std::vector<STConfig> st_grid(int max_depth) {
    std::vector<STConfig> grid;
    for (int split : {2, 5, 8}) {
        for (int leaf : {1, 4}) {
            for (double features : {0.5, 1.0}) {
                for (auto splitter : {Splitter::best, Splitter::random}) {
                    grid.push_back(STConfig{max_depth, split, leaf, features, splitter});
                }
            }
        }
    }
    return grid;
}

SurvivalTree::SurvivalTree(std::vector<Node> nodes, std::vector<double> event_times)
    : nodes_(std::move(nodes)), event_times_(std::move(event_times)) {
    if (nodes_.empty()) {
        throw Error("survival tree needs a root");
    }
    for (auto& node : nodes_) {
        node.risk = event_times_.empty() ? 0.0 : node.cumulative_hazard(event_times_.back());
    }
}

const SurvivalTree::Node& SurvivalTree::leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    const Node* node = &nodes_.front();
    while (node->feature >= 0) {
        node = &nodes_[static_cast<std::size_t>(row[node->feature] <= node->threshold ? node->left : node->right)];
    }
    return *node;
}

Vector SurvivalTree::risk_scores(const Matrix& x) const {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        out[i] = leaf_for(x.row(i)).risk;
    }
    return out;
}

StepFunction SurvivalTree::survival_function(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    StepFunction s = leaf_for(row).cumulative_hazard;
    for (auto& v : s.values) {
        v = std::exp(-v);
    }
    s.left_value = std::exp(-s.left_value);
    return s;
}

std::vector<int> SurvivalTree::split_features() const {
    std::vector<int> out;
    for (const auto& n : nodes_) {
        if (n.feature >= 0) {
            out.push_back(n.feature);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

int SurvivalTree::depth() const {
    int d = 0;
    for (const auto& n : nodes_) {
        d = std::max(d, n.depth);
    }
    return d;
}

int SurvivalTree::n_leaves() const {
    return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
}

void to_json(nlohmann::json& j, const SurvivalTree& tree) {
    // nested split records
    std::function<nlohmann::json(int)> visit = [&](int k) {
        const auto& n = tree.nodes()[static_cast<std::size_t>(k)];
        if (n.feature < 0) {
            return nlohmann::json{{"n_samples", n.n_samples},
                                  {"risk", n.risk},
                                  {"times", n.cumulative_hazard.breakpoints},
                                  {"cumulative_hazard", n.cumulative_hazard.values}};
        }
        return nlohmann::json{{"feature", n.feature},
                              {"threshold", n.threshold},
                              {"n_samples", n.n_samples},
                              {"left", visit(n.left)},
                              {"right", visit(n.right)}};
    };
    j = nlohmann::json{{"dims", tree.dims()}, {"root", visit(0)}};
}

double logrank_statistic(const Vector& times, const std::vector<bool>& events, const std::vector<bool>& left) {
    const RiskSets rs(times, events);
    const auto n = rs.size();
    double u = 0.0;
    double v = 0.0;
    for (const auto& g : rs.groups()) {
        if (g.deaths == 0) {
            continue;
        }
        double y = 0.0;
        double y_left = 0.0;
        double d_left = 0.0;
        for (Eigen::Index k = g.begin; k < n; ++k) {
            const auto row = static_cast<std::size_t>(rs.order()[static_cast<std::size_t>(k)]);
            y += 1.0;
            if (left[row]) {
                y_left += 1.0;
                if (k < g.end && events[row]) {
                    d_left += 1.0;
                }
            }
        }
        const double d = g.deaths;
        u += d_left - y_left * d / y;
        if (y > 1.0) {
            v += y_left * (y - y_left) * d * (y - d) / (y * y * (y - 1.0));
        }
    }
    return v > 0.0 ? u * u / v : 0.0;
}

namespace {

class Fenwick {
public:
    explicit Fenwick(std::size_t n) : tree_(n + 1, 0.0) {}
    void add(std::size_t i, double v) {
        for (++i; i < tree_.size(); i += i & (~i + 1)) {
            tree_[i] += v;
        }
    }
    /// Sum over [0, i].
    double prefix(std::size_t i) const {
        double s = 0.0;
        for (++i; i > 0; i -= i & (~i + 1)) {
            s += tree_[i];
        }
        return s;
    }

private:
    std::vector<double> tree_;
};

/// Per-row quantities of one node that make the log-rank statistic of any
/// left child an incremental sum. With distinct event times u_k, at-risk Y_k,
/// deaths d_k and c_k = d_k (Y_k - d_k) / (Y_k^2 (Y_k - 1)):
///   U = sum_{s in L} (delta_s - Lambda(t_s))
///   V = sum_{s in L} P(t_s) - sum_{s, s' in L} C(min(t_s, t_s'))
/// where Lambda, P, C are cumulative sums of d/Y, c Y and c up to t.
struct NodeProfile {
    std::vector<std::size_t> rank;  // distinct-time rank of each member
    std::vector<double> delta;
    std::vector<double> lambda;
    std::vector<double> p;
    std::vector<double> c;
    std::size_t n_ranks = 0;
    int n_events = 0;
    StepFunction nelson_aalen;
};

NodeProfile profile_node(const std::vector<Eigen::Index>& rows, const SurvivalDataset& data) {
    NodeProfile prof;
    const std::size_t m = rows.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return data.times[rows[a]] < data.times[rows[b]]; });
    prof.rank.resize(m);
    prof.delta.resize(m);
    prof.lambda.resize(m);
    prof.p.resize(m);
    prof.c.resize(m);
    prof.nelson_aalen.left_value = 0.0;
    double lambda = 0.0;
    double p = 0.0;
    double c = 0.0;
    std::size_t k = 0;
    std::size_t r = 0;
    while (k < m) {
        std::size_t end = k;
        int deaths = 0;
        const double t = data.times[rows[order[k]]];
        while (end < m && data.times[rows[order[end]]] == t) {
            deaths += data.events[static_cast<std::size_t>(rows[order[end]])] ? 1 : 0;
            ++end;
        }
        const double y = static_cast<double>(m - k);
        if (deaths > 0) {
            const double d = deaths;
            lambda += d / y;
            if (y > 1.0) {
                const double ck = d * (y - d) / (y * y * (y - 1.0));
                c += ck;
                p += ck * y;
            }
            prof.nelson_aalen.breakpoints.push_back(t);
            prof.nelson_aalen.values.push_back(lambda);
            prof.n_events += deaths;
        }
        for (std::size_t q = k; q < end; ++q) {
            const auto s = order[q];
            prof.rank[s] = r;
            prof.delta[s] = data.events[static_cast<std::size_t>(rows[s])] ? 1.0 : 0.0;
            prof.lambda[s] = lambda;
            prof.p[s] = p;
            prof.c[s] = c;
        }
        ++r;
        k = end;
    }
    prof.n_ranks = r;
    return prof;
}

class LeftChild {
public:
    explicit LeftChild(const NodeProfile& prof) : prof_(prof), count_(prof.n_ranks), sum_c_(prof.n_ranks) {}

    void add(std::size_t s) {
        const auto r = prof_.rank[s];
        const double cs = prof_.c[s];
        u_ += prof_.delta[s] - prof_.lambda[s];
        first_ += prof_.p[s];
        const double le_count = count_.prefix(r);
        const double le_sum = sum_c_.prefix(r);
        const double gt_count = static_cast<double>(size_) - le_count;
        second_ += cs + 2.0 * (le_sum + cs * gt_count);
        count_.add(r, 1.0);
        sum_c_.add(r, cs);
        ++size_;
    }

    int size() const noexcept { return size_; }

    double statistic() const {
        const double v = first_ - second_;
        if (!(v > 1e-12 * std::max(1.0, first_))) {
            return 0.0;
        }
        return u_ * u_ / v;
    }

private:
    const NodeProfile& prof_;
    Fenwick count_;
    Fenwick sum_c_;
    double u_ = 0.0;
    double first_ = 0.0;
    double second_ = 0.0;
    int size_ = 0;
};

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;
};

class TreeBuilder {
public:
    TreeBuilder(const SurvivalDataset& data, const STConfig& config, Rng& rng)
        : data_(data), config_(config), rng_(rng) {}

    std::vector<SurvivalTree::Node> build() {
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(data_.rows()));
        std::iota(rows.begin(), rows.end(), Eigen::Index{0});
        grow(rows, 0);
        return std::move(nodes_);
    }

private:
    int grow(const std::vector<Eigen::Index>& rows, int depth) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        const NodeProfile prof = profile_node(rows, data_);
        {
            auto& node = nodes_.back();
            node.depth = depth;
            node.n_samples = static_cast<int>(rows.size());
            node.cumulative_hazard = prof.nelson_aalen;
        }
        const int m = static_cast<int>(rows.size());
        if (depth >= config_.max_depth || m < config_.min_samples_split || m < 2 * config_.min_samples_leaf ||
            prof.n_events == 0) {
            return id;
        }
        const SplitChoice split = best_split(rows, prof);
        if (split.feature < 0 || !(split.score > 0.0)) {
            return id;
        }
        std::vector<Eigen::Index> left;
        std::vector<Eigen::Index> right;
        for (auto r : rows) {
            (data_.features(r, split.feature) <= split.threshold ? left : right).push_back(r);
        }
        const int l = grow(left, depth + 1);
        const int rr = grow(right, depth + 1);
        auto& node = nodes_[static_cast<std::size_t>(id)];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = l;
        node.right = rr;
        return id;
    }

    std::vector<int> candidate_features() {
        const int d = static_cast<int>(data_.cols());
        std::vector<int> features(static_cast<std::size_t>(d));
        std::iota(features.begin(), features.end(), 0);
        const int k = std::max(1, static_cast<int>(config_.max_features * d));
        if (k >= d) {
            return features;
        }
        for (int i = 0; i < k; ++i) {
            const int j = std::uniform_int_distribution<int>(i, d - 1)(rng_);
            std::swap(features[static_cast<std::size_t>(i)], features[static_cast<std::size_t>(j)]);
        }
        features.resize(static_cast<std::size_t>(k));
        return features;
    }

    SplitChoice best_split(const std::vector<Eigen::Index>& rows, const NodeProfile& prof) {
        SplitChoice best;
        const std::size_t m = rows.size();
        const int min_leaf = config_.min_samples_leaf;
        std::vector<std::size_t> order(m);
        for (int f : candidate_features()) {
            const auto x = [&](std::size_t s) { return data_.features(rows[s], f); };
            if (config_.splitter == Splitter::best) {
                std::iota(order.begin(), order.end(), std::size_t{0});
                std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x(a) < x(b); });
                LeftChild left(prof);
                for (std::size_t k = 0; k + 1 < m; ++k) {
                    left.add(order[k]);
                    const double here = x(order[k]);
                    const double next = x(order[k + 1]);
                    if (!(here < next) || left.size() < min_leaf || static_cast<int>(m) - left.size() < min_leaf) {
                        continue;
                    }
                    const double score = left.statistic();
                    if (score > best.score) {
                        double thr = here + (next - here) / 2.0;
                        if (!(thr < next)) {
                            thr = here;
                        }
                        best = SplitChoice{f, thr, score};
                    }
                }
            } else {
                double lo = x(0);
                double hi = x(0);
                for (std::size_t s = 1; s < m; ++s) {
                    lo = std::min(lo, x(s));
                    hi = std::max(hi, x(s));
                }
                if (!(lo < hi)) {
                    continue;
                }
                const double thr = std::uniform_real_distribution<double>(lo, hi)(rng_);
                LeftChild left(prof);
                for (std::size_t s = 0; s < m; ++s) {
                    if (x(s) <= thr) {
                        left.add(s);
                    }
                }
                if (left.size() < min_leaf || static_cast<int>(m) - left.size() < min_leaf) {
                    continue;
                }
                const double score = left.statistic();
                if (score > best.score) {
                    best = SplitChoice{f, thr, score};
                }
            }
        }
        return best;
    }

    const SurvivalDataset& data_;
    const STConfig& config_;
    Rng& rng_;
    std::vector<SurvivalTree::Node> nodes_;
};

std::vector<double> distinct_event_times(const SurvivalDataset& ds) {
    std::vector<double> t;
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        if (ds.events[static_cast<std::size_t>(i)]) {
            t.push_back(ds.times[i]);
        }
    }
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

}  // namespace

SurvivalTree fit_survival_tree(const SurvivalDataset& train, const STConfig& config, Rng& rng) {
    if (train.rows() == 0) {
        throw Error("cannot fit a survival tree on an empty sample");
    }
    TreeBuilder builder(train, config, rng);
    return SurvivalTree(builder.build(), distinct_event_times(train));
}

std::vector<int> stratified_folds(const std::vector<bool>& events, int folds, std::uint64_t seed) {
    if (folds < 2) {
        throw ConfigError("need at least 2 folds");
    }
    if (events.size() < static_cast<std::size_t>(folds)) {
        throw ConfigError("fewer rows than folds");
    }
    Rng rng = make_rng(seed);
    std::vector<int> fold(events.size(), 0);
    int next = 0;
    for (bool stratum : {true, false}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < events.size(); ++i) {
            if (events[i] == stratum) {
                members.push_back(i);
            }
        }
        std::shuffle(members.begin(), members.end(), rng);
        for (auto i : members) {
            fold[i] = next;
            next = (next + 1) % folds;
        }
    }
    return fold;
}

std::vector<StCandidate> st_candidates(const SurvivalDataset& train, const StSearchOptions& options) {
    if (train.rows() < options.folds) {
        throw ConfigError("survival-tree search needs at least as many rows as folds");
    }
    const auto folds = stratified_folds(train.events, options.folds, derive_seed(options.seed, 0xF01D));
    std::vector<SurvivalDataset> fit_parts;
    std::vector<SurvivalDataset> held_out;
    for (int f = 0; f < options.folds; ++f) {
        std::vector<Eigen::Index> in;
        std::vector<Eigen::Index> out;
        for (std::size_t i = 0; i < folds.size(); ++i) {
            (folds[i] == f ? out : in).push_back(static_cast<Eigen::Index>(i));
        }
        fit_parts.push_back(train.subset(in));
        held_out.push_back(train.subset(out));
    }
    std::vector<IpcwConcordance> fold_ci;
    for (const auto& part : fit_parts) {
        fold_ci.emplace_back(part.times, part.events);
    }

    const int n_depths = options.max_depth - options.min_depth + 1;
    const auto grid_size = st_grid(1).size();
    const auto n_jobs = static_cast<std::size_t>(n_depths) * grid_size * static_cast<std::size_t>(options.folds);
    std::vector<double> scores(n_jobs, 0.0);
    parallel_for(n_jobs, options.threads, [&](std::size_t job) {
        const auto f = static_cast<int>(job % static_cast<std::size_t>(options.folds));
        const auto g = (job / static_cast<std::size_t>(options.folds)) % grid_size;
        const auto depth = options.min_depth + static_cast<int>(job / (static_cast<std::size_t>(options.folds) * grid_size));
        const auto config = st_grid(depth)[g];
        Rng rng = make_rng(derive_seed(derive_seed(options.seed, static_cast<std::uint64_t>(depth)),
                                       g * static_cast<std::size_t>(options.folds) + static_cast<std::size_t>(f) + 1));
        const auto tree = fit_survival_tree(fit_parts[static_cast<std::size_t>(f)], config, rng);
        const auto& ho = held_out[static_cast<std::size_t>(f)];
        scores[job] = fold_ci[static_cast<std::size_t>(f)](ho.times, ho.events, tree.risk_scores(ho.features)).ci;
    });

    std::vector<StCandidate> winners;
    for (int di = 0; di < n_depths; ++di) {
        const int depth = options.min_depth + di;
        const auto grid = st_grid(depth);
        std::size_t best_g = 0;
        double best_score = -1.0;
        for (std::size_t g = 0; g < grid_size; ++g) {
            double mean = 0.0;
            for (int f = 0; f < options.folds; ++f) {
                mean += scores[(static_cast<std::size_t>(di) * grid_size + g) * static_cast<std::size_t>(options.folds) +
                               static_cast<std::size_t>(f)];
            }
            mean /= options.folds;
            if (mean > best_score) {
                best_score = mean;
                best_g = g;
            }
        }
        Rng rng = make_rng(derive_seed(options.seed, 0xBE57000ULL + static_cast<std::uint64_t>(depth)));
        auto tree = fit_survival_tree(train, grid[best_g], rng);
        winners.push_back(StCandidate{depth, grid[best_g], best_score, std::move(tree)});
    }

    std::vector<StCandidate> out;
    std::vector<int> seen;
    for (auto& w : winners) {
        const int dims = w.tree.dims();
        if (std::find(seen.begin(), seen.end(), dims) != seen.end()) {
            continue;
        }
        seen.push_back(dims);
        out.push_back(std::move(w));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const StCandidate& a, const StCandidate& b) { return a.tree.dims() < b.tree.dims(); });
    return out;
}

ParetoFront evaluate_st(const std::vector<StCandidate>& models, const SurvivalDataset& train,
                        const SurvivalDataset& eval) {
    const IpcwConcordance ci(train.times, train.events);
    ParetoFront front;
    for (std::size_t k = 0; k < models.size(); ++k) {
        const auto r = ci(eval.times, eval.events, models[k].tree.risk_scores(eval.features));
        front.points.push_back(FrontPoint{models[k].tree.dims(), r.ci, k, models[k].tree.n_leaves()});
    }
    return front;
}

StFront st_pareto_front(const SurvivalDataset& train, const SurvivalDataset& eval, const StSearchOptions& options) {
    StFront out;
    out.models = st_candidates(train, options);
    out.raw = evaluate_st(out.models, train, eval);
    out.front = filter_nondominated(out.raw);
    return out;
}

}  // namespace survsr
