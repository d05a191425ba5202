#include "survsr/coxcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "survsr/error.hpp"

namespace survsr {

// ---------------------------------------------------------------------------
// StepFunction

double StepFunction::operator()(double t) const {
    const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
    if (it == breakpoints.begin()) {
        return left_value;
    }
    return values[static_cast<std::size_t>(it - breakpoints.begin() - 1)];
}

double StepFunction::left_limit(double t) const {
    const auto it = std::lower_bound(breakpoints.begin(), breakpoints.end(), t);
    if (it == breakpoints.begin()) {
        return left_value;
    }
    return values[static_cast<std::size_t>(it - breakpoints.begin() - 1)];
}

std::string StepFunction::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "time,value\n";
    for (std::size_t k = 0; k < breakpoints.size(); ++k) {
        os << breakpoints[k] << ',' << values[k] << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Risk sets

RiskSets::RiskSets(const Vector& times, const std::vector<bool>& events) : events_(events) {
    const auto n = times.size();
    if (static_cast<Eigen::Index>(events.size()) != n) {
        throw SchemaMismatch("times and events differ in length");
    }
    order_.resize(static_cast<std::size_t>(n));
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    std::stable_sort(order_.begin(), order_.end(), [&](Eigen::Index a, Eigen::Index b) { return times[a] < times[b]; });
    Eigen::Index k = 0;
    while (k < n) {
        Group g{k, k, 0};
        const double t = times[order_[static_cast<std::size_t>(k)]];
        while (g.end < n && times[order_[static_cast<std::size_t>(g.end)]] == t) {
            g.deaths += events[static_cast<std::size_t>(order_[static_cast<std::size_t>(g.end)])] ? 1 : 0;
            ++g.end;
        }
        n_events_ += static_cast<std::size_t>(g.deaths);
        groups_.push_back(g);
        k = g.end;
    }
}

// ---------------------------------------------------------------------------
// Kaplan-Meier

StepFunction kaplan_meier(const Vector& times, const std::vector<bool>& events, bool censoring_distribution) {
    const RiskSets rs(times, events);
    StepFunction out;
    out.left_value = 1.0;
    double s = 1.0;
    const auto n = rs.size();
    for (const auto& g : rs.groups()) {
        const int size = static_cast<int>(g.end - g.begin);
        const double at_risk = static_cast<double>(n - g.begin);
        if (censoring_distribution) {
            const int censored = size - g.deaths;
            if (censored > 0) {
                s *= 1.0 - static_cast<double>(censored) / (at_risk - static_cast<double>(g.deaths));
            }
        } else if (g.deaths > 0) {
            s *= 1.0 - static_cast<double>(g.deaths) / at_risk;
        }
        out.breakpoints.push_back(times[rs.order()[static_cast<std::size_t>(g.begin)]]);
        out.values.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Partial likelihood

PartialLikelihoodTerms partial_likelihood_terms(const RiskSets& rs, const Vector& eta, bool with_derivatives) {
    const auto n = rs.size();
    const auto& order = rs.order();
    const auto& groups = rs.groups();
    const auto& events = rs.events();
    PartialLikelihoodTerms out;
    if (rs.n_events() == 0) {
        throw Error("partial likelihood needs at least one event");
    }
    const double inv_events = 1.0 / static_cast<double>(rs.n_events());

    // log R_g for every group by a running log-sum-exp over the suffix, so
    // each risk set is stabilized by its own maximum.
    std::vector<double> log_risk(groups.size());
    double top = -std::numeric_limits<double>::infinity();
    double scaled = 0.0;
    for (std::size_t g = groups.size(); g-- > 0;) {
        for (Eigen::Index k = groups[g].end; k-- > groups[g].begin;) {
            const double v = eta[order[static_cast<std::size_t>(k)]];
            if (v > top) {
                scaled = scaled * std::exp(top - v) + 1.0;
                top = v;
            } else {
                scaled += std::exp(v - top);
            }
        }
        log_risk[g] = top + std::log(scaled);
    }

    double loss = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].deaths == 0) {
            continue;
        }
        for (Eigen::Index k = groups[g].begin; k < groups[g].end; ++k) {
            const auto row = order[static_cast<std::size_t>(k)];
            if (events[static_cast<std::size_t>(row)]) {
                loss -= eta[row] - log_risk[g];
            }
        }
    }
    out.loss = loss * inv_events;
    if (!with_derivatives) {
        return out;
    }

    // a = sum_{g' <= g} d / R_g' and b = sum d / R_g'^2, both kept relative to
    // the current group: a_rel = R_g a, b_rel = R_g^2 b.
    out.grad.resize(n);
    out.hess.resize(n);
    double a_rel = 0.0;
    double b_rel = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (g > 0) {
            const double ratio = std::exp(log_risk[g] - log_risk[g - 1]);
            a_rel *= ratio;
            b_rel *= ratio * ratio;
        }
        if (groups[g].deaths > 0) {
            a_rel += static_cast<double>(groups[g].deaths);
            b_rel += static_cast<double>(groups[g].deaths);
        }
        for (Eigen::Index k = groups[g].begin; k < groups[g].end; ++k) {
            const auto row = order[static_cast<std::size_t>(k)];
            const double ek = std::exp(eta[row] - log_risk[g]);  // <= 1
            const double delta = events[static_cast<std::size_t>(row)] ? 1.0 : 0.0;
            const double first = ek * a_rel;
            out.grad[row] = -(delta - first) * inv_events;
            out.hess[row] = std::max(0.0, (first - ek * ek * b_rel) * inv_events);
        }
    }
    return out;
}

double neg_log_partial_likelihood(const Vector& theta, const Matrix& z, const Vector& times,
                                  const std::vector<bool>& events) {
    const RiskSets rs(times, events);
    const Vector eta = z.cols() == 0 ? Vector::Zero(z.rows()) : Vector(z * theta);
    return partial_likelihood_terms(rs, eta, false).loss;
}

std::pair<double, Vector> neg_log_partial_likelihood_with_gradient(const Vector& theta, const Matrix& z,
                                                                   const Vector& times,
                                                                   const std::vector<bool>& events) {
    const RiskSets rs(times, events);
    const Vector eta = z.cols() == 0 ? Vector::Zero(z.rows()) : Vector(z * theta);
    auto terms = partial_likelihood_terms(rs, eta, true);
    return {terms.loss, z.transpose() * terms.grad};
}

// ---------------------------------------------------------------------------
// Elastic-net coordinate descent

int CoxFit::n_nonzero() const {
    return static_cast<int>((theta.array() != 0.0).count());
}

namespace {

double penalty(const Vector& theta, double lambda, double l1_ratio) {
    return lambda * (l1_ratio * theta.lpNorm<1>() + 0.5 * (1.0 - l1_ratio) * theta.squaredNorm());
}

double soft_threshold(double u, double t) {
    if (u > t) return u - t;
    if (u < -t) return u + t;
    return 0.0;
}

}  // namespace

double coxnet_objective(const RiskSets& rs, const Matrix& z, const Vector& theta, double lambda, double l1_ratio) {
    const Vector eta = z.cols() == 0 ? Vector::Zero(z.rows()) : Vector(z * theta);
    return partial_likelihood_terms(rs, eta, false).loss + penalty(theta, lambda, l1_ratio);
}

CoxFit fit_coxnet(const Matrix& z, const RiskSets& rs, double lambda, double l1_ratio, const CoxnetOptions& options,
                  const Vector* warm_start) {
    const auto p = z.cols();
    const auto n = z.rows();
    CoxFit fit;
    fit.lambda = lambda;
    fit.l1_ratio = l1_ratio;
    fit.theta = warm_start != nullptr && warm_start->size() == p ? *warm_start : Vector::Zero(p);
    if (lambda < 0.0 || l1_ratio < 0.0 || l1_ratio > 1.0) {
        throw Error("coxnet needs lambda >= 0 and l1_ratio in [0, 1]");
    }
    const double l1 = lambda * l1_ratio;
    const double l2 = lambda * (1.0 - l1_ratio);

    Vector eta = p == 0 ? Vector::Zero(n) : Vector(z * fit.theta);
    PartialLikelihoodTerms terms = partial_likelihood_terms(rs, eta, true);
    double objective = terms.loss + penalty(fit.theta, lambda, l1_ratio);
    if (p == 0) {
        fit.converged = true;
        fit.objective = objective;
        return fit;
    }

    Vector theta_new(p);
    Vector delta(n);
    Matrix gram(p, p);
    Vector linear(p);
    Vector moved_slope(p);
    for (int iter = 1; iter <= options.max_iter; ++iter) {
        fit.n_iter = iter;
        // Quadratic model around eta in theta-space: 1/2 s'Qs + b's with
        // Q = Z' diag(hess) Z and b = Z' grad.
        const Matrix weighted = z.array().colwise() * terms.hess.array();
        gram.noalias() = z.transpose() * weighted;
        linear.noalias() = z.transpose() * terms.grad;
        theta_new = fit.theta;
        moved_slope.setZero();
        for (int sweep = 0; sweep < options.max_inner_sweeps; ++sweep) {
            double max_change = 0.0;
            for (Eigen::Index j = 0; j < p; ++j) {
                const double curvature = gram(j, j);
                const double denom = curvature + l2;
                double updated = 0.0;
                if (denom > 0.0) {
                    const double slope = linear[j] + moved_slope[j];
                    updated = soft_threshold(curvature * theta_new[j] - slope, l1) / denom;
                }
                const double change = updated - theta_new[j];
                if (change != 0.0) {
                    moved_slope.noalias() += change * gram.col(j);
                    theta_new[j] = updated;
                    max_change = std::max(max_change, std::abs(change));
                }
            }
            if (max_change < options.tol) {
                break;
            }
        }
        delta.noalias() = z * (theta_new - fit.theta);

        // Step halving keeps the penalized objective from increasing.
        Vector step = theta_new - fit.theta;
        double scale = 1.0;
        Vector candidate = theta_new;
        Vector candidate_eta = eta + delta;
        double candidate_obj = partial_likelihood_terms(rs, candidate_eta, false).loss +
                               penalty(candidate, lambda, l1_ratio);
        int halvings = 0;
        while (!(candidate_obj <= objective) && halvings < 50) {
            scale *= 0.5;
            ++halvings;
            candidate = fit.theta + scale * step;
            candidate_eta = eta + scale * delta;
            candidate_obj = partial_likelihood_terms(rs, candidate_eta, false).loss +
                            penalty(candidate, lambda, l1_ratio);
        }
        if (!(candidate_obj <= objective)) {
            // no descent along the step: already at the optimum to working precision
            fit.converged = step.lpNorm<Eigen::Infinity>() < std::sqrt(options.tol);
            break;
        }
        const double moved = (candidate - fit.theta).lpNorm<Eigen::Infinity>();
        fit.theta = candidate;
        eta = candidate_eta;
        objective = candidate_obj;
        if (moved < options.tol) {
            fit.converged = true;
            break;
        }
        terms = partial_likelihood_terms(rs, eta, true);
    }
    fit.objective = objective;
    return fit;
}

CoxFit fit_coxnet(const Matrix& z, const Vector& times, const std::vector<bool>& events, double lambda,
                  double l1_ratio, const CoxnetOptions& options) {
    const RiskSets rs(times, events);
    return fit_coxnet(z, rs, lambda, l1_ratio, options);
}

double lambda_max(const Matrix& z, const RiskSets& rs, double l1_ratio) {
    if (z.cols() == 0) {
        return 0.0;
    }
    const auto terms = partial_likelihood_terms(rs, Vector::Zero(z.rows()), true);
    const double g = (z.transpose() * terms.grad).lpNorm<Eigen::Infinity>();
    return g / std::max(l1_ratio, 1e-3);
}

double lambda_max(const Matrix& z, const Vector& times, const std::vector<bool>& events, double l1_ratio) {
    return lambda_max(z, RiskSets(times, events), l1_ratio);
}

std::vector<CoxFit> lambda_path(const Matrix& z, const Vector& times, const std::vector<bool>& events,
                                double l1_ratio, int n_lambdas, double min_ratio, const CoxnetOptions& options) {
    const RiskSets rs(times, events);
    const double top = lambda_max(z, rs, l1_ratio);
    std::vector<CoxFit> path;
    path.reserve(static_cast<std::size_t>(std::max(n_lambdas, 0)));
    Vector warm = Vector::Zero(z.cols());
    for (int k = 0; k < n_lambdas; ++k) {
        const double frac = n_lambdas == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n_lambdas - 1);
        const double lambda = top * std::pow(min_ratio, frac);
        auto fit = fit_coxnet(z, rs, lambda, l1_ratio, options, &warm);
        warm = fit.theta;
        path.push_back(std::move(fit));
    }
    return path;
}

// ---------------------------------------------------------------------------
// Breslow and survival prediction

StepFunction breslow_baseline(const Vector& eta, const Vector& times, const std::vector<bool>& events) {
    const RiskSets rs(times, events);
    const auto& order = rs.order();
    const auto& groups = rs.groups();
    const double shift = eta.size() > 0 ? eta.maxCoeff() : 0.0;
    std::vector<double> risk(groups.size());
    double suffix = 0.0;
    for (std::size_t g = groups.size(); g-- > 0;) {
        for (Eigen::Index k = groups[g].end; k-- > groups[g].begin;) {
            suffix += std::exp(eta[order[static_cast<std::size_t>(k)]] - shift);
        }
        risk[g] = suffix;
    }
    StepFunction out;
    out.left_value = 0.0;
    double h = 0.0;
    const double unshift = std::exp(-shift);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].deaths == 0) {
            continue;
        }
        h += static_cast<double>(groups[g].deaths) / risk[g] * unshift;
        out.breakpoints.push_back(times[order[static_cast<std::size_t>(groups[g].begin)]]);
        out.values.push_back(h);
    }
    return out;
}

StepFunction predict_survival(double eta, const StepFunction& baseline) {
    StepFunction out;
    const double scale = std::exp(eta);
    out.breakpoints = baseline.breakpoints;
    out.values.resize(baseline.values.size());
    for (std::size_t k = 0; k < baseline.values.size(); ++k) {
        out.values[k] = std::exp(-baseline.values[k] * scale);
    }
    out.left_value = std::exp(-baseline.left_value * scale);
    return out;
}

// ---------------------------------------------------------------------------
// IPCW concordance

IpcwConcordance::IpcwConcordance(const Vector& train_times, const std::vector<bool>& train_events,
                                 std::optional<double> tau)
    : censoring_(kaplan_meier(train_times, train_events, true)) {
    if (tau) {
        tau_ = *tau;
    } else {
        tau_ = std::numeric_limits<double>::infinity();
        double last_event = -std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < train_times.size(); ++i) {
            if (train_events[static_cast<std::size_t>(i)]) {
                last_event = std::max(last_event, train_times[i]);
            }
        }
        if (std::isfinite(last_event)) {
            tau_ = last_event;
        }
    }
}

double IpcwConcordance::weight(double t) const {
    const double g = censoring_.left_limit(t);
    return g > 0.0 ? 1.0 / (g * g) : 0.0;
}

namespace {

/// Fenwick tree of counts over dense ranks.
class CountTree {
public:
    explicit CountTree(std::size_t n) : tree_(n + 1, 0) {}
    void add(std::size_t rank) {
        for (std::size_t i = rank + 1; i < tree_.size(); i += i & (~i + 1)) {
            ++tree_[i];
        }
    }
    /// Number of inserted ranks < rank.
    long long below(std::size_t rank) const {
        long long s = 0;
        for (std::size_t i = rank; i > 0; i -= i & (~i + 1)) {
            s += tree_[i];
        }
        return s;
    }

private:
    std::vector<long long> tree_;
};

}  // namespace

ConcordanceResult IpcwConcordance::operator()(const Vector& times, const std::vector<bool>& events,
                                              const Vector& eta) const {
    const auto n = times.size();
    if (eta.size() != n || static_cast<Eigen::Index>(events.size()) != n) {
        throw SchemaMismatch("concordance inputs differ in length");
    }
    // dense ranks of eta
    std::vector<double> sorted_eta(eta.data(), eta.data() + n);
    std::sort(sorted_eta.begin(), sorted_eta.end());
    sorted_eta.erase(std::unique(sorted_eta.begin(), sorted_eta.end()), sorted_eta.end());
    std::vector<std::size_t> rank(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        rank[static_cast<std::size_t>(i)] = static_cast<std::size_t>(
            std::lower_bound(sorted_eta.begin(), sorted_eta.end(), eta[i]) - sorted_eta.begin());
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return times[a] > times[b]; });

    // Per-subject counts (exact small integers and halves), then a weighted
    // sum in index order.
    std::vector<double> concordant(static_cast<std::size_t>(n), 0.0);
    std::vector<double> comparable(static_cast<std::size_t>(n), 0.0);
    CountTree tree(sorted_eta.size());
    long long inserted = 0;
    std::size_t k = 0;
    while (k < order.size()) {
        std::size_t end = k;
        while (end < order.size() && times[order[end]] == times[order[k]]) {
            ++end;
        }
        for (std::size_t q = k; q < end; ++q) {
            const auto i = order[q];
            if (!events[static_cast<std::size_t>(i)] || !(times[i] < tau_)) {
                continue;
            }
            const auto r = rank[static_cast<std::size_t>(i)];
            const long long lower = tree.below(r);
            const long long tied = tree.below(r + 1) - lower;
            concordant[static_cast<std::size_t>(i)] = static_cast<double>(lower) + 0.5 * static_cast<double>(tied);
            comparable[static_cast<std::size_t>(i)] = static_cast<double>(inserted);
        }
        for (std::size_t q = k; q < end; ++q) {
            tree.add(rank[static_cast<std::size_t>(order[q])]);
            ++inserted;
        }
        k = end;
    }

    ConcordanceResult out;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (comparable[ui] == 0.0) {
            continue;
        }
        const double w = weight(times[i]);
        if (w == 0.0) {
            continue;
        }
        out.concordant += w * concordant[ui];
        out.comparable += w * comparable[ui];
        out.n_pairs += static_cast<std::size_t>(comparable[ui]);
    }
    if (out.comparable > 0.0) {
        out.ci = out.concordant / out.comparable;
    } else {
        out.ci = 0.5;
        out.no_comparable_pairs = true;
    }
    return out;
}

ConcordanceResult concordance_ipcw(const Vector& train_times, const std::vector<bool>& train_events,
                                   const Vector& test_times, const std::vector<bool>& test_events,
                                   const Vector& test_eta, std::optional<double> tau) {
    return IpcwConcordance(train_times, train_events, tau)(test_times, test_events, test_eta);
}

}  // namespace survsr
