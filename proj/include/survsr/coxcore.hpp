#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "survsr/data.hpp"

namespace survsr {

/// Right-continuous step function: `left_value` before the first breakpoint,
/// `values[k]` on [breakpoints[k], breakpoints[k+1]).
struct StepFunction {
    std::vector<double> breakpoints;
    std::vector<double> values;
    double left_value = 0.0;

    double operator()(double t) const;
    /// Value just before t.
    double left_limit(double t) const;
    /// `time,value` rows with a header line.
    std::string to_csv() const;
};

/// Product-limit estimator. With `censoring_distribution` the roles of events
/// and censorings swap (estimate of the censoring survival G). At tied times
/// events precede censorings.
StepFunction kaplan_meier(const Vector& times, const std::vector<bool>& events, bool censoring_distribution = false);

/// Time-sorted layout of a survival sample shared by the Cox routines.
/// Risk sets follow the Breslow convention: R(t_i) = { j : t_j >= t_i }.
class RiskSets {
public:
    RiskSets(const Vector& times, const std::vector<bool>& events);

    Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(order_.size()); }
    std::size_t n_events() const noexcept { return n_events_; }
    /// Row indices sorted by ascending time.
    const std::vector<Eigen::Index>& order() const noexcept { return order_; }

    struct Group {
        Eigen::Index begin;  // into order()
        Eigen::Index end;
        int deaths;
    };
    /// One group per distinct time, ascending.
    const std::vector<Group>& groups() const noexcept { return groups_; }
    const std::vector<bool>& events() const noexcept { return events_; }

private:
    std::vector<Eigen::Index> order_;
    std::vector<Group> groups_;
    std::vector<bool> events_;
    std::size_t n_events_ = 0;
};

/// Loss, gradient and diagonal Hessian of the normalized negative log partial
/// likelihood as functions of the linear predictor eta.
struct PartialLikelihoodTerms {
    double loss = 0.0;
    Vector grad;  // d loss / d eta
    Vector hess;  // diagonal of d2 loss / d eta2
};

PartialLikelihoodTerms partial_likelihood_terms(const RiskSets& rs, const Vector& eta, bool with_derivatives = true);

/// -(1 / n_events) log L_p(theta), Breslow ties.
double neg_log_partial_likelihood(const Vector& theta, const Matrix& z, const Vector& times,
                                  const std::vector<bool>& events);
std::pair<double, Vector> neg_log_partial_likelihood_with_gradient(const Vector& theta, const Matrix& z,
                                                                   const Vector& times,
                                                                   const std::vector<bool>& events);

struct CoxFit {
    Vector theta;
    double lambda = 0.0;
    double l1_ratio = 0.5;
    bool converged = false;
    int n_iter = 0;
    /// Penalized objective at theta.
    double objective = 0.0;

    int n_nonzero() const;
};

struct CoxnetOptions {
    double tol = 1e-7;
    int max_iter = 100;
    int max_inner_sweeps = 1000;
};

/// Penalized objective: loss + lambda (l1_ratio |theta|_1 + (1 - l1_ratio)/2 |theta|_2^2).
double coxnet_objective(const RiskSets& rs, const Matrix& z, const Vector& theta, double lambda, double l1_ratio);

/// Cyclic coordinate descent on a reweighted quadratic approximation with soft
/// thresholding and step halving. `warm_start` seeds theta.
CoxFit fit_coxnet(const Matrix& z, const RiskSets& rs, double lambda, double l1_ratio,
                  const CoxnetOptions& options = {}, const Vector* warm_start = nullptr);
CoxFit fit_coxnet(const Matrix& z, const Vector& times, const std::vector<bool>& events, double lambda,
                  double l1_ratio, const CoxnetOptions& options = {});

/// Smallest lambda with an all-zero solution.
double lambda_max(const Matrix& z, const RiskSets& rs, double l1_ratio);
double lambda_max(const Matrix& z, const Vector& times, const std::vector<bool>& events, double l1_ratio);

/// Warm-started fits on a log-spaced grid from lambda_max down to
/// lambda_max * min_ratio.
std::vector<CoxFit> lambda_path(const Matrix& z, const Vector& times, const std::vector<bool>& events,
                                double l1_ratio = 0.5, int n_lambdas = 1000, double min_ratio = 1e-3,
                                const CoxnetOptions& options = {});

/// Breslow cumulative baseline hazard.
StepFunction breslow_baseline(const Vector& eta, const Vector& times, const std::vector<bool>& events);

/// S(t | eta) = exp(-H0(t) exp(eta)).
StepFunction predict_survival(double eta, const StepFunction& baseline);

struct ConcordanceResult {
    double ci = 0.5;
    double concordant = 0.0;  // weighted
    double comparable = 0.0;  // weighted
    std::size_t n_pairs = 0;
    /// Set when no comparable pair exists; ci is 0.5 then.
    bool no_comparable_pairs = false;
};

/// Uno-style concordance with inverse-probability-of-censoring weights.
/// The censoring survival G is estimated once from the training sample;
/// comparable pairs have delta_i = 1, t_i < t_j and t_i < tau, weighted by
/// G(t_i-)^-2. Subjects with G(t_i-) = 0 contribute no pairs.
class IpcwConcordance {
public:
    /// `tau` defaults to the largest training event time.
    IpcwConcordance(const Vector& train_times, const std::vector<bool>& train_events,
                    std::optional<double> tau = std::nullopt);

    ConcordanceResult operator()(const Vector& times, const std::vector<bool>& events, const Vector& eta) const;

    double tau() const noexcept { return tau_; }
    const StepFunction& censoring_survival() const noexcept { return censoring_; }
    /// G(t-)^-2, or 0 when G(t-) = 0.
    double weight(double t) const;

private:
    StepFunction censoring_;
    double tau_ = 0.0;
};

ConcordanceResult concordance_ipcw(const Vector& train_times, const std::vector<bool>& train_events,
                                   const Vector& test_times, const std::vector<bool>& test_events,
                                   const Vector& test_eta, std::optional<double> tau = std::nullopt);

}  // namespace survsr
