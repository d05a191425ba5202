#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "survsr/coxcore.hpp"

using namespace survsr;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) {
        out[i++] = x;
    }
    return out;
}

}  // namespace

TEST_CASE("kaplan_meier hand values") {
    const auto s = kaplan_meier(vec({1, 2, 3}), {true, false, true});
    CHECK(s(0.5) == 1.0);
    CHECK(s(1.0) == doctest::Approx(2.0 / 3.0));
    CHECK(s(2.0) == doctest::Approx(2.0 / 3.0));
    CHECK(s(3.0) == 0.0);
    CHECK(s.left_limit(1.0) == 1.0);
}

TEST_CASE("kaplan_meier with no events is flat at one") {
    const auto s = kaplan_meier(vec({1, 2, 3}), {false, false, false});
    for (double t : {0.1, 1.0, 2.5, 3.0, 100.0}) {
        CHECK(s(t) == 1.0);
    }
}

TEST_CASE("kaplan_meier single subject") {
    const auto s = kaplan_meier(vec({5}), {true});
    CHECK(s(4.999) == 1.0);
    CHECK(s(5.0) == 0.0);
    CHECK(s(6.0) == 0.0);
}

TEST_CASE("kaplan_meier agrees with the product-limit oracle, both directions, with ties") {
    Rng rng = make_rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto ds = fixtures::random_dataset(rng, 5 + trial % 30, 1, 0.4, trial % 2 == 0);
        for (bool censoring : {false, true}) {
            const auto s = kaplan_meier(ds.times, ds.events, censoring);
            double previous = 1.0;
            for (Eigen::Index i = 0; i < ds.times.size(); ++i) {
                const double t = ds.times[i];
                CHECK(s(t) == doctest::Approx(oracle::kaplan_meier(ds.times, ds.events, censoring, t, false)));
                CHECK(s.left_limit(t) ==
                      doctest::Approx(oracle::kaplan_meier(ds.times, ds.events, censoring, t, true)));
            }
            for (double t = 0.0; t < 12.0; t += 0.25) {
                const double v = s(t);
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                CHECK(v <= previous);
                previous = v;
            }
            CHECK(s(0.0) == 1.0);
        }
    }
}

TEST_CASE("partial likelihood at zero with distinct uncensored times") {
    const Matrix z = Matrix::Random(3, 2);
    const double v = neg_log_partial_likelihood(Vector::Zero(2), z, vec({1, 2, 3}), {true, true, true});
    CHECK(v == doctest::Approx((std::log(3.0) + std::log(2.0) + std::log(1.0)) / 3.0));
}

TEST_CASE("partial likelihood without covariates is finite") {
    const Matrix z(4, 0);
    const double v = neg_log_partial_likelihood(Vector(0), z, vec({1, 2, 3, 4}), {true, false, true, true});
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx((std::log(4.0) + std::log(2.0) + 0.0) / 3.0));
}

TEST_CASE("partial likelihood matches the direct sum with ties") {
    Rng rng = make_rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        const auto ds = fixtures::random_dataset(rng, 10 + trial, 3, 0.3, true);
        const Vector theta = Vector::Random(3) * 2.0;
        const double v = neg_log_partial_likelihood(theta, ds.features, ds.times, ds.events);
        CHECK(v == doctest::Approx(oracle::neg_log_partial_likelihood(theta, ds.features, ds.times, ds.events))
                       .epsilon(1e-12));
    }
}

TEST_CASE("partial likelihood gradient matches central differences") {
    Rng rng = make_rng(5);
    std::uniform_int_distribution<int> pick_n(2, 50);
    std::uniform_int_distribution<int> pick_p(1, 5);
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        const int p = pick_p(rng);
        const auto ds = fixtures::random_dataset(rng, pick_n(rng), p, 0.3, trial % 3 == 0);
        const Vector theta = Vector::Random(p);
        const auto [loss, grad] = neg_log_partial_likelihood_with_gradient(theta, ds.features, ds.times, ds.events);
        CHECK(loss == doctest::Approx(neg_log_partial_likelihood(theta, ds.features, ds.times, ds.events)));
        Vector fd(p);
        for (int j = 0; j < p; ++j) {
            Vector up = theta;
            Vector down = theta;
            up[j] += h;
            down[j] -= h;
            fd[j] = (neg_log_partial_likelihood(up, ds.features, ds.times, ds.events) -
                     neg_log_partial_likelihood(down, ds.features, ds.times, ds.events)) /
                    (2.0 * h);
        }
        const double rel = (grad - fd).lpNorm<Eigen::Infinity>() / std::max(fd.lpNorm<Eigen::Infinity>(), 1e-3);
        CHECK(rel < 1e-6);
    }
}

TEST_CASE("partial likelihood stays finite for huge linear predictors") {
    Rng rng = make_rng(9);
    const auto ds = fixtures::random_dataset(rng, 30, 2);
    const Vector theta = vec({800.0, -900.0});
    const auto [loss, grad] = neg_log_partial_likelihood_with_gradient(theta, ds.features, ds.times, ds.events);
    CHECK(std::isfinite(loss));
    CHECK(grad.allFinite());
}

TEST_CASE("fit_coxnet at tiny lambda matches the grid-search oracle") {
    Rng rng = make_rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        const auto ds = fixtures::cox_dataset(rng, 80, vec({0.8, -0.5}), 0.3);
        const double lambda = 1e-6;
        const auto fit = fit_coxnet(ds.features, ds.times, ds.events, lambda, 0.5);
        const auto [a, b] = oracle::grid_minimize_2d([&](double x, double y) {
            return oracle::penalized(vec({x, y}), ds.features, ds.times, ds.events, lambda, 0.5);
        });
        CHECK(fit.converged);
        CHECK(std::abs(fit.theta[0] - a) < 1e-3);
        CHECK(std::abs(fit.theta[1] - b) < 1e-3);
    }
}

TEST_CASE("fit_coxnet at or above lambda_max returns exact zeros") {
    Rng rng = make_rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        const auto ds = fixtures::random_dataset(rng, 40, 4, 0.3, trial % 2 == 0);
        for (double l1 : {0.1, 0.5, 1.0}) {
            const double lmax = lambda_max(ds.features, ds.times, ds.events, l1);
            for (double factor : {1.0, 1.5, 10.0}) {
                const auto fit = fit_coxnet(ds.features, ds.times, ds.events, lmax * factor, l1);
                CHECK(fit.n_nonzero() == 0);
                CHECK((fit.theta.array() == 0.0).all());
            }
        }
    }
}

TEST_CASE("fit_coxnet with a duplicated column splits the coefficient") {
    Rng rng = make_rng(23);
    const auto ds = fixtures::cox_dataset(rng, 300, vec({1.0}), 0.2);
    Matrix doubled(ds.rows(), 2);
    doubled << ds.features, ds.features;
    const double lambda = 1e-3;
    const auto single = fit_coxnet(ds.features, ds.times, ds.events, lambda, 0.5);
    const auto twin = fit_coxnet(doubled, ds.times, ds.events, lambda, 0.5);
    CHECK(twin.theta.allFinite());
    CHECK(std::abs(twin.theta.sum() - single.theta[0]) < 1e-3);
}

TEST_CASE("coordinate descent never increases the penalized objective") {
    Rng rng = make_rng(29);
    for (int trial = 0; trial < 10; ++trial) {
        const auto ds = fixtures::random_dataset(rng, 60, 4, 0.3, trial % 2 == 0);
        const RiskSets rs(ds.times, ds.events);
        double previous = coxnet_objective(rs, ds.features, Vector::Zero(4), 1e-3, 0.5);
        for (int iters = 1; iters <= 12; ++iters) {
            CoxnetOptions options;
            options.max_iter = iters;
            const auto fit = fit_coxnet(ds.features, rs, 1e-3, 0.5, options);
            CHECK(fit.objective <= previous + 1e-10);
            CHECK(fit.objective == doctest::Approx(coxnet_objective(rs, ds.features, fit.theta, 1e-3, 0.5)));
            previous = fit.objective;
        }
    }
}

TEST_CASE("lambda_path shape") {
    Rng rng = make_rng(31);
    int monotone_steps = 0;
    int steps = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto ds = fixtures::cox_dataset(rng, 100, vec({1.0, -0.5, 0.25, 0.0, 0.0}), 0.3);
        const auto path = lambda_path(ds.features, ds.times, ds.events, 0.5, trial == 0 ? 1000 : 200);
        if (trial == 0) {
            CHECK(path.size() == 1000);
        }
        CHECK(path.front().n_nonzero() == 0);
        for (std::size_t k = 1; k < path.size(); ++k) {
            CHECK(path[k].lambda < path[k - 1].lambda);
            ++steps;
            monotone_steps += path[k].n_nonzero() >= path[k - 1].n_nonzero() ? 1 : 0;
        }
        CHECK(path.back().lambda == doctest::Approx(path.front().lambda * 1e-3));
    }
    CHECK(monotone_steps >= 0.95 * steps);
}

TEST_CASE("fit_coxnet recovers coefficient signs") {
    Rng rng = make_rng(37);
    int recovered = 0;
    const Vector truth = vec({1.0, -0.5, 0.75});
    for (int trial = 0; trial < 20; ++trial) {
        const auto ds = fixtures::cox_dataset(rng, 2000, truth, 0.3);
        const auto fit = fit_coxnet(ds.features, ds.times, ds.events, 1e-6, 0.5);
        bool ok = true;
        for (int j = 0; j < 3; ++j) {
            ok = ok && (fit.theta[j] > 0.0) == (truth[j] > 0.0);
        }
        recovered += ok ? 1 : 0;
    }
    CHECK(recovered >= 19);
}

TEST_CASE("breslow baseline hand values") {
    const auto h = breslow_baseline(Vector::Zero(2), vec({1, 2}), {true, true});
    CHECK(h(0.5) == 0.0);
    CHECK(h(1.0) == doctest::Approx(0.5));
    CHECK(h(2.0) == doctest::Approx(1.5));
}

TEST_CASE("breslow baseline without events is zero") {
    const auto h = breslow_baseline(Vector::Zero(3), vec({1, 2, 3}), {false, false, false});
    for (double t : {0.5, 1.0, 3.0, 10.0}) {
        CHECK(h(t) == 0.0);
    }
}

TEST_CASE("breslow baseline shift identity") {
    Rng rng = make_rng(41);
    const auto ds = fixtures::random_dataset(rng, 25, 1, 0.3, true);
    const Vector eta = ds.features.col(0);
    const double c = 0.7;
    const auto h = breslow_baseline(eta, ds.times, ds.events);
    const auto hc = breslow_baseline((eta.array() + c).matrix(), ds.times, ds.events);
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        const double t = ds.times[i];
        CHECK(hc(t) == doctest::Approx(h(t) * std::exp(-c)));
        CHECK(hc(t) * std::exp(eta[i] + c) == doctest::Approx(h(t) * std::exp(eta[i])));
    }
}

TEST_CASE("predict_survival limits and monotonicity") {
    Rng rng = make_rng(43);
    const auto ds = fixtures::cox_dataset(rng, 200, vec({0.5, -1.0}), 0.2);
    const auto fit = fit_coxnet(ds.features, ds.times, ds.events, 1e-4, 0.5);
    const Vector eta = ds.features * fit.theta;
    const auto h0 = breslow_baseline(eta, ds.times, ds.events);
    const auto low = predict_survival(-700.0, h0);
    for (double t : h0.breakpoints) {
        CHECK(low(t) == doctest::Approx(1.0));
    }
    const StepFunction zero{{1.0, 2.0}, {0.0, 0.0}, 0.0};
    CHECK(predict_survival(3.0, zero)(1.5) == 1.0);
    for (Eigen::Index i = 0; i < 20; ++i) {
        const auto s = predict_survival(eta[i], h0);
        double previous = 1.0;
        for (double t = 0.0; t < 5.0; t += 0.05) {
            const double v = s(t);
            CHECK(v <= previous);
            CHECK(v >= 0.0);
            previous = v;
        }
    }
}

TEST_CASE("IPCW concordance simple cases") {
    const Vector t = vec({1, 2, 3, 4, 5});
    const std::vector<bool> e(5, true);
    const auto reversed = concordance_ipcw(t, e, t, e, vec({5, 4, 3, 2, 1}));
    CHECK(reversed.ci == 1.0);
    const auto flat = concordance_ipcw(t, e, t, e, vec({1, 1, 1, 1, 1}));
    CHECK(flat.ci == 0.5);
}

TEST_CASE("IPCW concordance without comparable pairs is one half with a flag") {
    const Vector t = vec({1, 2, 3});
    const auto r = concordance_ipcw(t, {true, false, false}, vec({2, 3}), {false, false}, vec({1, 2}));
    CHECK(r.ci == 0.5);
    CHECK(r.no_comparable_pairs);
}

TEST_CASE("IPCW concordance equals pair enumeration exactly") {
    Rng rng = make_rng(47);
    for (int trial = 0; trial < 100; ++trial) {
        const bool ties = trial % 2 == 0;
        const auto train = fixtures::random_dataset(rng, 50, 1, 0.35, ties);
        const auto test = fixtures::random_dataset(rng, 50, 1, 0.35, ties);
        Vector eta = test.features.col(0);
        if (trial % 4 == 1) {
            eta = eta.array().round();  // tied scores
        }
        const IpcwConcordance ci(train.times, train.events);
        const auto r = ci(test.times, test.events, eta);
        const auto o = oracle::concordance(train.times, train.events, test.times, test.events, eta,
                                           oracle::max_event_time(train.times, train.events));
        CHECK(r.ci == o.ci);
        CHECK(r.concordant == o.concordant);
        CHECK(r.comparable == o.comparable);
    }
}

TEST_CASE("IPCW concordance antisymmetry and rank invariance") {
    Rng rng = make_rng(53);
    for (int trial = 0; trial < 100; ++trial) {
        const auto ds = fixtures::random_dataset(rng, 40, 1, 0.3);
        const Vector eta = ds.features.col(0);
        const IpcwConcordance ci(ds.times, ds.events);
        const double base = ci(ds.times, ds.events, eta).ci;
        CHECK(ci(ds.times, ds.events, -eta).ci == doctest::Approx(1.0 - base).epsilon(1e-12));
        const Vector transformed = (eta.array() * 3.0 + 1.0).exp();
        CHECK(ci(ds.times, ds.events, transformed).ci == base);
    }
}

TEST_CASE("step function csv") {
    const StepFunction s{{1.0, 2.0}, {0.5, 0.25}, 1.0};
    CHECK(s.to_csv() == "time,value\n1,0.5\n2,0.25\n");
}
