#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "survsr/metrics.hpp"

using namespace survsr;

namespace {

ParetoFront front_of(std::initializer_list<std::pair<int, double>> pts) {
    ParetoFront f;
    std::size_t k = 0;
    for (auto [dims, ci] : pts) {
        f.points.push_back(FrontPoint{dims, ci, k++, 1});
    }
    return f;
}

/// Random nondominated front: dims strictly increasing with CI strictly increasing.
ParetoFront random_front(std::mt19937_64& rng, int size, int d) {
    std::vector<int> dims(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        dims[static_cast<std::size_t>(j)] = j;
    }
    std::shuffle(dims.begin(), dims.end(), rng);
    dims.resize(static_cast<std::size_t>(size));
    std::sort(dims.begin(), dims.end());
    std::vector<double> ci(static_cast<std::size_t>(size));
    std::uniform_real_distribution<double> u(0.5, 1.0);
    for (auto& c : ci) {
        c = u(rng);
    }
    std::sort(ci.begin(), ci.end());
    ParetoFront f;
    for (int k = 0; k < size; ++k) {
        f.points.push_back(FrontPoint{dims[static_cast<std::size_t>(k)], ci[static_cast<std::size_t>(k)],
                                      static_cast<std::size_t>(k), 1});
    }
    return f;
}

}  // namespace

TEST_CASE("hypervolume of single points") {
    const HVConfig unit{};
    CHECK(hypervolume2d(front_of({{0, 1.0}}), unit) == doctest::Approx(100.0));
    CHECK(hypervolume2d(front_of({{1, 0.5}}), HVConfig{2.0}) == doctest::Approx(25.0));
    CHECK(hypervolume2d(ParetoFront{}, unit) == 0.0);
    CHECK(hypervolume2d(front_of({{1, 0.0}}), unit) == 0.0);
}

TEST_CASE("hypervolume matches a Monte-Carlo estimate") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 25;
        const auto f = random_front(rng, 20, d);
        std::vector<std::pair<double, double>> pts;
        for (const auto& p : f.points) {
            pts.emplace_back(1.0 - p.ci, static_cast<double>(p.dims) / d);
        }
        const double exact = hypervolume2d(f, HVConfig{static_cast<double>(d)});
        CHECK(std::abs(exact - oracle::monte_carlo_hv(pts, 1000000, 100 + static_cast<std::uint64_t>(trial))) < 0.5);
    }
}

TEST_CASE("hypervolume never decreases when a nondominated point is added") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int d = 30;
        auto f = random_front(rng, 8, d);
        const HVConfig hv{static_cast<double>(d)};
        const double before = hypervolume2d(f, hv);
        std::uniform_int_distribution<int> pick_dims(0, d - 1);
        std::uniform_real_distribution<double> pick_ci(0.5, 1.0);
        const FrontPoint extra{pick_dims(rng), pick_ci(rng), 99, 1};
        const bool dominated = std::any_of(f.points.begin(), f.points.end(),
                                           [&](const FrontPoint& p) { return dominates(p, extra); });
        f.points.push_back(extra);
        if (!dominated) {
            CHECK(hypervolume2d(f, hv) >= before - 1e-12);
        } else {
            CHECK(hypervolume2d(f, hv) == doctest::Approx(before));
        }
    }
}

TEST_CASE("hypervolume respects weak dominance between fronts") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        const int d = 20;
        const auto b = random_front(rng, 6, d);
        ParetoFront a = b;
        std::uniform_real_distribution<double> bump(0.0, 0.05);
        for (auto& p : a.points) {
            p.ci = std::min(1.0, p.ci + bump(rng));
            p.dims = std::max(0, p.dims - (bump(rng) > 0.025 ? 1 : 0));
        }
        const HVConfig hv{static_cast<double>(d)};
        CHECK(hypervolume2d(a, hv) >= hypervolume2d(b, hv) - 1e-12);
    }
}

TEST_CASE("filter_nondominated") {
    const auto f = front_of({{3, 0.7}, {1, 0.6}, {2, 0.55}, {5, 0.7}, {1, 0.6}});
    const auto nd = filter_nondominated(f);
    REQUIRE(nd.points.size() == 2);
    CHECK(nd.points[0].dims == 1);
    CHECK(nd.points[0].model_index == 1);
    CHECK(nd.points[1].dims == 3);
    for (const auto& p : nd.points) {
        for (const auto& q : nd.points) {
            CHECK_FALSE(dominates(p, q));
        }
    }
}

TEST_CASE("front filters by dimensionality") {
    const auto f = front_of({{1, 0.6}, {3, 0.7}, {5, 0.8}});
    const auto up = filter_up_to_k(f, 3);
    REQUIRE(up.points.size() == 2);
    CHECK(up.points[0].dims == 1);
    CHECK(up.points[1].dims == 3);
    CHECK(filter_up_to_k(f, std::numeric_limits<int>::max()).points.size() == 3);
    CHECK_FALSE(select_exactly_k(f, 4).has_value());
    REQUIRE(select_exactly_k(f, 3).has_value());
    CHECK(select_exactly_k(f, 3)->ci == 0.7);
    CHECK(select_max(f).dims == 5);
    CHECK_THROWS(select_max(ParetoFront{}));
}

TEST_CASE("aggregate_repetitions") {
    const auto s = aggregate_repetitions({3.0, 1.0, 2.0});
    CHECK(s.median == 2.0);
    CHECK(s.count == 3);
    const auto one = aggregate_repetitions({0.7});
    CHECK(one.median == 0.7);
    CHECK(one.q3 - one.q1 == 0.0);
    CHECK(aggregate_repetitions(std::vector<double>(50, 0.123456789)).median == 0.123456789);
    CHECK(aggregate_repetitions({4.0, 1.0, 3.0, 2.0}).median == 2.0);
    CHECK_THROWS(aggregate_repetitions({}));

    std::mt19937_64 rng(17);
    std::vector<double> v(51);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& x : v) {
        x = u(rng);
    }
    const auto base = aggregate_repetitions(v);
    for (int k = 0; k < 20; ++k) {
        std::shuffle(v.begin(), v.end(), rng);
        const auto s2 = aggregate_repetitions(v);
        CHECK(s2.median == base.median);
        CHECK(s2.q1 == base.q1);
        CHECK(s2.q3 == base.q3);
    }
}

TEST_CASE("pearson") {
    CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
    CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(std::isnan(pearson({1, 1, 1}, {1, 2, 3})));
    CHECK(std::isnan(pearson({1}, {2})));
}
