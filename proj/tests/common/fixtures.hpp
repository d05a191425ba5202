#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "survsr/data.hpp"
#include "survsr/random.hpp"

namespace fixtures {

/// Random right-censored sample. With `ties`, times are small integers so
/// that ties in time are frequent. At least one event is guaranteed.
inline survsr::SurvivalDataset random_dataset(survsr::Rng& rng, int n, int d, double censor_prob = 0.3,
                                              bool ties = false) {
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    survsr::SurvivalDataset ds;
    ds.features.resize(n, d);
    ds.times.resize(n);
    ds.events.resize(static_cast<std::size_t>(n));
    const int levels = std::max(2, n / 3);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            ds.features(i, j) = normal(rng);
        }
        ds.times[i] = ties ? 1.0 + static_cast<double>(std::uniform_int_distribution<int>(0, levels - 1)(rng))
                           : 0.01 + unit(rng) * 10.0;
        ds.events[static_cast<std::size_t>(i)] = unit(rng) >= censor_prob;
    }
    ds.events[0] = true;
    for (int j = 0; j < d; ++j) {
        ds.columns.push_back({"x" + std::to_string(j), survsr::ColumnKind::continuous, "x" + std::to_string(j), {}});
    }
    return ds;
}

/// Exponential survival with hazard exp(z * theta) and independent exponential
/// censoring with rate `censor_rate` (0 for none).
inline survsr::SurvivalDataset cox_dataset(survsr::Rng& rng, int n, const Eigen::VectorXd& theta,
                                           double censor_rate = 0.2) {
    std::normal_distribution<double> normal;
    std::exponential_distribution<double> expo(1.0);
    const auto d = static_cast<int>(theta.size());
    survsr::SurvivalDataset ds;
    ds.features.resize(n, d);
    ds.times.resize(n);
    ds.events.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            ds.features(i, j) = normal(rng);
        }
        const double rate = std::exp(ds.features.row(i).dot(theta));
        const double t = expo(rng) / rate;
        const double c = censor_rate > 0.0 ? expo(rng) / censor_rate : INFINITY;
        ds.times[i] = std::min(t, c);
        ds.events[static_cast<std::size_t>(i)] = t <= c;
    }
    ds.events[0] = true;
    for (int j = 0; j < d; ++j) {
        ds.columns.push_back({"x" + std::to_string(j), survsr::ColumnKind::continuous, "x" + std::to_string(j), {}});
    }
    return ds;
}

}  // namespace fixtures
