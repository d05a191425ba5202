#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace survsr {

/// One model on a front. `model_index` refers into the producing method's
/// model list.
struct FrontPoint {
    int dims = 0;
    double ci = 0.5;
    std::size_t model_index = 0;
    /// Number of expressions (SR) or leaves (ST); 0 when not meaningful.
    int n_terms = 0;

    double neg_ci() const noexcept { return 1.0 - ci; }

    friend bool operator==(const FrontPoint&, const FrontPoint&) = default;
};

struct ParetoFront {
    std::vector<FrontPoint> points;
    std::string split = "train";
};

/// a dominates b under (min 1 - ci, min dims).
bool dominates(const FrontPoint& a, const FrontPoint& b) noexcept;

/// Nondominated subset sorted by dims; exact duplicates keep the first occurrence.
ParetoFront filter_nondominated(const ParetoFront& front);

/// Objectives map to (1 - ci, dims / dims_normalizer); the reference point
/// defaults to (1, 1).
struct HVConfig {
    double dims_normalizer = 1.0;
    double ref_negci = 1.0;
    double ref_dims = 1.0;
};

/// Exact 2-D hypervolume, scaled by 100. Empty front gives 0.
double hypervolume2d(const ParetoFront& front, const HVConfig& config);

ParetoFront filter_up_to_k(const ParetoFront& front, int k);
std::optional<FrontPoint> select_exactly_k(const ParetoFront& front, int k);
/// Highest-dims point; throws on an empty front.
FrontPoint select_max(const ParetoFront& front);

struct Summary {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    std::size_t count = 0;
};

/// Lower median and lower-rank quartiles (element floor(p (n - 1)) of the
/// sorted values). Throws on empty input.
Summary aggregate_repetitions(std::vector<double> values);

/// Pearson correlation; NaN when either side has zero variance or n < 2.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace survsr
