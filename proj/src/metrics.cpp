#include "survsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "survsr/error.hpp"

namespace survsr {

bool dominates(const FrontPoint& a, const FrontPoint& b) noexcept {
    const double na = a.neg_ci();
    const double nb = b.neg_ci();
    return na <= nb && a.dims <= b.dims && (na < nb || a.dims < b.dims);
}

ParetoFront filter_nondominated(const ParetoFront& front) {
    ParetoFront out;
    out.split = front.split;
    const auto& pts = front.points;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool keep = true;
        for (std::size_t j = 0; j < pts.size() && keep; ++j) {
            if (j == i) {
                continue;
            }
            if (dominates(pts[j], pts[i])) {
                keep = false;
            } else if (j < i && pts[j].dims == pts[i].dims && pts[j].ci == pts[i].ci) {
                keep = false;
            }
        }
        if (keep) {
            out.points.push_back(pts[i]);
        }
    }
    std::stable_sort(out.points.begin(), out.points.end(),
                     [](const FrontPoint& a, const FrontPoint& b) { return a.dims < b.dims; });
    return out;
}

double hypervolume2d(const ParetoFront& front, const HVConfig& config) {
    struct P {
        double a;
        double b;
    };
    std::vector<P> pts;
    pts.reserve(front.points.size());
    for (const auto& p : front.points) {
        const double ci = std::clamp(p.ci, 0.0, 1.0);
        pts.push_back({1.0 - ci, static_cast<double>(p.dims) / config.dims_normalizer});
    }
    std::sort(pts.begin(), pts.end(), [](const P& x, const P& y) { return x.a < y.a || (x.a == y.a && x.b < y.b); });
    double area = 0.0;
    double best_b = config.ref_dims;
    for (const auto& p : pts) {
        if (p.a >= config.ref_negci || p.b >= best_b) {
            continue;
        }
        area += (config.ref_negci - p.a) * (best_b - p.b);
        best_b = p.b;
    }
    return 100.0 * area;
}

ParetoFront filter_up_to_k(const ParetoFront& front, int k) {
    ParetoFront out;
    out.split = front.split;
    for (const auto& p : front.points) {
        if (p.dims <= k) {
            out.points.push_back(p);
        }
    }
    return out;
}

std::optional<FrontPoint> select_exactly_k(const ParetoFront& front, int k) {
    std::optional<FrontPoint> best;
    for (const auto& p : front.points) {
        if (p.dims == k && (!best || p.ci > best->ci)) {
            best = p;
        }
    }
    return best;
}

FrontPoint select_max(const ParetoFront& front) {
    if (front.points.empty()) {
        throw Error("select_max on an empty front");
    }
    const FrontPoint* best = &front.points.front();
    for (const auto& p : front.points) {
        if (p.dims > best->dims || (p.dims == best->dims && p.ci > best->ci)) {
            best = &p;
        }
    }
    return *best;
}

Summary aggregate_repetitions(std::vector<double> values) {
    if (values.empty()) {
        throw Error("aggregation needs at least one value");
    }
    std::sort(values.begin(), values.end());
    const auto at = [&](double p) {
        return values[static_cast<std::size_t>(std::floor(p * static_cast<double>(values.size() - 1)))];
    };
    Summary s;
    s.count = values.size();
    s.median = at(0.5);
    s.q1 = at(0.25);
    s.q3 = at(0.75);
    return s;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = std::min(x.size(), y.size());
    if (n < 2) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace survsr
