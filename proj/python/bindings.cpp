#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "survsr/baselines.hpp"
#include "survsr/cli.hpp"
#include "survsr/coxcore.hpp"
#include "survsr/data.hpp"
#include "survsr/error.hpp"
#include "survsr/exprtree.hpp"
#include "survsr/metrics.hpp"
#include "survsr/multimodel.hpp"

namespace py = pybind11;
using namespace survsr;

namespace {

std::vector<bool> to_events(const std::vector<int>& events) { return {events.begin(), events.end()}; }

SurvivalDataset make_dataset(const Matrix& x, const Vector& times, const std::vector<int>& events) {
    SurvivalDataset ds;
    ds.features = x;
    ds.times = times;
    ds.events = to_events(events);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        ColumnInfo info;
        info.name = "x" + std::to_string(j);
        info.source = info.name;
        ds.columns.push_back(info);
    }
    ds.validate();
    return ds;
}

py::dict front_dict(const ParetoFront& front) {
    std::vector<int> dims;
    std::vector<double> ci;
    std::vector<int> n_terms;
    for (const auto& p : front.points) {
        dims.push_back(p.dims);
        ci.push_back(p.ci);
        n_terms.push_back(p.n_terms);
    }
    py::dict d;
    d["dims"] = dims;
    d["ci"] = ci;
    d["n_terms"] = n_terms;
    return d;
}

ParetoFront front_from(const std::vector<int>& dims, const std::vector<double>& ci) {
    if (dims.size() != ci.size()) {
        throw py::value_error("dims and ci differ in length");
    }
    ParetoFront front;
    for (std::size_t k = 0; k < dims.size(); ++k) {
        front.points.push_back(FrontPoint{dims[k], ci[k], k, 0});
    }
    return front;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Multi-expression Cox models evolved with NSGA-2, plus elastic-net Cox and survival-tree baselines";
    m.attr("__version__") = std::string(kVersion);

    auto base = py::register_exception<Error>(m, "SurvsrError");
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<NotFitted>(m, "NotFitted", base.ptr());

    m.def(
        "concordance",
        [](const Vector& train_times, const std::vector<int>& train_events, const Vector& times,
           const std::vector<int>& events, const Vector& eta) {
            return concordance_ipcw(train_times, to_events(train_events), times, to_events(events), eta).ci;
        },
        py::arg("train_times"), py::arg("train_events"), py::arg("times"), py::arg("events"), py::arg("eta"),
        "IPCW concordance of risk scores `eta` on (times, events), censoring estimated from the training sample.");

    m.def(
        "neg_log_partial_likelihood",
        [](const Vector& theta, const Matrix& z, const Vector& times, const std::vector<int>& events) {
            return neg_log_partial_likelihood_with_gradient(theta, z, times, to_events(events));
        },
        py::arg("theta"), py::arg("z"), py::arg("times"), py::arg("events"),
        "Normalized Breslow negative log partial likelihood and its gradient.");

    m.def(
        "fit_coxnet",
        [](const Matrix& z, const Vector& times, const std::vector<int>& events, double lambda, double l1_ratio) {
            return fit_coxnet(z, times, to_events(events), lambda, l1_ratio).theta;
        },
        py::arg("z"), py::arg("times"), py::arg("events"), py::arg("lam"), py::arg("l1_ratio") = 0.5);

    m.def(
        "lambda_max",
        [](const Matrix& z, const Vector& times, const std::vector<int>& events, double l1_ratio) {
            return lambda_max(z, times, to_events(events), l1_ratio);
        },
        py::arg("z"), py::arg("times"), py::arg("events"), py::arg("l1_ratio") = 0.5);

    m.def(
        "kaplan_meier",
        [](const Vector& times, const std::vector<int>& events, bool censoring) {
            const auto km = kaplan_meier(times, to_events(events), censoring);
            return py::make_tuple(km.breakpoints, km.values);
        },
        py::arg("times"), py::arg("events"), py::arg("censoring_distribution") = false);

    m.def(
        "evaluate_expression",
        [](const std::string& text, const Matrix& x) { return evaluate(parse_infix(text), x); }, py::arg("text"),
        py::arg("x"), "Evaluate an infix expression over the rows of x.");

    m.def(
        "canonical_expression",
        [](const std::string& text) { return to_infix(parse_infix(text)); }, py::arg("text"),
        "Parse an infix expression and print it back in canonical form.");

    m.def(
        "fit_model",
        [](const std::vector<std::string>& expressions, const Matrix& x, const Vector& times,
           const std::vector<int>& events) {
            std::vector<ExprTree> trees;
            for (const auto& e : expressions) {
                trees.push_back(parse_infix(e));
            }
            const auto ds = make_dataset(x, times, events);
            const auto model = fit_theta(MultiExprModel(std::move(trees)), ds);
            py::dict out;
            out["theta"] = model.theta();
            out["dims"] = model.dims();
            out["risk"] = risk_score(model, x);
            out["formula"] = format_model(model);
            return out;
        },
        py::arg("expressions"), py::arg("x"), py::arg("times"), py::arg("events"),
        "Fit the Cox coefficients of a multi-expression model.");

    m.def(
        "hypervolume",
        [](const std::vector<int>& dims, const std::vector<double>& ci, double d) {
            return hypervolume2d(front_from(dims, ci), HVConfig{d});
        },
        py::arg("dims"), py::arg("ci"), py::arg("n_features"));

    m.def(
        "synthesize",
        [](const std::string& score, int n, int d, double censoring, std::uint64_t seed) {
            SynthSpec spec;
            spec.score = score;
            spec.n = n;
            spec.d = d;
            spec.censoring = censoring;
            spec.seed = seed;
            const auto data = synthesize(spec);
            std::vector<int> events(data.dataset.events.begin(), data.dataset.events.end());
            return py::make_tuple(data.dataset.features, data.dataset.times, events, data.score);
        },
        py::arg("score") = "quadratic", py::arg("n") = 1000, py::arg("d") = 10, py::arg("censoring") = 0.3,
        py::arg("seed") = 0, "Synthetic survival data: (x, times, events, true score).");

    m.def(
        "run_method",
        [](const std::string& method, const Matrix& x, const Vector& times, const std::vector<int>& events,
           std::uint64_t seed, int repetition, int pop_size, int generations) {
            RunConfig config;
            config.method = method;
            config.seed = seed;
            config.evolution.pop_size = pop_size;
            config.evolution.generations = generations;
            const auto ds = make_dataset(x, times, events);
            RepetitionResult result;
            {
                py::gil_scoped_release release;
                result = run_repetition(ds, config, repetition);
            }
            py::dict out;
            out["train"] = front_dict(result.train);
            out["test"] = front_dict(result.test);
            out["models"] = result.models.dump();
            return out;
        },
        py::arg("method"), py::arg("x"), py::arg("times"), py::arg("events"), py::arg("seed") = 0,
        py::arg("repetition") = 0, py::arg("pop_size") = 500, py::arg("generations") = 50,
        "One repetition of sr, cx or st. Returns aligned train/test fronts and the models as JSON text.");

    m.def(
        "main",
        [](const std::vector<std::string>& args) {
            std::vector<std::string> storage{"survsr"};
            storage.insert(storage.end(), args.begin(), args.end());
            std::vector<char*> argv;
            for (auto& s : storage) {
                argv.push_back(s.data());
            }
            return run_cli(static_cast<int>(argv.size()), argv.data());
        },
        py::arg("args"), "Run the command-line interface with the given arguments.");
}
