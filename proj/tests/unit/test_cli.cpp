#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "survsr/cli.hpp"
#include "survsr/coxcore.hpp"
#include "survsr/error.hpp"
#include "survsr/hash.hpp"

using namespace survsr;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory, removed on destruction.
struct Scratch {
    fs::path dir;

    explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("survsr_test_" + name)) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }

    fs::path operator/(const std::string& leaf) const { return dir / leaf; }
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::vector<std::string>> read_rows(const fs::path& path) {
    const auto table = parse_csv(slurp(path));
    std::vector<std::vector<std::string>> rows{table.header};
    rows.insert(rows.end(), table.rows.begin(), table.rows.end());
    return rows;
}

fs::path toy_dataset(const Scratch& s, std::uint64_t seed = 3, int n = 200, int d = 4) {
    SynthSpec spec;
    spec.score = "linear";
    spec.n = n;
    spec.d = d;
    spec.seed = seed;
    write_synth(synthesize(spec), s / "toy.csv");
    return s / "toy.csv";
}

RunConfig small_run(const fs::path& data, const fs::path& out, const std::string& method) {
    RunConfig c;
    c.dataset = data;
    c.method = method;
    c.repetitions = 1;
    c.seed = 5;
    c.output = out;
    c.evolution.pop_size = 20;
    c.evolution.generations = 2;
    c.cx_n_lambdas = 100;
    c.st_max_depth = 2;
    return c;
}

int run_binary(const std::string& args) {
    const std::string command = std::string(SURVSR_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(command.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("run configuration text round-trips") {
    RunConfig c;
    c.dataset = "data/pbc.csv";
    c.normalize = true;
    c.method = "st";
    c.repetitions = 7;
    c.seed = 123456789012345ULL;
    c.train_fraction = 0.65;
    c.evolution.pop_size = 321;
    c.evolution.op_probs = {0.1, 0.1, 0.1, 0.1, 0.2, 0.2, 0.2};
    c.evolution.temperature = 0.25;
    c.st_max_depth = 9;
    const auto text = c.to_text();
    const auto back = RunConfig::parse(text);
    CHECK(back.to_text() == text);
    CHECK(back.hash() == c.hash());
    CHECK(back.dataset == c.dataset);
    CHECK(back.seed == c.seed);
    CHECK(back.evolution.op_probs == c.evolution.op_probs);
    CHECK(back.hash().size() == 64);

    auto other = c;
    other.seed += 1;
    CHECK(other.hash() != c.hash());

    CHECK_THROWS_AS(RunConfig::parse("no_such_key = 1\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("repetitions = many\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("op_probs = [0.1, 0.2]\n"), ConfigError);
    CHECK(RunConfig::parse("# comment\nrepetitions = 3\n").repetitions == 3);
}

TEST_CASE("validation rejects bad settings") {
    Scratch s("validate");
    const auto data = toy_dataset(s);
    auto c = small_run(data, s / "out", "cx");
    CHECK_NOTHROW(c.validate());
    auto bad = c;
    bad.method = "gb";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.train_fraction = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.dataset = s / "absent.csv";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.st_min_depth = 3;
    bad.st_max_depth = 2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("repetition seeds are distinct") {
    std::set<std::uint64_t> seeds;
    for (int r = 0; r < 1000; ++r) {
        seeds.insert(repetition_seed(0, r));
    }
    CHECK(seeds.size() == 1000);
    CHECK(repetition_seed(1, 0) != repetition_seed(0, 1));
}

TEST_CASE("single cx repetition writes a front and a manifest") {
    Scratch s("smoke");
    const auto data = toy_dataset(s);
    std::ostringstream log;
    const auto report = cmd_run(small_run(data, s / "out", "cx"), log);
    CHECK(report.repetitions == 1);
    CHECK(report.failed == 0);
    CHECK_FALSE(report.too_many_failures());

    std::set<std::string> names;
    for (const auto& entry : fs::directory_iterator(s / "out")) {
        names.insert(entry.path().filename().string());
    }
    CHECK(names == std::set<std::string>{"config.txt", "manifest.json", "rep000_front.csv", "rep000_models.json",
                                         "rep000_survival.csv"});

    const auto manifest = nlohmann::json::parse(slurp(s / "out" / "manifest.json"));
    CHECK(manifest.at("method") == "cx");
    CHECK(manifest.at("failed") == 0);
    CHECK(manifest.at("version") == std::string(kVersion));
    CHECK(manifest.at("n_rows") == 200);
    for (const auto& name : names) {
        if (name == "manifest.json") {
            continue;
        }
        REQUIRE(manifest.at("files").contains(name));
        CHECK(manifest.at("files").at(name) == sha256_file(s / "out" / name));
    }

    const auto stored = read_front_csv(s / "out" / "rep000_front.csv");
    CHECK(stored.method == "cx");
    CHECK(stored.train.points.size() == stored.test.points.size());
    CHECK(stored.train.points.front().dims == 0);
    CHECK(RunConfig::load(s / "out" / "config.txt").to_text() == small_run(data, s / "out", "cx").to_text());
}

TEST_CASE("reruns are byte-identical") {
    Scratch s("rerun");
    const auto data = toy_dataset(s);
    for (const std::string method : {"cx", "st", "sr"}) {
        std::ostringstream log;
        auto a = small_run(data, s / (method + "_a"), method);
        a.checkpoints = method == "sr";
        auto b = a;
        b.output = s / (method + "_b");
        cmd_run(a, log);
        cmd_run(b, log);
        for (const std::string name : {"rep000_front.csv", "rep000_models.json", "rep000_survival.csv"}) {
            CHECK(slurp(a.output / name) == slurp(b.output / name));
        }
        if (method == "sr") {
            const auto cp = nlohmann::json::parse(slurp(a.output / "rep000_checkpoint.json"));
            CHECK(cp.at("generation") == 2);
        }
    }
}

TEST_CASE("missing schema fails before any output") {
    Scratch s("schema");
    const auto data = toy_dataset(s);
    auto c = small_run(data, s / "out", "cx");
    c.schema = s / "missing.schema";
    std::ostringstream log;
    CHECK_THROWS_AS(cmd_run(c, log), ConfigError);
    CHECK_FALSE(fs::exists(s / "out"));
}

TEST_CASE("aggregate tables") {
    Scratch s("aggregate");
    const auto data = toy_dataset(s);
    std::ostringstream log;
    std::vector<fs::path> dirs;
    for (const std::string method : {"sr", "cx", "st"}) {
        auto c = small_run(data, s / method, method);
        cmd_run(c, log);
        dirs.push_back(c.output);
    }

    AggregateConfig agg;
    agg.results = {dirs[1]};
    agg.output = s / "one";
    agg.ks = {1, 3, 40, 0};
    std::ostringstream out;
    cmd_aggregate(agg, out);
    const auto stored = read_front_csv(dirs[1] / "rep000_front.csv");
    const auto rows = read_rows(s / "one" / "ci_table.csv");
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] == std::vector<std::string>{"method", "dataset", "normalization", "k", "metric", "median", "q1", "q3"});
    double ci_k1 = -1.0;
    for (std::size_t k = 0; k < stored.train.points.size(); ++k) {
        if (stored.train.points[k].dims == 1) {
            ci_k1 = stored.test.points[k].ci;
        }
    }
    REQUIRE(ci_k1 >= 0.0);
    CHECK(std::stod(rows[1][5]) == doctest::Approx(ci_k1).epsilon(1e-9));
    CHECK(rows[1][5] == rows[1][6]);
    CHECK(rows[1][5] == rows[1][7]);
    CHECK(rows[3][3] == "40");
    CHECK(rows[3][5] == "(-)");
    CHECK(rows[4][3] == "max");
    CHECK(out.str().find("(-)") != std::string::npos);

    agg.results = dirs;
    agg.output = s / "all";
    agg.ks = {3, 5, 7, 0};
    cmd_aggregate(agg, out);
    for (const std::string table : {"hv_table.csv", "ci_table.csv"}) {
        const auto all = read_rows(s / "all" / table);
        REQUIRE(all.size() == 13);
        std::set<std::string> methods;
        for (std::size_t r = 1; r < all.size(); ++r) {
            methods.insert(all[r][0]);
            CHECK(all[r].size() == all[0].size());
            CHECK(all[r][3] == all[1 + (r - 1) % 4][3]);
        }
        CHECK(methods == std::set<std::string>{"sr", "cx", "st"});
    }
    for (const std::string name : {"expression_counts.csv", "expression_correlation.csv", "survival_curves.csv",
                                   "tables.txt"}) {
        CHECK(fs::exists(s / "all" / name));
    }
}

TEST_CASE("aggregate refuses mixed datasets") {
    Scratch s("mixed");
    const auto a = toy_dataset(s, 3);
    fs::create_directories(s / "b");
    SynthSpec spec;
    spec.score = "linear";
    spec.n = 200;
    spec.d = 4;
    spec.seed = 4;
    write_synth(synthesize(spec), s / "b" / "toy.csv");
    std::ostringstream log;
    cmd_run(small_run(a, s / "run_a", "cx"), log);
    cmd_run(small_run(s / "b" / "toy.csv", s / "run_b", "cx"), log);
    AggregateConfig agg;
    agg.results = {s / "run_a", s / "run_b"};
    agg.output = s / "tables";
    std::ostringstream out;
    CHECK_THROWS_AS(cmd_aggregate(agg, out), MixedSchema);
}

TEST_CASE("synthetic data") {
    SynthSpec spec;
    spec.score = "linear";
    spec.n = 500;
    spec.d = 3;
    spec.censoring = 0.0;
    const auto none = synthesize(spec);
    CHECK(none.dataset.n_events() == 500);

    for (double target : {0.1, 0.3, 0.6}) {
        spec.censoring = target;
        const auto data = synthesize(spec);
        const double share = 1.0 - static_cast<double>(data.dataset.n_events()) / spec.n;
        CHECK(std::abs(share - target) <= 0.05);
        CHECK(data.score.isApprox(synth_score(spec, data.dataset.features)));
    }

    spec.score = "log_interaction";
    const auto li = synthesize(spec);
    const auto& x = li.dataset.features;
    CHECK(li.score[0] == doctest::Approx(std::log(1.0 + std::abs(x(0, 0) * x(0, 1))) - x(0, 2)));
    spec.score = "quadratic";
    const auto q = synthesize(spec);
    CHECK(q.score[0] == doctest::Approx(q.dataset.features(0, 0) * q.dataset.features(0, 0) -
                                        q.dataset.features(0, 1)));
    spec.score = "cubic";
    CHECK_THROWS_AS(synthesize(spec), ConfigError);
}

TEST_CASE("seeded synthesis writes identical files") {
    Scratch s("synth");
    SynthSpec spec;
    spec.seed = 9;
    fs::create_directories(s / "a");
    fs::create_directories(s / "b");
    write_synth(synthesize(spec), s / "a" / "d.csv");
    write_synth(synthesize(spec), s / "b" / "d.csv");
    for (const std::string name : {"d.csv", "d.truth.csv", "d.schema"}) {
        CHECK(slurp(s / "a" / name) == slurp(s / "b" / name));
    }
    const auto back = load_csv(s / "a" / "d.csv", Schema::load(s / "a" / "d.schema"));
    CHECK(back.rows() == spec.n);
    CHECK(back.cols() == spec.d);
    const auto original = synthesize(spec).dataset;
    CHECK(back.features == original.features);
    CHECK(back.times == original.times);
}

TEST_CASE("linear generator is recovered by the Cox fit") {
    SynthSpec spec;
    spec.score = "linear";
    spec.n = 2000;
    spec.d = 3;
    spec.coefficients = {2.0, 0.0, 0.0};
    spec.seed = 17;
    const auto data = synthesize(spec);
    const auto fit = fit_coxnet(data.dataset.features, data.dataset.times, data.dataset.events, 1e-6, 0.5);
    CHECK(fit.theta[0] > 0.0);
    CHECK(std::abs(fit.theta[0] - 2.0) < 0.2);
}

TEST_CASE("command-line entry point") {
    Scratch s("binary");
    const auto dir = s.dir.string();
    CHECK(run_binary("--version") == 0);
    CHECK(run_binary("synth --score linear --n 150 --d 3 --seed 1 --output " + dir + "/toy.csv") == 0);
    CHECK(fs::exists(s / "toy.truth.csv"));
    CHECK(run_binary("baseline --dataset " + dir + "/toy.csv --method cx --repetitions 1 --cx_n_lambdas 50 --output " +
                     dir + "/cx") == 0);
    CHECK(fs::exists(s / "cx" / "rep000_front.csv"));
    CHECK(run_binary("baseline --dataset " + dir + "/toy.csv --method sr --output " + dir + "/bad") != 0);
    CHECK(run_binary("run --dataset " + dir + "/toy.csv --schema " + dir + "/none.schema --output " + dir +
                     "/none") != 0);
    CHECK_FALSE(fs::exists(s / "none"));

    {
        std::ofstream cfg(s / "run.toml");
        cfg << "dataset = \"" << dir << "/toy.csv\"\nmethod = \"cx\"\nrepetitions = 1\ncx_n_lambdas = 50\noutput = \""
            << dir << "/from_config\"\n";
    }
    CHECK(run_binary("run --config " + dir + "/run.toml") == 0);
    CHECK(slurp(s / "cx" / "rep000_front.csv") == slurp(s / "from_config" / "rep000_front.csv"));
    CHECK(run_binary("run --config " + dir + "/run.toml --repetitions 2 --output " + dir + "/override") == 0);
    CHECK(fs::exists(s / "override" / "rep001_front.csv"));
    CHECK(run_binary("aggregate " + dir + "/cx --output " + dir + "/tables --k 1,2,max") == 0);
    CHECK(fs::exists(s / "tables" / "hv_table.csv"));
}
