#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "survsr/data.hpp"
#include "survsr/error.hpp"

using namespace survsr;

namespace {

SurvivalDataset encode(std::string_view csv, std::string_view schema) {
    return encode_categoricals(parse_csv(csv), Schema::parse(schema));
}

double column_mean(const SurvivalDataset& ds, Eigen::Index j) { return ds.features.col(j).mean(); }

double column_sd(const SurvivalDataset& ds, Eigen::Index j) {
    const double m = column_mean(ds, j);
    return std::sqrt((ds.features.col(j).array() - m).square().mean());
}

}  // namespace

TEST_CASE("three-row csv parses into one feature") {
    const auto ds = encode("age,t,d\n50,10,1\n60,20,0\n70,30,1\n", "time = t\nevent = d\n");
    CHECK(ds.rows() == 3);
    CHECK(ds.cols() == 1);
    CHECK(ds.column_names() == std::vector<std::string>{"age"});
    CHECK(ds.times[1] == 20.0);
    CHECK(ds.events == std::vector<bool>{true, false, true});
    CHECK(ds.features(2, 0) == 70.0);
}

TEST_CASE("load_csv reads a file") {
    const auto path = std::filesystem::temp_directory_path() / "survsr_test_data.csv";
    {
        std::ofstream out(path);
        out << "age,t,d\n50,10,true\n60,20,false\n";
    }
    const auto ds = load_csv(path, "t", "d", Schema{});
    CHECK(ds.rows() == 2);
    CHECK(ds.events == std::vector<bool>{true, false});
    std::filesystem::remove(path);
}

TEST_CASE("cell errors name row and column") {
    const std::string schema = "time = t\nevent = d\n";
    try {
        encode("age,t,d\n50,10,1\n60,0,1\n70,30,1\n", schema);
        FAIL("expected NonPositiveTime");
    } catch (const NonPositiveTime& e) {
        CHECK(e.row() == 2);
        CHECK(e.column() == "t");
    }
    try {
        encode("age,t,d\n50,10,1\n60,5,2\n", schema);
        FAIL("expected NonBinaryEvent");
    } catch (const NonBinaryEvent& e) {
        CHECK(e.row() == 2);
        CHECK(e.column() == "d");
    }
    try {
        encode("age,t,d\n50,10,1\n,5,1\n", schema);
        FAIL("expected MissingValue");
    } catch (const MissingValue& e) {
        CHECK(e.row() == 2);
        CHECK(e.column() == "age");
    }
    CHECK_THROWS_AS(encode("age,t,d\n50,,1\n", schema), MissingValue);
    CHECK_THROWS_AS(encode("age,x,d\n50,1,1\n", schema), MissingColumn);
    CHECK_THROWS_AS(encode("age,t,d\n50,-1,1\n", schema), NonPositiveTime);
}

TEST_CASE("two-level column maps to 0 and 1") {
    const auto ds = encode("sex,t,d\nF,1,1\nM,2,0\nF,3,1\n", "time = t\nevent = d\nsex = binary: F, M\n");
    REQUIRE(ds.cols() == 1);
    CHECK(ds.columns[0].kind == ColumnKind::binary01);
    CHECK(ds.features(0, 0) == 0.0);
    CHECK(ds.features(1, 0) == 1.0);
    CHECK(ds.features(2, 0) == 0.0);
}

TEST_CASE("ordinal column maps to declared order") {
    const auto ds =
        encode("stage,t,d\nIII,1,1\nI,2,0\nII,3,1\n", "time = t\nevent = d\nstage = ordinal: I, II, III\n");
    REQUIRE(ds.cols() == 1);
    CHECK(ds.columns[0].kind == ColumnKind::ordinal);
    CHECK(ds.features(0, 0) == 2.0);
    CHECK(ds.features(1, 0) == 0.0);
    CHECK(ds.features(2, 0) == 1.0);
    try {
        encode("stage,t,d\nI,1,1\nIV,2,0\n", "time = t\nevent = d\nstage = ordinal: I, II, III\n");
        FAIL("expected UnknownCategory");
    } catch (const UnknownCategory& e) {
        CHECK(e.row() == 2);
        CHECK(e.column() == "stage");
    }
}

TEST_CASE("nominal column becomes one-hot") {
    const auto ds = encode("center,t,d\nA,1,1\nB,2,0\nC,3,1\nB,4,1\n", "time = t\nevent = d\ncenter = nominal\n");
    REQUIRE(ds.cols() == 3);
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        CHECK(ds.features.row(i).sum() == 1.0);
    }
    CHECK(ds.columns[1].kind == ColumnKind::onehot);
    CHECK(ds.columns[1].source == "center");
    CHECK(ds.features(1, 1) == 1.0);
    CHECK(ds.features(3, 1) == 1.0);
}

TEST_CASE("automatic kinds") {
    const auto ds = encode("flag,age,grp,t,d\n0,1.5,x,1,1\n1,2.5,y,2,0\n1,3.5,z,3,1\n", "time = t\nevent = d\n");
    REQUIRE(ds.cols() == 5);
    CHECK(ds.columns[0].kind == ColumnKind::binary01);
    CHECK(ds.columns[1].kind == ColumnKind::continuous);
    CHECK(ds.columns[2].kind == ColumnKind::onehot);
    const auto ignored = encode("id,age,t,d\n7,1,1,1\n8,2,2,0\n", "time = t\nevent = d\nid = ignore\n");
    CHECK(ignored.column_names() == std::vector<std::string>{"age"});
}

TEST_CASE("encoded labels decode to the source labels") {
    const std::string csv = "sex,stage,center,t,d\nF,II,B,1,1\nM,I,A,2,0\nM,III,C,3,1\nF,I,B,4,1\n";
    const auto table = parse_csv(csv);
    const auto ds = encode_categoricals(
        table, Schema::parse("time = t\nevent = d\nsex = binary: F, M\nstage = ordinal: I, II, III\ncenter = nominal\n"));
    const auto sex = *table.find("sex");
    const auto stage = *table.find("stage");
    const auto center = *table.find("center");
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(r);
        CHECK(decode_value(ds.columns[0], ds.features(i, 0)) == table.rows[r][sex]);
        CHECK(decode_value(ds.columns[1], ds.features(i, 1)) == table.rows[r][stage]);
        for (Eigen::Index j = 2; j < ds.cols(); ++j) {
            const auto& info = ds.columns[static_cast<std::size_t>(j)];
            if (ds.features(i, j) == 1.0) {
                CHECK(info.levels.front() == table.rows[r][center]);
            }
        }
    }
}

TEST_CASE("schema text round-trips") {
    const auto s = Schema::parse("time = days\nevent = status\nsex = binary: F, M\nstage = ordinal: I, II\nsite = nominal\nid = ignore\n");
    const auto again = Schema::parse(s.to_text());
    CHECK(again.time_column == "days");
    CHECK(again.event_column == "status");
    CHECK(again.to_text() == s.to_text());
    CHECK(again.spec_for("stage").levels == std::vector<std::string>{"I", "II"});
    CHECK(again.spec_for("other").kind == RawKind::automatic);
    CHECK_THROWS_AS(Schema::parse("sex binary\n"), SchemaMismatch);
    CHECK_THROWS_AS(Schema::parse("sex = sometimes\n"), SchemaMismatch);
}

TEST_CASE("csv quoting") {
    const auto t = parse_csv("a,b\n\"x, y\",\"say \"\"hi\"\"\"\n");
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0][0] == "x, y");
    CHECK(t.rows[0][1] == "say \"hi\"");
    CHECK(csv_escape("x, y") == "\"x, y\"");
    CHECK(csv_escape("plain") == "plain");
}

TEST_CASE("z-score examples") {
    SurvivalDataset ds;
    ds.features.resize(3, 3);
    ds.features << 1, 0, 5, 2, 1, 5, 3, 1, 5;
    ds.times = Vector::Ones(3);
    ds.events = {true, true, true};
    ds.columns = {{"a", ColumnKind::continuous, "a", {}},
                  {"b", ColumnKind::binary01, "b", {"0", "1"}},
                  {"c", ColumnKind::continuous, "c", {}}};
    const auto [z, stats] = zscore_normalize(ds);
    CHECK(column_mean(z, 0) == doctest::Approx(0.0));
    CHECK(column_sd(z, 0) == doctest::Approx(1.0));
    CHECK(z.features.col(1) == ds.features.col(1));
    CHECK(z.features.col(2).isZero());
    CHECK(stats.applied == std::vector<bool>{true, false, true});

    NormalizationStats wrong = stats;
    wrong.mean.pop_back();
    CHECK_THROWS_AS(zscore_normalize(ds, wrong), SchemaMismatch);
}

TEST_CASE("normalizing with own stats twice is idempotent") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto ds = fixtures::random_dataset(rng, 40, 4);
        ds.features.col(1) *= 50.0;
        const auto z = zscore_normalize(ds).first;
        const auto again = zscore_normalize(z).first;
        CHECK((again.features - z.features).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("test split reuses train statistics") {
    Rng rng(5);
    int nonzero = 0;
    for (int trial = 0; trial < 20; ++trial) {
        auto ds = fixtures::random_dataset(rng, 60, 3);
        const auto [train, test] = split(ds, SplitSpec{static_cast<std::uint64_t>(trial), 0.7, 0});
        const auto [ztrain, stats] = zscore_normalize(train);
        const auto [ztest, unused] = zscore_normalize(test, stats);
        (void)unused;
        for (Eigen::Index j = 0; j < ztest.cols(); ++j) {
            CHECK(std::abs(column_mean(ztrain, j)) < 1e-12);
            nonzero += std::abs(column_mean(ztest, j)) > 1e-6 ? 1 : 0;
        }
    }
    CHECK(nonzero >= 55);
}

TEST_CASE("split sizes and events") {
    Rng rng(7);
    const auto ds = fixtures::random_dataset(rng, 10, 2, 0.5);
    const auto idx = split_indices(ds, SplitSpec{1, 0.7, 0});
    CHECK(idx.train.size() == 7);
    CHECK(idx.test.size() == 3);
    std::vector<Eigen::Index> all = idx.train;
    all.insert(all.end(), idx.test.begin(), idx.test.end());
    std::sort(all.begin(), all.end());
    for (Eigen::Index i = 0; i < 10; ++i) {
        CHECK(all[static_cast<std::size_t>(i)] == i);
    }
    const auto [train, test] = split(ds, SplitSpec{1, 0.7, 0});
    CHECK(train.n_events() >= 1);
    CHECK(test.n_events() >= 1);
}

TEST_CASE("split is deterministic per spec") {
    Rng rng(9);
    const auto ds = fixtures::random_dataset(rng, 50, 2);
    std::uniform_int_distribution<std::uint64_t> seeds;
    std::uniform_real_distribution<double> fractions(0.3, 0.9);
    for (int trial = 0; trial < 100; ++trial) {
        const SplitSpec spec{seeds(rng), fractions(rng), seeds(rng) % 100};
        const auto a = split_indices(ds, spec);
        const auto b = split_indices(ds, spec);
        CHECK(a.train == b.train);
        CHECK(a.test == b.test);
    }
    const auto a = split_indices(ds, SplitSpec{1, 0.7, 0});
    const auto b = split_indices(ds, SplitSpec{1, 0.7, 1});
    CHECK(a.train != b.train);
}

TEST_CASE("degenerate splits") {
    Rng rng(11);
    auto ds = fixtures::random_dataset(rng, 20, 2);
    auto censored = ds;
    censored.events.assign(20, false);
    CHECK_THROWS_AS(split(censored, SplitSpec{}), DegenerateSplit);
    CHECK_THROWS_AS(split(ds.subset({0, 1, 2, 3, 4}), SplitSpec{}), DegenerateSplit);
    CHECK_THROWS_AS(split(ds, SplitSpec{0, 1.0, 0}), DegenerateSplit);
}

TEST_CASE("content hash tracks content") {
    Rng rng(13);
    const auto ds = fixtures::random_dataset(rng, 20, 2);
    auto other = ds;
    CHECK(ds.content_hash() == other.content_hash());
    other.times[3] += 1e-9;
    CHECK(ds.content_hash() != other.content_hash());
    CHECK(ds.content_hash().size() == 64);
}
