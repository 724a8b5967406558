#include "doctest.h"

#include <set>
#include <sstream>

#include "support.hpp"

using namespace testing;

namespace {

Dataset from_text(const std::string& text, const std::string& target, TaskHint hint = TaskHint::automatic) {
    std::istringstream in(text);
    return read_csv(in, target, hint);
}

}  // namespace

TEST_CASE("csv: types, missing cells and quoting") {
    const Dataset ds = from_text("a,b,y\n1.5,red,yes\n,\"bl,ue\",no\n3,,yes\n", "y");
    REQUIRE(ds.n_rows() == 3);
    CHECK(ds.task == TaskKind::binary);
    CHECK(ds.classes == std::vector<std::string>{"no", "yes"});
    CHECK(ds.y == std::vector<double>{1, 0, 1});
    CHECK(ds.columns[0].kind == ColumnKind::numeric);
    CHECK_FALSE(ds.columns[0].numbers[1].has_value());
    CHECK(ds.columns[1].kind == ColumnKind::categorical);
    CHECK(*ds.columns[1].tokens[1] == "bl,ue");
    CHECK(ds.columns[1].missing(2));
}

TEST_CASE("csv: round trip preserves the dataset") {
    const Dataset ds = synth(Generator::planted_interaction, 3, 60, 3);
    std::ostringstream out;
    write_csv(ds, out);
    const Dataset back = from_text(out.str(), "y", TaskHint::regression);
    CHECK(back.y == ds.y);
    for (std::size_t c = 0; c < 3; ++c) CHECK(back.columns[c].numbers == ds.columns[c].numbers);
    CHECK(back.fingerprint() == ds.fingerprint());
}

TEST_CASE("task inference from distinct target values") {
    std::string many = "x,y\n", three = "x,y\n";
    for (int i = 0; i < 11; ++i) many += std::to_string(i) + "," + std::to_string(i * 0.5) + "\n";
    for (int i = 0; i < 9; ++i) three += std::to_string(i) + "," + std::to_string(i % 3) + "\n";
    CHECK(from_text(many, "y").task == TaskKind::regression);
    CHECK(from_text(three, "y").task == TaskKind::multiclass);
    CHECK(from_text(three, "y", TaskHint::regression).task == TaskKind::regression);
}

TEST_CASE("csv errors are DataError") {
    CHECK_THROWS_AS(from_text("", "y"), DataError);
    CHECK_THROWS_AS(from_text("a,b\n1,2\n", "y"), DataError);
    CHECK_THROWS_AS(from_text("a,y\n1,2\n3\n", "y"), DataError);
    CHECK_THROWS_AS(from_text("a,y\n1,\n", "y"), DataError);
    CHECK_THROWS_AS(from_text("a,y\n,1\n,0\n", "y"), DataError);
    CHECK_THROWS_AS(from_text("a,y\n1,p\n2,q\n", "y", TaskHint::regression), DataError);
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", "y"), DataError);
}

TEST_CASE("synthetic generators") {
    const Dataset p = synth(Generator::planted_interaction, 1, 200, 4);
    double resid = 0.0;
    for (std::size_t r = 0; r < p.n_rows(); ++r) {
        const double e = p.y[r] - *p.columns[0].numbers[r] * *p.columns[1].numbers[r];
        resid += e * e;
    }
    CHECK(std::sqrt(resid / 200) == doctest::Approx(0.1).epsilon(0.25));
    CHECK(synth(Generator::planted_interaction, 1, 200, 4).fingerprint() == p.fingerprint());
    CHECK(synth(Generator::planted_interaction, 2, 200, 4).fingerprint() != p.fingerprint());
    const Dataset b = synth(Generator::linear_aligned, 1, 200, 3, TaskKind::binary);
    CHECK(b.task == TaskKind::binary);
    CHECK(b.n_classes() == 2);

    const SynthSpec s = parse_synth_spec("monotone_single:n=80,d=3,noise=0,seed=4");
    CHECK(s.n == 80);
    CHECK(s.noise_sd == 0.0);
    CHECK(parse_synth_spec(describe(s)).seed == 4);
    const Dataset m = generate(s);
    CHECK(m.y[0] == std::tanh(3.0 * *m.columns[0].numbers[0]));
    CHECK_THROWS_AS(parse_synth_spec("planted_interaction:n=10"), ConfigError);
    CHECK_THROWS_AS(parse_synth_spec("nope:n=100"), ConfigError);
    CHECK_THROWS_AS(parse_synth_spec("planted_interaction:bogus=1"), ConfigError);
}

TEST_CASE("k-fold plan partitions rows and stratifies") {
    const Dataset ds = synth(Generator::linear_aligned, 7, 203, 3, TaskKind::binary);
    const SplitPlan plan = make_splits(ds, 8, 0.2, 9);
    REQUIRE(plan.folds.size() == 8);
    std::size_t positives = 0;
    for (double y : ds.y) positives += y == 1.0;
    std::size_t min_size = ds.n_rows(), max_size = 0;
    for (const FoldSplit& f : plan.folds) {
        std::set<std::size_t> all(f.train.begin(), f.train.end());
        all.insert(f.validation.begin(), f.validation.end());
        all.insert(f.test.begin(), f.test.end());
        CHECK(all.size() == ds.n_rows());
        CHECK(f.train.size() + f.validation.size() + f.test.size() == ds.n_rows());
        min_size = std::min(min_size, f.test.size());
        max_size = std::max(max_size, f.test.size());
        std::size_t fp = 0;
        for (std::size_t r : f.test) fp += ds.y[r] == 1.0;
        CHECK(std::abs(double(fp) / f.test.size() - double(positives) / ds.n_rows()) < 0.1);
    }
    CHECK(max_size - min_size <= 1);
    const auto again = make_splits(ds, 8, 0.2, 9);
    CHECK(again.fold_of_row == plan.fold_of_row);
    CHECK(make_splits(ds, 8, 0.2, 10).fold_of_row != plan.fold_of_row);
    CHECK_THROWS_AS(make_splits(ds, 1, 0.2, 0), ConfigError);
    CHECK_THROWS_AS(make_splits(ds, 8, 0.6, 0), ConfigError);
}

TEST_CASE("holdout split and single-fold plan") {
    const Dataset ds = synth(Generator::planted_interaction, 2, 100, 3);
    const Holdout h = holdout_split(ds, 0.2, 4);
    CHECK(h.test.size() == 20);
    CHECK(h.development.size() == 80);
    const SplitPlan p = single_fold_plan(ds, 0.2, 4);
    CHECK(p.folds[0].validation.size() == 20);
    CHECK(p.folds[0].test.empty());
    CHECK_THROWS_AS(holdout_split(ds, 1.0, 0), ConfigError);
}

TEST_CASE("subset keeps schema and rejects bad rows") {
    const Dataset ds = synth(Generator::planted_interaction, 2, 60, 3);
    const std::vector<std::size_t> rows{5, 1};
    const Dataset s = ds.subset(rows);
    CHECK(s.n_rows() == 2);
    CHECK(s.y[0] == ds.y[5]);
    const std::vector<std::size_t> bad{60};
    CHECK_THROWS_AS(ds.subset(bad), DataError);
}
