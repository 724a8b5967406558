#include "doctest.h"

#include <sstream>

#include "support.hpp"

using namespace testing;

namespace {

Dataset table() {
    std::istringstream in("n,c,k,y\n1,a,5,0\n2,b,5,1\n,a,5,0\n5,,5,1\n");
    return read_csv(in, "y");
}

}  // namespace

TEST_CASE("numeric columns: median imputation then population standardization") {
    const Dataset ds = table();
    const FittedPreproc pp = fit_preproc(ds, {});
    const ColumnTransform& n = pp.columns[0];
    CHECK(n.median == 2.0);
    // imputed column = 1, 2, 2, 5
    CHECK(n.mean == doctest::Approx(2.5));
    CHECK(n.sd == doctest::Approx(std::sqrt((2.25 + 0.25 + 0.25 + 6.25) / 4)));
    const Mat x = transform(pp, ds);
    CHECK(x(2, 0) == doctest::Approx((2.0 - 2.5) / n.sd));
    double mean = 0.0, ss = 0.0;
    for (std::size_t r = 0; r < 4; ++r) mean += x(r, 0) / 4;
    for (std::size_t r = 0; r < 4; ++r) ss += x(r, 0) * x(r, 0) / 4;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ss == doctest::Approx(1.0));
}

TEST_CASE("constant columns map to zero") {
    const Dataset ds = table();
    const Mat x = transform(fit_preproc(ds, {}), ds);
    for (std::size_t r = 0; r < 4; ++r) CHECK(x(r, 2) == 0.0);
}

TEST_CASE("categorical ordinal codes in first-appearance order; missing is a level") {
    const Dataset ds = table();
    const FittedPreproc pp = fit_preproc(ds, {});
    CHECK(pp.columns[1].levels == std::vector<std::string>{"a", "b", missing_token});
    CHECK(pp.output_dim == 3);
}

TEST_CASE("onehot variant expands small categoricals; unseen levels give zeros") {
    const Dataset ds = table();
    const FittedPreproc pp = fit_preproc(ds, {PreprocVariant::onehot_ordinal, 8});
    CHECK(pp.output_dim == 5);
    CHECK(pp.channel_names()[1] == "c=a");
    const Mat x = transform(pp, ds);
    CHECK(x(1, 1) == 0.0);
    CHECK(x(1, 2) == 1.0);

    std::istringstream in("n,c,k,y\n1,zzz,5,0\n2,a,5,1\n");
    const Mat u = transform(pp, read_csv(in, "y"));
    CHECK(u(0, 1) + u(0, 2) + u(0, 3) == 0.0);

    const FittedPreproc capped = fit_preproc(ds, {PreprocVariant::onehot_ordinal, 2});
    CHECK_FALSE(capped.columns[1].onehot);
}

TEST_CASE("unseen level under ordinal maps to code k") {
    const Dataset ds = table();
    const FittedPreproc pp = fit_preproc(ds, {});
    std::istringstream in("n,c,k,y\n1,zzz,5,0\n2,a,5,1\n");
    const Mat u = transform(pp, read_csv(in, "y"));
    const ColumnTransform& c = pp.columns[1];
    CHECK(u(0, 1) == doctest::Approx((3.0 - c.mean) / c.sd));
}

TEST_CASE("schema mismatch is a DataError") {
    const Dataset ds = table();
    const FittedPreproc pp = fit_preproc(ds, {});
    std::istringstream in("n,y\n1,0\n2,1\n");
    CHECK_THROWS_AS(transform(pp, read_csv(in, "y")), DataError);
    CHECK_THROWS_AS(parse_preproc("bogus"), ConfigError);
}
