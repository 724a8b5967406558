#include "doctest.h"

#include <cmath>
#include <limits>

#include "gradcheck.hpp"

using namespace testing;

TEST_CASE("every op's backward agrees with central differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto checks = check_all_ops(seed);
        CHECK(checks.size() == 19);
        for (const OpCheck& c : checks) {
            INFO(c.op << " seed " << seed);
            CHECK(c.max_rel_err <= 1e-6);
        }
    }
}

TEST_CASE("composite loss gradient reaches alpha, the block and the projection") {
    for (TaskKind task : {TaskKind::regression, TaskKind::multiclass}) {
        const CompositeCheck c = check_composite(3, task);
        CHECK(c.projection_checked);
        CHECK(c.tensors >= 4);
        CHECK(c.max_rel_err <= 1e-5);
    }
    const CompositeCheck m = check_composite(4, TaskKind::regression, BlockType::mlp);
    CHECK(m.max_rel_err <= 1e-5);
}

TEST_CASE("frozen leaves never receive a gradient entry") {
    ad::Tape t;
    const auto a = t.leaf(Mat::from_rows({{1, 2}, {3, 4}}), true);
    const auto b = t.leaf(Mat::from_rows({{0.5, -1}, {2, 1}}), false);
    const auto c = t.constant(Mat::from_rows({{1, 1}, {1, 1}}));
    const auto g = t.backprop(ad::sum(t, ad::hadamard(t, ad::matmul(t, a, b), c)));
    CHECK(g.size() == 1);
    CHECK(g.contains(a));
    CHECK_FALSE(g.contains(b));
    CHECK_FALSE(g.contains(c));
    // d/dA sum(A B) = 1 B^T
    CHECK(g.at(a) == Mat::from_rows({{-0.5, 3}, {-0.5, 3}}));
}

TEST_CASE("an unused trainable leaf gets no entry") {
    ad::Tape t;
    const auto a = t.leaf(Mat(1, 3, 1.0), true);
    const auto unused = t.leaf(Mat(1, 3, 2.0), true);
    const auto g = t.backprop(ad::sum(t, a));
    CHECK(g.contains(a));
    CHECK_FALSE(g.contains(unused));
}

TEST_CASE("shape mismatches raise ShapeError") {
    ad::Tape t;
    const auto a = t.constant(Mat(2, 3));
    const auto b = t.constant(Mat(2, 4));
    CHECK_THROWS_AS(ad::add(t, a, b), ShapeError);
    CHECK_THROWS_AS(ad::matmul(t, a, b), ShapeError);
    CHECK_THROWS_AS(ad::slice_cols(t, a, 2, 5), ShapeError);
    CHECK_THROWS_AS(ad::broadcast_row_add(t, a, t.constant(Mat(1, 2))), ShapeError);
    CHECK_THROWS_AS(t.backprop(a), ShapeError);
}

TEST_CASE("non-finite values raise NumericalError") {
    ad::Tape t;
    const auto z = t.constant(Mat(1, 2, 0.0));
    CHECK_THROWS_AS(ad::log(t, z), NumericalError);
    const auto big = t.constant(Mat(1, 1, 1000.0));
    CHECK_THROWS_AS(ad::exp(t, big), NumericalError);
    CHECK_THROWS_AS(t.leaf(Mat(1, 1, std::numeric_limits<double>::quiet_NaN()), true), NumericalError);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
    ad::Tape t;
    const auto s = ad::softmax_rows(t, t.constant(Mat::from_rows({{1000, 1001, 999}, {0, 0, 0}})));
    const Mat& v = t.value(s);
    for (std::size_t r = 0; r < 2; ++r) CHECK(v(r, 0) + v(r, 1) + v(r, 2) == doctest::Approx(1.0));
    CHECK(v(1, 0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("gelu uses the tanh form") {
    ad::Tape t;
    const double x = 0.7;
    const auto g = ad::gelu(t, t.constant(Mat(1, 1, x)));
    const double want = 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x)));
    CHECK(t.value(g)[0] == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("batchnorm_train normalizes with the biased batch variance") {
    ad::Tape t;
    const auto x = t.constant(Mat::from_rows({{1, 10}, {3, 10}}));
    const auto y = ad::batchnorm_train(t, x, t.constant(Mat(1, 2, 1.0)), t.constant(Mat(1, 2, 0.0)));
    const Mat& v = t.value(y);
    CHECK(v(0, 0) == doctest::Approx(-1.0 / std::sqrt(1.0 + ad::batchnorm_eps)));
    CHECK(v(0, 1) == 0.0);
    CHECK(t.batch_stat(y, 0) == Mat::row({2, 10}));
    CHECK(t.batch_stat(y, 1) == Mat::row({1, 0}));
}

TEST_CASE("slice_rows and broadcast_rows") {
    ad::Tape t;
    const auto a = t.constant(Mat::from_rows({{1, 2}, {3, 4}, {5, 6}}));
    CHECK(t.value(ad::slice_rows(t, a, 1, 3)) == Mat::from_rows({{3, 4}, {5, 6}}));
    CHECK(t.value(ad::broadcast_rows(t, t.constant(Mat::row({7, 8})), 2, 2)) == Mat::from_rows({{7, 8}, {7, 8}}));
    CHECK(t.value(ad::broadcast_rows(t, t.constant(Mat(1, 1, 3.0)), 2, 3)) == Mat(2, 3, 3.0));
}
