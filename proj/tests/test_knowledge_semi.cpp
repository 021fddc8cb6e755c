#include <doctest.h>

#include <cmath>

#include "qc/knowledge_semi.hpp"
#include "qc/errors.hpp"

using qc::FusedQuery;
using qc::Matrix;
using qc::SemiTargets;
using qc::Vector;

TEST_CASE("attention_fuse with no knowledge returns the raw query") {
    Vector q{0.5, -1.0, 2.0};
    FusedQuery f = qc::attention_fuse(q, Matrix(0, 0));
    CHECK(f.values == q);
    CHECK(f.attention_weights.empty());
}

TEST_CASE("attention_fuse with one record adds it with weight 1") {
    Vector q{1.0, 0.0};
    Matrix k(1, 2);
    k(0, 0) = 0.25;
    k(0, 1) = -0.5;
    FusedQuery f = qc::attention_fuse(q, k);
    REQUIRE(f.attention_weights.size() == 1);
    CHECK(f.attention_weights[0] == doctest::Approx(1.0));
    CHECK(f.values[0] == doctest::Approx(1.25));
    CHECK(f.values[1] == doctest::Approx(-0.5));
}

TEST_CASE("attention_fuse softmax over unscaled dot products") {
    Vector q{1.0, 0.0};
    Matrix k(2, 2);
    k(0, 0) = 2.0;              // logit 2
    k(1, 0) = 0.0; k(1, 1) = 3.0;  // logit 0
    FusedQuery f = qc::attention_fuse(q, k);
    REQUIRE(f.attention_weights.size() == 2);
    double w0 = std::exp(2.0) / (std::exp(2.0) + 1.0);
    CHECK(f.attention_weights[0] == doctest::Approx(w0).epsilon(1e-12));
    CHECK(f.attention_weights[1] == doctest::Approx(1.0 - w0).epsilon(1e-12));
    CHECK(f.attention_weights[0] + f.attention_weights[1] == doctest::Approx(1.0));
    CHECK(f.values[0] == doctest::Approx(1.0 + w0 * 2.0));
    CHECK(f.values[1] == doctest::Approx((1.0 - w0) * 3.0));
}

TEST_CASE("attention_fuse gives identical records equal weight") {
    Vector q{0.3, 0.7, -0.2};
    Matrix k(3, 3);
    for (std::size_t j = 0; j < 3; ++j) {
        k(j, 0) = 1.0;
        k(j, 1) = 2.0;
        k(j, 2) = 3.0;
    }
    FusedQuery f = qc::attention_fuse(q, k);
    for (double w : f.attention_weights) CHECK(w == doctest::Approx(1.0 / 3.0));
    // Sum of equally weighted identical rows equals one full row.
    CHECK(f.values[0] == doctest::Approx(q[0] + 1.0));
    CHECK(f.values[2] == doctest::Approx(q[2] + 3.0));
}

TEST_CASE("attention_fuse survives large logits") {
    Vector q{1000.0, 0.0};
    Matrix k(2, 2);
    k(0, 0) = 1.0;
    k(1, 0) = 0.999;
    FusedQuery f = qc::attention_fuse(q, k);
    CHECK(std::isfinite(f.attention_weights[0]));
    CHECK(f.attention_weights[0] + f.attention_weights[1] == doctest::Approx(1.0));
    CHECK(f.attention_weights[0] > f.attention_weights[1]);

    Matrix bad(1, 3);
    CHECK_THROWS_AS(qc::attention_fuse(q, bad), qc::RuntimeFault);
}

TEST_CASE("compute_semi_targets keeps cosines at or above tau") {
    FusedQuery f;
    f.values = {1.0, 0.0};
    Matrix labels(3, 2);
    labels(0, 0) = 2.0;                     // cos 1
    labels(1, 0) = 1.0; labels(1, 1) = 1.0; // cos 1/sqrt(2) ~ 0.7071
    labels(2, 1) = 5.0;                     // cos 0

    SemiTargets t = qc::compute_semi_targets(f, labels, 0.5);
    REQUIRE(t.entries.size() == 2);
    CHECK(t.entries.at(0) == doctest::Approx(1.0));
    CHECK(t.entries.at(1) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(t.entries.count(2) == 0);

    // Threshold is inclusive.
    SemiTargets exact = qc::compute_semi_targets(f, labels, 1.0);
    REQUIRE(exact.entries.size() == 1);
    CHECK(exact.entries.at(0) == doctest::Approx(1.0));

    SemiTargets none = qc::compute_semi_targets(f, labels, 1.0 + 1e-12);
    CHECK(none.entries.empty());
}

TEST_CASE("compute_semi_targets zero norms score zero instead of throwing") {
    FusedQuery zero_q;
    zero_q.values = {0.0, 0.0};
    Matrix labels(1, 2);
    labels(0, 0) = 1.0;
    CHECK(qc::compute_semi_targets(zero_q, labels, 0.0).entries.empty());

    FusedQuery f;
    f.values = {1.0, 0.0};
    Matrix with_zero_row(2, 2);
    with_zero_row(0, 0) = 1.0;  // row 1 all zero
    SemiTargets t = qc::compute_semi_targets(f, with_zero_row, 0.0);
    CHECK(t.entries.count(0) == 1);
    CHECK(t.entries.count(1) == 0);
}

TEST_CASE("tau_at walks a linear schedule") {
    qc::TauSchedule s{1.0, 0.8, 5};
    CHECK(qc::tau_at(s, 0) == doctest::Approx(1.0));
    CHECK(qc::tau_at(s, 4) == doctest::Approx(0.8));
    CHECK(qc::tau_at(s, 2) == doctest::Approx(0.9));
    CHECK(qc::tau_at(s, 1) == doctest::Approx(0.95));

    // Monotone non-increasing across the whole schedule.
    qc::TauSchedule long_s{0.97, 0.6, 23};
    double prev = 2.0;
    for (int e = 0; e < 23; ++e) {
        double v = qc::tau_at(long_s, e);
        CHECK(v <= prev + 1e-15);
        prev = v;
    }
    CHECK(qc::tau_at(long_s, 0) == doctest::Approx(0.97));
    CHECK(qc::tau_at(long_s, 22) == doctest::Approx(0.6));

    // One epoch jumps straight to the end value.
    CHECK(qc::tau_at({1.0, 0.8, 1}, 0) == doctest::Approx(0.8));

    // Constant schedule stays put.
    qc::TauSchedule flat{0.9, 0.9, 4};
    for (int e = 0; e < 4; ++e) CHECK(qc::tau_at(flat, e) == doctest::Approx(0.9));
}

TEST_CASE("tau_at validates schedule and epoch") {
    CHECK_THROWS_AS(qc::tau_at({1.0, 0.8, 0}, 0), qc::ConfigError);
    CHECK_THROWS_AS(qc::tau_at({0.8, 0.9, 3}, 0), qc::ConfigError);   // rising
    CHECK_THROWS_AS(qc::tau_at({1.1, 0.8, 3}, 0), qc::ConfigError);   // start > 1
    CHECK_THROWS_AS(qc::tau_at({1.0, -0.1, 3}, 0), qc::ConfigError);  // end < 0
    CHECK_THROWS_AS(qc::tau_at({1.0, 0.8, 3}, 3), qc::ConfigError);
    CHECK_THROWS_AS(qc::tau_at({1.0, 0.8, 3}, -1), qc::ConfigError);
}

TEST_CASE("fuse_targets clamps click plus semi at one") {
    Vector click{1.0, 0.0, 0.0, 1.0};
    SemiTargets semi;
    semi.entries[0] = 0.9;  // already clicked: stays 1
    semi.entries[1] = 0.85;
    semi.entries[2] = 1.0;

    Vector y = qc::fuse_targets(click, semi);
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(0.85));
    CHECK(y[2] == doctest::Approx(1.0));
    CHECK(y[3] == doctest::Approx(1.0));

    Vector no_semi = qc::fuse_targets(click, SemiTargets{});
    CHECK(no_semi == click);

    Vector bad{0.5, 0.0};
    CHECK_THROWS_AS(qc::fuse_targets(bad, SemiTargets{}), qc::ValidationError);

    SemiTargets out_of_range;
    out_of_range.entries[9] = 0.9;
    CHECK_THROWS_AS(qc::fuse_targets(click, out_of_range), qc::RuntimeFault);
}
