// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "../oracles.hpp"
#include "distill.hpp"
#include "errors.hpp"

#include <cmath>
#include <limits>

using namespace bckd;

TEST_SUITE("distill") {
  TEST_CASE("kd loss examples") {
    RowMatrix z = RowMatrix::Zero(2, 1);
    CHECK(kd_loss(z, z, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(std::log(2.0) == doctest::Approx(0.693147).epsilon(1e-6));

    RowMatrix sharp(2, 1);
    sharp << 50, -50;
    CHECK(kd_loss(sharp, sharp, 1.0) < 1e-40);

    const RowMatrix t = oracle::random_matrix(3, 4, 11, -3, 3), s = oracle::random_matrix(3, 4, 12, -3, 3);
    CHECK(oracle::rel_err(kd_loss(t, s, 2.0), oracle::kd_loss(t, s, 2.0)) <= 1e-12);
  }

  TEST_CASE("kd loss matches the oracle on 20 seeded instances") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const int c = 2 + seed % 6, n = 1 + seed % 9;
      const double tau = 0.5 + 0.75 * (seed % 5);
      const RowMatrix t = oracle::random_matrix(c, n, seed, -4, 4), s = oracle::random_matrix(c, n, seed + 99, -4, 4);
      CHECK(oracle::rel_err(kd_loss(t, s, tau), oracle::kd_loss(t, s, tau)) <= 1e-9);
    }
  }

  TEST_CASE("kd loss gradient matches central differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const double tau = 1.0 + seed;
      const RowMatrix t = oracle::random_matrix(4, 5, seed, -2, 2);
      RowMatrix s = oracle::random_matrix(4, 5, seed + 7, -2, 2);
      RowMatrix d;
      kd_loss(t, s, tau, &d);
      const double h = 1e-6;
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        const double keep = s.data()[i];
        s.data()[i] = keep + h;
        const double up = kd_loss(t, s, tau);
        s.data()[i] = keep - h;
        const double down = kd_loss(t, s, tau);
        s.data()[i] = keep;
        CHECK(oracle::grad_err(d.data()[i], (up - down) / (2 * h)) < 1e-4);
      }
    }
  }

  TEST_CASE("kd gradient stays accurate at large temperature") {
    // At tau = 1e4 a naive q - p difference cancels to noise; the gradient must
    // still approach the centred logit-matching limit (s - t - mean) / C.
    const RowMatrix t = oracle::random_matrix(5, 3, 1, -2, 2), s = oracle::random_matrix(5, 3, 2, -2, 2);
    RowMatrix d;
    kd_loss(t, s, 1e4, &d);
    for (Eigen::Index n = 0; n < 3; ++n) {
      const Eigen::VectorXd diff = s.col(n) - t.col(n);
      const Eigen::VectorXd limit = (diff.array() - diff.mean()).matrix() / (5.0 * 3.0);
      for (int c = 0; c < 5; ++c) CHECK(std::abs(d(c, n) - limit(c)) < 1e-3 * limit.cwiseAbs().maxCoeff() + 1e-12);
    }
  }

  TEST_CASE("kd loss rejects bad inputs") {
    const RowMatrix a = RowMatrix::Zero(2, 3), b = RowMatrix::Zero(3, 3);
    CHECK_THROWS_AS(kd_loss(a, a, 0.0), Error);
    CHECK_THROWS_AS(kd_loss(a, a, -1.0), Error);
    CHECK_THROWS_AS(kd_loss(a, b, 1.0), Error);
    CHECK_THROWS_AS(kd_loss(a, a, std::numeric_limits<double>::infinity()), Error);
  }

  TEST_CASE("schedule r endpoints and errors") {
    CHECK(schedule_r(1, 10) == 1.0);
    CHECK(schedule_r(10, 10) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(schedule_r(1, 1) == 1.0);
    for (int t_max = 1; t_max <= 200; ++t_max) {
      CHECK(schedule_r(1, t_max) == 1.0);
      CHECK(schedule_r(t_max, t_max) == 1.0 / t_max);
    }
    CHECK_THROWS_AS(schedule_r(0, 10), Error);
    CHECK_THROWS_AS(schedule_r(11, 10), Error);
    CHECK_THROWS_AS(schedule_r(1, 0), Error);
  }

  TEST_CASE("total loss examples") {
    DistillSchedule s;
    s.t = 1;
    s.t_max = 10;
    CHECK(total_loss(0.7, 0.0, 0.0, s).total == 0.7);
    const LossBreakdown b = total_loss(1.0, 0.1, 0.02, s);
    CHECK(b.total == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(b.r_t == 1.0);
    s.t = 10;
    CHECK(total_loss(1.0, 0.1, 0.02, s).total == doctest::Approx(1.2).epsilon(1e-14));
    s.use_weight_decay = false;
    CHECK(total_loss(1.0, 0.1, 0.02, s).r_t == 1.0);
    CHECK(total_loss(1.0, 0.1, 0.02, s).total == doctest::Approx(3.0).epsilon(1e-15));
  }

  TEST_CASE("distillation share never grows over the schedule") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const RowMatrix l = oracle::random_matrix(1, 3, seed, 0.01, 2.0);
      DistillSchedule s;
      s.t_max = 1 + static_cast<int>(seed * 7 % 97);
      double prev = std::numeric_limits<double>::infinity();
      for (int t = 1; t <= s.t_max; ++t) {
        s.t = t;
        const LossBreakdown b = total_loss(l(0, 0), l(0, 1), l(0, 2), s);
        const double share = (b.total - b.l_ss) / b.total;
        CHECK(share <= prev);
        prev = share;
      }
    }
  }

  TEST_CASE("temperature step") {
    DistillSchedule s;
    CHECK(temperature_step(s, 0.4).tau == 1.0);
    CHECK(temperature_step(s, 0.5).tau == 1.0);
    CHECK(temperature_step(s, 0.6).tau == doctest::Approx(1.05).epsilon(1e-15));
    double want = 1.0;
    for (int i = 0; i < 10; ++i) {
      s = temperature_step(s, 0.6);
      want *= 1.05;
    }
    CHECK(s.tau == want);
    CHECK(s.tau == doctest::Approx(1.6289).epsilon(1e-4));
    CHECK_THROWS_AS(temperature_step(s, -0.1), Error);
  }

  TEST_CASE("value range and schedule validation") {
    const std::vector<double> v = {0.5, -1.5, 2.0};
    CHECK(value_range(v) == 3.5);
    CHECK(value_range(std::span<const double>()) == 0.0);
    DistillSchedule s;
    CHECK_NOTHROW(validate(s));
    s.tau_growth = 0.9;
    CHECK_THROWS_AS(validate(s), Error);
    s = DistillSchedule{};
    s.t = 3;
    CHECK_THROWS_AS(validate(s), Error);
    s = DistillSchedule{};
    s.alpha = -1;
    CHECK_THROWS_AS(validate(s), Error);
  }
}
