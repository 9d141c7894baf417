// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "cucn/metrics.hpp"
#include "cucn/tensor.hpp"

using namespace cucn;
using namespace cucn::metrics;

TEST_CASE("a perfect classifier has a diagonal confusion matrix") {
  const std::vector<std::int64_t> y{0, 1, 2, 2, 1};
  const auto m = confusion_matrix(y, y, 3);
  CHECK(m == ConfusionMatrix{{1, 0, 0}, {0, 2, 0}, {0, 0, 2}});
  const auto r = summarize(m);
  CHECK(r.overall_acc == 1.0);
  CHECK(r.per_class_acc == std::vector<double>{1, 1, 1});
  CHECK(r.acc_gap == 0.0);
}

TEST_CASE("a class never predicted gets an all-zero column") {
  const std::vector<std::int64_t> y{0, 1, 2, 0}, p{0, 0, 0, 0};
  const auto m = confusion_matrix(p, y, 3);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(m[r][1] == 0);
    CHECK(m[r][2] == 0);
  }
  const auto rep = summarize(m);
  CHECK(rep.per_class_acc == std::vector<double>{1, 0, 0});
  CHECK(rep.max_class_acc == 1.0);
  CHECK(rep.min_class_acc == 0.0);
}

TEST_CASE("confusion counts agree with a direct recount") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::int64_t> cls(0, 4);
  std::vector<std::int64_t> y(1000), p(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    y[i] = cls(rng);
    p[i] = rng() % 3 == 0 ? cls(rng) : y[i];
  }
  const auto rep = summarize(confusion_matrix(p, y, 5));
  std::int64_t total = 0, correct = 0;
  for (std::int64_t a = 0; a < 5; ++a) {
    std::int64_t support = 0, hits = 0;
    for (std::size_t i = 0; i < 1000; ++i) {
      support += y[i] == a;
      hits += y[i] == a && p[i] == a;
    }
    for (std::int64_t b = 0; b < 5; ++b) {
      std::int64_t n = 0;
      for (std::size_t i = 0; i < 1000; ++i) n += y[i] == a && p[i] == b;
      CHECK(rep.confusion[a][b] == n);
      total += n;
    }
    correct += hits;
    CHECK(rep.per_class_acc[a] == static_cast<double>(hits) / static_cast<double>(support));
  }
  CHECK(total == 1000);
  CHECK(rep.overall_acc == static_cast<double>(correct) / 1000.0);
  const auto [lo, hi] = std::minmax_element(rep.per_class_acc.begin(), rep.per_class_acc.end());
  CHECK(rep.min_class_acc == *lo);
  CHECK(rep.max_class_acc == *hi);
  CHECK(rep.acc_gap == *hi - *lo);
}

TEST_CASE("a two-class worked example") {
  const auto r = summarize({{8, 2}, {3, 7}});
  CHECK(r.per_class_acc == std::vector<double>{0.8, 0.7});
  CHECK(r.overall_acc == 0.75);
  CHECK(r.max_class_acc == 0.8);
  CHECK(r.min_class_acc == 0.7);
  CHECK(r.acc_gap == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("the identity matrix has no gap") {
  const auto r = summarize({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});
  CHECK(r.acc_gap == 0.0);
  CHECK(r.overall_acc == 1.0);
}

TEST_CASE("a three-class example with a wide gap") {
  const auto r = summarize({{93, 7, 0}, {30, 37, 33}, {10, 15, 75}});
  CHECK(r.max_class_acc * 100 == doctest::Approx(93));
  CHECK(r.min_class_acc * 100 == doctest::Approx(37));
  CHECK(r.acc_gap * 100 == doctest::Approx(56));
}

TEST_CASE("reported statistics are invariant to sample order and relabeling") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::int64_t> cls(0, 3);
  std::vector<std::int64_t> y(200), p(200);
  for (std::size_t i = 0; i < 200; ++i) {
    y[i] = cls(rng);
    p[i] = cls(rng) == 0 ? cls(rng) : y[i];
  }
  const auto base = summarize(confusion_matrix(p, y, 4));

  std::vector<std::size_t> order(200);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::int64_t> ys, ps;
  for (const auto i : order) {
    ys.push_back(y[i]);
    ps.push_back(p[i]);
  }
  CHECK(summarize(confusion_matrix(ps, ys, 4)) == base);

  const std::vector<std::int64_t> relabel{2, 0, 3, 1};
  for (auto& v : ys) v = relabel[v];
  for (auto& v : ps) v = relabel[v];
  const auto moved = summarize(confusion_matrix(ps, ys, 4));
  CHECK(moved.overall_acc == base.overall_acc);
  CHECK(moved.max_class_acc == base.max_class_acc);
  CHECK(moved.min_class_acc == base.min_class_acc);
  for (std::size_t c = 0; c < 4; ++c)
    CHECK(moved.per_class_acc[relabel[c]] == base.per_class_acc[c]);
}

TEST_CASE("classes without support are excluded from max and min") {
  const auto r = summarize({{4, 1, 0}, {0, 0, 0}, {1, 0, 1}});
  CHECK(r.excluded_classes == std::vector<std::int64_t>{1});
  CHECK(r.per_class_acc[1] == 0.0);
  CHECK(r.max_class_acc == 0.8);
  CHECK(r.min_class_acc == 0.5);
}

TEST_CASE("invalid inputs are rejected") {
  CHECK_THROWS(summarize({}));
  CHECK_THROWS(summarize({{0, 0}, {0, 0}}));
  CHECK_THROWS(summarize({{1, 0}, {0}}));
  CHECK_THROWS(summarize({{1, -1}, {0, 1}}));
  const std::vector<std::int64_t> a{0, 1}, b{0}, bad{0, 2};
  CHECK_THROWS(confusion_matrix(a, b, 2));
  CHECK_THROWS(confusion_matrix(bad, a, 2));
}

TEST_CASE("reports round-trip through JSON and CSV") {
  const auto r = summarize({{5, 1, 0}, {0, 0, 0}, {2, 3, 11}});
  const auto json = to_json(r);
  CHECK(json.find("\"overall_acc\"") != std::string::npos);
  CHECK(json.find("\"acc_gap\"") != std::string::npos);
  CHECK(report_from_json(json) == r);
  CHECK(to_json(report_from_json(json)) == json);
  CHECK(confusion_csv(r.confusion) == "5,1,0\n0,0,0\n2,3,11\n");
  CHECK(parse_confusion_csv(confusion_csv(r.confusion)) == r.confusion);
  CHECK_THROWS_AS(report_from_json("{\"overall_acc\": 1}"), FormatError);
  CHECK_THROWS_AS(report_from_json("not json"), FormatError);
}
