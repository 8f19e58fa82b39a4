#include <cmath>
#include <functional>

#include "doctest.h"
#include "waitlist/policy.hpp"

using namespace waitlist;

namespace {

// Two centers A = 0 (v = 7) and B = 1 (v = 2); entering at age 4 leaves two
// periods.
PolicyProblem illustrative(double delta = 0.99) {
  PolicyProblem p;
  p.entry_age = 4;
  p.s1 = 26;
  p.pi1 = {0.1, 0.5};
  p.pi2 = {0.5, 0.9};
  p.draw.v = Eigen::Vector2d(7.0, 2.0);
  p.delta = delta;
  return p;
}

std::span<const double> span_of(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// Best single-period value over every subset of at most k centers, each listed
// in descending v.
double exhaustive_single_period(std::span<const double> v, double v0, std::span<const double> pi,
                                int k) {
  const int n = static_cast<int>(v.size());
  double best = v0;
  std::function<void(Rol&, int)> walk = [&](Rol& prefix, int next) {
    for (int j = next; j < n; ++j) {
      prefix.push_back_unchecked(j);
      best = std::max(best, single_period_value(canonical_order(prefix, v), v, v0, pi));
      if (static_cast<int>(prefix.size()) < k) walk(prefix, j + 1);
      prefix.erase_at(prefix.size() - 1);
    }
  };
  Rol prefix;
  walk(prefix, 0);
  return best;
}

PolicyProblem random_problem(Rng& rng, int num_centers, int max_list) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PolicyProblem p;
  p.entry_age = std::uniform_int_distribution<int>(0, kMaxAge)(rng);
  p.max_list = max_list;
  p.draw.v.resize(num_centers);
  for (int j = 0; j < num_centers; ++j) {
    const double base = unit(rng);
    p.pi1.push_back(base);
    p.pi2.push_back(base + (1.0 - base) * unit(rng));
    p.draw.v(j) = normal(rng);
  }
  for (int a = 1; a <= kMaxAge; ++a) p.draw.v0[a] = 0.3 * normal(rng);
  if (p.entry_age == kMaxAge) p.pi2.assign(p.pi2.size(), 0.0);
  return p;
}

}  // namespace

TEST_CASE("[DERIVED] flow utility") {
  Theta t;
  t.alpha = Eigen::VectorXd::Zero(1);
  t.beta = Eigen::VectorXd::Zero(1);
  const std::vector<int> same{1};
  CHECK(flow_utility(t, 26, same, Eigen::VectorXd::Zero(1))(0) == -1.0);

  t.alpha(0) = 2.0;
  t.beta(0) = 0.1;
  const std::vector<int> other{0};
  CHECK(flow_utility(t, 26, other, Eigen::VectorXd::Zero(1))(0) == doctest::Approx(4.6));
  CHECK_THROWS_AS(flow_utility(t, 26, other, Eigen::VectorXd::Zero(2)), InvalidInput);
}

TEST_CASE("[DERIVED] utility draws") {
  Theta t;
  t.alpha = Eigen::Vector3d(1.0, 2.0, 3.0);
  t.beta = Eigen::Vector3d(0.0, 0.1, 0.0);
  t.sigma = Eigen::Matrix3d::Zero();
  t.mu0 = {0.0, 0.5, 0.5, 1.0, 1.0, 1.0};
  const std::vector<int> d{1, 0, 0};

  SUBCASE("zero variance returns the means") {
    Rng rng = make_rng(1, "zero");
    const auto u = draw_utilities(t, 25, d, rng);
    CHECK(u.v(0) == 0.0);
    CHECK(u.v(1) == doctest::Approx(4.5));
    CHECK(u.v(2) == 3.0);
    CHECK(u.v0 == t.mu0);
  }
  SUBCASE("fixed seed repeats") {
    t.sigma = Eigen::Matrix3d::Identity();
    t.sigma0sq.fill(1.0);
    Rng r1 = make_rng(9, "u");
    Rng r2 = make_rng(9, "u");
    const auto a = draw_utilities(t, 25, d, r1);
    const auto b = draw_utilities(t, 25, d, r2);
    CHECK(a.v == b.v);
    CHECK(a.v0 == b.v0);
  }
  SUBCASE("sample covariance matches sigma") {
    Eigen::Matrix2d area;
    area << 1.0, 0.4, 0.4, 0.8;
    const std::vector<int> areas{0, 0, 1};
    t.sigma = area_block_sigma(area, areas);
    CHECK(t.sigma(0, 1) == 1.0);
    CHECK(t.sigma(0, 2) == 0.4);
    CHECK(t.sigma(2, 2) == 0.8);
    Rng rng = make_rng(4, "cov");
    const int n = 100000;
    Eigen::MatrixXd x(n, 3);
    for (int i = 0; i < n; ++i) x.row(i) = draw_utilities(t, 25, d, rng).v.transpose();
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / (n - 1);
    CHECK((cov - t.sigma).norm() / t.sigma.norm() < 0.05);
  }
  SUBCASE("indefinite sigma is rejected") {
    t.sigma << 1, 2, 0, 2, 1, 0, 0, 0, 1;
    Rng rng = make_rng(1, "bad");
    CHECK_THROWS_AS(draw_utilities(t, 25, d, rng), ParameterError);
    CHECK_THROWS_AS(t.validate(), ParameterError);
  }
}

TEST_CASE("[TRIVIAL] theta validation") {
  Theta t;
  t.alpha = Eigen::Vector2d(1, 2);
  t.beta = Eigen::Vector2d(0, 0);
  t.sigma = Eigen::Matrix2d::Identity();
  CHECK_NOTHROW(t.validate());
  t.gamma = -2.0;
  CHECK_THROWS_AS(t.validate(), ParameterError);
  t.gamma = -1.0;
  t.mu0[0] = 0.1;
  CHECK_THROWS_AS(t.validate(), ParameterError);
  t.mu0[0] = 0.0;
  t.sigma0sq[2] = -1.0;
  CHECK_THROWS_AS(t.validate(), ParameterError);
}

TEST_CASE("[PAPER] two-period values of the illustrative example") {
  const auto p = illustrative();
  CHECK(total_value(p, Rol{0, 1}, Rol{0, 1}) == doctest::Approx(5.1442).epsilon(1e-12));
  CHECK(total_value(p, Rol{0}, Rol{0, 1}) == doctest::Approx(5.3134).epsilon(1e-12));
  CHECK(total_value(p, Rol{}, Rol{}) == 0.0);

  auto last = p;
  last.entry_age = kMaxAge;
  last.pi2 = {0.0, 0.0};
  CHECK(std::abs(total_value(last, Rol{0, 1}, Rol{}) - 1.60) < 1e-12);
  CHECK(std::abs(total_value(last, Rol{0}, Rol{}) - 0.70) < 1e-12);
}

TEST_CASE("[PAPER] forward-looking choice in the illustrative example") {
  const auto p = illustrative();
  const auto exact = brute_force_optimal_pair(p, 2);
  CHECK(exact.first == Rol{0});
  CHECK(exact.second == Rol{0, 1});
  CHECK(std::abs(exact.value - 5.3134) < 1e-9);

  const auto approx = approx_optimal_pair(p);
  CHECK(approx.first == Rol{0});
  CHECK(approx.second == Rol{0, 1});
  CHECK(approx.updates == 1);
}

TEST_CASE("[DERIVED] marginal improvement") {
  const std::vector<double> v{7.0, 2.0};
  const std::vector<double> pi{0.1, 0.5};
  const auto myopic = best_single_period_rol(v, 0.0, pi, 2);
  CHECK(myopic == Rol{0, 1});
  CHECK(std::abs(single_period_value(myopic, v, 0.0, pi) - 1.60) < 1e-12);
  CHECK(best_single_period_rol(v, 8.0, pi, 2).empty());

  SUBCASE("matches exhaustive search") {
    Rng rng = make_rng(5, "mia-unit");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int t = 0; t < 300; ++t) {
      const int j = std::uniform_int_distribution<int>(1, 8)(rng);
      const int k = std::uniform_int_distribution<int>(1, 4)(rng);
      std::vector<double> vv(static_cast<std::size_t>(j));
      std::vector<double> pp(static_cast<std::size_t>(j));
      for (int c = 0; c < j; ++c) {
        vv[static_cast<std::size_t>(c)] = normal(rng);
        pp[static_cast<std::size_t>(c)] = unit(rng);
      }
      const auto rol = best_single_period_rol(vv, 0.0, pp, k);
      CHECK(static_cast<int>(rol.size()) <= k);
      CHECK(std::abs(single_period_value(rol, vv, 0.0, pp) -
                     exhaustive_single_period(vv, 0.0, pp, k)) < 1e-9);
    }
  }
}

TEST_CASE("[DERIVED] appending a center above the outside value raises single-period value") {
  Rng rng = make_rng(8, "append");
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  for (int t = 0; t < 200; ++t) {
    const std::vector<double> v{3.0, 2.0, 1.0, 0.5};
    const std::vector<double> pi{unit(rng), unit(rng), unit(rng), unit(rng)};
    Rol rol;
    double prev = single_period_value(rol, v, 0.2, pi);
    for (CenterId j = 0; j < 4; ++j) {
      rol.push_back_unchecked(j);
      const double next = single_period_value(rol, v, 0.2, pi);
      CHECK(next > prev);
      prev = next;
    }
  }
}

TEST_CASE("[DERIVED] approximation never beats the exhaustive optimum") {
  Rng rng = make_rng(12, "dominance");
  int equal = 0;
  const int trials = 300;
  for (int t = 0; t < trials; ++t) {
    const auto p = random_problem(rng, 6, 3);
    const auto approx = approx_optimal_pair(p);
    const auto exact = brute_force_optimal_pair(p, 3);
    CHECK(approx.value <= exact.value + 1e-9);
    CHECK(approx.value == doctest::Approx(total_value(p, approx.first, approx.second)));
    if (approx.value >= exact.value - 1e-9) ++equal;
  }
  MESSAGE("approximation optimal in " << equal << " of " << trials);
  CHECK(equal >= trials / 2);
}

TEST_CASE("[DERIVED] second list is exactly optimal given the first") {
  Rng rng = make_rng(13, "second");
  for (int t = 0; t < 200; ++t) {
    auto p = random_problem(rng, 5, 3);
    if (p.entry_age == kMaxAge) continue;
    const auto approx = approx_optimal_pair(p);
    const auto v = span_of(p.draw.v);
    double best = -1e300;
    const auto first = evaluate_list(approx.first, v, p.pi1);
    std::function<void(Rol&, int)> walk = [&](Rol& prefix, int next) {
      best = std::max(best, total_value(p, first, evaluate_list(canonical_order(prefix, v), v, p.pi2)));
      if (prefix.size() == 3) return;
      for (int j = next; j < 5; ++j) {
        prefix.push_back_unchecked(j);
        walk(prefix, j + 1);
        prefix.erase_at(prefix.size() - 1);
      }
    };
    Rol prefix;
    walk(prefix, 0);
    CHECK(approx.value == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("[DERIVED] no future leaves the myopic list in place") {
  Rng rng = make_rng(14, "terminal");
  for (int t = 0; t < 100; ++t) {
    auto p = random_problem(rng, 6, 3);
    p.entry_age = kMaxAge;
    p.pi2.assign(6, 0.0);
    const auto approx = approx_optimal_pair(p);
    CHECK(approx.updates == 0);
    CHECK(approx.second.empty());
    CHECK(approx.first ==
          best_single_period_rol(span_of(p.draw.v), p.draw.v0[kMaxAge], p.pi1, 3));
  }
}

TEST_CASE("[PAPER] unchanged lotteries keep the myopic pair in the two-center example") {
  auto p = illustrative();
  p.pi2 = p.pi1;
  const auto approx = approx_optimal_pair(p);
  CHECK(approx.first == Rol{0, 1});
  CHECK(approx.second == Rol{0, 1});
  CHECK(approx.updates == 0);
  CHECK(brute_force_optimal_pair(p, 2).first == Rol{0, 1});
}

TEST_CASE("[DERIVED] a better second-round chance at the top center weakly raises first-round waitlisting") {
  double prev = -1.0;
  for (int step = 0; step <= 20; ++step) {
    auto p = illustrative();
    p.pi2 = {0.05 * step, 0.9};
    const auto exact = brute_force_optimal_pair(p, 2);
    const double p1 = evaluate_list(exact.first, span_of(p.draw.v), p.pi1).waitlist;
    CHECK(p1 >= prev - 1e-12);
    prev = p1;
  }
}

TEST_CASE("[TRIVIAL] exhaustive search edge cases") {
  PolicyProblem p;
  p.entry_age = kMaxAge;
  p.pi1 = {0.4};
  p.pi2 = {0.0};
  p.draw.v = Eigen::VectorXd::Constant(1, 1.0);
  CHECK(brute_force_optimal_pair(p, 1).first == Rol{0});
  p.draw.v(0) = -1.0;
  CHECK(brute_force_optimal_pair(p, 1).first.empty());

  Rng rng = make_rng(1, "big");
  auto big = random_problem(rng, 20, 5);
  CHECK_THROWS_AS(brute_force_optimal_pair(big, 5), EnumerationTooLarge);
}

TEST_CASE("[DERIVED] problem construction from a belief") {
  LotteryBelief belief(ScoreGrid{});
  for (int j = 0; j < 2; ++j) {
    std::vector<double> row(16);
    for (int s = 0; s < 16; ++s) row[static_cast<std::size_t>(s)] = s >= 8 ? 1.0 : 0.0;  // cutoff 28
    belief.set({0, 0}, j, row);
    belief.set({1, 1}, j, row);
    belief.set({0, 5}, j, row);
  }
  UtilityDraw d;
  d.v = Eigen::Vector2d(1.0, 2.0);
  const auto p = make_problem(belief, {0, 0}, 26, 2, d, 0.95);
  CHECK(p.pi1 == std::vector<double>{0.0, 0.0});
  CHECK(p.pi2 == std::vector<double>{1.0, 1.0});
  const auto none = make_problem(belief, {0, 0}, 26, 0, d, 0.95);
  CHECK(none.pi2 == std::vector<double>{0.0, 0.0});
  const auto old = make_problem(belief, {0, 5}, 26, 2, d, 0.95);
  CHECK(old.pi2 == std::vector<double>{0.0, 0.0});
  CHECK_THROWS_AS(make_problem(belief, {0, 0}, 40, 2, d, 0.95), LookupError);
  CHECK_THROWS_AS(make_problem(belief, {0, 2}, 26, 2, d, 0.95), LookupError);
}

TEST_CASE("[TRIVIAL] benchmark bookkeeping") {
  BenchmarkConfig config;
  config.num_centers = 6;
  config.draws = 40;
  config.c_list = {0.0};
  config.pi1.assign(6, 1.0);
  config.pi2.assign(6, 1.0);
  const auto rows = mia_benchmark(config, 3);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].fraction_correct == 1.0);

  config.pi1.clear();
  config.pi2.clear();
  config.c_list = BenchmarkConfig::table_c_values();
  for (const auto& row : mia_benchmark(config, 3)) {
    double total = 0.0;
    for (double u : row.updates) total += u;
    CHECK(total == doctest::Approx(1.0));
  }
  const auto [pi1, pi2] = synthetic_benchmark_pis(10);
  for (std::size_t j = 0; j < pi1.size(); ++j) CHECK(pi2[j] >= pi1[j]);
}

TEST_CASE("[TRIVIAL] objective forms are both available") {
  auto p = illustrative();
  p.mode = ObjectiveMode::Succinct;
  const double succinct = total_value(p, Rol{0}, Rol{0, 1});
  CHECK(std::isfinite(succinct));
  const double agreement = objective_mode_agreement(50, 4, 2, 6);
  CHECK(agreement >= 0.0);
  CHECK(agreement <= 1.0);
  MESSAGE("expanded and succinct argmax agree on " << agreement);
}
