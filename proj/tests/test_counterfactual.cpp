#include <cmath>
#include <limits>
#include <map>

#include "doctest.h"
#include "market_fixture.hpp"
#include "waitlist/counterfactual.hpp"

using namespace waitlist;

namespace {

UtilityDraw one_center(double v, double v0) {
  UtilityDraw u;
  u.v = Eigen::VectorXd::Constant(1, v);
  u.v0.fill(v0);
  return u;
}

Panel one_applicant(ApplicantHistory h) {
  Panel p;
  p.bonus = 2;
  p.histories.push_back(std::move(h));
  return p;
}

double geometric(int terms, double delta) {
  double s = 0.0;
  for (int k = 0; k < terms; ++k) s += std::pow(delta, k);
  return s;
}

}  // namespace

TEST_CASE("[DERIVED] welfare of single applicants") {
  const Population pop(1);
  const double delta = 0.95;
  ApplicantHistory h;
  h.r1 = Rol{0};

  SUBCASE("placed at entry keeps the seat to age 5") {
    h.outcome1.center = 0;
    const auto u = one_center(10.0, -3.0);
    const std::vector<PairChoice> ch(1);
    for (int a0 = 0; a0 <= kMaxAge; ++a0) {
      h.entry_age = a0;
      const auto w = welfare(one_applicant(h), pop, {&u, 1}, ch, LotteryBelief{}, delta);
      CHECK(w[0].v == doctest::Approx(10.0 * horizon_weight(a0, delta)).epsilon(1e-12));
      CHECK(w[0].v1 == 10.0);
    }
  }
  SUBCASE("entering at the last age has no second period") {
    h.entry_age = kMaxAge;
    h.outcome1 = Placement::waitlist();
    h.second = SecondRound::Ended;
    const auto u = one_center(10.0, 2.0);
    const std::vector<PairChoice> ch(1);
    const auto w = welfare(one_applicant(h), pop, {&u, 1}, ch, LotteryBelief{}, delta);
    CHECK(w[0].v2 == 0.0);
    CHECK(w[0].v == 2.0);
  }
  SUBCASE("waitlisted twice takes the outside option throughout") {
    h.entry_age = 1;
    h.outcome1 = Placement::waitlist();
    h.second = SecondRound::Observed;
    h.r2 = Rol{0};
    h.outcome2 = Placement::waitlist();
    UtilityDraw u = one_center(10.0, 0.0);
    u.v0 = {0.0, 1.0, 2.0, 3.0, 4.0, 5.0};
    const std::vector<PairChoice> ch(1);
    const auto w = welfare(one_applicant(h), pop, {&u, 1}, ch, LotteryBelief{}, delta);
    CHECK(w[0].waitlisted2);
    CHECK(w[0].list2 == 1);
    CHECK(w[0].v2 == doctest::Approx(2 + delta * 3 + delta * delta * 4 + std::pow(delta, 3) * 5));
  }
  SUBCASE("second round after the panel is valued under the belief") {
    LotteryBelief belief(ScoreGrid{});
    belief.set_constant({0, 0}, 0, 0.0);
    belief.set_constant({1, 1}, 0, 0.5);
    h.entry_age = 0;
    h.s1 = 27;
    h.outcome1 = Placement::waitlist();
    h.second = SecondRound::Unobserved;
    const auto u = one_center(10.0, 1.0);
    std::vector<PairChoice> ch(1);
    ch[0].first = Rol{0};
    ch[0].second = Rol{0};
    const double d = 0.9;
    const auto w = welfare(one_applicant(h), pop, {&u, 1}, ch, belief, d);
    CHECK(w[0].v1 == 1.0);
    CHECK(w[0].v2 == doctest::Approx(geometric(5, d) * 5.0 + 0.5 * geometric(5, d)));
    CHECK(w[0].v == doctest::Approx(w[0].v1 + d * w[0].v2));
  }
}

TEST_CASE("[TRIVIAL] score buckets") {
  CHECK(bucket_of(11) == ScoreBucket::UpTo25);
  CHECK(bucket_of(25) == ScoreBucket::UpTo25);
  CHECK(bucket_of(26) == ScoreBucket::S26);
  CHECK(bucket_of(27) == ScoreBucket::S27);
  CHECK(bucket_of(28) == ScoreBucket::From28);
  CHECK(bucket_of(35) == ScoreBucket::From28);
  CHECK(std::string(bucket_name(ScoreBucket::UpTo25)) == "<=25");
}

TEST_CASE("[TRIVIAL] scenario validation") {
  Scenario s;
  CHECK_NOTHROW(s.validate());
  s.draws = 0;
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("scenario.draws"), InvalidInput);
  s = Scenario{};
  s.damping = 1.0;
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("scenario.damping"), InvalidInput);
  s = Scenario{};
  s.tolerance = 0.0;
  CHECK_THROWS_AS(s.validate(), InvalidInput);
}

TEST_CASE("[DERIVED] counterfactual equilibria on a small market") {
  const auto c = testing::small_market(41, 40);
  const auto g = generate_market(c);
  Scenario s;
  s.bonuses = {0, 2};
  s.draws = 2;
  s.bootstrap = 50;
  s.max_iters = 10;
  s.damping = 0.5;
  s.tolerance = 0.05;
  s.seed = 17;
  const auto out = run_counterfactuals(c.theta_true, g.market, g.population, g.belief, s);
  REQUIRE(out.size() == 2);

  SUBCASE("welfare identity for every applicant") {
    for (const auto& o : out)
      for (const auto& d : o.draws) {
        CHECK(d.welfare.size() == g.population.size());
        for (const auto& w : d.welfare) CHECK(w.v == w.v1 + c.theta_true.delta * w.v2);
      }
  }
  SUBCASE("bonuses share applicants and utility draws") {
    for (int m = 0; m < s.draws; ++m)
      for (std::size_t i = 0; i < g.population.size(); ++i) {
        const auto& a = out[0].draws[m].welfare[i];
        const auto& b = out[1].draws[m].welfare[i];
        CHECK(a.id == b.id);
        CHECK(a.s1 == b.s1);
      }
  }
  SUBCASE("runs are reproducible") {
    const auto again = iterate_equilibrium(c.theta_true, g.market, g.population, g.belief, 2, s);
    for (int m = 0; m < s.draws; ++m) {
      CHECK(again.draws[m].belief == out[1].draws[m].belief);
      CHECK(again.draws[m].residuals == out[1].draws[m].residuals);
    }
  }
  SUBCASE("histograms sum to one per cell and bonus") {
    std::map<std::tuple<int, int, int>, double> totals;
    for (const auto& r : cutoff_histogram(out)) {
      CHECK(r.frequency > 0.0);
      CHECK(r.value >= 11);
      CHECK(r.value <= 35);
      totals[{r.year, r.age, r.bonus}] += r.frequency;
    }
    CHECK_FALSE(totals.empty());
    for (const auto& [k, t] : totals) CHECK(t == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("tables cover every bonus") {
    const auto wt = welfare_table(out);
    const auto bt = bucket_table(out);
    const auto ct = convergence_table(out);
    for (int b : s.bonuses) {
      CHECK(std::count_if(wt.begin(), wt.end(), [&](const WelfareRow& r) { return r.bonus == b; }) > 0);
      int n = 0;
      for (const auto& r : bt)
        if (r.bonus == b) {
          n += r.count;
          CHECK(r.min <= r.q25);
          CHECK(r.q25 <= r.median);
          CHECK(r.median <= r.q75);
          CHECK(r.q75 <= r.max);
        }
      CHECK(n == s.draws * static_cast<int>(g.population.size()));
    }
    int iterations = 0;
    for (const auto& o : out)
      for (const auto& d : o.draws) iterations += static_cast<int>(d.residuals.size());
    CHECK(static_cast<int>(ct.size()) == iterations);
  }
}

TEST_CASE("[DERIVED] bonus neutrality") {
  // With no bonus a waitlisted applicant faces the lottery of a fresh
  // applicant of the same score one year later.
  const auto c = testing::small_market(42, 40);
  const auto g = generate_market(c);
  const auto u = realize_population(c.theta_true, g.market, g.population,
                                    population_shocks(g.population, 4, c.seed, 0));
  for (int s1 = 20; s1 <= 30; ++s1) {
    const auto waiting = make_problem(g.belief, {0, 0}, s1, 0, u[0], c.theta_true.delta);
    const auto fresh = make_problem(g.belief, {1, 1}, s1, 0, u[0], c.theta_true.delta);
    CHECK(waiting.pi2 == fresh.pi1);
  }
}

TEST_CASE("[DERIVED] slack market converges at once") {
  auto c = testing::small_market(43, 24);
  for (auto& center : c.centers) center.seats.fill(100);
  const auto g = generate_market(c);
  Scenario s;
  s.bonuses = {2};
  s.draws = 2;
  s.bootstrap = 20;
  s.tolerance = std::numeric_limits<double>::infinity();
  const auto out = run_counterfactuals(c.theta_true, g.market, g.population, g.belief, s);
  for (const auto& d : out[0].draws) {
    CHECK(d.converged);
    CHECK(d.iterations == 1);
  }
  for (const auto& r : cutoff_histogram(out)) {
    CHECK(r.value == 11);
    CHECK(r.frequency == 1.0);
  }
}
