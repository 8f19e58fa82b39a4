#include <cmath>

#include "bootstrap_oracle.hpp"
#include "doctest.h"
#include "waitlist/lottery.hpp"

using namespace waitlist;

namespace {

const CenterId A = 0;
const CenterId B = 1;

void check_lottery(const Lottery& l, double a, double b, double w) {
  CHECK(std::abs(l.assign.at(A) - a) < 1e-12);
  CHECK(std::abs(l.assign.at(B) - b) < 1e-12);
  CHECK(std::abs(l.waitlist - w) < 1e-12);
  CHECK(std::abs(l.total() - 1.0) < 1e-12);
}

}  // namespace

TEST_CASE("[PAPER] product lotteries of the two-center example") {
  const std::map<CenterId, double> first{{A, 0.1}, {B, 0.5}};
  const std::map<CenterId, double> second{{A, 0.5}, {B, 0.9}};
  const std::map<CenterId, double> v{{A, 7.0}, {B, 2.0}};

  check_lottery(lottery_from_rol(first, Rol{A, B}), 0.10, 0.45, 0.45);
  check_lottery(lottery_from_rol(first, Rol{A}), 0.10, 0.0, 0.90);
  check_lottery(lottery_from_rol(first, Rol{B, A}), 0.05, 0.50, 0.45);
  check_lottery(lottery_from_rol(first, Rol{B}), 0.0, 0.50, 0.50);
  check_lottery(lottery_from_rol(second, Rol{A, B}), 0.50, 0.45, 0.05);
  check_lottery(lottery_from_rol(second, Rol{B}), 0.0, 0.90, 0.10);

  CHECK(std::abs(lottery_from_rol(first, Rol{A, B}).expected_value(v) - 1.60) < 1e-12);
  CHECK(std::abs(lottery_from_rol(second, Rol{A, B}).expected_value(v) - 4.40) < 1e-12);
  CHECK(std::abs(lottery_from_rol(first, Rol{B, A}).expected_value(v) - 1.35) < 1e-12);
  // B listed first with pi = 0.9: 0.9 * 2 + 0.1 * 0.5 * 7.
  check_lottery(lottery_from_rol(second, Rol{B, A}), 0.05, 0.90, 0.05);
  CHECK(std::abs(lottery_from_rol(second, Rol{B, A}).expected_value(v) - 2.15) < 1e-12);

  const auto none = lottery_from_rol(first, Rol{});
  CHECK(none.waitlist == 1.0);
  CHECK(none.total() == 1.0);
}

TEST_CASE("[TRIVIAL] lottery lookups") {
  CHECK_THROWS_AS(lottery_from_rol(std::map<CenterId, double>{{A, 0.1}}, Rol{A, B}), LookupError);
}

TEST_CASE("[DERIVED] prefix consistency of lotteries") {
  Rng rng = make_rng(3, "prefix");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::map<CenterId, double> pi;
    for (int j = 0; j < 6; ++j) pi[j] = unit(rng);
    Rol rol{4, 1, 5, 0, 2};
    const auto full = lottery_from_rol(pi, rol);
    CHECK(std::abs(full.total() - 1.0) < 1e-12);
    for (std::size_t k = 0; k < rol.size(); ++k) {
      const auto cut = lottery_from_rol(pi, rol.truncated(k));
      for (std::size_t i = 0; i < k; ++i) CHECK(cut.assign.at(rol[i]) == full.assign.at(rol[i]));
      CHECK(cut.waitlist >= full.waitlist);
    }
  }
}

TEST_CASE("[DERIVED] blended two-period lottery") {
  const std::map<CenterId, double> first{{A, 0.1}, {B, 0.5}};
  const std::map<CenterId, double> second{{A, 0.5}, {B, 0.9}};
  const auto l1 = lottery_from_rol(first, Rol{A, B});
  const auto l2 = lottery_from_rol(second, Rol{A, B});

  const auto terminal = blend_two_period(l1, l2, 5, 0.95);
  CHECK(terminal.delta_tilde == 0.0);
  CHECK(terminal.ptilde == 0.0);
  CHECK(terminal.ltilde.assign == l1.assign);

  const auto four = blend_two_period(l1, l2, 4, 0.95);
  CHECK(four.delta_tilde == doctest::Approx(0.95).epsilon(1e-14));
  CHECK(four.ptilde == doctest::Approx(0.95 / 1.95 * 0.45).epsilon(1e-14));
  CHECK(four.ltilde.waitlist ==
        doctest::Approx((1 - four.ptilde) * 0.45 + four.ptilde * 0.05).epsilon(1e-14));

  const auto same = blend_two_period(l1, l1, 0, 0.95);
  CHECK(same.ltilde.assign.at(A) == doctest::Approx(l1.assign.at(A)));
  CHECK(same.ltilde.waitlist == doctest::Approx(l1.waitlist));
}

TEST_CASE("[DERIVED] admission probabilities from a cutoff distribution") {
  CutoffDistribution dist;
  auto& cell = dist.cells[{0, 0}];
  cell.centers = {A, B};
  for (int b = 0; b < 10; ++b)
    cell.draws.push_back({b < 6 ? Cutoff::at(27) : Cutoff::at(29), Cutoff::open()});
  CHECK(admission_prob(dist, {0, 0}, A, 28) == doctest::Approx(0.6));
  CHECK(admission_prob(dist, {0, 0}, A, 26) == 0.0);
  CHECK(admission_prob(dist, {0, 0}, A, 29) == 1.0);
  CHECK(admission_prob(dist, {0, 0}, B, 20) == 1.0);
  CHECK_THROWS_AS(admission_prob(dist, {1, 0}, A, 28), LookupError);
  CHECK_THROWS_AS(admission_prob(dist, {0, 0}, 9, 28), LookupError);

  cell.draws[0][1] = Cutoff::closed();
  CHECK(admission_prob(dist, {0, 0}, B, 20) < 1.0);
}

TEST_CASE("[DERIVED] bootstrap basics") {
  MarketCell cell;
  cell.capacities = {{A, 10}, {B, 10}};
  for (int i = 0; i < 5; ++i) cell.applicants.push_back({i, 22 + i, i, Rol{A, B}});

  SUBCASE("slack cell admits everyone") {
    CellKey key{0, 0};
    CutoffDistribution dist;
    dist.cells[key] = bootstrap_cutoffs(cell, 50, 1);
    const auto belief = belief_from_distribution(dist, ScoreGrid{});
    for (int s = 20; s <= 35; ++s) {
      CHECK(belief.pi(key, A, s) == 1.0);
      CHECK(belief.pi(key, B, s) == 1.0);
    }
  }
  SUBCASE("one replication gives 0/1 probabilities") {
    cell.capacities = {{A, 2}, {B, 1}};
    const auto one = bootstrap_cutoffs(cell, 1, 5);
    CHECK(one.replications() == 1);
    CutoffDistribution dist;
    dist.cells[{0, 0}] = one;
    const auto belief = belief_from_distribution(dist, ScoreGrid{});
    for (int s = 20; s <= 35; ++s) {
      const double p = belief.pi({0, 0}, A, s);
      CHECK((p == 0.0 || p == 1.0));
    }
  }
  SUBCASE("determinism and errors") {
    cell.capacities = {{A, 2}, {B, 1}};
    const auto x = bootstrap_cutoffs(cell, 40, 11);
    const auto y = bootstrap_cutoffs(cell, 40, 11);
    CHECK(x.draws == y.draws);
    CHECK_THROWS_AS(bootstrap_cutoffs(cell, 0, 11), InvalidInput);
    MarketCell empty;
    empty.capacities = {{A, 1}};
    CHECK_THROWS_AS(bootstrap_cutoffs(empty, 10, 11), InvalidInput);
  }
}

TEST_CASE("[DERIVED] estimated beliefs are monotone in score") {
  Rng rng = make_rng(17, "monotone");
  testing::OracleSpec spec;
  spec.applicants = 120;
  spec.capacities = {{0, 20}, {1, 35}, {2, 10}, {3, 0}};
  CutoffDistribution dist;
  dist.cells[{0, 0}] = bootstrap_cutoffs(testing::oracle_cell(spec, rng), 300, 2);
  const auto belief = belief_from_distribution(dist, ScoreGrid{});
  CHECK(belief.is_monotone());
  for (const auto& [j, row] : belief.table().at({0, 0}))
    for (double p : row) CHECK((p >= 0.0 && p <= 1.0));
}

TEST_CASE("[DERIVED] bootstrap agrees with a fresh-market oracle") {
  testing::OracleSpec spec;
  Rng rng = make_rng(23, "oracle-cell");
  const auto cell = testing::oracle_cell(spec, rng);
  CutoffDistribution dist;
  dist.cells[{0, 0}] = bootstrap_cutoffs(cell, 300, 4);
  const auto truth = testing::fresh_market_pi(spec, 2000, 99);
  const ScoreGrid grid;
  for (const auto& [j, row] : truth)
    for (int s = grid.lo; s <= grid.hi; ++s)
      CHECK(std::abs(admission_prob(dist, {0, 0}, j, s) - row[static_cast<std::size_t>(s - grid.lo)]) <=
            0.02);
}

TEST_CASE("[DERIVED] belief resolution and arithmetic") {
  LotteryBelief b(ScoreGrid{});
  b.set_constant({0, 0}, A, 0.5);
  b.set_constant({2, 0}, A, 0.25);
  CHECK(b.resolve({1, 0}) == CellKey{0, 0});
  CHECK(b.resolve({5, 0}) == CellKey{2, 0});
  CHECK_THROWS_AS(b.resolve({0, 3}), LookupError);
  CHECK_THROWS_AS(b.pi({1, 0}, A, 26), LookupError);

  LotteryBelief c = b;
  c.set_constant({0, 0}, A, 1.0);
  const auto mid = b.blended(c, 0.5);
  CHECK(mid.pi({0, 0}, A, 26) == doctest::Approx(0.75));
  CHECK(b.distance(b) == 0.0);
  CHECK(b.distance(c) == doctest::Approx(std::sqrt(16 * 0.25)));
}
