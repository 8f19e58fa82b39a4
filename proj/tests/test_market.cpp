#include <numeric>

#include "doctest.h"
#include "market_fixture.hpp"
#include "waitlist/market.hpp"

using namespace waitlist;

namespace {

ApplicantHistory reapplicant(int s1, Rol r1, Rol r2) {
  ApplicantHistory h;
  h.s1 = s1;
  h.r1 = r1;
  h.outcome1 = Placement::waitlist();
  h.second = SecondRound::Observed;
  h.s2 = s1 + 2;
  h.r2 = r2;
  return h;
}

}  // namespace

TEST_CASE("[DERIVED] drop safety") {
  const std::map<CenterId, Cutoff> cut{{0, Cutoff::at(26)}, {1, Cutoff::at(28)}, {2, Cutoff::open()},
                                       {3, Cutoff::closed()}};
  CHECK(drop_safety(reapplicant(26, Rol{1}, Rol{1, 0}), cut) == 1);
  CHECK(drop_safety(reapplicant(26, Rol{1, 0}, Rol{1, 0}), cut) == 0);
  CHECK(drop_safety(reapplicant(26, Rol{0}, Rol{0, 1}), cut) == 0);
  CHECK(drop_safety(reapplicant(26, Rol{1}, Rol{1, 2}), cut) == 1);
  CHECK(drop_safety(reapplicant(26, Rol{1}, Rol{1, 3}), cut) == 0);

  ApplicantHistory assigned;
  assigned.s1 = 26;
  assigned.outcome1.center = 0;
  CHECK_THROWS_AS(drop_safety(assigned, cut), InvalidInput);
}

TEST_CASE("[DERIVED] pivotal bonus indicator") {
  ApplicantHistory h;
  h.s1 = 26;
  CHECK(delta_k(h, {27, 28}) == 1);
  h.s1 = 28;
  CHECK(delta_k(h, {28, 28}) == 0);
  h.s1 = 20;
  CHECK(delta_k(h, {28, 28}) == 0);
  h.s1 = 26;
  CHECK(delta_k(h, {27, 28}, 1) == 0);
}

TEST_CASE("[DERIVED] threshold resolution") {
  Panel panel;
  panel.market.grid = ScoreGrid{};
  AssignmentResult first;
  first.cutoffs = {{0, Cutoff::at(27)}, {1, Cutoff::at(29)}, {2, Cutoff::at(27)}, {3, Cutoff::open()}};
  AssignmentResult second;
  second.cutoffs = {{0, Cutoff::at(28)}, {1, Cutoff::closed()}, {2, Cutoff::at(24)}, {3, Cutoff::at(24)}};
  panel.results[{0, 0}] = first;
  panel.results[{1, 1}] = second;

  auto h = reapplicant(26, Rol{0, 3}, Rol{0});
  CHECK(resolve_thresholds(ThresholdSpec::Fixed28, h, panel).first == 28);
  const auto actual = resolve_thresholds(ThresholdSpec::ActualCutoffs, h, panel);
  CHECK(actual.first == 27);
  CHECK(actual.second == 28);
  CHECK(delta_k(h, actual) == 1);

  const auto p90 = resolve_thresholds(ThresholdSpec::P90, h, panel);
  CHECK(p90.first == 29);   // nearest rank of {27, 27, 29}
  CHECK(p90.second == 28);  // {24, 24, 28}; Closed excluded
  const auto mode = resolve_thresholds(ThresholdSpec::Mode, h, panel);
  CHECK(mode.first == 27);
  CHECK(mode.second == 24);

  h.r2 = Rol{3};
  CHECK(resolve_thresholds(ThresholdSpec::ActualCutoffs, h, panel).second == 24);
  h.r1 = Rol{3};
  CHECK(resolve_thresholds(ThresholdSpec::ActualCutoffs, h, panel).first == 20);  // Open
  h.r2 = Rol{1};
  CHECK(resolve_thresholds(ThresholdSpec::ActualCutoffs, h, panel).second == 36);  // Closed
  h.r2 = Rol{};
  CHECK_THROWS_AS(resolve_thresholds(ThresholdSpec::ActualCutoffs, h, panel), InvalidInput);
}

TEST_CASE("[TRIVIAL] config validation names the field") {
  auto c = testing::small_market(1);
  c.centers[1].seats[2] = -1;
  try {
    c.validate();
    FAIL("expected InvalidInput");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find("market.centers[1].seats[2]") != std::string::npos);
  }
  c = testing::small_market(1);
  c.score_probs = {0.5, 0.6};
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = testing::small_market(1);
  c.theta_true.sigma(0, 3) = 5.0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
}

TEST_CASE("[TRIVIAL] zero applicants give an empty panel") {
  auto c = testing::small_market(2);
  c.entrants.assign(3, AgeArray{});
  const auto g = generate_market(c);
  CHECK(g.panel.histories.empty());
  for (const auto& [key, cell] : g.panel.cells) CHECK(cell.applicants.empty());
}

TEST_CASE("[DERIVED] slack market waitlists nobody") {
  auto c = testing::small_market(3, 30);
  for (auto& center : c.centers) center.seats.fill(500);
  c.theta_true.alpha = Eigen::Vector4d(10.0, 9.5, 9.0, 8.5);
  const auto g = generate_market(c);
  for (const auto& h : g.panel.histories) CHECK_FALSE(h.waitlisted_first());
  for (const auto& [key, belief_row] : g.belief.table())
    for (const auto& [j, row] : belief_row)
      for (double p : row) CHECK(p == 1.0);
}

TEST_CASE("[DERIVED] generated panels are consistent and reproducible") {
  const auto c = testing::small_market(4);
  const auto g = generate_market(c);
  const auto again = generate_market(c);
  CHECK(g.panel.histories == again.panel.histories);
  CHECK(g.panel.results == again.panel.results);
  CHECK(g.belief == again.belief);

  SUBCASE("stored cells reproduce the recorded outcomes") {
    for (const auto& [key, cell] : g.panel.cells)
      CHECK(run_serial_dictatorship(cell) == g.panel.results.at(key));
    for (const auto& h : g.panel.histories) {
      CHECK(g.panel.results.at({h.entry_year, h.entry_age}).assignment.at(h.id) == h.outcome1);
      if (h.reapplied())
        CHECK(g.panel.results.at({h.entry_year + 1, h.entry_age + 1}).assignment.at(h.id) ==
              *h.outcome2);
    }
  }
  SUBCASE("second rounds follow the waitlist") {
    for (const auto& h : g.panel.histories) {
      if (!h.waitlisted_first()) {
        CHECK(h.second == SecondRound::NotNeeded);
        CHECK_FALSE(h.r2.has_value());
      }
      if (h.r2) {
        CHECK(h.waitlisted_first());
        CHECK(*h.s2 == apply_waitlist_bonus(h.s1, c.bonus).score);
      }
      if (h.second == SecondRound::Unobserved) CHECK(h.entry_year == c.years - 1);
    }
  }
  SUBCASE("placed children keep their seats") {
    const int j = g.market.num_centers();
    // occupied[year][center][age]
    std::vector<std::vector<AgeArray>> occupied(
        static_cast<std::size_t>(c.years), std::vector<AgeArray>(static_cast<std::size_t>(j)));
    for (const auto& [key, result] : g.panel.results)
      for (const auto& [id, p] : result.assignment)
        if (p.center)
          for (int y = key.year, a = key.age; y < c.years && a <= kMaxAge; ++y, ++a)
            ++occupied[static_cast<std::size_t>(y)][static_cast<std::size_t>(*p.center)][a];
    for (int y = 0; y < c.years; ++y)
      for (int k = 0; k < j; ++k)
        for (int a = 0; a <= kMaxAge; ++a)
          CHECK(occupied[static_cast<std::size_t>(y)][static_cast<std::size_t>(k)][a] <=
                g.market.seats[static_cast<std::size_t>(k)][a]);
  }
  SUBCASE("summary shares") {
    const auto s = summarize(g.panel);
    for (const auto& cell : s.cells) {
      if (cell.applicants == 0) continue;
      const double total =
          std::accumulate(cell.rank_shares.begin(), cell.rank_shares.end(), cell.waitlist_share);
      CHECK(total == doctest::Approx(1.0));
      CHECK(cell.first_time + cell.reapplicants == cell.applicants);
    }
    CHECK(s.entry_ages.back().entry_age == -1);
    CHECK(s.entry_ages.back().applications == static_cast<int>(g.panel.histories.size()));
    const auto s2 = summarize(g.panel);
    CHECK(s2.entry_ages.back().drop_safety == s.entry_ages.back().drop_safety);
  }
}

TEST_CASE("[DERIVED] one applicant at the first choice") {
  MarketConfig c = testing::small_market(5);
  c.entrants.assign(3, AgeArray{});
  c.entrants[0][0] = 1;
  for (auto& center : c.centers) center.seats.fill(3);
  c.theta_true.sigma.setZero();
  c.theta_true.alpha = Eigen::Vector4d(9.0, 1.0, 1.0, 1.0);
  const auto g = generate_market(c);
  const auto s = summarize(g.panel);
  for (const auto& cell : s.cells)
    if (cell.key == CellKey{0, 0}) CHECK(cell.rank_shares[0] == 1.0);
}

TEST_CASE("[PAPER] pivotal-bonus reapplicants drop safeties more often") {
  int correct = 0;
  int informative = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto c = testing::small_market(100 + seed, 80);
    c.theta_true.alpha = Eigen::Vector4d(4.0, 1.0, 0.8, 0.5);
    const auto g = generate_market(c);
    double drop[2] = {0, 0};
    int count[2] = {0, 0};
    for (const auto& h : g.panel.histories) {
      if (!h.reapplied() || h.r1.empty()) continue;
      const int d = delta_k(h, resolve_thresholds(ThresholdSpec::ActualCutoffs, h, g.panel));
      drop[d] += drop_safety(h, g.panel.results.at({h.entry_year, h.entry_age}).cutoffs);
      ++count[d];
    }
    if (count[0] == 0 || count[1] == 0) continue;
    ++informative;
    if (drop[1] / count[1] > drop[0] / count[0]) ++correct;
  }
  MESSAGE("sign correct in " << correct << " of " << informative << " informative seeds");
  CHECK(informative == 20);
  CHECK(correct >= 16);
}
