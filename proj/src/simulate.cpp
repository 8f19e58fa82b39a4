#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "waitlist/market.hpp"
#include "waitlist/rng.hpp"

namespace waitlist {

std::vector<int> MarketStructure::same_area(int area) const {
  std::vector<int> d(center_areas.size());
  for (std::size_t j = 0; j < d.size(); ++j) d[j] = center_areas[j] == area ? 1 : 0;
  return d;
}

std::vector<MarketCell> Panel::cell_list() const {
  std::vector<MarketCell> out;
  out.reserve(cells.size());
  for (const auto& [key, cell] : cells) out.push_back(cell);
  return out;
}

std::vector<StandardShocks> population_shocks(const Population& population, int num_centers,
                                              std::uint64_t seed, int draw_index) {
  std::vector<StandardShocks> out(population.size());
  const std::string prefix = "shocks/" + std::to_string(draw_index) + "/";
  for (std::size_t i = 0; i < population.size(); ++i) {
    Rng rng = make_rng(seed, prefix + std::to_string(population[i].id));
    out[i] = draw_shocks(num_centers, rng);
  }
  return out;
}

std::vector<UtilityDraw> realize_population(const Theta& theta, const MarketStructure& market,
                                            const Population& population,
                                            std::span<const StandardShocks> shocks) {
  if (theta.num_centers() != market.num_centers())
    throw ParameterError("theta covers " + std::to_string(theta.num_centers()) +
                         " centers but the market has " + std::to_string(market.num_centers()));
  const Eigen::MatrixXd factor = sigma_factor(theta.sigma);
  std::vector<UtilityDraw> out(population.size());
  for (std::size_t i = 0; i < population.size(); ++i) {
    const auto d = market.same_area(population[i].area);
    out[i] = realize_utilities(theta, factor, population[i].s1, d, shocks[i]);
  }
  return out;
}

std::vector<PairChoice> solve_choices(const MarketStructure& market, const Population& population,
                                      std::span<const UtilityDraw> draws,
                                      const LotteryBelief& belief, int bonus, double delta,
                                      ObjectiveMode mode) {
  (void)market;
  std::vector<PairChoice> out(population.size());
  parallel_for(population.size(), [&](std::size_t i) {
    const auto& a = population[i];
    const auto problem = make_problem(belief, {a.entry_year, a.entry_age}, a.s1, bonus, draws[i],
                                      delta, mode);
    out[i] = approx_optimal_pair(problem);
  });
  return out;
}

Panel run_market(const MarketStructure& market, const Population& population,
                 std::span<const PairChoice> choices, int bonus) {
  const int num_centers = market.num_centers();
  Panel panel;
  panel.market = market;
  panel.bonus = bonus;
  panel.histories.resize(population.size());

  std::map<CellKey, std::vector<std::size_t>> entrants;
  for (std::size_t i = 0; i < population.size(); ++i) {
    const auto& a = population[i];
    entrants[{a.entry_year, a.entry_age}].push_back(i);
    auto& h = panel.histories[i];
    h.id = a.id;
    h.entry_year = a.entry_year;
    h.entry_age = a.entry_age;
    h.s1 = a.s1;
    h.area = a.area;
    h.r1 = choices[i].first;
  }

  std::vector<AgeArray> enrolled = market.initial_enrolled;
  if (enrolled.empty()) enrolled.assign(static_cast<std::size_t>(num_centers), AgeArray{});
  // Waitlisted applicants queued for the next year's cell at age + 1.
  std::vector<std::size_t> queued;

  for (int year = 0; year < market.years; ++year) {
    std::vector<AgeArray> placed(static_cast<std::size_t>(num_centers), AgeArray{});
    std::vector<std::size_t> next_queue;

    for (int age = 0; age <= kMaxAge; ++age) {
      const CellKey key{year, age};
      MarketCell cell;
      cell.year = year;
      cell.age = age;
      for (int j = 0; j < num_centers; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        cell.capacities[j] = std::max(0, market.seats[ju][age] - enrolled[ju][age]);
      }
      std::vector<std::pair<std::size_t, bool>> members;  // (applicant, is reapplicant)
      if (auto it = entrants.find(key); it != entrants.end()) {
        for (std::size_t i : it->second) {
          cell.applicants.push_back({population[i].id, population[i].s1, population[i].tiebreak,
                                     choices[i].first});
          members.emplace_back(i, false);
        }
      }
      for (std::size_t i : queued) {
        if (population[i].entry_age + 1 != age) continue;
        auto& h = panel.histories[i];
        cell.applicants.push_back({population[i].id, *h.s2, population[i].tiebreak, *h.r2});
        members.emplace_back(i, true);
      }

      auto result = run_serial_dictatorship(cell);
      for (const auto& [i, again] : members) {
        const auto& placement = result.assignment.at(population[i].id);
        auto& h = panel.histories[i];
        if (again) {
          h.outcome2 = placement;
        } else {
          h.outcome1 = placement;
          if (!placement.waitlisted()) {
            h.second = SecondRound::NotNeeded;
          } else if (age == kMaxAge) {
            h.second = SecondRound::Ended;
          } else if (year + 1 >= market.years) {
            h.second = SecondRound::Unobserved;
          } else {
            h.second = SecondRound::Observed;
            h.s2 = apply_waitlist_bonus(h.s1, bonus, market.grid).score;
            h.r2 = choices[i].second;
            if (h.r2->empty())
              h.outcome2 = Placement::waitlist();
            else
              next_queue.push_back(i);
          }
        }
        if (placement.center) ++placed[static_cast<std::size_t>(*placement.center)][age];
      }
      panel.results.emplace(key, std::move(result));
      panel.cells.emplace(key, std::move(cell));
    }

    // Children age by one year and keep their seats.
    std::vector<AgeArray> next(static_cast<std::size_t>(num_centers), AgeArray{});
    for (std::size_t j = 0; j < next.size(); ++j)
      for (int age = 0; age < kMaxAge; ++age) next[j][age + 1] = enrolled[j][age] + placed[j][age];
    enrolled = std::move(next);
    queued = std::move(next_queue);
  }
  return panel;
}

LotteryBelief uniform_belief(const MarketStructure& market, double p) {
  LotteryBelief belief(market.grid);
  for (int year = 0; year < market.years; ++year)
    for (int age = 0; age <= kMaxAge; ++age)
      for (int j = 0; j < market.num_centers(); ++j) belief.set_constant({year, age}, j, p);
  return belief;
}

EquilibriumPath equilibrate(const MarketStructure& market, const Population& population,
                            std::span<const UtilityDraw> draws, int bonus, double delta,
                            LotteryBelief initial, const EquilibriumSettings& settings) {
  EquilibriumPath path;
  LotteryBelief current = std::move(initial);
  const std::uint64_t boot_seed = derive_seed(settings.seed, "bootstrap");
  for (int k = 1; k <= std::max(1, settings.max_iters); ++k) {
    path.choices = solve_choices(market, population, draws, current, bonus, delta, settings.mode);
    path.panel = run_market(market, population, path.choices, bonus);
    const auto cells = path.panel.cell_list();
    LotteryBelief raw = belief_from_distribution(bootstrap_all(cells, settings.bootstrap, boot_seed),
                                                 market.grid);
    LotteryBelief next = settings.damping > 0.0 ? raw.blended(current, settings.damping) : raw;

    const double base = current.norm();
    const double change = next.distance(current);
    const double residual =
        base > 0.0 ? change / base : (change > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    path.residuals.push_back(residual);
    path.iterations = k;
    path.belief = current;
    path.updated = next;
    if (residual <= settings.tolerance) {
      path.converged = true;
      break;
    }
    current = std::move(next);
  }
  const auto& r = path.residuals;
  if (!path.converged && r.size() >= 4) {
    const std::size_t n = r.size();
    const bool zigzag = (r[n - 1] - r[n - 2]) * (r[n - 2] - r[n - 3]) < 0.0 &&
                        (r[n - 2] - r[n - 3]) * (r[n - 3] - r[n - 4]) < 0.0;
    path.oscillating = zigzag;
  }
  return path;
}

}  // namespace waitlist
