#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "waitlist/market.hpp"
#include "waitlist/rng.hpp"

namespace waitlist {

namespace {

void check_distribution(const std::vector<double>& p, std::size_t expected, const char* field) {
  if (p.empty()) return;
  if (p.size() != expected)
    throw InvalidInput(std::string(field) + ": expected " + std::to_string(expected) + " entries");
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw InvalidInput(std::string(field) + ": negative probability");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput(std::string(field) + ": probabilities must sum to 1");
}

/// Cutoff as a threshold score: Open is cleared by everyone, Closed by nobody.
int threshold_score(const Cutoff& c, const ScoreGrid& grid) {
  switch (c.kind()) {
    case Cutoff::Kind::Score: return c.score();
    case Cutoff::Kind::Open: return grid.lo;
    case Cutoff::Kind::Closed: return grid.hi + 1;
  }
  return grid.lo;
}

std::vector<int> score_cutoffs(const Panel& panel, CellKey key) {
  auto it = panel.results.find(key);
  if (it == panel.results.end())
    throw InvalidInput("cell (" + std::to_string(key.year) + ", " + std::to_string(key.age) +
                       ") is not in the panel");
  std::vector<int> out;
  for (const auto& [j, c] : it->second.cutoffs)
    if (c.is_score()) out.push_back(c.score());
  std::sort(out.begin(), out.end());
  return out;
}

int p90(const std::vector<int>& sorted) {
  if (sorted.empty()) throw InvalidInput("no score-valued cutoffs for the 90th percentile");
  const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(sorted.size())));
  return sorted[std::max<std::size_t>(rank, 1) - 1];
}

int mode_of(const std::vector<int>& sorted) {
  if (sorted.empty()) throw InvalidInput("no score-valued cutoffs for the modal cutoff");
  int best = sorted.front();
  int best_count = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t k = i;
    while (k < sorted.size() && sorted[k] == sorted[i]) ++k;
    if (static_cast<int>(k - i) > best_count) {
      best_count = static_cast<int>(k - i);
      best = sorted[i];
    }
    i = k;
  }
  return best;
}

}  // namespace

void MarketConfig::validate() const {
  if (years < 1) throw InvalidInput("market.years: must be positive");
  if (grid.lo > grid.hi) throw InvalidInput("market.grid: lo exceeds hi");
  if (num_areas < 1) throw InvalidInput("market.num_areas: must be positive");
  if (centers.empty()) throw InvalidInput("market.centers: at least one center required");
  for (std::size_t j = 0; j < centers.size(); ++j) {
    const auto field = "market.centers[" + std::to_string(j) + "]";
    if (centers[j].area < 0 || centers[j].area >= num_areas)
      throw InvalidInput(field + ".area: outside 0.." + std::to_string(num_areas - 1));
    for (int a = 0; a < kNumAges; ++a)
      if (centers[j].seats[a] < 0)
        throw InvalidInput(field + ".seats[" + std::to_string(a) + "]: negative capacity");
  }
  if (static_cast<int>(entrants.size()) != years)
    throw InvalidInput("market.entrants: expected one row per year");
  for (std::size_t y = 0; y < entrants.size(); ++y)
    for (int a = 0; a < kNumAges; ++a)
      if (entrants[y][a] < 0)
        throw InvalidInput("market.entrants[" + std::to_string(y) + "][" + std::to_string(a) +
                           "]: negative count");
  check_distribution(score_probs, static_cast<std::size_t>(grid.size()), "market.score_probs");
  check_distribution(area_probs, static_cast<std::size_t>(num_areas), "market.area_probs");
  if (!(initial_occupancy >= 0.0 && initial_occupancy <= 1.0))
    throw InvalidInput("market.initial_occupancy: must lie in [0, 1]");
  if (theta_true.num_centers() != static_cast<int>(centers.size()))
    throw InvalidInput("theta: alpha must have one entry per center");
  try {
    theta_true.validate();
  } catch (const ParameterError& e) {
    throw InvalidInput(std::string("theta: ") + e.what());
  }
  if (belief_bootstrap < 1) throw InvalidInput("market.belief_bootstrap: must be at least 1");
}

MarketStructure MarketConfig::structure() const {
  MarketStructure m;
  m.years = years;
  m.grid = grid;
  for (const auto& c : centers) {
    m.center_areas.push_back(c.area);
    m.seats.push_back(c.seats);
    AgeArray taken{};
    for (int a = 1; a < kNumAges; ++a)
      taken[a] = static_cast<int>(std::floor(initial_occupancy * c.seats[a]));
    m.initial_enrolled.push_back(taken);
  }
  return m;
}

std::vector<double> default_score_probs(const ScoreGrid& grid) {
  std::vector<double> p(static_cast<std::size_t>(grid.size()));
  for (int s = grid.lo; s <= grid.hi; ++s) {
    const double z = (s - 25.5) / 2.0;
    p[static_cast<std::size_t>(s - grid.lo)] = std::exp(-0.5 * z * z);
  }
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& x : p) x /= total;
  return p;
}

Population draw_population(const MarketConfig& config) {
  Rng rng = make_rng(config.seed, "population");
  const auto score_probs =
      config.score_probs.empty() ? default_score_probs(config.grid) : config.score_probs;
  std::vector<double> area_probs = config.area_probs;
  if (area_probs.empty()) area_probs.assign(static_cast<std::size_t>(config.num_areas), 1.0);
  std::discrete_distribution<int> score_dist(score_probs.begin(), score_probs.end());
  std::discrete_distribution<int> area_dist(area_probs.begin(), area_probs.end());

  Population pop;
  for (int y = 0; y < config.years; ++y)
    for (int a = 0; a < kNumAges; ++a)
      for (int n = 0; n < config.entrants[static_cast<std::size_t>(y)][a]; ++n) {
        Applicant app;
        app.id = static_cast<ApplicantId>(pop.size());
        app.entry_year = y;
        app.entry_age = a;
        app.s1 = config.grid.lo + score_dist(rng);
        app.area = area_dist(rng);
        pop.push_back(app);
      }
  std::vector<int> keys(pop.size());
  std::iota(keys.begin(), keys.end(), 0);
  std::shuffle(keys.begin(), keys.end(), rng);
  for (std::size_t i = 0; i < pop.size(); ++i) pop[i].tiebreak = keys[i];
  return pop;
}

GeneratedMarket generate_market(const MarketConfig& config, const LotteryBelief* belief) {
  config.validate();
  GeneratedMarket out;
  out.market = config.structure();
  out.population = draw_population(config);
  const auto shocks = population_shocks(out.population, out.market.num_centers(), config.seed, 0);
  out.draws = realize_population(config.theta_true, out.market, out.population, shocks);

  if (belief) {
    out.belief = *belief;
    out.choices = solve_choices(out.market, out.population, out.draws, out.belief, config.bonus,
                                config.theta_true.delta);
    out.panel = run_market(out.market, out.population, out.choices, config.bonus);
    return out;
  }

  EquilibriumSettings settings;
  settings.bootstrap = config.belief_bootstrap;
  settings.tolerance = config.belief_tolerance;
  settings.max_iters = config.belief_max_iters;
  settings.damping = config.belief_damping;
  settings.seed = derive_seed(config.seed, "generate/belief");
  auto path = equilibrate(out.market, out.population, out.draws, config.bonus,
                          config.theta_true.delta, uniform_belief(out.market, 1.0), settings);
  out.belief = std::move(path.belief);
  out.panel = std::move(path.panel);
  out.choices = std::move(path.choices);
  out.belief_residuals = std::move(path.residuals);
  out.belief_converged = path.converged;
  return out;
}

int drop_safety(const ApplicantHistory& history, const std::map<CenterId, Cutoff>& first_cutoffs) {
  if (!history.r2) throw InvalidInput("applicant " + std::to_string(history.id) + " has no second list");
  for (CenterId j : *history.r2) {
    if (history.r1.contains(j)) continue;
    auto it = first_cutoffs.find(j);
    if (it == first_cutoffs.end()) throw LookupError("no first-round cutoff for center " + std::to_string(j));
    if (it->second.admits(history.s1)) return 1;
  }
  return 0;
}

Thresholds resolve_thresholds(ThresholdSpec spec, const ApplicantHistory& history,
                              const Panel& panel) {
  const CellKey first{history.entry_year, history.entry_age};
  const CellKey second{history.entry_year + 1, history.entry_age + 1};
  switch (spec) {
    case ThresholdSpec::Fixed28: return {28, 28};
    case ThresholdSpec::ActualCutoffs: {
      if (history.r1.empty() || !history.r2 || history.r2->empty())
        throw InvalidInput("actual-cutoff thresholds need nonempty first and second lists");
      auto r1 = panel.results.find(first);
      auto r2 = panel.results.find(second);
      if (r1 == panel.results.end() || r2 == panel.results.end())
        throw InvalidInput("actual-cutoff thresholds need both rounds in the panel");
      return {threshold_score(r1->second.cutoffs.at(history.r1[0]), panel.market.grid),
              threshold_score(r2->second.cutoffs.at((*history.r2)[0]), panel.market.grid)};
    }
    case ThresholdSpec::P90:
      return {p90(score_cutoffs(panel, first)), p90(score_cutoffs(panel, second))};
    case ThresholdSpec::Mode:
      return {mode_of(score_cutoffs(panel, first)), mode_of(score_cutoffs(panel, second))};
  }
  throw InvalidInput("unknown threshold specification");
}

int delta_k(const ApplicantHistory& history, Thresholds thresholds, int bonus) {
  return history.s1 < thresholds.first && history.s1 + bonus >= thresholds.second ? 1 : 0;
}

PanelSummary summarize(const Panel& panel) {
  if (panel.histories.empty()) throw InvalidInput("cannot summarize an empty panel");
  PanelSummary out;
  for (const auto& [key, cell] : panel.cells) {
    CellSummary s;
    s.key = key;
    s.applicants = static_cast<int>(cell.applicants.size());
    if (s.applicants == 0) {
      out.cells.push_back(s);
      continue;
    }
    const auto& result = panel.results.at(key);
    double score = 0.0;
    double length = 0.0;
    int waitlisted = 0;
    for (const auto& a : cell.applicants) {
      score += a.score;
      length += static_cast<double>(a.rol.size());
      const auto& p = result.assignment.at(a.id);
      if (p.waitlisted())
        ++waitlisted;
      else
        s.rank_shares[static_cast<std::size_t>(p.rank)] += 1.0;
    }
    const double n = s.applicants;
    s.mean_score = score / n;
    s.mean_list_length = length / n;
    for (double& r : s.rank_shares) r /= n;
    s.waitlist_share = waitlisted / n;
    out.cells.push_back(s);
  }
  std::array<EntryAgeSummary, kNumAges> by_age{};
  for (int a = 0; a < kNumAges; ++a) by_age[a].entry_age = a;
  for (const auto& h : panel.histories) {
    auto& row = by_age[static_cast<std::size_t>(h.entry_age)];
    ++row.applications;
    if (!h.waitlisted_first()) continue;
    ++row.waitlisted;
    if (!h.reapplied()) continue;
    ++row.reapplied;
    row.drop_safety +=
        drop_safety(h, panel.results.at({h.entry_year, h.entry_age}).cutoffs);
  }
  // Count first-time applicants and reapplicants per cell.
  std::map<CellKey, int> entrants;
  for (const auto& h : panel.histories) ++entrants[{h.entry_year, h.entry_age}];
  for (auto& s : out.cells) {
    s.first_time = entrants[s.key];
    s.reapplicants = s.applicants - s.first_time;
  }
  EntryAgeSummary all;
  all.entry_age = -1;
  for (const auto& row : by_age) {
    if (row.applications == 0) continue;
    out.entry_ages.push_back(row);
    all.applications += row.applications;
    all.waitlisted += row.waitlisted;
    all.reapplied += row.reapplied;
    all.drop_safety += row.drop_safety;
  }
  out.entry_ages.push_back(all);
  return out;
}

}  // namespace waitlist
