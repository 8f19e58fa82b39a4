#include "waitlist/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "waitlist/rng.hpp"

namespace waitlist {

namespace {

/// sum_{a=from}^{5} delta^(a-from) x_a
double stream(const std::array<double, kNumAges>& x, int from, double delta) {
  double total = 0.0;
  double w = 1.0;
  for (int a = from; a <= kMaxAge; ++a, w *= delta) total += w * x[a];
  return total;
}

double constant_stream(double x, int from, double delta) {
  std::array<double, kNumAges> xs;
  xs.fill(x);
  return stream(xs, from, delta);
}

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

void Scenario::validate() const {
  if (draws < 1) throw InvalidInput("scenario.draws: must be at least 1");
  if (!(tolerance > 0.0)) throw InvalidInput("scenario.tolerance: must be positive");
  if (max_iters < 1) throw InvalidInput("scenario.max_iters: must be at least 1");
  if (!(damping >= 0.0 && damping < 1.0)) throw InvalidInput("scenario.damping: must lie in [0, 1)");
  if (bootstrap < 1) throw InvalidInput("scenario.bootstrap: must be at least 1");
}

std::vector<ApplicantWelfare> welfare(const Panel& panel, const Population& population,
                                      std::span<const UtilityDraw> draws,
                                      std::span<const PairChoice> choices,
                                      const LotteryBelief& belief, double delta) {
  std::vector<ApplicantWelfare> out(population.size());
  for (std::size_t i = 0; i < population.size(); ++i) {
    const auto& h = panel.histories[i];
    const auto& u = draws[i];
    auto& w = out[i];
    w.id = h.id;
    w.entry_year = h.entry_year;
    w.entry_age = h.entry_age;
    w.s1 = h.s1;
    w.list1 = static_cast<int>(h.r1.size());
    w.waitlisted1 = h.waitlisted_first();
    const int a0 = h.entry_age;

    if (h.outcome1.center) {
      const double v = u.v(*h.outcome1.center);
      w.v1 = v;
      w.v2 = a0 < kMaxAge ? constant_stream(v, a0 + 1, delta) : 0.0;
    } else {
      w.v1 = u.v0[a0];
      switch (h.second) {
        case SecondRound::NotNeeded:
        case SecondRound::Ended:
          w.v2 = a0 < kMaxAge ? stream(u.v0, a0 + 1, delta) : 0.0;
          break;
        case SecondRound::Observed:
          w.list2 = static_cast<int>(h.r2->size());
          if (h.outcome2 && h.outcome2->center) {
            w.v2 = constant_stream(u.v(*h.outcome2->center), a0 + 1, delta);
          } else {
            w.waitlisted2 = h.reapplied();
            w.v2 = stream(u.v0, a0 + 1, delta);
          }
          break;
        case SecondRound::Unobserved: {
          const auto p = make_problem(belief, {h.entry_year, a0}, h.s1, panel.bonus, u, delta);
          const std::span<const double> v(u.v.data(), static_cast<std::size_t>(u.v.size()));
          const auto second = evaluate_list(choices[i].second, v, p.pi2);
          // Expected value over ages a0+1..5 of the second list, held once won.
          w.v2 = constant_stream(1.0, a0 + 1, delta) * second.vl +
                 second.waitlist * stream(u.v0, a0 + 1, delta);
          break;
        }
      }
    }
    w.v = w.v1 + delta * w.v2;
  }
  return out;
}

bool ScenarioOutcome::converged() const {
  return std::all_of(draws.begin(), draws.end(), [](const DrawOutcome& d) { return d.converged; });
}

ScenarioOutcome iterate_equilibrium(const Theta& theta, const MarketStructure& market,
                                    const Population& population, const LotteryBelief& initial,
                                    int bonus, const Scenario& scenario) {
  scenario.validate();
  ScenarioOutcome out;
  out.bonus = bonus;
  for (int m = 0; m < scenario.draws; ++m) {
    const auto shocks = population_shocks(population, market.num_centers(),
                                          derive_seed(scenario.seed, "cf/draw/" + std::to_string(m)), 0);
    const auto draws = realize_population(theta, market, population, shocks);
    EquilibriumSettings settings;
    settings.bootstrap = scenario.bootstrap;
    settings.tolerance = scenario.tolerance;
    settings.max_iters = scenario.max_iters;
    settings.damping = scenario.damping;
    settings.seed = derive_seed(scenario.seed, "cf/equilibrium/" + std::to_string(m));
    auto path = equilibrate(market, population, draws, bonus, theta.delta, initial, settings);

    DrawOutcome d;
    d.draw = m;
    d.converged = path.converged;
    d.oscillating = path.oscillating;
    d.iterations = path.iterations;
    d.residuals = path.residuals;
    d.welfare = welfare(path.panel, population, draws, path.choices, path.belief, theta.delta);
    d.belief = std::move(path.belief);
    d.panel = std::move(path.panel);
    out.draws.push_back(std::move(d));
  }
  return out;
}

std::vector<ScenarioOutcome> run_counterfactuals(const Theta& theta, const MarketStructure& market,
                                                 const Population& population,
                                                 const LotteryBelief& initial,
                                                 const Scenario& scenario) {
  std::vector<ScenarioOutcome> out;
  for (int b : scenario.bonuses)
    out.push_back(iterate_equilibrium(theta, market, population, initial, b, scenario));
  return out;
}

// ---------------------------------------------------------------------------

std::vector<WelfareRow> welfare_table(const std::vector<ScenarioOutcome>& outcomes) {
  std::vector<WelfareRow> rows;
  for (const auto& o : outcomes) {
    std::map<std::pair<int, int>, WelfareRow> acc;
    std::map<std::pair<int, int>, int> second;
    std::map<std::pair<int, int>, int> reapplied;
    for (const auto& d : o.draws)
      for (const auto& w : d.welfare) {
        auto& r = acc[{w.entry_year, w.entry_age}];
        r.year = w.entry_year;
        r.entry_age = w.entry_age;
        r.bonus = o.bonus;
        ++r.applicants;
        r.list1 += w.list1;
        r.waitlist1 += w.waitlisted1 ? 1.0 : 0.0;
        if (w.list2 >= 0) {
          r.list2 += w.list2;
          ++second[{w.entry_year, w.entry_age}];
        }
        if (w.list2 > 0) {
          r.waitlist2 += w.waitlisted2 ? 1.0 : 0.0;
          ++reapplied[{w.entry_year, w.entry_age}];
        }
        r.v1 += w.v1;
        r.v2 += w.v2;
        r.v += w.v;
      }
    for (auto& [key, r] : acc) {
      const double n = r.applicants;
      r.list1 /= n;
      r.waitlist1 /= n;
      r.v1 /= n;
      r.v2 /= n;
      r.v /= n;
      const int n2 = second[key];
      r.list2 = n2 > 0 ? r.list2 / n2 : 0.0;
      const int nr = reapplied[key];
      r.waitlist2 = nr > 0 ? r.waitlist2 / nr : 0.0;
      rows.push_back(r);
    }
  }
  return rows;
}

ScoreBucket bucket_of(int s1) {
  if (s1 <= 25) return ScoreBucket::UpTo25;
  if (s1 == 26) return ScoreBucket::S26;
  if (s1 == 27) return ScoreBucket::S27;
  return ScoreBucket::From28;
}

const char* bucket_name(ScoreBucket b) {
  switch (b) {
    case ScoreBucket::UpTo25: return "<=25";
    case ScoreBucket::S26: return "26";
    case ScoreBucket::S27: return "27";
    case ScoreBucket::From28: return ">=28";
  }
  return "?";
}

std::vector<BucketRow> bucket_table(const std::vector<ScenarioOutcome>& outcomes) {
  std::vector<BucketRow> rows;
  for (const auto& o : outcomes) {
    std::map<ScoreBucket, std::vector<double>> values;
    for (const auto& d : o.draws)
      for (const auto& w : d.welfare) values[bucket_of(w.s1)].push_back(w.v);
    for (auto& [bucket, v] : values) {
      std::sort(v.begin(), v.end());
      BucketRow r;
      r.bonus = o.bonus;
      r.bucket = bucket;
      r.count = static_cast<int>(v.size());
      double total = 0.0;
      for (double x : v) total += x;
      r.mean = total / static_cast<double>(v.size());
      r.min = v.front();
      r.q25 = quantile(v, 0.25);
      r.median = quantile(v, 0.5);
      r.q75 = quantile(v, 0.75);
      r.max = v.back();
      rows.push_back(r);
    }
  }
  return rows;
}

std::vector<HistogramRow> cutoff_histogram(const std::vector<ScenarioOutcome>& outcomes) {
  std::vector<HistogramRow> rows;
  for (const auto& o : outcomes) {
    std::map<CellKey, std::map<int, int>> counts;
    for (const auto& d : o.draws)
      for (const auto& [key, result] : d.panel.results) {
        if (d.panel.cells.at(key).applicants.empty()) continue;
        for (const auto& [j, c] : result.cutoffs) ++counts[key][c.encoded()];
      }
    for (const auto& [key, by_value] : counts) {
      int total = 0;
      for (const auto& [v, n] : by_value) total += n;
      for (const auto& [v, n] : by_value)
        rows.push_back({key.year, key.age, o.bonus, v, static_cast<double>(n) / total});
    }
  }
  return rows;
}

std::vector<ConvergenceRow> convergence_table(const std::vector<ScenarioOutcome>& outcomes) {
  std::vector<ConvergenceRow> rows;
  for (const auto& o : outcomes)
    for (const auto& d : o.draws)
      for (std::size_t k = 0; k < d.residuals.size(); ++k)
        rows.push_back({o.bonus, d.draw, static_cast<int>(k + 1), d.residuals[k],
                        d.converged && k + 1 == d.residuals.size()});
  return rows;
}

}  // namespace waitlist
