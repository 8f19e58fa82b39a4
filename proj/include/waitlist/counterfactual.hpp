#pragma once

// Counterfactual equilibria under alternative waitlist bonuses: belief fixed
// points, per-applicant welfare, and report tables.

#include <cstdint>
#include <vector>

#include "waitlist/lottery.hpp"
#include "waitlist/market.hpp"
#include "waitlist/policy.hpp"

namespace waitlist {

struct Scenario {
  std::vector<int> bonuses{-1, 0, 1, 2, 3};
  int draws = 7;  // M
  double tolerance = 0.01;
  int max_iters = 50;
  double damping = 0.0;
  int bootstrap = 2000;
  std::uint64_t seed = 0;

  /// Throws InvalidInput naming the offending field.
  void validate() const;
};

struct ApplicantWelfare {
  ApplicantId id = 0;
  int entry_year = 0;
  int entry_age = 0;
  int s1 = 0;
  int list1 = 0;   // length of R1
  int list2 = -1;  // length of R2 when the second round is observed
  bool waitlisted1 = false;
  bool waitlisted2 = false;
  double v1 = 0.0;  // flow at the entry age
  double v2 = 0.0;  // ages a0+1..5, discounted to a0+1
  double v = 0.0;   // v1 + delta * v2
};

/// V1 is the realized flow at the entry age. V2 follows the realized
/// placement; a second round after the last panel year is valued at its
/// expected value under the applicant's belief.
std::vector<ApplicantWelfare> welfare(const Panel& panel, const Population& population,
                                      std::span<const UtilityDraw> draws,
                                      std::span<const PairChoice> choices,
                                      const LotteryBelief& belief, double delta);

struct DrawOutcome {
  int draw = 0;
  bool converged = false;
  bool oscillating = false;
  int iterations = 0;
  std::vector<double> residuals;
  LotteryBelief belief;
  Panel panel;
  std::vector<ApplicantWelfare> welfare;
};

struct ScenarioOutcome {
  int bonus = 0;
  std::vector<DrawOutcome> draws;

  bool converged() const;
};

/// One fixed point per utility draw. Draws and bootstrap streams depend on
/// (seed, draw) only, so every bonus sees the same applicants and shocks.
ScenarioOutcome iterate_equilibrium(const Theta& theta, const MarketStructure& market,
                                    const Population& population, const LotteryBelief& initial,
                                    int bonus, const Scenario& scenario);

std::vector<ScenarioOutcome> run_counterfactuals(const Theta& theta, const MarketStructure& market,
                                                 const Population& population,
                                                 const LotteryBelief& initial,
                                                 const Scenario& scenario);

struct WelfareRow {
  int year = 0;
  int entry_age = 0;
  int bonus = 0;
  int applicants = 0;  // pooled over draws
  double list1 = 0.0;
  double list2 = 0.0;  // among observed second rounds
  double waitlist1 = 0.0;
  double waitlist2 = 0.0;  // among reapplicants
  double v1 = 0.0;
  double v2 = 0.0;
  double v = 0.0;
};

enum class ScoreBucket { UpTo25, S26, S27, From28 };
ScoreBucket bucket_of(int s1);
const char* bucket_name(ScoreBucket b);

struct BucketRow {
  int bonus = 0;
  ScoreBucket bucket = ScoreBucket::UpTo25;
  int count = 0;
  double mean = 0.0;
  double min = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double max = 0.0;
};

struct HistogramRow {
  int year = 0;
  int age = 0;
  int bonus = 0;
  int value = 0;  // cutoff score, or 35 (no vacancy) / 11 (no binding cutoff)
  double frequency = 0.0;
};

struct ConvergenceRow {
  int bonus = 0;
  int draw = 0;
  int iteration = 0;
  double residual = 0.0;
  bool converged = false;
};

std::vector<WelfareRow> welfare_table(const std::vector<ScenarioOutcome>& outcomes);
std::vector<BucketRow> bucket_table(const std::vector<ScenarioOutcome>& outcomes);
/// Realized cutoffs of every center in every cell with applicants; the
/// frequencies of one (year, age, bonus) sum to 1.
std::vector<HistogramRow> cutoff_histogram(const std::vector<ScenarioOutcome>& outcomes);
std::vector<ConvergenceRow> convergence_table(const std::vector<ScenarioOutcome>& outcomes);

}  // namespace waitlist
