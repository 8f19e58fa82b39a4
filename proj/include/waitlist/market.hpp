#pragma once

// Synthetic daycare market: population, year-by-year simulation with seat
// carry-over, belief fixed points, and the descriptive strategic-waiting
// metrics.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "waitlist/lottery.hpp"
#include "waitlist/matching.hpp"
#include "waitlist/policy.hpp"

namespace waitlist {

using AgeArray = std::array<int, kNumAges>;

struct CenterSpec {
  int area = 0;
  AgeArray seats{};
};

/// Everything needed to re-run the market for new choices.
struct MarketStructure {
  int years = 1;
  ScoreGrid grid{};
  std::vector<int> center_areas;
  std::vector<AgeArray> seats;             // class size per center and age
  std::vector<AgeArray> initial_enrolled;  // seats already taken in year 0

  int num_centers() const { return static_cast<int>(center_areas.size()); }
  std::vector<int> same_area(int area) const;
};

struct Applicant {
  ApplicantId id = 0;
  int entry_year = 0;
  int entry_age = 0;
  int s1 = 0;
  int area = 0;
  int tiebreak = 0;
};

using Population = std::vector<Applicant>;

enum class SecondRound {
  NotNeeded,   // assigned in the first round
  Ended,       // waitlisted at age 5, no later round
  Unobserved,  // the later round falls after the last panel year
  Observed,
};

struct ApplicantHistory {
  ApplicantId id = 0;
  int entry_year = 0;
  int entry_age = 0;
  int s1 = 0;
  int area = 0;
  Rol r1;
  Placement outcome1;
  SecondRound second = SecondRound::NotNeeded;
  std::optional<int> s2;
  std::optional<Rol> r2;  // set only for observed second rounds
  std::optional<Placement> outcome2;

  bool waitlisted_first() const { return outcome1.waitlisted(); }
  bool reapplied() const { return r2.has_value() && !r2->empty(); }
  friend bool operator==(const ApplicantHistory&, const ApplicantHistory&) = default;
};

struct Panel {
  MarketStructure market;
  int bonus = 2;
  std::map<CellKey, MarketCell> cells;
  std::map<CellKey, AssignmentResult> results;
  std::vector<ApplicantHistory> histories;

  std::vector<MarketCell> cell_list() const;
};

/// Utility draws for a population: per-applicant streams of `seed`, indexed
/// by draw so that draw 0 of the generating seed reproduces the panel.
std::vector<StandardShocks> population_shocks(const Population& population, int num_centers,
                                              std::uint64_t seed, int draw_index);

std::vector<UtilityDraw> realize_population(const Theta& theta, const MarketStructure& market,
                                            const Population& population,
                                            std::span<const StandardShocks> shocks);

std::vector<PairChoice> solve_choices(const MarketStructure& market, const Population& population,
                                      std::span<const UtilityDraw> draws,
                                      const LotteryBelief& belief, int bonus, double delta,
                                      ObjectiveMode mode = ObjectiveMode::Expanded);

/// Runs every (year, age) cell in calendar order; placements occupy their
/// seat at the same center in all later ages.
Panel run_market(const MarketStructure& market, const Population& population,
                 std::span<const PairChoice> choices, int bonus);

/// Belief in which every center admits every score with probability p.
LotteryBelief uniform_belief(const MarketStructure& market, double p);

struct EquilibriumSettings {
  int bootstrap = 200;
  double tolerance = 0.01;
  int max_iters = 50;
  double damping = 0.0;
  std::uint64_t seed = 0;
  ObjectiveMode mode = ObjectiveMode::Expanded;
};

struct EquilibriumPath {
  LotteryBelief belief;   // belief the final panel was simulated under
  LotteryBelief updated;  // belief re-estimated from that panel
  Panel panel;
  std::vector<PairChoice> choices;
  std::vector<double> residuals;  // relative change per iteration
  int iterations = 0;
  bool converged = false;
  bool oscillating = false;
};

/// Iterates beliefs: choose lists under the current belief, run the market,
/// bootstrap every cell, and repeat until the relative Frobenius change is at
/// most the tolerance.
EquilibriumPath equilibrate(const MarketStructure& market, const Population& population,
                            std::span<const UtilityDraw> draws, int bonus, double delta,
                            LotteryBelief initial, const EquilibriumSettings& settings);

struct MarketConfig {
  int years = 3;
  ScoreGrid grid{};
  int num_areas = 8;  // the last area holds no centers (out of municipality)
  std::vector<CenterSpec> centers;
  std::vector<AgeArray> entrants;  // [year][age] number of new applicants
  std::vector<double> score_probs;  // over the grid; empty for the default
  std::vector<double> area_probs;   // empty for uniform
  Theta theta_true;
  int bonus = 2;
  double initial_occupancy = 0.0;
  std::uint64_t seed = 0;
  int belief_bootstrap = 200;
  int belief_max_iters = 30;
  double belief_tolerance = 0.01;
  double belief_damping = 0.5;

  /// Throws InvalidInput naming the offending field.
  void validate() const;
  MarketStructure structure() const;
};

std::vector<double> default_score_probs(const ScoreGrid& grid);

Population draw_population(const MarketConfig& config);

struct GeneratedMarket {
  MarketStructure market;
  Population population;
  std::vector<UtilityDraw> draws;
  LotteryBelief belief;  // the belief applicants acted on
  Panel panel;
  std::vector<PairChoice> choices;
  std::vector<double> belief_residuals;
  bool belief_converged = true;
};

/// Draws a population and utilities from theta_true and runs the market.
/// Without a supplied belief the applicants act on a self-consistent one.
GeneratedMarket generate_market(const MarketConfig& config,
                                const LotteryBelief* belief = nullptr);

int drop_safety(const ApplicantHistory& history, const std::map<CenterId, Cutoff>& first_cutoffs);

enum class ThresholdSpec { ActualCutoffs, Fixed28, P90, Mode };

struct Thresholds {
  int first = 0;
  int second = 0;
};

Thresholds resolve_thresholds(ThresholdSpec spec, const ApplicantHistory& history,
                              const Panel& panel);

int delta_k(const ApplicantHistory& history, Thresholds thresholds, int bonus = 2);

struct CellSummary {
  CellKey key;
  int applicants = 0;
  int first_time = 0;
  int reapplicants = 0;
  double mean_score = 0.0;
  double mean_list_length = 0.0;
  std::array<double, kMaxRolLength> rank_shares{};
  double waitlist_share = 0.0;
};

struct EntryAgeSummary {
  int entry_age = 0;
  int applications = 0;
  int waitlisted = 0;
  int reapplied = 0;
  int drop_safety = 0;
};

struct PanelSummary {
  std::vector<CellSummary> cells;
  std::vector<EntryAgeSummary> entry_ages;  // per age, then an all-ages row (entry_age = -1)
};

PanelSummary summarize(const Panel& panel);

}  // namespace waitlist
