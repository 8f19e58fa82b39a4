#pragma once

// First-stage lottery estimation: bootstrap cutoff distributions, admission
// probabilities by score, and lotteries induced by ranked lists.

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "waitlist/matching.hpp"

namespace waitlist {

struct CellKey {
  int year = 0;
  int age = 0;
  auto operator<=>(const CellKey&) const = default;
};

/// Bootstrap cutoffs of one cell. draws[b][k] is the cutoff of centers[k] in
/// replication b; the joint draw is retained.
struct CellCutoffDraws {
  std::vector<CenterId> centers;
  std::vector<std::vector<Cutoff>> draws;

  std::size_t replications() const { return draws.size(); }
  /// Empirical distribution of one center's cutoff.
  std::map<Cutoff, double> frequencies(CenterId j) const;
  int column(CenterId j) const;
};

struct CutoffDistribution {
  std::map<CellKey, CellCutoffDraws> cells;
};

CellCutoffDraws bootstrap_cutoffs(const MarketCell& cell, int replications, std::uint64_t seed);

/// Bootstraps every cell. Cells without applicants get their deterministic
/// cutoffs (Open with seats, Closed without) in every replication.
CutoffDistribution bootstrap_all(std::span<const MarketCell> cells, int replications,
                                 std::uint64_t seed);

/// P(cutoff admits s) over the bootstrap replications of (key, j).
double admission_prob(const CutoffDistribution& dist, CellKey key, CenterId j, int s);

/// Admission probabilities pi[key][j][s - grid.lo], nondecreasing in s.
class LotteryBelief {
 public:
  LotteryBelief() = default;
  explicit LotteryBelief(ScoreGrid grid) : grid_(grid) {}

  const ScoreGrid& grid() const { return grid_; }
  const std::map<CellKey, std::map<CenterId, std::vector<double>>>& table() const { return pi_; }

  void set(CellKey key, CenterId j, std::vector<double> by_score);
  void set_constant(CellKey key, CenterId j, double p);
  bool has(CellKey key) const { return pi_.count(key) > 0; }

  double pi(CellKey key, CenterId j, int s) const;
  /// pi for centers 0..num_centers-1 at score s (clamped to the grid).
  std::vector<double> pi_vector(CellKey key, int s, int num_centers) const;

  /// The requested cell, or the same age in the closest earlier (else later)
  /// year when the cell lies outside the estimated panel.
  CellKey resolve(CellKey key) const;

  bool is_monotone() const;

  /// Frobenius norm of the whole table, and of the difference to another
  /// belief over identical keys.
  double norm() const;
  double distance(const LotteryBelief& other) const;
  /// (1 - weight) * this + weight * other, entrywise.
  LotteryBelief blended(const LotteryBelief& other, double weight) const;

  friend bool operator==(const LotteryBelief&, const LotteryBelief&) = default;

 private:
  ScoreGrid grid_{};
  std::map<CellKey, std::map<CenterId, std::vector<double>>> pi_;
};

LotteryBelief belief_from_distribution(const CutoffDistribution& dist, const ScoreGrid& grid);

struct Lottery {
  std::map<CenterId, double> assign;
  double waitlist = 1.0;

  double total() const;
  double expected_value(const std::map<CenterId, double>& v) const;
};

/// k-th listed center gets pi_k * prod_{k'<k} (1 - pi_k'); waitlist gets the
/// full product. Centers are treated as independent.
Lottery lottery_from_rol(const std::map<CenterId, double>& pi, const Rol& rol);
Lottery lottery_from_rol(const LotteryBelief& belief, CellKey key, const Rol& rol, int s);

struct BlendedLottery {
  Lottery ltilde;
  double ptilde = 0.0;
  double delta_tilde = 0.0;
};

double delta_tilde(int entry_age, double delta);
BlendedLottery blend_two_period(const Lottery& first, const Lottery& second, int entry_age,
                                double delta);

}  // namespace waitlist
