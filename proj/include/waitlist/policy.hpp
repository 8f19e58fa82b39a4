#pragma once

// Applicant preferences and the choice of a pair of ranked lists
// (first application, reapplication if waitlisted).

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "waitlist/lottery.hpp"
#include "waitlist/matching.hpp"
#include "waitlist/rng.hpp"

namespace waitlist {

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ObjectiveMode { Expanded, Succinct };

/// Preference parameters. Flow utility of center j for an applicant with
/// initial score s living in the same area (d = 1) or not (d = 0):
///   v_j = alpha_j + beta_j * s + gamma * d + eps_j,  eps ~ N(0, sigma).
/// Outside option at age a: v0_a ~ N(mu0[a], sigma0sq[a]).
struct Theta {
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  double gamma = -1.0;
  Eigen::MatrixXd sigma;
  std::array<double, kNumAges> mu0{};
  std::array<double, kNumAges> sigma0sq{};
  double delta = 0.95;

  int num_centers() const { return static_cast<int>(alpha.size()); }
  /// Throws ParameterError on shape mismatch, asymmetric or indefinite sigma,
  /// or negative outside-option variances.
  void validate() const;
};

/// Full J x J covariance with Sigma_jk = area_cov(area_j, area_k).
Eigen::MatrixXd area_block_sigma(const Eigen::MatrixXd& area_cov, std::span<const int> center_areas);

/// F with F F' = sigma, from the symmetric eigendecomposition. Throws
/// ParameterError when sigma is not positive semidefinite.
Eigen::MatrixXd sigma_factor(const Eigen::MatrixXd& sigma);

struct UtilityDraw {
  Eigen::VectorXd v;
  std::array<double, kNumAges> v0{};
};

/// Standard-normal inputs behind one UtilityDraw; kept fixed across
/// parameter values for common random numbers.
struct StandardShocks {
  Eigen::VectorXd z;
  std::array<double, kNumAges> z0{};
};

Eigen::VectorXd flow_utility(const Theta& theta, int s1, std::span<const int> same_area,
                             const Eigen::VectorXd& eps);

StandardShocks draw_shocks(int num_centers, Rng& rng);

UtilityDraw realize_utilities(const Theta& theta, const Eigen::MatrixXd& factor, int s1,
                              std::span<const int> same_area, const StandardShocks& shocks);

UtilityDraw draw_utilities(const Theta& theta, int s1, std::span<const int> same_area, Rng& rng);

/// Everything one applicant needs to pick (R1, R2). Centers are dense
/// indices 0..J-1 into draw.v, pi1 and pi2.
struct PolicyProblem {
  int entry_age = 0;
  int s1 = 0;
  std::vector<double> pi1;  // admission probabilities at s1 in the entry cell
  std::vector<double> pi2;  // at the bonus-adjusted score one year later
  UtilityDraw draw;
  double delta = 0.95;
  ObjectiveMode mode = ObjectiveMode::Expanded;
  int max_list = kMaxRolLength;

  int num_centers() const { return static_cast<int>(draw.v.size()); }
};

PolicyProblem make_problem(const LotteryBelief& belief, CellKey entry, int s1, int bonus,
                           UtilityDraw draw, double delta,
                           ObjectiveMode mode = ObjectiveMode::Expanded,
                           int max_list = kMaxRolLength);

/// v . L and the waitlist probability of one list.
struct ListValue {
  double vl = 0.0;
  double waitlist = 1.0;
};

ListValue evaluate_list(const Rol& rol, std::span<const double> v, std::span<const double> pi);

/// sum_{k=0}^{5-a0} delta^k
double horizon_weight(int entry_age, double delta);

double total_value(const PolicyProblem& problem, const Rol& first, const Rol& second);
double total_value(const PolicyProblem& problem, ListValue first, ListValue second);

/// One-period value of a list with the outside option valued at v0.
double single_period_value(const Rol& rol, std::span<const double> v, double v0,
                           std::span<const double> pi);

/// Sorts a list into descending v (ties by center id).
Rol canonical_order(const Rol& rol, std::span<const double> v);

/// Marginal improvement: add the center that raises the one-period value the
/// most until nothing improves or the list holds max_list centers.
Rol best_single_period_rol(std::span<const double> v, double v0, std::span<const double> pi,
                           int max_list);

/// Per-year outside value of the reapplication period, averaged with the
/// horizon weights of ages a0+1..5.
double normalized_second_outside(const PolicyProblem& problem);

struct PairChoice {
  Rol first;
  Rol second;
  double value = 0.0;
  int updates = 0;
};

/// Second list by marginal improvement; first list starts at the myopic
/// marginal-improvement list and takes the best drop-or-swap step while the
/// two-period value strictly improves.
PairChoice approx_optimal_pair(const PolicyProblem& problem);

class EnumerationTooLarge : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Exact argmax over all pairs of lists of at most max_list centers, each
/// list in descending-v order.
PairChoice brute_force_optimal_pair(const PolicyProblem& problem, int max_list,
                                    std::size_t max_pairs = 10'000'000);

struct BenchmarkConfig {
  int num_centers = 10;
  int max_list = 3;
  int draws = 1000;
  std::vector<double> c_list{0.0, 1.0, 2.0};
  std::vector<double> pi1;  // empty: synthetic_benchmark_pis
  std::vector<double> pi2;
  int entry_age = 0;
  double delta = 0.95;

  static std::vector<double> table_c_values() { return {0.0, 1.0, 2.0}; }
  static std::vector<double> text_c_values() { return {0.0, 0.5, 1.0}; }
};

/// Stand-in admission probabilities for a score-26 entrant (pi1) and the same
/// applicant after a +2 bonus (pi2): center j has cutoffs spread around
/// 22 + 9j/(J-1) with unit-and-a-half dispersion.
std::pair<std::vector<double>, std::vector<double>> synthetic_benchmark_pis(int num_centers);

struct BenchmarkRow {
  double c = 0.0;
  double fraction_correct = 0.0;
  std::array<double, 6> updates{};  // 0,1,2,3,4,5+
};

std::vector<BenchmarkRow> mia_benchmark(const BenchmarkConfig& config, std::uint64_t seed);

/// Share of random instances on which the expanded and succinct objectives
/// pick the same pair by exhaustive search.
double objective_mode_agreement(int trials, int num_centers, int max_list, std::uint64_t seed);

}  // namespace waitlist
