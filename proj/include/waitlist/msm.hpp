#pragma once

// Second-stage preference estimation by simulated method of moments.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "waitlist/direct_search.hpp"
#include "waitlist/lottery.hpp"
#include "waitlist/market.hpp"
#include "waitlist/policy.hpp"

namespace waitlist {

/// Per-applicant moments, length 4J + 4:
///   [R1 listed (J)] [R1 listed x s1 (J)] [waitlisted in period 1]
///   [R2 listed (J)] [R2 listed x s1 (J)] [waitlisted in period 2]
///   [DropSafety] [does not reapply]
/// Second-round entries are zero unless the second round is observed.
int moment_count(int num_centers);
std::vector<std::string> moment_names(int num_centers);

Eigen::VectorXd individual_moments(const ApplicantHistory& history,
                                   const std::map<CenterId, Cutoff>& first_cutoffs,
                                   int num_centers);

/// Which parameter blocks the search may move. gamma, delta and the age-0
/// outside mean never move.
struct ParameterBlocks {
  bool alpha = true;
  bool beta = false;
  bool sigma = false;    // area-level lower-triangular factor
  bool outside = false;  // mu0 at ages 1..5 and outside sd at every age
};

/// Maps Theta to and from a flat search vector.
class ThetaCodec {
 public:
  ThetaCodec(Theta base, std::vector<int> center_areas, ParameterBlocks blocks);

  Eigen::VectorXd encode(const Theta& theta) const;
  Theta decode(const Eigen::VectorXd& x) const;
  int size() const { return size_; }
  std::vector<std::string> names() const;

 private:
  Theta base_;
  std::vector<int> center_areas_;
  std::vector<int> area_index_;  // per center, index into the distinct areas
  int num_areas_ = 0;
  ParameterBlocks blocks_;
  int size_ = 0;
};

struct MsmConfig {
  int draws = 100;          // S
  int budget = 400;         // objective evaluations per stage
  std::uint64_t seed = 0;   // simulation draws (common across theta)
  std::uint64_t noise_seed = 1;
  double initial_step = 0.5;
  double tolerance = 1e-10;
  std::vector<int> cohort_ages{0};
  ParameterBlocks blocks;
};

struct WeightMatrix {
  Eigen::MatrixXd s;
  Eigen::MatrixXd inverse;  // pseudo-inverse when singular
  bool singular = false;
};

/// (1/n) sum_i r_i r_i'. Throws InvalidInput when there are no rows.
WeightMatrix weight_from_rows(const Eigen::MatrixXd& rows);

/// Adds N(0, I) noise to every row of h before forming the matrix.
WeightMatrix weight_matrix(const Eigen::MatrixXd& h, std::uint64_t noise_seed);

struct MomentGap {
  Eigen::VectorXd stacked;  // g = (1/n) sum_i h_i
  Eigen::MatrixXd h;        // n x dim, row i is nonzero only in its cell block
  std::vector<CellKey> cells;
  std::vector<int> cell_sizes;
};

/// Observed panel, first-stage belief and fixed simulation draws. Evaluating
/// the gap is a deterministic function of theta.
class MsmProblem {
 public:
  MsmProblem(const Panel& panel, LotteryBelief belief, const MsmConfig& config);

  MomentGap gap(const Theta& theta) const;
  double objective(const Theta& theta, const Eigen::MatrixXd* weight = nullptr) const;

  int dimension() const { return static_cast<int>(cells_.size()) * moment_count(num_centers_); }
  int sample_size() const { return static_cast<int>(members_.size()); }
  const std::vector<CellKey>& cells() const { return cells_; }
  const Population& population() const { return population_; }

 private:
  Eigen::MatrixXd simulated_mean(const Theta& theta) const;

  Panel panel_;
  LotteryBelief belief_;
  MsmConfig config_;
  int num_centers_ = 0;
  Population population_;
  std::vector<std::size_t> members_;  // population indices of estimation-sample applicants
  std::vector<int> member_cell_;      // block index per member
  std::vector<CellKey> cells_;
  std::vector<int> cell_sizes_;
  Eigen::MatrixXd observed_;          // members x moments
  std::vector<std::vector<StandardShocks>> shocks_;
};

/// Rebuilds the applicant population (including tie-break keys) from a panel.
Population population_from_panel(const Panel& panel);

struct FitRecord {
  int stage = 0;
  int evaluation = 0;
  double q = 0.0;
};

struct FitResult {
  Theta theta;
  Theta theta_first_stage;
  double q = 0.0;         // stage-2 objective at theta
  double q_first = 0.0;   // stage-1 objective at theta_first_stage
  WeightMatrix weight;
  MomentGap gap;
  std::vector<FitRecord> trajectory;
  bool budget_exhausted = false;
  int evaluations = 0;
};

/// Two-stage fit: minimize Q(theta; I) from `start`, form the noisy weight
/// matrix at that minimizer, then minimize Q(theta; S^-1).
FitResult fit(const MsmProblem& problem, const Theta& start, const std::vector<int>& center_areas,
              const MsmConfig& config);

}  // namespace waitlist
