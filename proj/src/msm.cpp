#include "waitlist/msm.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "waitlist/rng.hpp"

namespace waitlist {

int moment_count(int num_centers) { return 4 * num_centers + 4; }

std::vector<std::string> moment_names(int num_centers) {
  std::vector<std::string> out;
  for (int j = 0; j < num_centers; ++j) out.push_back("r1_lists_" + std::to_string(j));
  for (int j = 0; j < num_centers; ++j) out.push_back("r1_lists_x_score_" + std::to_string(j));
  out.push_back("waitlisted_1");
  for (int j = 0; j < num_centers; ++j) out.push_back("r2_lists_" + std::to_string(j));
  for (int j = 0; j < num_centers; ++j) out.push_back("r2_lists_x_score_" + std::to_string(j));
  out.push_back("waitlisted_2");
  out.push_back("drop_safety");
  out.push_back("no_reapply");
  return out;
}

Eigen::VectorXd individual_moments(const ApplicantHistory& h,
                                   const std::map<CenterId, Cutoff>& first_cutoffs,
                                   int num_centers) {
  const int j = num_centers;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(moment_count(j));
  for (CenterId c : h.r1) {
    m(c) = 1.0;
    m(j + c) = h.s1;
  }
  m(2 * j) = h.waitlisted_first() ? 1.0 : 0.0;
  if (h.second != SecondRound::Observed) return m;
  const int base = 2 * j + 1;
  if (h.reapplied()) {
    for (CenterId c : *h.r2) {
      m(base + c) = 1.0;
      m(base + j + c) = h.s1;
    }
    m(base + 2 * j) = h.outcome2 && h.outcome2->waitlisted() ? 1.0 : 0.0;
    m(base + 2 * j + 1) = drop_safety(h, first_cutoffs);
  } else {
    m(base + 2 * j + 2) = 1.0;
  }
  return m;
}

// ---------------------------------------------------------------------------

ThetaCodec::ThetaCodec(Theta base, std::vector<int> center_areas, ParameterBlocks blocks)
    : base_(std::move(base)), center_areas_(std::move(center_areas)), blocks_(blocks) {
  if (static_cast<int>(center_areas_.size()) != base_.num_centers())
    throw InvalidInput("one area per center is required");
  std::set<int> distinct(center_areas_.begin(), center_areas_.end());
  const std::vector<int> areas(distinct.begin(), distinct.end());
  num_areas_ = static_cast<int>(areas.size());
  for (int a : center_areas_)
    area_index_.push_back(static_cast<int>(std::lower_bound(areas.begin(), areas.end(), a) - areas.begin()));
  const int j = base_.num_centers();
  if (blocks_.alpha) size_ += j;
  if (blocks_.beta) size_ += j;
  if (blocks_.sigma) size_ += num_areas_ * (num_areas_ + 1) / 2;
  if (blocks_.outside) size_ += kMaxAge + kNumAges;
}

Eigen::VectorXd ThetaCodec::encode(const Theta& theta) const {
  Eigen::VectorXd x(size_);
  int k = 0;
  const int j = theta.num_centers();
  if (blocks_.alpha)
    for (int c = 0; c < j; ++c) x(k++) = theta.alpha(c);
  if (blocks_.beta)
    for (int c = 0; c < j; ++c) x(k++) = theta.beta(c);
  if (blocks_.sigma) {
    Eigen::MatrixXd area = Eigen::MatrixXd::Zero(num_areas_, num_areas_);
    for (int a = 0; a < j; ++a)
      for (int b = 0; b < j; ++b) area(area_index_[static_cast<std::size_t>(a)],
                                       area_index_[static_cast<std::size_t>(b)]) = theta.sigma(a, b);
    Eigen::MatrixXd l;
    for (double jitter = 0.0;; jitter = jitter == 0.0 ? 1e-10 : jitter * 10) {
      Eigen::LLT<Eigen::MatrixXd> llt(area + jitter * Eigen::MatrixXd::Identity(num_areas_, num_areas_));
      if (llt.info() == Eigen::Success) {
        l = llt.matrixL();
        break;
      }
      if (jitter > 1.0) throw ParameterError("area covariance has no Cholesky factor");
    }
    for (int r = 0; r < num_areas_; ++r)
      for (int c = 0; c <= r; ++c) x(k++) = l(r, c);
  }
  if (blocks_.outside) {
    for (int a = 1; a <= kMaxAge; ++a) x(k++) = theta.mu0[a];
    for (int a = 0; a <= kMaxAge; ++a) x(k++) = std::sqrt(theta.sigma0sq[a]);
  }
  return x;
}

Theta ThetaCodec::decode(const Eigen::VectorXd& x) const {
  if (x.size() != size_) throw InvalidInput("parameter vector has the wrong length");
  Theta t = base_;
  int k = 0;
  const int j = t.num_centers();
  if (blocks_.alpha)
    for (int c = 0; c < j; ++c) t.alpha(c) = x(k++);
  if (blocks_.beta)
    for (int c = 0; c < j; ++c) t.beta(c) = x(k++);
  if (blocks_.sigma) {
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(num_areas_, num_areas_);
    for (int r = 0; r < num_areas_; ++r)
      for (int c = 0; c <= r; ++c) l(r, c) = x(k++);
    t.sigma = area_block_sigma(l * l.transpose(), area_index_);
  }
  if (blocks_.outside) {
    for (int a = 1; a <= kMaxAge; ++a) t.mu0[a] = x(k++);
    for (int a = 0; a <= kMaxAge; ++a) {
      const double sd = x(k++);
      t.sigma0sq[a] = sd * sd;
    }
  }
  return t;
}

std::vector<std::string> ThetaCodec::names() const {
  std::vector<std::string> out;
  const int j = base_.num_centers();
  if (blocks_.alpha)
    for (int c = 0; c < j; ++c) out.push_back("alpha_" + std::to_string(c));
  if (blocks_.beta)
    for (int c = 0; c < j; ++c) out.push_back("beta_" + std::to_string(c));
  if (blocks_.sigma)
    for (int r = 0; r < num_areas_; ++r)
      for (int c = 0; c <= r; ++c) out.push_back("sigma_factor_" + std::to_string(r) + "_" + std::to_string(c));
  if (blocks_.outside) {
    for (int a = 1; a <= kMaxAge; ++a) out.push_back("mu0_" + std::to_string(a));
    for (int a = 0; a <= kMaxAge; ++a) out.push_back("sigma0_" + std::to_string(a));
  }
  return out;
}

// ---------------------------------------------------------------------------

WeightMatrix weight_from_rows(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) throw InvalidInput("weight matrix needs at least one applicant");
  WeightMatrix w;
  w.s = rows.transpose() * rows / static_cast<double>(rows.rows());
  w.s = 0.5 * (w.s + w.s.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(w.s);
  const auto& lambda = eig.eigenvalues();
  const double top = std::max(lambda.cwiseAbs().maxCoeff(), 1e-300);
  const double floor = 1e-10 * top;
  w.singular = lambda.minCoeff() <= floor;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lambda(i) > floor) inv(i) = 1.0 / lambda(i);
  w.inverse = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  w.inverse = 0.5 * (w.inverse + w.inverse.transpose());
  return w;
}

WeightMatrix weight_matrix(const Eigen::MatrixXd& h, std::uint64_t noise_seed) {
  Rng rng = make_rng(noise_seed, "weight-noise");
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd rows = h;
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index k = 0; k < rows.cols(); ++k) rows(i, k) += normal(rng);
  return weight_from_rows(rows);
}

// ---------------------------------------------------------------------------

Population population_from_panel(const Panel& panel) {
  Population pop;
  pop.reserve(panel.histories.size());
  for (const auto& h : panel.histories) {
    Applicant a;
    a.id = h.id;
    a.entry_year = h.entry_year;
    a.entry_age = h.entry_age;
    a.s1 = h.s1;
    a.area = h.area;
    const auto& cell = panel.cells.at({h.entry_year, h.entry_age});
    auto it = std::find_if(cell.applicants.begin(), cell.applicants.end(),
                           [&](const CellApplicant& c) { return c.id == h.id; });
    if (it == cell.applicants.end())
      throw InvalidInput("applicant " + std::to_string(h.id) + " missing from its entry cell");
    a.tiebreak = it->tiebreak;
    pop.push_back(a);
  }
  return pop;
}

MsmProblem::MsmProblem(const Panel& panel, LotteryBelief belief, const MsmConfig& config)
    : panel_(panel), belief_(std::move(belief)), config_(config) {
  if (config.draws < 1) throw InvalidInput("msm.draws: must be at least 1");
  num_centers_ = panel.market.num_centers();
  population_ = population_from_panel(panel);

  std::set<int> ages(config.cohort_ages.begin(), config.cohort_ages.end());
  std::map<CellKey, int> block;
  for (std::size_t i = 0; i < panel.histories.size(); ++i)
    if (ages.count(panel.histories[i].entry_age))
      block[{panel.histories[i].entry_year, panel.histories[i].entry_age}] = 0;
  int b = 0;
  for (auto& [key, index] : block) {
    index = b++;
    cells_.push_back(key);
  }
  cell_sizes_.assign(cells_.size(), 0);
  for (std::size_t i = 0; i < panel.histories.size(); ++i) {
    const auto& h = panel.histories[i];
    auto it = block.find({h.entry_year, h.entry_age});
    if (it == block.end()) continue;
    members_.push_back(i);
    member_cell_.push_back(it->second);
    ++cell_sizes_[static_cast<std::size_t>(it->second)];
  }

  const int m = moment_count(num_centers_);
  observed_.resize(static_cast<Eigen::Index>(members_.size()), m);
  for (std::size_t r = 0; r < members_.size(); ++r) {
    const auto& h = panel.histories[members_[r]];
    observed_.row(static_cast<Eigen::Index>(r)) =
        individual_moments(h, panel.results.at({h.entry_year, h.entry_age}).cutoffs, num_centers_)
            .transpose();
  }
  for (int s = 0; s < config.draws; ++s)
    shocks_.push_back(population_shocks(population_, num_centers_, config.seed, s));
}

Eigen::MatrixXd MsmProblem::simulated_mean(const Theta& theta) const {
  const int m = moment_count(num_centers_);
  std::vector<Eigen::MatrixXd> per_draw(shocks_.size());
  parallel_for(shocks_.size(), [&](std::size_t s) {
    const auto draws = realize_population(theta, panel_.market, population_, shocks_[s]);
    const auto choices = solve_choices(panel_.market, population_, draws, belief_, panel_.bonus,
                                       theta.delta);
    const auto sim = run_market(panel_.market, population_, choices, panel_.bonus);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(members_.size()), m);
    for (std::size_t r = 0; r < members_.size(); ++r) {
      const auto& h = sim.histories[members_[r]];
      out.row(static_cast<Eigen::Index>(r)) =
          individual_moments(h, sim.results.at({h.entry_year, h.entry_age}).cutoffs, num_centers_)
              .transpose();
    }
    per_draw[s] = std::move(out);
  });
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(members_.size()), m);
  for (const auto& d : per_draw) mean += d;
  return mean / static_cast<double>(per_draw.size());
}

MomentGap MsmProblem::gap(const Theta& theta) const {
  const int m = moment_count(num_centers_);
  const Eigen::MatrixXd diff = observed_ - simulated_mean(theta);
  MomentGap out;
  out.cells = cells_;
  out.cell_sizes = cell_sizes_;
  out.h = Eigen::MatrixXd::Zero(diff.rows(), dimension());
  for (Eigen::Index r = 0; r < diff.rows(); ++r)
    out.h.block(r, member_cell_[static_cast<std::size_t>(r)] * m, 1, m) = diff.row(r);
  out.stacked = diff.rows() > 0 ? Eigen::VectorXd(out.h.colwise().sum().transpose() / diff.rows())
                                : Eigen::VectorXd::Zero(dimension());
  return out;
}

double MsmProblem::objective(const Theta& theta, const Eigen::MatrixXd* weight) const {
  const Eigen::VectorXd g = gap(theta).stacked;
  if (!weight) return g.squaredNorm();
  return g.dot(*weight * g);
}

FitResult fit(const MsmProblem& problem, const Theta& start, const std::vector<int>& center_areas,
              const MsmConfig& config) {
  const ThetaCodec codec(start, center_areas, config.blocks);
  SearchOptions options;
  options.max_evals = config.budget;
  options.initial_step = config.initial_step;
  options.tolerance = config.tolerance;

  FitResult out;
  auto stage_one = nelder_mead(
      [&](const Eigen::VectorXd& x) { return problem.objective(codec.decode(x)); },
      codec.encode(start), options);
  out.theta_first_stage = codec.decode(stage_one.x);
  out.q_first = stage_one.value;
  for (std::size_t k = 0; k < stage_one.trajectory.size(); ++k)
    out.trajectory.push_back({1, static_cast<int>(k), stage_one.trajectory[k]});

  out.weight = weight_matrix(problem.gap(out.theta_first_stage).h, config.noise_seed);
  const Eigen::MatrixXd& w = out.weight.inverse;
  auto stage_two = nelder_mead(
      [&](const Eigen::VectorXd& x) { return problem.objective(codec.decode(x), &w); },
      stage_one.x, options);
  out.theta = codec.decode(stage_two.x);
  out.q = stage_two.value;
  for (std::size_t k = 0; k < stage_two.trajectory.size(); ++k)
    out.trajectory.push_back({2, static_cast<int>(k), stage_two.trajectory[k]});

  out.gap = problem.gap(out.theta);
  out.budget_exhausted = stage_one.budget_exhausted || stage_two.budget_exhausted;
  out.evaluations = stage_one.evals + stage_two.evals;
  return out;
}

}  // namespace waitlist
