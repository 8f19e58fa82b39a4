#include "waitlist/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

namespace waitlist {

namespace {

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

bool improves(double candidate, double incumbent) {
  return candidate > incumbent + 1e-12 * std::max(1.0, std::abs(incumbent));
}

/// Inserts j keeping descending v, ties by lower id.
Rol insert_sorted(const Rol& rol, CenterId j, std::span<const double> v) {
  Rol out;
  bool placed = false;
  for (CenterId e : rol) {
    if (!placed && (v[j] > v[e] || (v[j] == v[e] && j < e))) {
      out.push_back_unchecked(j);
      placed = true;
    }
    out.push_back_unchecked(e);
  }
  if (!placed) out.push_back_unchecked(j);
  return out;
}

void enumerate_lists(int num_centers, int max_list, std::span<const double> v, Rol& prefix,
                     int next, std::vector<Rol>& out) {
  if (static_cast<int>(prefix.size()) == max_list) return;
  for (int j = next; j < num_centers; ++j) {
    prefix.push_back_unchecked(j);
    out.push_back(canonical_order(prefix, v));
    enumerate_lists(num_centers, max_list, v, prefix, j + 1, out);
    prefix.erase_at(prefix.size() - 1);
  }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

void Theta::validate() const {
  const auto j = alpha.size();
  if (beta.size() != j) throw ParameterError("beta length differs from alpha");
  if (sigma.rows() != j || sigma.cols() != j) throw ParameterError("sigma must be J x J");
  if (gamma != -1.0) throw ParameterError("gamma is normalized to -1");
  if (mu0[0] != 0.0) throw ParameterError("mu0 at age 0 is normalized to 0");
  for (double s : sigma0sq)
    if (!(s >= 0.0)) throw ParameterError("outside-option variance must be nonnegative");
  if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("discount factor must lie in (0, 1)");
  if (j > 0) (void)sigma_factor(sigma);
}

Eigen::MatrixXd area_block_sigma(const Eigen::MatrixXd& area_cov, std::span<const int> center_areas) {
  const auto j = static_cast<Eigen::Index>(center_areas.size());
  Eigen::MatrixXd sigma(j, j);
  for (Eigen::Index a = 0; a < j; ++a)
    for (Eigen::Index b = 0; b < j; ++b)
      sigma(a, b) = area_cov(center_areas[static_cast<std::size_t>(a)],
                             center_areas[static_cast<std::size_t>(b)]);
  return sigma;
}

Eigen::MatrixXd sigma_factor(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols()) throw ParameterError("sigma must be square");
  if (sigma.size() == 0) return sigma;
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw ParameterError("sigma is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  const auto& lambda = eig.eigenvalues();
  if (lambda.minCoeff() < -1e-9 * scale) throw ParameterError("sigma is not positive semidefinite");
  return eig.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Eigen::VectorXd flow_utility(const Theta& theta, int s1, std::span<const int> same_area,
                             const Eigen::VectorXd& eps) {
  const auto j = theta.alpha.size();
  if (eps.size() != j || static_cast<Eigen::Index>(same_area.size()) != j ||
      theta.beta.size() != j)
    throw InvalidInput("flow utility dimensions do not match the number of centers");
  Eigen::VectorXd v = theta.alpha + theta.beta * static_cast<double>(s1) + eps;
  for (Eigen::Index k = 0; k < j; ++k) v(k) += theta.gamma * same_area[static_cast<std::size_t>(k)];
  return v;
}

StandardShocks draw_shocks(int num_centers, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  StandardShocks out;
  out.z.resize(num_centers);
  for (int j = 0; j < num_centers; ++j) out.z(j) = normal(rng);
  for (double& z : out.z0) z = normal(rng);
  return out;
}

UtilityDraw realize_utilities(const Theta& theta, const Eigen::MatrixXd& factor, int s1,
                              std::span<const int> same_area, const StandardShocks& shocks) {
  UtilityDraw out;
  out.v = flow_utility(theta, s1, same_area, factor * shocks.z);
  for (int a = 0; a < kNumAges; ++a)
    out.v0[a] = theta.mu0[a] + std::sqrt(theta.sigma0sq[a]) * shocks.z0[a];
  return out;
}

UtilityDraw draw_utilities(const Theta& theta, int s1, std::span<const int> same_area, Rng& rng) {
  const Eigen::MatrixXd factor = sigma_factor(theta.sigma);
  const auto shocks = draw_shocks(theta.num_centers(), rng);
  return realize_utilities(theta, factor, s1, same_area, shocks);
}

PolicyProblem make_problem(const LotteryBelief& belief, CellKey entry, int s1, int bonus,
                           UtilityDraw draw, double delta, ObjectiveMode mode, int max_list) {
  PolicyProblem p;
  p.entry_age = entry.age;
  p.s1 = s1;
  p.delta = delta;
  p.mode = mode;
  p.max_list = max_list;
  const int j = static_cast<int>(draw.v.size());
  const auto& grid = belief.grid();
  if (!grid.contains(s1)) throw LookupError("score " + std::to_string(s1) + " outside the belief grid");
  p.pi1 = belief.pi_vector(belief.resolve(entry), s1, j);
  if (entry.age < kMaxAge) {
    const int s2 = apply_waitlist_bonus(s1, bonus, grid).score;
    p.pi2 = belief.pi_vector(belief.resolve({entry.year + 1, entry.age + 1}), s2, j);
  } else {
    p.pi2.assign(static_cast<std::size_t>(j), 0.0);
  }
  p.draw = std::move(draw);
  return p;
}

ListValue evaluate_list(const Rol& rol, std::span<const double> v, std::span<const double> pi) {
  ListValue out;
  for (CenterId j : rol) {
    out.vl += out.waitlist * pi[j] * v[j];
    out.waitlist *= 1.0 - pi[j];
  }
  return out;
}

double horizon_weight(int entry_age, double delta) {
  double d = 0.0;
  double w = 1.0;
  for (int a = entry_age; a <= kMaxAge; ++a, w *= delta) d += w;
  return d;
}

double total_value(const PolicyProblem& problem, ListValue first, ListValue second) {
  const int a0 = problem.entry_age;
  const double delta = problem.delta;
  const auto& v0 = problem.draw.v0;
  if (problem.mode == ObjectiveMode::Expanded) {
    const double horizon = horizon_weight(a0, delta);
    double outside_stream = 0.0;
    double w = 1.0;
    for (int a = a0; a <= kMaxAge; ++a, w *= delta) outside_stream += w * v0[a];
    return horizon * first.vl +
           first.waitlist * ((1.0 - second.waitlist) * v0[a0] + (horizon - 1.0) * second.vl +
                             second.waitlist * outside_stream);
  }
  const double dt = delta_tilde(a0, delta);
  const double pt = dt / (1.0 + dt) * first.waitlist;
  double later_outside = 0.0;
  double w = delta;
  for (int a = a0 + 1; a <= kMaxAge; ++a, w *= delta) later_outside += w * v0[a];
  return (1.0 - pt) * first.vl + pt * second.vl + v0[a0] * first.waitlist +
         second.waitlist * later_outside;
}

double total_value(const PolicyProblem& problem, const Rol& first, const Rol& second) {
  const auto v = as_span(problem.draw.v);
  return total_value(problem, evaluate_list(first, v, problem.pi1),
                     evaluate_list(second, v, problem.pi2));
}

double single_period_value(const Rol& rol, std::span<const double> v, double v0,
                           std::span<const double> pi) {
  const auto lv = evaluate_list(rol, v, pi);
  return lv.vl + lv.waitlist * v0;
}

Rol canonical_order(const Rol& rol, std::span<const double> v) {
  Rol out;
  for (CenterId j : rol) out = insert_sorted(out, j, v);
  return out;
}

Rol best_single_period_rol(std::span<const double> v, double v0, std::span<const double> pi,
                           int max_list) {
  const int num_centers = static_cast<int>(v.size());
  Rol current;
  double current_value = v0;
  while (static_cast<int>(current.size()) < std::min(max_list, kMaxRolLength)) {
    Rol best;
    double best_value = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < num_centers; ++j) {
      if (current.contains(j)) continue;
      Rol candidate = insert_sorted(current, j, v);
      const double value = single_period_value(candidate, v, v0, pi);
      if (value > best_value) {
        best_value = value;
        best = candidate;
      }
    }
    if (best.empty() || !improves(best_value, current_value)) break;
    current = best;
    current_value = best_value;
  }
  return current;
}

double normalized_second_outside(const PolicyProblem& problem) {
  const int a0 = problem.entry_age;
  if (a0 >= kMaxAge) return 0.0;
  double num = 0.0;
  double den = 0.0;
  double w = problem.delta;
  for (int a = a0 + 1; a <= kMaxAge; ++a, w *= problem.delta) {
    num += w * problem.draw.v0[a];
    den += w;
  }
  return num / den;
}

PairChoice approx_optimal_pair(const PolicyProblem& problem) {
  const auto v = as_span(problem.draw.v);
  const int num_centers = problem.num_centers();
  const int a0 = problem.entry_age;

  PairChoice out;
  if (a0 < kMaxAge)
    out.second = best_single_period_rol(v, normalized_second_outside(problem), problem.pi2,
                                        problem.max_list);
  const ListValue second = evaluate_list(out.second, v, problem.pi2);

  out.first = best_single_period_rol(v, problem.draw.v0[a0], problem.pi1, problem.max_list);
  out.value = total_value(problem, evaluate_list(out.first, v, problem.pi1), second);

  for (;;) {
    Rol best;
    double best_value = out.value;
    bool found = false;
    for (std::size_t k = 0; k < out.first.size(); ++k) {
      Rol without = out.first;
      without.erase_at(k);
      // j = -1 is the pure drop; then swaps in ascending center id.
      for (int j = -1; j < num_centers; ++j) {
        if (j >= 0 && out.first.contains(j)) continue;
        Rol candidate = j < 0 ? without : insert_sorted(without, j, v);
        const double value =
            total_value(problem, evaluate_list(candidate, v, problem.pi1), second);
        if (improves(value, best_value)) {
          best_value = value;
          best = candidate;
          found = true;
        }
      }
    }
    if (!found) break;
    out.first = best;
    out.value = best_value;
    ++out.updates;
  }
  return out;
}

PairChoice brute_force_optimal_pair(const PolicyProblem& problem, int max_list,
                                    std::size_t max_pairs) {
  const auto v = as_span(problem.draw.v);
  const int num_centers = problem.num_centers();
  max_list = std::min(max_list, kMaxRolLength);

  // Count before materializing anything.
  double count = 1.0;
  double choose = 1.0;
  for (int k = 1; k <= std::min(max_list, num_centers); ++k) {
    choose = choose * (num_centers - k + 1) / k;
    count += choose;
  }
  if (count * count > static_cast<double>(max_pairs))
    throw EnumerationTooLarge("exhaustive search over " + std::to_string(count * count) +
                              " pairs exceeds the guard of " + std::to_string(max_pairs));

  std::vector<Rol> lists{Rol{}};
  Rol prefix;
  enumerate_lists(num_centers, max_list, v, prefix, 0, lists);

  std::vector<ListValue> first(lists.size());
  std::vector<ListValue> second(lists.size());
  for (std::size_t i = 0; i < lists.size(); ++i) {
    first[i] = evaluate_list(lists[i], v, problem.pi1);
    second[i] = evaluate_list(lists[i], v, problem.pi2);
  }

  PairChoice out;
  out.value = -std::numeric_limits<double>::infinity();
  std::size_t bi = 0;
  std::size_t bk = 0;
  for (std::size_t i = 0; i < lists.size(); ++i)
    for (std::size_t k = 0; k < lists.size(); ++k) {
      const double value = total_value(problem, first[i], second[k]);
      if (value > out.value) {
        out.value = value;
        bi = i;
        bk = k;
      }
    }
  out.first = lists[bi];
  out.second = lists[bk];
  return out;
}

std::pair<std::vector<double>, std::vector<double>> synthetic_benchmark_pis(int num_centers) {
  std::vector<double> pi1(static_cast<std::size_t>(num_centers));
  std::vector<double> pi2(static_cast<std::size_t>(num_centers));
  for (int j = 0; j < num_centers; ++j) {
    const double center =
        22.0 + (num_centers > 1 ? 9.0 * j / static_cast<double>(num_centers - 1) : 0.0);
    pi1[static_cast<std::size_t>(j)] = normal_cdf((26.5 - center) / 1.5);
    pi2[static_cast<std::size_t>(j)] = normal_cdf((28.5 - center) / 1.5);
  }
  return {pi1, pi2};
}

std::vector<BenchmarkRow> mia_benchmark(const BenchmarkConfig& config, std::uint64_t seed) {
  auto pi1 = config.pi1;
  auto pi2 = config.pi2;
  if (pi1.empty() || pi2.empty()) std::tie(pi1, pi2) = synthetic_benchmark_pis(config.num_centers);
  if (static_cast<int>(pi1.size()) != config.num_centers ||
      static_cast<int>(pi2.size()) != config.num_centers)
    throw InvalidInput("benchmark admission probabilities must have one entry per center");

  std::vector<BenchmarkRow> rows;
  for (std::size_t ci = 0; ci < config.c_list.size(); ++ci) {
    const double c = config.c_list[ci];
    std::vector<int> correct(static_cast<std::size_t>(config.draws), 0);
    std::vector<int> updates(static_cast<std::size_t>(config.draws), 0);
    parallel_for(correct.size(), [&](std::size_t m) {
      Rng rng = make_rng(seed, "benchmark/" + std::to_string(ci) + "/" + std::to_string(m));
      std::normal_distribution<double> normal(0.0, 1.0);
      PolicyProblem p;
      p.entry_age = config.entry_age;
      p.s1 = 26;
      p.pi1 = pi1;
      p.pi2 = pi2;
      p.delta = config.delta;
      p.max_list = config.max_list;
      p.draw.v.resize(config.num_centers);
      for (int j = 0; j < config.num_centers; ++j)
        p.draw.v(j) = c * (1.0 - pi1[static_cast<std::size_t>(j)]) + normal(rng);
      const auto approx = approx_optimal_pair(p);
      const auto exact = brute_force_optimal_pair(p, config.max_list);
      correct[m] = approx.value >= exact.value - 1e-9 ? 1 : 0;
      updates[m] = approx.updates;
    });
    BenchmarkRow row;
    row.c = c;
    for (std::size_t m = 0; m < correct.size(); ++m) {
      row.fraction_correct += correct[m];
      row.updates[static_cast<std::size_t>(std::min(updates[m], 5))] += 1.0;
    }
    const double n = std::max(1, config.draws);
    row.fraction_correct /= n;
    for (double& u : row.updates) u /= n;
    rows.push_back(row);
  }
  return rows;
}

double objective_mode_agreement(int trials, int num_centers, int max_list, std::uint64_t seed) {
  int agree = 0;
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed, "mode-audit/" + std::to_string(t));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PolicyProblem p;
    p.entry_age = std::uniform_int_distribution<int>(0, kMaxAge - 1)(rng);
    p.max_list = max_list;
    p.draw.v.resize(num_centers);
    for (int j = 0; j < num_centers; ++j) {
      const double base = unit(rng);
      p.pi1.push_back(base);
      p.pi2.push_back(base + (1.0 - base) * unit(rng));
      p.draw.v(j) = normal(rng);
    }
    for (double& x : p.draw.v0) x = normal(rng);
    const auto expanded = brute_force_optimal_pair(p, max_list);
    p.mode = ObjectiveMode::Succinct;
    const auto succinct = brute_force_optimal_pair(p, max_list);
    if (expanded.first == succinct.first && expanded.second == succinct.second) ++agree;
  }
  return trials > 0 ? static_cast<double>(agree) / trials : 1.0;
}

}  // namespace waitlist
