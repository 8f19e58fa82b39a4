#include "waitlist/lottery.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "waitlist/rng.hpp"

namespace waitlist {

namespace {

std::string key_string(CellKey key) {
  return "(year " + std::to_string(key.year) + ", age " + std::to_string(key.age) + ")";
}

}  // namespace

int CellCutoffDraws::column(CenterId j) const {
  auto it = std::find(centers.begin(), centers.end(), j);
  if (it == centers.end()) throw LookupError("center " + std::to_string(j) + " not in cell");
  return static_cast<int>(it - centers.begin());
}

std::map<Cutoff, double> CellCutoffDraws::frequencies(CenterId j) const {
  const int col = column(j);
  std::map<Cutoff, double> out;
  for (const auto& row : draws) out[row[col]] += 1.0;
  for (auto& [c, f] : out) f /= static_cast<double>(draws.size());
  return out;
}

CellCutoffDraws bootstrap_cutoffs(const MarketCell& cell, int replications, std::uint64_t seed) {
  if (replications < 1) throw InvalidInput("bootstrap needs at least one replication");
  if (cell.applicants.empty()) throw InvalidInput("cannot bootstrap an empty cell");

  CellCutoffDraws out;
  std::vector<int> caps;
  std::map<CenterId, int> dense;
  for (const auto& [j, c] : cell.capacities) {
    dense.emplace(j, static_cast<int>(out.centers.size()));
    out.centers.push_back(j);
    caps.push_back(c);
  }
  std::vector<detail::DenseApplicant> pool;
  pool.reserve(cell.applicants.size());
  for (const auto& a : cell.applicants) {
    detail::DenseApplicant d{a.score, 0, {}};
    for (CenterId j : a.rol) {
      auto it = dense.find(j);
      if (it == dense.end())
        throw InvalidInput("ROL references unknown center " + std::to_string(j));
      d.rol.push_back_unchecked(it->second);
    }
    pool.push_back(d);
  }

  out.draws.resize(static_cast<std::size_t>(replications));
  parallel_for(out.draws.size(), [&](std::size_t b) {
    Rng rng = make_rng(seed, "replication/" + std::to_string(b));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<detail::DenseApplicant> sample(pool.size());
    for (std::size_t i = 0; i < sample.size(); ++i) {
      sample[i] = pool[pick(rng)];
      sample[i].tiebreak = static_cast<int>(i);  // draw order breaks ties
    }
    out.draws[b] = detail::serial_dictatorship(sample, caps);
  });
  return out;
}

CutoffDistribution bootstrap_all(std::span<const MarketCell> cells, int replications,
                                 std::uint64_t seed) {
  if (replications < 1) throw InvalidInput("bootstrap needs at least one replication");
  CutoffDistribution dist;
  for (const auto& cell : cells) {
    const CellKey key{cell.year, cell.age};
    if (cell.applicants.empty()) {
      CellCutoffDraws fixed;
      std::vector<Cutoff> row;
      for (const auto& [j, c] : cell.capacities) {
        fixed.centers.push_back(j);
        row.push_back(c > 0 ? Cutoff::open() : Cutoff::closed());
      }
      fixed.draws.assign(static_cast<std::size_t>(replications), row);
      dist.cells.emplace(key, std::move(fixed));
      continue;
    }
    const auto stream = "cell/" + std::to_string(cell.year) + "/" + std::to_string(cell.age);
    dist.cells.emplace(key, bootstrap_cutoffs(cell, replications, derive_seed(seed, stream)));
  }
  return dist;
}

double admission_prob(const CutoffDistribution& dist, CellKey key, CenterId j, int s) {
  auto it = dist.cells.find(key);
  if (it == dist.cells.end()) throw LookupError("no cutoff distribution for cell " + key_string(key));
  const auto& draws = it->second;
  const int col = draws.column(j);
  std::size_t hits = 0;
  for (const auto& row : draws.draws)
    if (row[col].admits(s)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(draws.replications());
}

void LotteryBelief::set(CellKey key, CenterId j, std::vector<double> by_score) {
  if (static_cast<int>(by_score.size()) != grid_.size())
    throw InvalidInput("belief row has wrong length for the score grid");
  pi_[key][j] = std::move(by_score);
}

void LotteryBelief::set_constant(CellKey key, CenterId j, double p) {
  set(key, j, std::vector<double>(static_cast<std::size_t>(grid_.size()), p));
}

double LotteryBelief::pi(CellKey key, CenterId j, int s) const {
  auto it = pi_.find(key);
  if (it == pi_.end()) throw LookupError("belief has no cell " + key_string(key));
  auto jt = it->second.find(j);
  if (jt == it->second.end())
    throw LookupError("belief has no center " + std::to_string(j) + " in cell " + key_string(key));
  return jt->second[static_cast<std::size_t>(grid_.index(s))];
}

std::vector<double> LotteryBelief::pi_vector(CellKey key, int s, int num_centers) const {
  auto it = pi_.find(key);
  if (it == pi_.end()) throw LookupError("belief has no cell " + key_string(key));
  const auto idx = static_cast<std::size_t>(grid_.index(grid_.clamp(s)));
  std::vector<double> out(static_cast<std::size_t>(num_centers));
  for (int j = 0; j < num_centers; ++j) {
    auto jt = it->second.find(j);
    if (jt == it->second.end())
      throw LookupError("belief has no center " + std::to_string(j) + " in cell " + key_string(key));
    out[static_cast<std::size_t>(j)] = jt->second[idx];
  }
  return out;
}

CellKey LotteryBelief::resolve(CellKey key) const {
  if (pi_.count(key)) return key;
  const CellKey* before = nullptr;
  const CellKey* after = nullptr;
  for (const auto& [k, row] : pi_) {
    if (k.age != key.age) continue;
    if (k.year < key.year) before = &k;
    else if (!after) after = &k;
  }
  if (before) return *before;
  if (after) return *after;
  throw LookupError("belief has no cell for age " + std::to_string(key.age));
}

bool LotteryBelief::is_monotone() const {
  for (const auto& [key, row] : pi_)
    for (const auto& [j, v] : row)
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] < 0.0 || v[i] > 1.0) return false;
        if (i > 0 && v[i] < v[i - 1]) return false;
      }
  return true;
}

double LotteryBelief::norm() const {
  double sq = 0.0;
  for (const auto& [key, row] : pi_)
    for (const auto& [j, v] : row)
      for (double p : v) sq += p * p;
  return std::sqrt(sq);
}

double LotteryBelief::distance(const LotteryBelief& other) const {
  double sq = 0.0;
  for (const auto& [key, row] : pi_)
    for (const auto& [j, v] : row) {
      const auto& w = other.pi_.at(key).at(j);
      for (std::size_t i = 0; i < v.size(); ++i) sq += (v[i] - w[i]) * (v[i] - w[i]);
    }
  return std::sqrt(sq);
}

LotteryBelief LotteryBelief::blended(const LotteryBelief& other, double weight) const {
  LotteryBelief out = *this;
  for (auto& [key, row] : out.pi_)
    for (auto& [j, v] : row) {
      const auto& w = other.pi_.at(key).at(j);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = (1.0 - weight) * v[i] + weight * w[i];
    }
  return out;
}

LotteryBelief belief_from_distribution(const CutoffDistribution& dist, const ScoreGrid& grid) {
  LotteryBelief belief(grid);
  for (const auto& [key, draws] : dist.cells) {
    const double reps = static_cast<double>(draws.replications());
    for (std::size_t col = 0; col < draws.centers.size(); ++col) {
      std::vector<double> by_score(static_cast<std::size_t>(grid.size()), 0.0);
      for (const auto& row : draws.draws)
        for (int s = grid.lo; s <= grid.hi; ++s)
          if (row[col].admits(s)) by_score[static_cast<std::size_t>(s - grid.lo)] += 1.0;
      for (double& p : by_score) p /= reps;
      belief.set(key, draws.centers[col], std::move(by_score));
    }
  }
  return belief;
}

double Lottery::total() const {
  double t = waitlist;
  for (const auto& [j, p] : assign) t += p;
  return t;
}

double Lottery::expected_value(const std::map<CenterId, double>& v) const {
  double e = 0.0;
  for (const auto& [j, p] : assign) e += p * v.at(j);
  return e;
}

Lottery lottery_from_rol(const std::map<CenterId, double>& pi, const Rol& rol) {
  Lottery out;
  for (const auto& [j, p] : pi) out.assign[j] = 0.0;  // unlisted centers
  double reach = 1.0;
  for (CenterId j : rol) {
    auto it = pi.find(j);
    if (it == pi.end()) throw LookupError("no admission probability for center " + std::to_string(j));
    out.assign[j] = reach * it->second;
    reach *= 1.0 - it->second;
  }
  out.waitlist = reach;
  return out;
}

Lottery lottery_from_rol(const LotteryBelief& belief, CellKey key, const Rol& rol, int s) {
  std::map<CenterId, double> pi;
  for (CenterId j : rol) pi[j] = belief.pi(key, j, s);
  return lottery_from_rol(pi, rol);
}

double delta_tilde(int entry_age, double delta) {
  const int remaining = kMaxAge - entry_age;
  return delta * (1.0 - std::pow(delta, remaining)) / (1.0 - delta);
}

BlendedLottery blend_two_period(const Lottery& first, const Lottery& second, int entry_age,
                                double delta) {
  BlendedLottery out;
  out.delta_tilde = delta_tilde(entry_age, delta);
  out.ptilde = out.delta_tilde / (1.0 + out.delta_tilde) * first.waitlist;
  const double w = out.ptilde;
  for (const auto& [j, p] : first.assign) out.ltilde.assign[j] += (1.0 - w) * p;
  for (const auto& [j, p] : second.assign) out.ltilde.assign[j] += w * p;
  out.ltilde.waitlist = (1.0 - w) * first.waitlist + w * second.waitlist;
  return out;
}

}  // namespace waitlist
