#include "waitlist/matching.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

namespace waitlist {

int ScoreGrid::index(int s) const {
  if (!contains(s))
    throw LookupError("score " + std::to_string(s) + " outside grid [" + std::to_string(lo) +
                      ", " + std::to_string(hi) + "]");
  return s - lo;
}

Rol::Rol(std::initializer_list<CenterId> entries)
    : Rol(std::span<const CenterId>(entries.begin(), entries.size())) {}

Rol::Rol(std::span<const CenterId> entries) {
  if (entries.size() > static_cast<std::size_t>(kMaxRolLength))
    throw InvalidInput("ROL longer than " + std::to_string(kMaxRolLength) + " entries");
  for (CenterId j : entries) {
    if (contains(j)) throw InvalidInput("duplicate center " + std::to_string(j) + " in ROL");
    push_back_unchecked(j);
  }
}

bool Rol::contains(CenterId j) const { return rank_of(j) >= 0; }

int Rol::rank_of(CenterId j) const {
  for (std::size_t k = 0; k < n_; ++k)
    if (e_[k] == j) return static_cast<int>(k);
  return -1;
}

Rol Rol::truncated(std::size_t k) const {
  Rol out;
  for (std::size_t i = 0; i < std::min(k, size()); ++i) out.push_back_unchecked(e_[i]);
  return out;
}

void Rol::erase_at(std::size_t k) {
  for (std::size_t i = k; i + 1 < n_; ++i) e_[i] = e_[i + 1];
  --n_;
}

std::string Rol::to_string(char sep) const {
  std::string out;
  for (std::size_t k = 0; k < n_; ++k) {
    if (k) out += sep;
    out += std::to_string(e_[k]);
  }
  return out;
}

bool operator==(const Rol& a, const Rol& b) {
  return a.n_ == b.n_ && std::equal(a.begin(), a.end(), b.begin());
}

int Cutoff::score() const {
  if (kind_ != Kind::Score) throw LookupError("cutoff has no score (" + to_string() + ")");
  return score_;
}

int Cutoff::encoded() const {
  switch (kind_) {
    case Kind::Score: return score_;
    case Kind::Open: return kOpenSentinel;
    case Kind::Closed: return kClosedSentinel;
  }
  return kOpenSentinel;
}

std::string Cutoff::to_string() const {
  switch (kind_) {
    case Kind::Score: return std::to_string(score_);
    case Kind::Open: return "open";
    case Kind::Closed: return "closed";
  }
  return "open";
}

namespace detail {

std::vector<Cutoff> serial_dictatorship(std::span<const DenseApplicant> applicants,
                                        std::span<const int> capacities,
                                        std::vector<int>* assigned,
                                        std::vector<int>* scratch_order) {
  const std::size_t n = applicants.size();
  const std::size_t num_centers = capacities.size();

  std::vector<int> local_order;
  std::vector<int>& order = scratch_order ? *scratch_order : local_order;
  order.resize(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& x = applicants[a];
    const auto& y = applicants[b];
    if (x.score != y.score) return x.score > y.score;
    return x.tiebreak < y.tiebreak;
  });

  std::vector<int> vacant(capacities.begin(), capacities.end());
  std::vector<int> lowest(num_centers, 0);
  if (assigned) assigned->assign(n, -1);

  for (int idx : order) {
    const auto& app = applicants[idx];
    for (CenterId j : app.rol) {
      if (vacant[j] > 0) {
        --vacant[j];
        lowest[j] = app.score;  // processed in descending score order
        if (assigned) (*assigned)[idx] = j;
        break;
      }
    }
  }

  std::vector<Cutoff> cutoffs;
  cutoffs.reserve(num_centers);
  for (std::size_t j = 0; j < num_centers; ++j) {
    if (capacities[j] <= 0)
      cutoffs.push_back(Cutoff::closed());
    else if (vacant[j] > 0)
      cutoffs.push_back(Cutoff::open());
    else
      cutoffs.push_back(Cutoff::at(lowest[j]));
  }
  return cutoffs;
}

}  // namespace detail

AssignmentResult run_serial_dictatorship(const MarketCell& cell) {
  std::vector<CenterId> ids;
  std::vector<int> caps;
  std::map<CenterId, int> dense;
  for (const auto& [j, c] : cell.capacities) {
    if (c < 0) throw InvalidInput("negative capacity for center " + std::to_string(j));
    dense.emplace(j, static_cast<int>(ids.size()));
    ids.push_back(j);
    caps.push_back(c);
  }

  std::set<std::pair<int, int>> keys;
  std::set<ApplicantId> seen;
  std::vector<detail::DenseApplicant> apps;
  apps.reserve(cell.applicants.size());
  for (const auto& a : cell.applicants) {
    if (!keys.emplace(a.score, a.tiebreak).second)
      throw InvalidInput("duplicate (score, tie-break) pair (" + std::to_string(a.score) + ", " +
                         std::to_string(a.tiebreak) + ")");
    if (!seen.insert(a.id).second)
      throw InvalidInput("duplicate applicant id " + std::to_string(a.id));
    detail::DenseApplicant d{a.score, a.tiebreak, {}};
    for (CenterId j : a.rol) {
      auto it = dense.find(j);
      if (it == dense.end())
        throw InvalidInput("ROL of applicant " + std::to_string(a.id) +
                           " references unknown center " + std::to_string(j));
      d.rol.push_back_unchecked(it->second);
    }
    apps.push_back(d);
  }

  std::vector<int> assigned;
  const auto cutoffs = detail::serial_dictatorship(apps, caps, &assigned);

  AssignmentResult out;
  std::vector<int> used(ids.size(), 0);
  for (std::size_t i = 0; i < apps.size(); ++i) {
    Placement p;
    if (assigned[i] >= 0) {
      p.center = ids[assigned[i]];
      p.rank = apps[i].rol.rank_of(assigned[i]);
      ++used[assigned[i]];
    }
    out.assignment.emplace(cell.applicants[i].id, p);
  }
  // Last admitted = lowest (score, -tiebreak) among those placed at j.
  std::map<CenterId, std::pair<int, int>> worst;
  for (std::size_t i = 0; i < apps.size(); ++i) {
    if (assigned[i] < 0) continue;
    const CenterId j = ids[assigned[i]];
    const std::pair<int, int> key{apps[i].score, -apps[i].tiebreak};
    auto it = worst.find(j);
    if (it == worst.end() || key < it->second) worst[j] = key;
  }
  for (const auto& [j, key] : worst) out.last_admitted_tiebreak[j] = -key.second;

  for (std::size_t j = 0; j < ids.size(); ++j) {
    out.cutoffs.emplace(ids[j], cutoffs[j]);
    out.residual.emplace(ids[j], caps[j] - used[j]);
  }
  return out;
}

BonusResult apply_waitlist_bonus(int score, int bonus, const ScoreGrid& grid) {
  const int raw = score + bonus;
  const int s = grid.clamp(raw);
  return {s, s != raw};
}

TransitionMatrix cutoff_transition_matrix(const std::map<CenterId, Cutoff>& first,
                                          const std::map<CenterId, Cutoff>& second) {
  std::map<Cutoff, std::map<Cutoff, double>> counts;
  std::map<Cutoff, double> totals;
  for (const auto& [j, c1] : first) {
    auto it = second.find(j);
    if (it == second.end()) continue;
    counts[c1][it->second] += 1.0;
    totals[c1] += 1.0;
  }
  if (counts.empty()) throw InvalidInput("cutoff maps share no centers");
  for (auto& [row, cols] : counts)
    for (auto& [col, v] : cols) v /= totals[row];
  return counts;
}

}  // namespace waitlist
