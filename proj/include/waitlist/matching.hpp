#pragma once

// Truncated serial dictatorship with priority scores, capacities, a
// deterministic tie-break key and the waitlist priority bonus.

#include <array>
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace waitlist {

using CenterId = int;
using ApplicantId = int;

inline constexpr int kMaxRolLength = 5;
inline constexpr int kMaxAge = 5;
inline constexpr int kNumAges = kMaxAge + 1;

/// Report-time cutoff codes: a center with no vacancy reports 35, a center
/// that never filled reports 11.
inline constexpr int kClosedSentinel = 35;
inline constexpr int kOpenSentinel = 11;

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct ScoreGrid {
  int lo = 20;
  int hi = 35;

  bool contains(int s) const { return s >= lo && s <= hi; }
  int size() const { return hi - lo + 1; }
  int index(int s) const;
  int clamp(int s) const { return s < lo ? lo : (s > hi ? hi : s); }
  friend bool operator==(const ScoreGrid&, const ScoreGrid&) = default;
};

/// Ranked list of at most five distinct centers. Empty means "do not apply".
class Rol {
 public:
  Rol() = default;
  Rol(std::initializer_list<CenterId> entries);
  explicit Rol(std::span<const CenterId> entries);

  std::size_t size() const { return n_; }
  bool empty() const { return n_ == 0; }
  CenterId operator[](std::size_t k) const { return e_[k]; }
  const CenterId* begin() const { return e_.data(); }
  const CenterId* end() const { return e_.data() + n_; }

  bool contains(CenterId j) const;
  /// Position of j in the list, or -1.
  int rank_of(CenterId j) const;
  Rol truncated(std::size_t k) const;

  /// Unchecked append; callers guarantee distinctness and length.
  void push_back_unchecked(CenterId j) { e_[n_++] = j; }
  void erase_at(std::size_t k);

  std::string to_string(char sep = '|') const;

  friend bool operator==(const Rol& a, const Rol& b);

 private:
  std::array<CenterId, kMaxRolLength> e_{};
  std::uint8_t n_ = 0;
};

struct CellApplicant {
  ApplicantId id = 0;
  int score = 0;
  int tiebreak = 0;  // lower is earlier among equal scores
  Rol rol;
};

/// One (year, age) admission round.
struct MarketCell {
  int year = 0;
  int age = 0;
  std::vector<CellApplicant> applicants;
  std::map<CenterId, int> capacities;
};

class Cutoff {
 public:
  enum class Kind : std::uint8_t { Score, Open, Closed };

  static Cutoff at(int score) { return Cutoff(Kind::Score, score); }
  static Cutoff open() { return Cutoff(Kind::Open, 0); }
  static Cutoff closed() { return Cutoff(Kind::Closed, 0); }

  Kind kind() const { return kind_; }
  bool is_score() const { return kind_ == Kind::Score; }
  int score() const;

  /// Whether a score s clears this cutoff (Open admits all, Closed none).
  bool admits(int s) const {
    return kind_ == Kind::Open || (kind_ == Kind::Score && s >= score_);
  }
  int encoded() const;
  std::string to_string() const;

  auto operator<=>(const Cutoff&) const = default;

 private:
  Cutoff(Kind k, int s) : kind_(k), score_(s) {}
  Kind kind_ = Kind::Open;
  int score_ = 0;
};

struct Placement {
  std::optional<CenterId> center;
  int rank = -1;  // position of the center in the ROL, -1 when waitlisted

  bool waitlisted() const { return !center.has_value(); }
  static Placement waitlist() { return {}; }
  friend bool operator==(const Placement&, const Placement&) = default;
};

struct AssignmentResult {
  std::map<ApplicantId, Placement> assignment;
  std::map<CenterId, Cutoff> cutoffs;
  std::map<CenterId, int> residual;
  /// Tie-break key of the last applicant admitted to each filled center.
  std::map<CenterId, int> last_admitted_tiebreak;

  friend bool operator==(const AssignmentResult&, const AssignmentResult&) = default;
};

AssignmentResult run_serial_dictatorship(const MarketCell& cell);

struct BonusResult {
  int score = 0;
  bool clamped = false;
};

BonusResult apply_waitlist_bonus(int score, int bonus, const ScoreGrid& grid = {});

/// Rows are period-1 cutoffs, columns period-2 cutoffs, over the centers
/// present in both maps; each row holds conditional frequencies.
using TransitionMatrix = std::map<Cutoff, std::map<Cutoff, double>>;

TransitionMatrix cutoff_transition_matrix(const std::map<CenterId, Cutoff>& first,
                                          const std::map<CenterId, Cutoff>& second);

namespace detail {

/// Mechanism input with centers already mapped to dense indices 0..J-1.
struct DenseApplicant {
  int score = 0;
  int tiebreak = 0;
  Rol rol;
};

/// Runs the mechanism on dense input. Writes the assigned dense center (or
/// -1) per applicant into `assigned` when non-null and returns the cutoffs.
/// Assumes (score, tiebreak) pairs are unique.
std::vector<Cutoff> serial_dictatorship(std::span<const DenseApplicant> applicants,
                                        std::span<const int> capacities,
                                        std::vector<int>* assigned = nullptr,
                                        std::vector<int>* scratch_order = nullptr);

}  // namespace detail

}  // namespace waitlist
