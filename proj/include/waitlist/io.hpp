#pragma once

// File formats: panel CSVs, belief and parameter JSON, and the header block
// every output file starts with.
//
// applicants.csv  one row per application:
//   id,year,age,area,score,tiebreak,rol_1,...,rol_5   (empty rol_k = unlisted)
// centers.csv     vacancies offered per center and year:
//   id,year,area,capacity_age0,...,capacity_age5
// histories.csv   one row per applicant:
//   id,entry_year,entry_age,area,s1,r1,center1,rank1,second_round,s2,r2,center2,rank2
//   lists are '|'-separated center ids; second_round is one of
//   assigned, ended, unobserved, observed.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "waitlist/lottery.hpp"
#include "waitlist/market.hpp"
#include "waitlist/policy.hpp"

namespace waitlist {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OutputHeader {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;

  /// "# key=value" lines, newline-terminated.
  std::string lines() const;
};

/// Shortest representation that reads back to the same double.
std::string format_double(double x);

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  /// Index of a column; throws IoError naming the file when missing.
  std::size_t column(std::string_view name) const;
  std::string source;
};

/// Skips leading '#' lines; the first remaining line is the header row.
CsvTable read_csv(const std::filesystem::path& path);

void write_csv(const std::filesystem::path& path, const OutputHeader& header,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows);

void write_text(const std::filesystem::path& path, const OutputHeader& header,
                const std::string& body);

Rol parse_rol(std::string_view text);

/// applicants.csv, centers.csv and histories.csv.
void write_panel(const std::filesystem::path& dir, const Panel& panel, const OutputHeader& header);

/// Admission rounds from applicants.csv and centers.csv.
std::vector<MarketCell> read_cells(const std::filesystem::path& dir);

/// Rebuilds a panel from the three files. The market structure (class sizes,
/// initial enrolment) comes from the caller; cell results are recomputed and
/// checked against the recorded placements.
Panel read_panel(const std::filesystem::path& dir, const MarketStructure& market, int bonus);

void write_belief(const std::filesystem::path& path, const LotteryBelief& belief,
                  const OutputHeader& header);
LotteryBelief read_belief(const std::filesystem::path& path);

void write_theta(const std::filesystem::path& path, const Theta& theta, const OutputHeader& header,
                 const std::string& extra_json = "{}");
Theta read_theta(const std::filesystem::path& path);

}  // namespace waitlist
