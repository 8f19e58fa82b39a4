#include "waitlist/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace waitlist {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

int to_int(const CsvTable& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw IoError(t.source + ": row " + std::to_string(row + 1) + ", column " + t.columns[col] +
                  ": expected an integer, got '" + s + "'");
  return v;
}

std::string join_rol(const Rol& r) { return r.to_string('|'); }

std::string opt_center(const std::optional<Placement>& p) {
  return p && p->center ? std::to_string(*p->center) : "";
}

const char* second_name(SecondRound s) {
  switch (s) {
    case SecondRound::NotNeeded: return "assigned";
    case SecondRound::Ended: return "ended";
    case SecondRound::Unobserved: return "unobserved";
    case SecondRound::Observed: return "observed";
  }
  return "?";
}

SecondRound parse_second(const std::string& s, const std::string& where) {
  if (s == "assigned") return SecondRound::NotNeeded;
  if (s == "ended") return SecondRound::Ended;
  if (s == "unobserved") return SecondRound::Unobserved;
  if (s == "observed") return SecondRound::Observed;
  throw IoError(where + ": unknown second_round '" + s + "'");
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

json header_json(const OutputHeader& h) {
  return {{"command", h.command}, {"config_hash", h.config_hash}, {"seed", h.seed}};
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::string OutputHeader::lines() const {
  return "# command=" + command + "\n# config_hash=" + config_hash + "\n# seed=" + std::to_string(seed) +
         "\n";
}

std::string format_double(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t k = 0; k < columns.size(); ++k)
    if (columns[k] == name) return k;
  throw IoError(source + ": missing column '" + std::string(name) + "'");
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  CsvTable t;
  t.source = path.filename().string();
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header) {
      if (line.empty() || line[0] == '#') continue;
      t.columns = split(line, ',');
      header = true;
      continue;
    }
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() != t.columns.size())
      throw IoError(t.source + ": row " + std::to_string(t.rows.size() + 1) + " has " +
                    std::to_string(fields.size()) + " fields, expected " +
                    std::to_string(t.columns.size()));
    t.rows.push_back(std::move(fields));
  }
  if (!header) throw IoError(t.source + ": missing header row");
  return t;
}

void write_csv(const fs::path& path, const OutputHeader& header,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows) {
  auto out = open_out(path);
  out << header.lines();
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) out << (k ? "," : "") << fields[k];
    out << '\n';
  };
  emit(columns);
  for (const auto& r : rows) emit(r);
  if (!out) throw IoError("failed writing " + path.string());
}

void write_text(const fs::path& path, const OutputHeader& header, const std::string& body) {
  auto out = open_out(path);
  out << header.lines() << body;
  if (!out) throw IoError("failed writing " + path.string());
}

Rol parse_rol(std::string_view text) {
  if (text.empty()) return {};
  std::vector<CenterId> ids;
  for (const auto& part : split(text, '|')) {
    int v = 0;
    const auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || p != part.data() + part.size() || part.empty())
      throw IoError("bad list '" + std::string(text) + "'");
    ids.push_back(v);
  }
  try {
    return Rol(std::span<const CenterId>(ids));
  } catch (const InvalidInput& e) {
    throw IoError("bad list '" + std::string(text) + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------

void write_panel(const fs::path& dir, const Panel& panel, const OutputHeader& header) {
  std::map<ApplicantId, int> area;
  for (const auto& h : panel.histories) area[h.id] = h.area;

  std::vector<std::string> cols{"id", "year", "age", "area", "score", "tiebreak"};
  for (int k = 1; k <= kMaxRolLength; ++k) cols.push_back("rol_" + std::to_string(k));
  std::vector<std::vector<std::string>> rows;
  for (const auto& [key, cell] : panel.cells)
    for (const auto& a : cell.applicants) {
      std::vector<std::string> r{std::to_string(a.id),    std::to_string(key.year),
                                 std::to_string(key.age), std::to_string(area.at(a.id)),
                                 std::to_string(a.score), std::to_string(a.tiebreak)};
      for (std::size_t k = 0; k < kMaxRolLength; ++k)
        r.push_back(k < a.rol.size() ? std::to_string(a.rol[k]) : "");
      rows.push_back(std::move(r));
    }
  write_csv(dir / "applicants.csv", header, cols, rows);

  cols = {"id", "year", "area"};
  for (int a = 0; a <= kMaxAge; ++a) cols.push_back("capacity_age" + std::to_string(a));
  rows.clear();
  for (int j = 0; j < panel.market.num_centers(); ++j)
    for (int y = 0; y < panel.market.years; ++y) {
      std::vector<std::string> r{std::to_string(j), std::to_string(y),
                                 std::to_string(panel.market.center_areas[static_cast<std::size_t>(j)])};
      for (int a = 0; a <= kMaxAge; ++a) {
        auto it = panel.cells.find({y, a});
        r.push_back(std::to_string(it == panel.cells.end() ? 0 : it->second.capacities.at(j)));
      }
      rows.push_back(std::move(r));
    }
  write_csv(dir / "centers.csv", header, cols, rows);

  cols = {"id", "entry_year", "entry_age", "area", "s1", "r1", "center1", "rank1",
          "second_round", "s2", "r2", "center2", "rank2"};
  rows.clear();
  for (const auto& h : panel.histories) {
    const bool observed = h.second == SecondRound::Observed;
    rows.push_back({std::to_string(h.id), std::to_string(h.entry_year), std::to_string(h.entry_age),
                    std::to_string(h.area), std::to_string(h.s1), join_rol(h.r1),
                    h.outcome1.center ? std::to_string(*h.outcome1.center) : "",
                    std::to_string(h.outcome1.rank), second_name(h.second),
                    h.s2 ? std::to_string(*h.s2) : "", observed ? join_rol(*h.r2) : "",
                    opt_center(h.outcome2), h.outcome2 ? std::to_string(h.outcome2->rank) : ""});
  }
  write_csv(dir / "histories.csv", header, cols, rows);
}

std::vector<MarketCell> read_cells(const fs::path& dir) {
  std::map<CellKey, MarketCell> cells;
  const auto centers = read_csv(dir / "centers.csv");
  const auto cid = centers.column("id"), cyear = centers.column("year");
  std::vector<std::size_t> cap;
  for (int a = 0; a <= kMaxAge; ++a) cap.push_back(centers.column("capacity_age" + std::to_string(a)));
  for (std::size_t r = 0; r < centers.rows.size(); ++r) {
    const int year = to_int(centers, r, cyear);
    const int j = to_int(centers, r, cid);
    for (int a = 0; a <= kMaxAge; ++a) {
      auto& cell = cells[{year, a}];
      cell.year = year;
      cell.age = a;
      const int c = to_int(centers, r, cap[static_cast<std::size_t>(a)]);
      if (c < 0)
        throw IoError(centers.source + ": row " + std::to_string(r + 1) + ": negative capacity");
      if (!cell.capacities.emplace(j, c).second)
        throw IoError(centers.source + ": center " + std::to_string(j) + " repeated in year " +
                      std::to_string(year));
    }
  }

  const auto apps = read_csv(dir / "applicants.csv");
  const auto aid = apps.column("id"), ayear = apps.column("year"), aage = apps.column("age"),
             ascore = apps.column("score"), atie = apps.column("tiebreak");
  std::vector<std::size_t> rol;
  for (int k = 1; k <= kMaxRolLength; ++k) rol.push_back(apps.column("rol_" + std::to_string(k)));
  for (std::size_t r = 0; r < apps.rows.size(); ++r) {
    const CellKey key{to_int(apps, r, ayear), to_int(apps, r, aage)};
    auto it = cells.find(key);
    if (it == cells.end())
      throw IoError(apps.source + ": row " + std::to_string(r + 1) + ": no centers.csv entry for year " +
                    std::to_string(key.year));
    std::string joined;
    for (std::size_t k = 0; k < rol.size(); ++k) {
      const auto& f = apps.rows[r][rol[k]];
      if (f.empty()) continue;
      if (!joined.empty()) joined += '|';
      joined += f;
    }
    CellApplicant a;
    a.id = to_int(apps, r, aid);
    a.score = to_int(apps, r, ascore);
    a.tiebreak = to_int(apps, r, atie);
    try {
      a.rol = parse_rol(joined);
    } catch (const IoError& e) {
      throw IoError(apps.source + ": row " + std::to_string(r + 1) + ": " + e.what());
    }
    it->second.applicants.push_back(a);
  }

  std::vector<MarketCell> out;
  for (auto& [key, cell] : cells) out.push_back(std::move(cell));
  return out;
}

Panel read_panel(const fs::path& dir, const MarketStructure& market, int bonus) {
  Panel panel;
  panel.market = market;
  panel.bonus = bonus;
  for (auto& cell : read_cells(dir)) {
    const CellKey key{cell.year, cell.age};
    if (static_cast<int>(cell.capacities.size()) != market.num_centers())
      throw IoError("centers.csv: year " + std::to_string(cell.year) + " lists " +
                    std::to_string(cell.capacities.size()) + " centers, the market has " +
                    std::to_string(market.num_centers()));
    panel.results.emplace(key, run_serial_dictatorship(cell));
    panel.cells.emplace(key, std::move(cell));
  }

  const auto t = read_csv(dir / "histories.csv");
  auto col = [&](const char* name) { return t.column(name); };
  const auto id = col("id"), ey = col("entry_year"), ea = col("entry_age"), area = col("area"),
             s1 = col("s1"), r1 = col("r1"), c1 = col("center1"), k1 = col("rank1"),
             sr = col("second_round"), s2 = col("s2"), r2 = col("r2"), c2 = col("center2"),
             k2 = col("rank2");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = t.source + ": row " + std::to_string(r + 1);
    ApplicantHistory h;
    h.id = to_int(t, r, id);
    h.entry_year = to_int(t, r, ey);
    h.entry_age = to_int(t, r, ea);
    h.area = to_int(t, r, area);
    h.s1 = to_int(t, r, s1);
    h.r1 = parse_rol(row[r1]);
    if (!row[c1].empty()) h.outcome1.center = to_int(t, r, c1);
    h.outcome1.rank = to_int(t, r, k1);
    h.second = parse_second(row[sr], where);
    if (!row[s2].empty()) h.s2 = to_int(t, r, s2);
    if (h.second == SecondRound::Observed) {
      h.r2 = parse_rol(row[r2]);
      Placement p;
      if (!row[c2].empty()) p.center = to_int(t, r, c2);
      if (!row[k2].empty()) p.rank = to_int(t, r, k2);
      h.outcome2 = p;
    }

    // The recorded placements must be the ones the mechanism produces.
    auto check = [&](CellKey key, const Placement& recorded, const char* round) {
      auto it = panel.results.find(key);
      if (it == panel.results.end())
        throw IoError(where + ": no " + round + " round in year " + std::to_string(key.year));
      auto a = it->second.assignment.find(h.id);
      if (a == it->second.assignment.end())
        throw IoError(where + ": applicant " + std::to_string(h.id) + " missing from applicants.csv");
      if (a->second != recorded)
        throw IoError(where + ": recorded " + round + "-round placement differs from the mechanism");
    };
    check({h.entry_year, h.entry_age}, h.outcome1, "first");
    if (h.second == SecondRound::Observed && !h.r2->empty())
      check({h.entry_year + 1, h.entry_age + 1}, *h.outcome2, "second");
    panel.histories.push_back(std::move(h));
  }
  return panel;
}

// ---------------------------------------------------------------------------

void write_belief(const fs::path& path, const LotteryBelief& belief, const OutputHeader& header) {
  json cells = json::array();
  for (const auto& [key, by_center] : belief.table())
    for (const auto& [j, pi] : by_center)
      cells.push_back({{"year", key.year}, {"age", key.age}, {"center", j}, {"pi", pi}});
  json doc = {{"header", header_json(header)},
              {"grid", {{"lo", belief.grid().lo}, {"hi", belief.grid().hi}}},
              {"cells", cells}};
  auto out = open_out(path);
  out << doc.dump(1) << '\n';
}

LotteryBelief read_belief(const fs::path& path) {
  const json doc = read_json(path);
  try {
    LotteryBelief belief(ScoreGrid{doc.at("grid").at("lo").get<int>(), doc.at("grid").at("hi").get<int>()});
    for (const auto& c : doc.at("cells"))
      belief.set({c.at("year").get<int>(), c.at("age").get<int>()}, c.at("center").get<int>(),
                 c.at("pi").get<std::vector<double>>());
    return belief;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  } catch (const InvalidInput& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_theta(const fs::path& path, const Theta& theta, const OutputHeader& header,
                 const std::string& extra_json) {
  json doc = {{"header", header_json(header)},
              {"alpha", std::vector<double>(theta.alpha.data(), theta.alpha.data() + theta.alpha.size())},
              {"beta", std::vector<double>(theta.beta.data(), theta.beta.data() + theta.beta.size())},
              {"gamma", theta.gamma},
              {"sigma", matrix_json(theta.sigma)},
              {"sigma_factor", matrix_json(sigma_factor(theta.sigma))},
              {"mu0", theta.mu0},
              {"sigma0sq", theta.sigma0sq},
              {"delta", theta.delta}};
  const json extra = json::parse(extra_json);
  for (const auto& [k, v] : extra.items()) doc[k] = v;
  auto out = open_out(path);
  out << doc.dump(1) << '\n';
}

Theta read_theta(const fs::path& path) {
  const json doc = read_json(path);
  try {
    Theta t;
    const auto alpha = doc.at("alpha").get<std::vector<double>>();
    const auto beta = doc.at("beta").get<std::vector<double>>();
    t.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
    t.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    t.gamma = doc.at("gamma").get<double>();
    const auto rows = doc.at("sigma").get<std::vector<std::vector<double>>>();
    t.sigma.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.size()) throw IoError(path.string() + ": sigma is not square");
      for (std::size_t c = 0; c < rows.size(); ++c)
        t.sigma(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    t.mu0 = doc.at("mu0").get<std::array<double, kNumAges>>();
    t.sigma0sq = doc.at("sigma0sq").get<std::array<double, kNumAges>>();
    t.delta = doc.at("delta").get<double>();
    t.validate();
    return t;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace waitlist
