#include "waitlist/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "waitlist/rng.hpp"

namespace waitlist {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

std::vector<double> as_doubles(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k)
    out.push_back(as_double(j[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

std::vector<int> as_ints(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  std::vector<int> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(as_int(j[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

template <class T>
std::array<T, kNumAges> by_age(const std::vector<T>& v, const std::string& path) {
  if (v.size() != kNumAges) fail(path, "expected " + std::to_string(kNumAges) + " entries, one per age");
  std::array<T, kNumAges> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

Eigen::VectorXd as_vector(const json& j, const std::string& path, std::size_t size) {
  const auto v = as_doubles(j, path);
  if (v.size() != size) fail(path, "expected " + std::to_string(size) + " entries");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// An object whose keys are consumed one by one; leftovers are errors.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string at(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  const json& required(const char* key) {
    const json* v = find(key);
    if (!v) fail(at(key), "required field is missing");
    return *v;
  }
  Section child(const char* key) { return Section(required(key), at(key)); }

  int get(const char* key, int fallback) {
    const json* v = find(key);
    return v ? as_int(*v, at(key)) : fallback;
  }
  double get(const char* key, double fallback) {
    const json* v = find(key);
    return v ? as_double(*v, at(key)) : fallback;
  }
  bool get(const char* key, bool fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(at(key), "expected true or false");
    return v->get<bool>();
  }
  std::string get(const char* key, const std::string& fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) fail(at(key), "expected a string");
    return v->get<std::string>();
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail(at(k.c_str()), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Theta parse_theta(Section s, const MarketConfig& m) {
  const auto J = m.centers.size();
  Theta t;
  t.alpha = as_vector(s.required("alpha"), s.at("alpha"), J);
  t.beta = s.has("beta") ? as_vector(s.required("beta"), s.at("beta"), J) : Eigen::VectorXd::Zero(
                                                                              static_cast<Eigen::Index>(J));
  t.gamma = s.get("gamma", -1.0);
  t.delta = s.get("delta", 0.95);
  if (!(t.delta > 0.0 && t.delta < 1.0)) fail(s.at("delta"), "must lie in (0, 1)");

  std::vector<int> areas;
  for (const auto& c : m.centers) areas.push_back(c.area);
  Eigen::MatrixXd area_cov = Eigen::MatrixXd::Zero(m.num_areas, m.num_areas);
  if (const json* cov = s.find("area_cov")) {
    const std::string path = s.at("area_cov");
    if (!cov->is_array() || static_cast<int>(cov->size()) != m.num_areas)
      fail(path, "expected " + std::to_string(m.num_areas) + " rows, one per area");
    for (int r = 0; r < m.num_areas; ++r) {
      const auto row = as_doubles((*cov)[static_cast<std::size_t>(r)], path + "[" + std::to_string(r) + "]");
      if (static_cast<int>(row.size()) != m.num_areas)
        fail(path + "[" + std::to_string(r) + "]", "expected " + std::to_string(m.num_areas) + " entries");
      for (int c = 0; c < m.num_areas; ++c) area_cov(r, c) = row[static_cast<std::size_t>(c)];
    }
  }
  t.sigma = area_block_sigma(area_cov, areas);
  if (const json* v = s.find("mu0")) t.mu0 = by_age(as_doubles(*v, s.at("mu0")), s.at("mu0"));
  if (const json* v = s.find("sigma0sq")) t.sigma0sq = by_age(as_doubles(*v, s.at("sigma0sq")), s.at("sigma0sq"));
  s.finish();
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    fail("theta", e.what());
  }
  return t;
}

MarketConfig parse_market(Section s) {
  MarketConfig m;
  m.years = s.get("years", m.years);
  if (const json* g = s.find("grid")) {
    const auto lohi = as_ints(*g, s.at("grid"));
    if (lohi.size() != 2 || lohi[0] > lohi[1]) fail(s.at("grid"), "expected [lo, hi] with lo <= hi");
    m.grid = {lohi[0], lohi[1]};
  }
  m.num_areas = s.get("num_areas", m.num_areas);
  if (m.num_areas < 1) fail(s.at("num_areas"), "must be at least 1");
  const json& centers = s.required("centers");
  if (!centers.is_array()) fail(s.at("centers"), "expected an array");
  for (std::size_t k = 0; k < centers.size(); ++k) {
    Section c(centers[k], s.at("centers") + "[" + std::to_string(k) + "]");
    CenterSpec spec;
    spec.area = as_int(c.required("area"), c.at("area"));
    if (spec.area < 0 || spec.area >= m.num_areas)
      fail(c.at("area"), "must lie in 0.." + std::to_string(m.num_areas - 1));
    spec.seats = by_age(as_ints(c.required("seats"), c.at("seats")), c.at("seats"));
    c.finish();
    m.centers.push_back(spec);
  }
  const json& entrants = s.required("entrants");
  if (!entrants.is_array()) fail(s.at("entrants"), "expected an array");
  for (std::size_t y = 0; y < entrants.size(); ++y) {
    const std::string path = s.at("entrants") + "[" + std::to_string(y) + "]";
    m.entrants.push_back(by_age(as_ints(entrants[y], path), path));
  }
  if (const json* v = s.find("score_probs")) m.score_probs = as_doubles(*v, s.at("score_probs"));
  if (const json* v = s.find("area_probs")) m.area_probs = as_doubles(*v, s.at("area_probs"));
  m.bonus = s.get("bonus", m.bonus);
  m.initial_occupancy = s.get("initial_occupancy", m.initial_occupancy);
  if (s.has("belief")) {
    Section b = s.child("belief");
    m.belief_bootstrap = b.get("bootstrap", m.belief_bootstrap);
    m.belief_max_iters = b.get("max_iters", m.belief_max_iters);
    m.belief_tolerance = b.get("tolerance", m.belief_tolerance);
    m.belief_damping = b.get("damping", m.belief_damping);
    b.finish();
  }
  s.finish();
  return m;
}

void parse_fit(Section s, RunConfig& rc) {
  auto& f = rc.fit;
  f.msm.draws = s.get("draws", f.msm.draws);
  f.msm.budget = s.get("budget", f.msm.budget);
  f.msm.initial_step = s.get("initial_step", f.msm.initial_step);
  f.msm.tolerance = s.get("tolerance", f.msm.tolerance);
  if (const json* v = s.find("cohort_ages")) {
    f.msm.cohort_ages = as_ints(*v, s.at("cohort_ages"));
    for (int a : f.msm.cohort_ages)
      if (a < 0 || a > kMaxAge) fail(s.at("cohort_ages"), "ages must lie in 0..5");
  }
  if (s.has("blocks")) {
    Section b = s.child("blocks");
    f.msm.blocks.alpha = b.get("alpha", f.msm.blocks.alpha);
    f.msm.blocks.beta = b.get("beta", f.msm.blocks.beta);
    f.msm.blocks.sigma = b.get("sigma", f.msm.blocks.sigma);
    f.msm.blocks.outside = b.get("outside", f.msm.blocks.outside);
    b.finish();
  }
  if (const json* v = s.find("start_alpha")) {
    if (!rc.market) fail(s.at("start_alpha"), "needs the market section");
    f.start_alpha = as_vector(*v, s.at("start_alpha"), rc.market->centers.size());
  }
  f.matched_draws = s.get("matched_draws", f.matched_draws);
  if (f.msm.draws < 1) fail(s.at("draws"), "must be at least 1");
  if (f.msm.budget < 0) fail(s.at("budget"), "must be nonnegative");
  if (!(f.msm.initial_step > 0.0)) fail(s.at("initial_step"), "must be positive");
  s.finish();
}

void parse_counterfactual(Section s, RunConfig& rc) {
  auto& sc = rc.counterfactual.scenario;
  if (const json* v = s.find("bonuses")) sc.bonuses = as_ints(*v, s.at("bonuses"));
  sc.draws = s.get("draws", sc.draws);
  sc.tolerance = s.get("tolerance", sc.tolerance);
  sc.max_iters = s.get("max_iters", sc.max_iters);
  sc.damping = s.get("damping", sc.damping);
  sc.bootstrap = s.get("bootstrap", rc.first_stage_bootstrap);
  const std::string theta = s.get("theta", std::string("fit"));
  if (theta != "fit" && theta != "config") fail(s.at("theta"), "expected \"fit\" or \"config\"");
  rc.counterfactual.theta_from_config = theta == "config";
  s.finish();
  try {
    sc.validate();
  } catch (const InvalidInput& e) {
    std::string msg = e.what();
    if (msg.rfind("scenario.", 0) == 0) msg = "counterfactual." + msg.substr(9);
    throw ConfigError(msg);
  }
}

void parse_benchmark(Section s, RunConfig& rc) {
  auto& b = rc.benchmark;
  b.num_centers = s.get("num_centers", b.num_centers);
  b.max_list = s.get("max_list", b.max_list);
  b.draws = s.get("draws", b.draws);
  const std::string preset = s.get("preset", std::string("table"));
  if (preset == "table")
    b.c_list = BenchmarkConfig::table_c_values();
  else if (preset == "text")
    b.c_list = BenchmarkConfig::text_c_values();
  else
    fail(s.at("preset"), "expected \"table\" or \"text\"");
  if (const json* v = s.find("c")) b.c_list = as_doubles(*v, s.at("c"));
  b.delta = s.get("delta", b.delta);
  b.entry_age = s.get("entry_age", b.entry_age);
  if (b.num_centers < 1) fail(s.at("num_centers"), "must be at least 1");
  if (b.max_list < 1 || b.max_list > kMaxRolLength) fail(s.at("max_list"), "must lie in 1..5");
  if (b.draws < 1) fail(s.at("draws"), "must be at least 1");
  if (b.entry_age < 0 || b.entry_age >= kMaxAge) fail(s.at("entry_age"), "must lie in 0..4");
  s.finish();
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig rc;
  rc.hash = [&] {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(doc.dump())));
    return std::string(buf);
  }();

  Section root(doc, "");
  const json& version = root.required("schema_version");
  if (as_int(version, "schema_version") != kSchemaVersion)
    fail("schema_version", "unsupported version " + version.dump() + ", expected " +
                               std::to_string(kSchemaVersion));
  if (const json* s = root.find("seed")) {
    if (!s->is_number_unsigned()) fail("seed", "expected a nonnegative integer");
    rc.seed = s->get<std::uint64_t>();
  }
  rc.threads = root.get("threads", rc.threads);
  if (rc.threads < 1) fail("threads", "must be at least 1");
  if (root.has("input")) rc.input = root.get("input", std::string());

  if (root.has("market")) {
    rc.market = parse_market(root.child("market"));
    if (!root.has("theta")) fail("theta", "required with the market section");
    rc.market->theta_true = parse_theta(root.child("theta"), *rc.market);
    try {
      rc.market->validate();
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
  } else if (root.has("theta")) {
    fail("theta", "needs the market section");
  }

  if (root.has("first_stage")) {
    Section s = root.child("first_stage");
    rc.first_stage_bootstrap = s.get("bootstrap", rc.first_stage_bootstrap);
    if (rc.first_stage_bootstrap < 1) fail("first_stage.bootstrap", "must be at least 1");
    s.finish();
  }
  if (root.has("fit")) parse_fit(root.child("fit"), rc);
  rc.counterfactual.scenario.bootstrap = rc.first_stage_bootstrap;
  if (root.has("counterfactual")) parse_counterfactual(root.child("counterfactual"), rc);
  if (root.has("benchmark")) parse_benchmark(root.child("benchmark"), rc);
  root.finish();
  return rc;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

}  // namespace waitlist
