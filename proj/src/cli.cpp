#include "waitlist/cli.hpp"

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "waitlist/config.hpp"
#include "waitlist/counterfactual.hpp"
#include "waitlist/io.hpp"
#include "waitlist/msm.hpp"
#include "waitlist/rng.hpp"

namespace waitlist {

namespace fs = std::filesystem;

namespace {

struct Context {
  std::string command;
  RunConfig config;
  std::uint64_t seed = 0;
  fs::path out;
  fs::path input;
  bool strict = false;
  std::ostream& log;
  std::ostream& err;

  OutputHeader header() const { return {command, config.hash, seed}; }

  const MarketConfig& market() const {
    if (!config.market) throw ConfigError("market: required for " + command);
    return *config.market;
  }

  /// Input files are checked before any work starts.
  fs::path need(const char* name) const {
    const fs::path p = input / name;
    if (!fs::exists(p)) throw ConfigError("input: " + p.string() + " does not exist");
    return p;
  }
  void need_panel() const {
    need("applicants.csv");
    need("centers.csv");
    need("histories.csv");
  }
  Panel panel() const {
    need_panel();
    const auto& m = market();
    return read_panel(input, m.structure(), m.bonus);
  }
};

std::string d(double x) { return format_double(x); }
std::string i(long long x) { return std::to_string(x); }

void print_summary(const Panel& panel, std::ostream& log) {
  if (panel.histories.empty()) {
    log << "no applicants\n";
    return;
  }
  const auto s = summarize(panel);
  log << "year age applicants waitlist_share\n";
  for (const auto& c : s.cells)
    if (c.applicants > 0)
      log << c.key.year << ' ' << c.key.age << ' ' << c.applicants << ' ' << d(c.waitlist_share) << '\n';
}

int cmd_generate(const Context& ctx) {
  MarketConfig mc = ctx.market();
  mc.seed = derive_seed(ctx.seed, "generate");
  const auto g = generate_market(mc);
  write_panel(ctx.out, g.panel, ctx.header());
  if (!g.belief_converged)
    ctx.err << "warning: generating beliefs did not converge in " << mc.belief_max_iters << " iterations\n";
  print_summary(g.panel, ctx.log);
  return kExitOk;
}

int cmd_first_stage(const Context& ctx) {
  ctx.need("applicants.csv");
  ctx.need("centers.csv");
  const auto cells = read_cells(ctx.input);
  const ScoreGrid grid = ctx.config.market ? ctx.config.market->grid : ScoreGrid{};
  const auto dist = bootstrap_all(cells, ctx.config.first_stage_bootstrap, derive_seed(ctx.seed, "first-stage"));
  const auto belief = belief_from_distribution(dist, grid);
  if (!belief.is_monotone()) throw std::logic_error("internal: estimated admission probabilities are not monotone");
  write_belief(ctx.out / "belief.json", belief, ctx.header());
  ctx.log << "estimated " << belief.table().size() << " cells with B=" << ctx.config.first_stage_bootstrap << '\n';
  return kExitOk;
}

int cmd_fit(const Context& ctx) {
  const auto& m = ctx.market();
  const auto belief_path = ctx.need("belief.json");
  const Panel panel = ctx.panel();
  MsmConfig mc = ctx.config.fit.msm;
  mc.seed = ctx.config.fit.matched_draws ? derive_seed(ctx.seed, "generate") : derive_seed(ctx.seed, "fit/draws");
  mc.noise_seed = derive_seed(ctx.seed, "fit/weight-noise");
  const MsmProblem problem(panel, read_belief(belief_path), mc);

  Theta start = m.theta_true;
  if (ctx.config.fit.start_alpha) start.alpha = *ctx.config.fit.start_alpha;
  const auto r = fit(problem, start, panel.market.center_areas, mc);
  const double q_config = problem.objective(m.theta_true, &r.weight.inverse);
  const double q_config_identity = problem.objective(m.theta_true);

  std::ostringstream extra;
  extra << "{\"fit\": {\"q\": " << d(r.q) << ", \"q_first_stage\": " << d(r.q_first)
        << ", \"q_at_config_theta\": " << d(q_config)
        << ", \"q_at_config_theta_identity\": " << d(q_config_identity)
        << ", \"evaluations\": " << r.evaluations
        << ", \"budget_exhausted\": " << (r.budget_exhausted ? "true" : "false")
        << ", \"weight_singular\": " << (r.weight.singular ? "true" : "false")
        << ", \"draws\": " << mc.draws << ", \"sample_size\": " << problem.sample_size() << "}}";
  write_theta(ctx.out / "theta.json", r.theta, ctx.header(), extra.str());

  std::vector<std::vector<std::string>> rows;
  for (const auto& t : r.trajectory) rows.push_back({i(t.evaluation), d(t.q), i(t.stage)});
  write_csv(ctx.out / "fit_diagnostics.csv", ctx.header(), {"iteration", "q", "stage"}, rows);

  ctx.log << "Q(theta_hat)=" << d(r.q) << " Q(config theta)=" << d(q_config) << " identity-weighted Q(config theta)="
          << d(q_config_identity) << " evaluations=" << r.evaluations << '\n';
  if (r.weight.singular) ctx.err << "warning: weight matrix is singular, used its pseudo-inverse\n";
  if (r.budget_exhausted) {
    ctx.err << "warning: evaluation budget exhausted before the search converged\n";
    if (ctx.strict) return kExitNotConverged;
  }
  return kExitOk;
}

int cmd_counterfactual(const Context& ctx) {
  const auto& sc = ctx.config.counterfactual;
  if (sc.scenario.bonuses.empty()) {
    ctx.log << "no scenarios to run\n";
    return kExitOk;
  }
  const auto& m = ctx.market();
  const auto belief_path = ctx.need("belief.json");
  std::optional<fs::path> theta_path;
  if (!sc.theta_from_config) theta_path = ctx.need("theta.json");
  const Panel panel = ctx.panel();
  const Theta theta = theta_path ? read_theta(*theta_path) : m.theta_true;
  if (theta.num_centers() != panel.market.num_centers())
    throw ConfigError("theta: " + std::to_string(theta.num_centers()) + " centers, the market has " +
                      std::to_string(panel.market.num_centers()));

  Scenario scenario = sc.scenario;
  scenario.seed = derive_seed(ctx.seed, "counterfactual");
  const auto outcomes = run_counterfactuals(theta, panel.market, population_from_panel(panel),
                                            read_belief(belief_path), scenario);
  const auto h = ctx.header();

  std::vector<std::vector<std::string>> rows;
  for (const auto& r : welfare_table(outcomes))
    rows.push_back({i(r.year), i(r.entry_age), i(r.bonus), i(r.applicants), d(r.list1), d(r.list2),
                    d(r.waitlist1), d(r.waitlist2), d(r.v1), d(r.v2), d(r.v)});
  write_csv(ctx.out / "welfare.csv", h,
            {"year", "entry_age", "b", "applicants", "list_length_1", "list_length_2", "waitlist_share_1",
             "waitlist_share_2", "v1", "v2", "v"},
            rows);

  rows.clear();
  for (const auto& r : bucket_table(outcomes))
    rows.push_back({i(r.bonus), bucket_name(r.bucket), i(r.count), d(r.mean), d(r.min), d(r.q25), d(r.median),
                    d(r.q75), d(r.max)});
  write_csv(ctx.out / "welfare_buckets.csv", h, {"b", "score_bucket", "count", "mean", "min", "q25", "median", "q75", "max"},
            rows);

  rows.clear();
  for (const auto& r : cutoff_histogram(outcomes))
    rows.push_back({i(r.year), i(r.age), i(r.bonus), i(r.value), d(r.frequency)});
  write_csv(ctx.out / "cutoff_hist.csv", h, {"year", "age", "b", "cutoff", "frequency"}, rows);

  rows.clear();
  for (const auto& r : convergence_table(outcomes))
    rows.push_back({i(r.bonus), i(r.draw), i(r.iteration), d(r.residual), r.converged ? "1" : "0"});
  write_csv(ctx.out / "convergence.csv", h, {"b", "draw", "iteration", "residual", "converged"}, rows);

  bool all = true;
  for (const auto& o : outcomes) {
    int converged = 0;
    int oscillating = 0;
    for (const auto& dr : o.draws) {
      converged += dr.converged ? 1 : 0;
      oscillating += dr.oscillating ? 1 : 0;
    }
    ctx.log << "b=" << o.bonus << ": " << converged << "/" << o.draws.size() << " draws converged";
    if (oscillating) ctx.log << ", " << oscillating << " oscillating";
    ctx.log << '\n';
    all = all && o.converged();
  }
  if (!all) {
    ctx.err << "warning: some equilibria did not converge\n";
    if (ctx.strict) return kExitNotConverged;
  }
  return kExitOk;
}

int cmd_report(const Context& ctx) {
  const Panel panel = ctx.panel();
  if (panel.histories.empty()) throw std::runtime_error("panel has no applicants");
  const auto s = summarize(panel);
  const auto h = ctx.header();

  std::vector<std::vector<std::string>> rows;
  for (const auto& c : s.cells) {
    std::vector<std::string> r{i(c.key.year), i(c.key.age), i(c.applicants), i(c.first_time), i(c.reapplicants),
                               d(c.mean_score), d(c.mean_list_length)};
    for (double x : c.rank_shares) r.push_back(d(x));
    r.push_back(d(c.waitlist_share));
    rows.push_back(std::move(r));
  }
  write_csv(ctx.out / "summary_cells.csv", h,
            {"year", "age", "applicants", "first_time", "reapplicants", "mean_score", "mean_list_length",
             "rank1_share", "rank2_share", "rank3_share", "rank4_share", "rank5_share", "waitlist_share"},
            rows);

  rows.clear();
  for (const auto& e : s.entry_ages)
    rows.push_back({e.entry_age < 0 ? "all" : i(e.entry_age), i(e.applications), i(e.waitlisted), i(e.reapplied),
                    i(e.drop_safety)});
  write_csv(ctx.out / "summary_entry_ages.csv", h,
            {"entry_age", "applications", "waitlisted", "reapplied", "drop_safety"}, rows);

  // Pivotal-bonus incidence among reapplicants with both lists nonempty.
  int eligible = 0, pivotal_actual = 0, pivotal_28 = 0;
  for (const auto& hist : panel.histories) {
    if (hist.r1.empty() || !hist.r2 || hist.r2->empty()) continue;
    ++eligible;
    pivotal_actual += delta_k(hist, resolve_thresholds(ThresholdSpec::ActualCutoffs, hist, panel), panel.bonus);
    pivotal_28 += delta_k(hist, resolve_thresholds(ThresholdSpec::Fixed28, hist, panel), panel.bonus);
  }
  const auto& all = s.entry_ages.back();
  std::ostringstream body;
  body << "applications " << all.applications << '\n'
       << "waitlisted " << all.waitlisted << '\n'
       << "reapplied " << all.reapplied << '\n'
       << "drop_safety " << all.drop_safety << '\n'
       << "drop_safety_share " << (all.reapplied ? d(static_cast<double>(all.drop_safety) / all.reapplied) : "NA") << '\n'
       << "pivotal_bonus_actual_cutoffs " << pivotal_actual << " of " << eligible << '\n'
       << "pivotal_bonus_fixed_28 " << pivotal_28 << " of " << eligible << '\n';
  write_text(ctx.out / "report.txt", h, body.str());
  ctx.log << body.str();
  return kExitOk;
}

int cmd_bench_mia(const Context& ctx) {
  const auto rows_in = mia_benchmark(ctx.config.benchmark, derive_seed(ctx.seed, "bench-mia"));
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : rows_in) {
    std::vector<std::string> row{d(r.c), d(r.fraction_correct)};
    for (double u : r.updates) row.push_back(d(u));
    rows.push_back(std::move(row));
    ctx.log << "c=" << d(r.c) << " fraction_correct=" << d(r.fraction_correct) << '\n';
  }
  write_csv(ctx.out / "bench_mia.csv", ctx.header(),
            {"c", "fraction_correct", "updates_0", "updates_1", "updates_2", "updates_3", "updates_4",
             "updates_5plus"},
            rows);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Waitlist market simulator and estimator"};
  app.require_subcommand(1);
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  int threads = 0;
  bool strict = false;
  app.add_option("--config", config_path, "Run configuration (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--threads", threads, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
  app.add_flag("--strict", strict, "Exit 4 when a search or equilibrium does not converge");

  using Command = int (*)(const Context&);
  const std::vector<std::tuple<const char*, const char*, Command, bool>> commands{
      {"generate", "Simulate a synthetic panel", cmd_generate, true},
      {"first-stage", "Estimate admission probabilities by bootstrap", cmd_first_stage, true},
      {"fit", "Estimate preferences by simulated moments", cmd_fit, true},
      {"counterfactual", "Equilibria under alternative waitlist bonuses", cmd_counterfactual, true},
      {"report", "Panel summaries and strategic-waiting metrics", cmd_report, false},
      {"bench-mia", "Accuracy of the list approximation against brute force", cmd_bench_mia, false},
  };
  // Global options may follow the subcommand.
  app.fallthrough();
  for (const auto& [name, help, fn, needs_seed] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const auto it = std::find_if(commands.begin(), commands.end(),
                                 [&](const auto& c) { return sub->get_name() == std::get<0>(c); });
    RunConfig rc = load_config(config_path);
    std::optional<std::uint64_t> master = rc.seed;
    if (seed_opt->count() > 0) master = seed;
    if (!master && std::get<3>(*it)) throw ConfigError("seed: required for " + sub->get_name());

    Context ctx{sub->get_name(), std::move(rc), master.value_or(0), fs::path(out_dir), {}, strict, out, err};
    ctx.input = ctx.config.input ? fs::path(*ctx.config.input) : ctx.out;
    set_thread_count(threads > 0 ? threads : ctx.config.threads);
    fs::create_directories(ctx.out);
    return std::get<2>(*it)(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace waitlist
