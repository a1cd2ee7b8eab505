#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "serialize.hpp"

#include "repalloc/errors.hpp"
#include "repalloc/landscape.hpp"
#include "repalloc/multi.hpp"
#include "repalloc/sim.hpp"
#include "repalloc/single_kl.hpp"
#include "repalloc/single_l2.hpp"

namespace {

using nlohmann::ordered_json;
using namespace repalloc;
using cli::Config;
using cli::ConfigError;

constexpr const char* kLandscapeKeys[] = {"kind", "mu",         "sigma", "gamma",
                                          "lo",   "hi", "samples_path"};

std::vector<double> read_price_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("key 'samples_path': cannot open '" + path + "'");
  }
  std::vector<double> prices;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t b = 0;
    std::size_t e = line.size();
    while (b < e && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(line[e - 1]))) --e;
    if (b == e) continue;  // blank lines ignored
    const std::string token = line.substr(b, e - b);
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size() || !std::isfinite(v)) {
      throw ConfigError("samples file '" + path + "' line " + std::to_string(lineno) +
                        ": invalid price '" + token + "'");
    }
    prices.push_back(v);
  }
  return prices;
}

Landscape landscape_from_config(const Config& cfg) {
  const std::string kind = cfg.get_string("kind");
  try {
    if (kind == "lognormal") {
      return Landscape::lognormal(cfg.get_number_or("mu", 0.0), cfg.get_number("sigma"));
    }
    if (kind == "exponential") {
      return Landscape::exponential(cfg.get_number("gamma"));
    }
    if (kind == "uniform") {
      return Landscape::uniform(cfg.get_number_or("lo", 0.0), cfg.get_number("hi"));
    }
    if (kind == "empirical") {
      const auto prices = read_price_file(cfg.get_string("samples_path"));
      return fit_empirical(prices);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError("landscape: " + std::string(e.what()));
  }
  throw ConfigError("key 'kind': unknown landscape kind '" + kind + "'");
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  }
}

std::string out_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

// Upper end of the plotting grid: where the allocation has decayed to
// (numerically) zero, capped by the landscape support.
double base_extent(const Landscape& land) {
  const bool bounded =
      land.kind() == LandscapeKind::Uniform || land.kind() == LandscapeKind::Empirical;
  return bounded ? land.support_hi() : land.quantile(0.999);
}

double grid_extent(const Allocation& a, const Landscape& land) {
  struct Visitor {
    const Landscape& land;
    double base;
    double operator()(const FlatAllocation&) const { return base; }
    double operator()(const L2LinearAllocation& f) const { return f.p_max; }
    double operator()(const L2SaturatedAllocation& f) const { return f.p_max; }
    double operator()(const KlExponentialAllocation& f) const {
      return f.lambda > 0 ? std::min(f.p0 + 14.0 / f.lambda, land.support_hi()) : base;
    }
    double operator()(const KlUnsaturatedAllocation& f) const {
      return f.lambda > 0 ? std::min(14.0 / f.lambda, land.support_hi()) : base;
    }
    double operator()(const TabulatedAllocation& f) const {
      return f.grid.empty() ? base : f.grid.back().first;
    }
  };
  const double extent = std::visit(Visitor{land, base_extent(land)}, a.form);
  return extent > 0 ? extent : std::max(1.0, base_extent(land));
}

std::string allocation_grid_csv(const std::vector<Allocation>& allocations,
                                const Landscape& land) {
  double hi = 0.0;
  for (const auto& a : allocations) hi = std::max(hi, grid_extent(a, land));
  std::string out = "p";
  if (allocations.size() == 1) {
    out += ",a_over_s";
  } else {
    for (std::size_t j = 1; j <= allocations.size(); ++j) {
      out += ",a_over_s_" + std::to_string(j);
    }
    out += ",total";
  }
  out += '\n';
  for (int i = 0; i < 1000; ++i) {
    const double p = hi * static_cast<double>(i) / 999.0;
    out += cli::format_double(p);
    double total = 0.0;
    for (const auto& a : allocations) {
      const double v = eval_allocation(a, p);
      total += v;
      out += ',';
      out += cli::format_double(v);
    }
    if (allocations.size() > 1) {
      out += ',';
      out += cli::format_double(total);
    }
    out += '\n';
  }
  return out;
}

struct FlagState {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  std::uint64_t trials = 0;
  std::uint64_t auctions = 0;
  std::string objective;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* trials_opt = nullptr;
  CLI::Option* auctions_opt = nullptr;
  CLI::Option* objective_opt = nullptr;

  bool seed_given() const { return seed_opt && seed_opt->count() > 0; }
  bool trials_given() const { return trials_opt && trials_opt->count() > 0; }
  bool auctions_given() const { return auctions_opt && auctions_opt->count() > 0; }
  bool objective_given() const { return objective_opt && objective_opt->count() > 0; }
};

void add_common_flags(CLI::App* sub, FlagState& flags, bool config_required) {
  auto* config = sub->add_option("--config", flags.config_path,
                                 "Config file, flat key = value (TOML subset)");
  if (config_required) config->required();
  sub->add_option("--out", flags.out_dir, "Output directory for artifacts")
      ->capture_default_str();
  flags.seed_opt = sub->add_option("--seed", flags.seed, "RNG seed (overrides config)");
  flags.trials_opt = sub->add_option("--trials", flags.trials, "Trials (overrides config)");
  flags.auctions_opt =
      sub->add_option("--auctions", flags.auctions, "Auctions per trial (overrides config)");
  flags.objective_opt = sub->add_option("--objective", flags.objective,
                                        "Representativeness objective (overrides config)")
                            ->check(CLI::IsMember({"l2", "kl"}));
}

std::string pick_objective(const FlagState& flags, const Config& cfg) {
  const std::string objective =
      flags.objective_given() ? flags.objective : cfg.get_string_or("objective", "l2");
  if (objective != "l2" && objective != "kl") {
    throw ConfigError("key 'objective': expected \"l2\" or \"kl\", got \"" + objective + "\"");
  }
  return objective;
}

std::vector<std::string> with_landscape_keys(std::vector<std::string> keys) {
  keys.insert(keys.end(), std::begin(kLandscapeKeys), std::end(kLandscapeKeys));
  return keys;
}

ContractSet contract_set_from_config(const Config& cfg) {
  ContractSet set;
  set.s = cfg.get_number_or("s", 1.0);
  const std::uint64_t m = cfg.get_count("contracts");
  if (m == 0) {
    throw ConfigError("key 'contracts': need at least one contract");
  }
  for (std::uint64_t i = 1; i <= m; ++i) {
    ContractSpec c;
    c.d = cfg.get_number("d" + std::to_string(i));
    c.t = cfg.get_number("t" + std::to_string(i));
    set.contracts.push_back(c);
  }
  return set;
}

int cmd_solve_single(const FlagState& flags) {
  const Config cfg = Config::parse_file(flags.config_path);
  cfg.check_known_keys(with_landscape_keys({"s", "d", "t", "objective"}), {});
  const Landscape land = landscape_from_config(cfg);
  const double s = cfg.get_number_or("s", 1.0);
  const double d = cfg.get_number("d");
  const double t = cfg.get_number("t");
  const std::string objective = pick_objective(flags, cfg);

  const SolveResult result = objective == "l2" ? solve_l2(land, d, s, t) : solve_kl(land, d, s, t);
  const BidStrategy strategy = strategy_from_allocation(result.allocation);
  const SpendRange range = feasible_spend_range(land, d, s);

  ensure_out_dir(flags.out_dir);
  cli::write_text_file(out_path(flags.out_dir, "allocation.csv"),
                       allocation_grid_csv({result.allocation}, land));

  ordered_json sj;
  sj["objective"] = objective;
  sj["allocation"] = cli::allocation_json(result.allocation);
  sj["bid"] = cli::bid_json(strategy);
  cli::write_text_file(out_path(flags.out_dir, "strategy.json"), sj.dump(2) + "\n");

  ordered_json dj = cli::diagnostics_json(result.diagnostics);
  dj["objective"] = objective;
  dj["t_min"] = cli::json_number(range.t_min);
  dj["t_bar"] = cli::json_number(range.t_bar);
  dj["expected_demand_fraction"] = cli::json_number(expected_demand_fraction(result.allocation, land));
  dj["expected_spend_fraction"] = cli::json_number(expected_spend_fraction(result.allocation, land));
  if (objective == "kl") {
    dj["kl_divergence"] = cli::json_number(kl_divergence(result.allocation, land));
  }
  cli::write_text_file(out_path(flags.out_dir, "diagnostics.json"), dj.dump(2) + "\n");

  std::cout << "solve-single: case=" << result.diagnostics.case_tag << ", artifacts in "
            << flags.out_dir << "\n";
  return 0;
}

int cmd_solve_multi(const FlagState& flags) {
  const Config cfg = Config::parse_file(flags.config_path);
  cfg.check_known_keys(with_landscape_keys({"s", "contracts", "objective"}), {"d", "t"});
  if (pick_objective(flags, cfg) != "l2") {
    throw ConfigError("key 'objective': solve-multi supports only \"l2\"");
  }
  const Landscape land = landscape_from_config(cfg);
  const ContractSet set = contract_set_from_config(cfg);

  const MultiAllocation sol = solve_multi(land, set);
  std::vector<BidStrategy> bids;
  if (sol.decentralizable) {
    bids = decentralize(sol.allocations, set.s);
  }

  ensure_out_dir(flags.out_dir);
  cli::write_text_file(out_path(flags.out_dir, "allocation.csv"),
                       allocation_grid_csv(sol.allocations, land));

  ordered_json sj;
  sj["case"] = sol.case_tag;
  sj["decentralizable"] = sol.decentralizable;
  sj["p_star"] = cli::json_number(sol.p_star);
  sj["common_slope"] = cli::json_number(sol.common_slope);
  sj["note"] = sol.note;
  ordered_json contracts = ordered_json::array();
  for (std::size_t j = 0; j < sol.allocations.size(); ++j) {
    ordered_json c;
    c["label"] = "contract" + std::to_string(j + 1);
    c["p_max"] = cli::json_number(sol.p_max[j]);
    c["c"] = cli::json_number(sol.c[j]);
    c["allocation"] = cli::allocation_json(sol.allocations[j]);
    c["bid"] = sol.decentralizable ? cli::bid_json(bids[j]) : ordered_json(nullptr);
    contracts.push_back(c);
  }
  sj["contracts"] = contracts;
  cli::write_text_file(out_path(flags.out_dir, "strategy.json"), sj.dump(2) + "\n");

  ordered_json dj;
  dj["case"] = sol.case_tag;
  dj["decentralizable"] = sol.decentralizable;
  dj["residual_norm"] = cli::json_number(sol.residual_norm);
  dj["iterations"] = sol.iterations;
  dj["p_star"] = cli::json_number(sol.p_star);
  dj["common_slope"] = cli::json_number(sol.common_slope);
  dj["note"] = sol.note;
  ordered_json rows = ordered_json::array();
  for (std::size_t j = 0; j < sol.allocations.size(); ++j) {
    ordered_json r;
    r["label"] = "contract" + std::to_string(j + 1);
    r["target_demand_fraction"] = cli::json_number(set.contracts[j].d / set.s);
    r["target_spend_fraction"] =
        cli::json_number(set.contracts[j].t * set.contracts[j].d / set.s);
    r["expected_demand_fraction"] =
        cli::json_number(expected_demand_fraction(sol.allocations[j], land));
    r["expected_spend_fraction"] =
        cli::json_number(expected_spend_fraction(sol.allocations[j], land));
    rows.push_back(r);
  }
  dj["contracts"] = rows;
  cli::write_text_file(out_path(flags.out_dir, "diagnostics.json"), dj.dump(2) + "\n");

  std::cout << "solve-multi: case=" << sol.case_tag << ", artifacts in " << flags.out_dir
            << "\n";
  return 0;
}

int cmd_simulate(const FlagState& flags) {
  const Config cfg = Config::parse_file(flags.config_path);
  cfg.check_known_keys(with_landscape_keys({"s", "d", "t", "contracts", "objective", "trials",
                                            "auctions", "seed"}),
                       {"d", "t"});
  const Landscape land = landscape_from_config(cfg);
  const std::uint64_t trials = flags.trials_given() ? flags.trials : cfg.get_count_or("trials", 15);
  const std::uint64_t auctions =
      flags.auctions_given() ? flags.auctions : cfg.get_count_or("auctions", 10000);
  const std::uint64_t seed = flags.seed_given() ? flags.seed : cfg.get_count_or("seed", 1);

  std::vector<SimStrategy> strategies;
  if (cfg.has("contracts")) {
    const ContractSet set = contract_set_from_config(cfg);
    const MultiAllocation sol = solve_multi(land, set);
    if (!sol.decentralizable) {
      std::string msg = "contract set is not decentralizable (" + sol.case_tag + ")";
      try {
        const ScaleSpendsResult scaled = scale_spends(land, set);
        msg += "; scaling every spend target by kappa=" + cli::format_double(scaled.kappa) +
               " would make it decentralizable";
      } catch (const std::exception&) {
        // no finite scaling found; report the base diagnosis only
      }
      throw InfeasibleError(msg);
    }
    const auto bids = decentralize(sol.allocations, set.s);
    for (std::size_t j = 0; j < bids.size(); ++j) {
      SimStrategy st;
      st.label = "contract" + std::to_string(j + 1);
      st.strategy = bids[j];
      st.target_win_fraction = expected_demand_fraction(sol.allocations[j], land);
      st.target_spend_per_auction = expected_spend_fraction(sol.allocations[j], land);
      strategies.push_back(st);
    }
  } else {
    const double s = cfg.get_number_or("s", 1.0);
    const double d = cfg.get_number("d");
    const double t = cfg.get_number("t");
    const std::string objective = pick_objective(flags, cfg);
    const SolveResult result =
        objective == "l2" ? solve_l2(land, d, s, t) : solve_kl(land, d, s, t);
    strategies.push_back(sim_strategy_from_allocation("contract1", result.allocation, land));
  }

  SimConfig sim{land, strategies, static_cast<std::size_t>(trials),
                static_cast<std::size_t>(auctions), seed};
  const SimReport report = run_auctions(sim);

  ensure_out_dir(flags.out_dir);
  cli::write_text_file(out_path(flags.out_dir, "report.csv"), report_csv(report));
  cli::write_text_file(out_path(flags.out_dir, "summary.json"), report_summary_json(report));

  std::cout << "simulate: " << trials << " trials x " << auctions
            << " auctions, max delivery error " << cli::format_double(report.max_abs_delivery_error)
            << ", artifacts in " << flags.out_dir << "\n";
  return 0;
}

int cmd_replicate(const FlagState& flags) {
  const Config cfg = flags.config_path.empty() ? Config::parse_string("", "<defaults>")
                                               : Config::parse_file(flags.config_path);
  cfg.check_known_keys(
      {"sigma_grid", "ds_grid", "t_fracs", "ds", "trials", "auctions", "seed"}, {});
  const std::vector<double> sigma_grid =
      cfg.get_array_or("sigma_grid", {0.25, 0.5, 0.75, 1.0, 1.5, 2.0});
  const std::vector<double> ds_grid = cfg.get_array_or("ds_grid", {0.25, 0.5, 0.75});
  const std::vector<double> t_fracs = cfg.get_array_or("t_fracs", {0.25, 0.5, 0.75});
  const double ds = cfg.get_number_or("ds", 0.8);
  const std::uint64_t trials = flags.trials_given() ? flags.trials : cfg.get_count_or("trials", 15);
  const std::uint64_t auctions =
      flags.auctions_given() ? flags.auctions : cfg.get_count_or("auctions", 10000);
  const std::uint64_t seed = flags.seed_given() ? flags.seed : cfg.get_count_or("seed", 1);

  const auto alloc = replicate_allocation_experiment(sigma_grid, ds_grid, trials, auctions, seed);
  // Separate base stream for the second experiment so the two tables are
  // independent even at equal seeds.
  const auto spend =
      replicate_spend_experiment(sigma_grid, ds, t_fracs, trials, auctions, seed ^ 0x517cc1b727220a95ull);

  ensure_out_dir(flags.out_dir);
  cli::write_text_file(out_path(flags.out_dir, "allocation_experiment.csv"),
                       allocation_experiment_csv(alloc));
  cli::write_text_file(out_path(flags.out_dir, "spend_experiment.csv"),
                       spend_experiment_csv(spend));

  std::cout << "replicate: " << alloc.rows.size() << " allocation rows, " << spend.rows.size()
            << " spend rows, artifacts in " << flags.out_dir << "\n";
  return 0;
}

int cmd_fit_landscape(const FlagState& flags) {
  const Config cfg = Config::parse_file(flags.config_path);
  cfg.check_known_keys({"samples_path"}, {});
  const std::string path = cfg.get_string("samples_path");
  const std::vector<double> prices = read_price_file(path);
  if (prices.size() < 2) {
    throw ConfigError("key 'samples_path': need at least 2 prices, got " +
                      std::to_string(prices.size()));
  }
  Landscape land = [&] {
    try {
      return fit_empirical(prices);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("key 'samples_path': " + std::string(e.what()));
    }
  }();
  if (land.degenerate()) {
    throw ConfigError("key 'samples_path': degenerate sample (all prices equal)");
  }

  const std::size_t n = prices.size();
  double sum = 0.0;
  double min_p = prices[0];
  double max_p = prices[0];
  bool all_positive = true;
  for (double p : prices) {
    sum += p;
    min_p = std::min(min_p, p);
    max_p = std::max(max_p, p);
    if (!(p > 0.0)) all_positive = false;
  }

  ordered_json j;
  j["n"] = n;
  j["min"] = cli::json_number(min_p);
  j["max"] = cli::json_number(max_p);
  j["mean"] = cli::json_number(sum / static_cast<double>(n));
  ordered_json quantiles = ordered_json::array();
  for (int i = 0; i <= 100; ++i) {
    const double q = static_cast<double>(i) / 100.0;
    ordered_json row;
    row["q"] = q;
    row["value"] = cli::json_number(land.quantile(q));
    quantiles.push_back(row);
  }
  j["quantiles"] = quantiles;
  if (all_positive) {
    double log_sum = 0.0;
    for (double p : prices) log_sum += std::log(p);
    const double mu = log_sum / static_cast<double>(n);
    double sq = 0.0;
    for (double p : prices) {
      const double dev = std::log(p) - mu;
      sq += dev * dev;
    }
    const double sigma = std::sqrt(sq / static_cast<double>(n - 1));
    ordered_json fit;
    fit["mu"] = cli::json_number(mu);
    fit["sigma"] = cli::json_number(sigma);
    j["lognormal_fit"] = fit;
  } else {
    j["lognormal_fit"] = nullptr;  // log prices undefined at 0
  }

  ensure_out_dir(flags.out_dir);
  cli::write_text_file(out_path(flags.out_dir, "landscape.json"), j.dump(2) + "\n");
  std::cout << "fit-landscape: n=" << n << ", artifacts in " << flags.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Representative allocation solver and auction simulator"};
  app.require_subcommand(1);

  // One FlagState per subcommand: each option object binds to its own state.
  std::array<FlagState, 5> flags;
  auto* solve_single =
      app.add_subcommand("solve-single", "Solve one contract and emit allocation + strategy");
  add_common_flags(solve_single, flags[0], true);
  auto* solve_multi =
      app.add_subcommand("solve-multi", "Jointly solve a contract set sharing one supply");
  add_common_flags(solve_multi, flags[1], true);
  auto* simulate =
      app.add_subcommand("simulate", "Monte Carlo auction run for a solved contract (set)");
  add_common_flags(simulate, flags[2], true);
  auto* replicate =
      app.add_subcommand("replicate", "Delivery and spend replication experiments");
  add_common_flags(replicate, flags[3], false);
  auto* fit_landscape =
      app.add_subcommand("fit-landscape", "Fit an empirical landscape from a price sample");
  add_common_flags(fit_landscape, flags[4], true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (solve_single->parsed()) return cmd_solve_single(flags[0]);
    if (solve_multi->parsed()) return cmd_solve_multi(flags[1]);
    if (simulate->parsed()) return cmd_simulate(flags[2]);
    if (replicate->parsed()) return cmd_replicate(flags[3]);
    if (fit_landscape->parsed()) return cmd_fit_landscape(flags[4]);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 2;
  } catch (const ConvergenceError& e) {
    std::cerr << "convergence failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
