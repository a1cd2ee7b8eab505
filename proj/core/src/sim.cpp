#include "repalloc/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "repalloc/errors.hpp"
#include "repalloc/rng.hpp"
#include "repalloc/single_l2.hpp"

namespace repalloc {

namespace {

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::size_t worker_count(std::size_t n_trials) {
  std::size_t threads = std::thread::hardware_concurrency();
  if (threads == 0) threads = 1;
  if (const char* env = std::getenv("REPALLOC_THREADS")) {
    char* end = nullptr;
    unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) threads = static_cast<std::size_t>(v);
  }
  return std::min(threads, std::max<std::size_t>(1, n_trials));
}

void run_trial(const SimConfig& config, std::size_t trial,
               std::vector<TrialContractStats>& stats) {
  Rng rng(config.seed ^ static_cast<std::uint64_t>(trial));
  const std::size_t m = config.strategies.size();
  stats.assign(m, TrialContractStats{});
  std::vector<double> bids(m);
  for (std::size_t auction = 0; auction < config.n_auctions; ++auction) {
    const double price = config.landscape.sample_one(rng);
    // Fixed draw order: price first, then one bid per strategy in listed
    // order, so every strategy sees the same stream regardless of outcomes.
    for (std::size_t j = 0; j < m; ++j) {
      auto bid = sample_bid(config.strategies[j].strategy, rng);
      bids[j] = bid ? *bid : -1.0;
    }
    std::size_t winner = m;
    double best = price;  // must beat the external price strictly
    for (std::size_t j = 0; j < m; ++j) {
      if (bids[j] > best) {
        best = bids[j];
        winner = j;
      }
    }
    if (winner < m) {
      stats[winner].delivered += 1;
      stats[winner].spend += price;
    }
  }
}

}  // namespace

SimStrategy sim_strategy_from_allocation(const std::string& label, const Allocation& allocation,
                                         const Landscape& landscape) {
  SimStrategy out;
  out.label = label;
  out.strategy = strategy_from_allocation(allocation);
  out.target_win_fraction = expected_demand_fraction(allocation, landscape);
  out.target_spend_per_auction = expected_spend_fraction(allocation, landscape);
  return out;
}

SimReport run_auctions(const SimConfig& config) {
  const std::size_t m = config.strategies.size();
  SimReport report;
  report.n_trials = config.n_trials;
  report.n_auctions = config.n_auctions;
  report.seed = config.seed;
  report.labels.reserve(m);
  for (const auto& s : config.strategies) {
    report.labels.push_back(s.label);
    report.target_delivered.push_back(s.target_win_fraction *
                                      static_cast<double>(config.n_auctions));
    report.target_spend.push_back(s.target_spend_per_auction *
                                  static_cast<double>(config.n_auctions));
  }

  report.trials.resize(config.n_trials);
  if (config.n_trials > 0 && config.n_auctions > 0 && m > 0) {
    const std::size_t threads = worker_count(config.n_trials);
    if (threads <= 1) {
      for (std::size_t t = 0; t < config.n_trials; ++t) {
        run_trial(config, t, report.trials[t]);
      }
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      pool.reserve(threads);
      for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&]() {
          for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= config.n_trials) return;
            run_trial(config, t, report.trials[t]);
          }
        });
      }
      for (auto& th : pool) th.join();
    }
  } else {
    for (auto& t : report.trials) t.assign(m, TrialContractStats{});
  }

  report.mean_delivered.assign(m, 0.0);
  report.mean_spend.assign(m, 0.0);
  double sum_dev = 0.0;
  double sum_spend_err = 0.0;
  std::size_t cells = 0;
  for (std::size_t t = 0; t < config.n_trials; ++t) {
    for (std::size_t j = 0; j < m; ++j) {
      const auto& s = report.trials[t][j];
      report.mean_delivered[j] += static_cast<double>(s.delivered);
      report.mean_spend[j] += s.spend;
      const double dev =
          config.n_auctions > 0
              ? std::abs(static_cast<double>(s.delivered) - report.target_delivered[j]) /
                    static_cast<double>(config.n_auctions)
              : 0.0;
      const double denom = report.target_spend[j] > 0.0 ? report.target_spend[j] : 1.0;
      const double serr = std::abs(s.spend - report.target_spend[j]) / denom;
      sum_dev += dev;
      sum_spend_err += serr;
      report.max_abs_delivery_error = std::max(report.max_abs_delivery_error, dev);
      report.max_rel_spend_error = std::max(report.max_rel_spend_error, serr);
      ++cells;
    }
  }
  if (config.n_trials > 0) {
    for (std::size_t j = 0; j < m; ++j) {
      report.mean_delivered[j] /= static_cast<double>(config.n_trials);
      report.mean_spend[j] /= static_cast<double>(config.n_trials);
    }
  }
  if (cells > 0) {
    report.mean_abs_delivery_error = sum_dev / static_cast<double>(cells);
    report.mean_rel_spend_error = sum_spend_err / static_cast<double>(cells);
  }
  return report;
}

std::string report_csv(const SimReport& report) {
  std::string out = "trial,contract,delivered,target_delivered,spend,target_spend\n";
  for (std::size_t t = 0; t < report.trials.size(); ++t) {
    for (std::size_t j = 0; j < report.labels.size(); ++j) {
      const auto& s = report.trials[t][j];
      out += std::to_string(t);
      out += ',';
      out += report.labels[j];
      out += ',';
      out += std::to_string(s.delivered);
      out += ',';
      out += fmt_double(report.target_delivered[j]);
      out += ',';
      out += fmt_double(s.spend);
      out += ',';
      out += fmt_double(report.target_spend[j]);
      out += '\n';
    }
  }
  return out;
}

std::string report_summary_json(const SimReport& report) {
  nlohmann::ordered_json j;
  j["n_trials"] = report.n_trials;
  j["n_auctions"] = report.n_auctions;
  j["seed"] = report.seed;
  nlohmann::ordered_json contracts = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < report.labels.size(); ++k) {
    nlohmann::ordered_json c;
    c["label"] = report.labels[k];
    c["target_delivered"] = report.target_delivered[k];
    c["target_spend"] = report.target_spend[k];
    c["mean_delivered"] = report.mean_delivered[k];
    c["mean_spend"] = report.mean_spend[k];
    contracts.push_back(c);
  }
  j["contracts"] = contracts;
  j["mean_abs_delivery_error"] = report.mean_abs_delivery_error;
  j["max_abs_delivery_error"] = report.max_abs_delivery_error;
  j["mean_rel_spend_error"] = report.mean_rel_spend_error;
  j["max_rel_spend_error"] = report.max_rel_spend_error;
  return j.dump(2) + "\n";
}

AllocationExperimentResult replicate_allocation_experiment(const std::vector<double>& sigma_grid,
                                                           const std::vector<double>& ds_grid,
                                                           std::size_t n_trials,
                                                           std::size_t n_auctions,
                                                           std::uint64_t seed) {
  AllocationExperimentResult result;
  result.n_auctions = n_auctions;
  std::uint64_t cell = 0;
  for (double sigma : sigma_grid) {
    const Landscape land = Landscape::lognormal(0.0, sigma);
    for (double ds : ds_grid) {
      const double pm = land.quantile(ds);
      // Minimal-spend solution: win exactly the cheapest d/s fraction with a
      // constant bid at the d/s quantile.
      SimStrategy strat;
      strat.label = "contract";
      strat.strategy = BidStrategy{1.0, UniformMixtureBid{pm, pm}};
      strat.target_win_fraction = ds;
      strat.target_spend_per_auction = land.partial_moment(0.0, pm, 1).value;
      ++cell;
      SimConfig config{land, {strat}, n_trials, n_auctions,
                       seed ^ (0x9E3779B97F4A7C15ull * cell)};
      const SimReport report = run_auctions(config);
      for (std::size_t t = 0; t < n_trials; ++t) {
        AllocationExperimentRow row;
        row.sigma = sigma;
        row.ds = ds;
        row.trial = t;
        row.delivered = static_cast<double>(report.trials[t][0].delivered);
        row.target_delivered = report.target_delivered[0];
        row.spend = report.trials[t][0].spend;
        row.target_spend = report.target_spend[0];
        result.rows.push_back(row);
      }
    }
  }
  return result;
}

std::string allocation_experiment_csv(const AllocationExperimentResult& result) {
  std::string out = "sigma,ds,trial,delivered,target_delivered,spend,target_spend\n";
  for (const auto& row : result.rows) {
    out += fmt_double(row.sigma);
    out += ',';
    out += fmt_double(row.ds);
    out += ',';
    out += std::to_string(row.trial);
    out += ',';
    out += fmt_double(row.delivered);
    out += ',';
    out += fmt_double(row.target_delivered);
    out += ',';
    out += fmt_double(row.spend);
    out += ',';
    out += fmt_double(row.target_spend);
    out += '\n';
  }
  return out;
}

SpendExperimentResult replicate_spend_experiment(const std::vector<double>& sigma_grid, double ds,
                                                 const std::vector<double>& t_fracs,
                                                 std::size_t n_trials, std::size_t n_auctions,
                                                 std::uint64_t seed) {
  if (!(ds > 0.0 && ds <= 1.0)) {
    throw std::invalid_argument("spend experiment requires 0 < d/s <= 1");
  }
  SpendExperimentResult result;
  result.n_auctions = n_auctions;
  result.ds = ds;
  std::uint64_t cell = 0;
  for (double sigma : sigma_grid) {
    const Landscape land = Landscape::lognormal(0.0, sigma);
    const double mean_price = land.mean();
    for (double frac : t_fracs) {
      const double t = frac * mean_price;
      ++cell;
      bool skipped = false;
      SimReport report;
      try {
        const SolveResult solved = solve_l2(land, ds, 1.0, t);
        SimConfig config{land,
                         {sim_strategy_from_allocation("contract", solved.allocation, land)},
                         n_trials,
                         n_auctions,
                         seed ^ (0x9E3779B97F4A7C15ull * cell)};
        report = run_auctions(config);
      } catch (const InfeasibleError&) {
        skipped = true;  // spend target below the minimal feasible spend
      }
      for (std::size_t trial = 0; trial < n_trials; ++trial) {
        SpendExperimentRow row;
        row.sigma = sigma;
        row.t_frac = frac;
        row.trial = trial;
        row.skipped = skipped;
        if (!skipped) {
          row.delivered = static_cast<double>(report.trials[trial][0].delivered);
          row.target_delivered = report.target_delivered[0];
          row.spend = report.trials[trial][0].spend;
          row.target_spend = report.target_spend[0];
        }
        result.rows.push_back(row);
      }
    }
  }
  return result;
}

std::string spend_experiment_csv(const SpendExperimentResult& result) {
  std::string out = "sigma,t_frac,trial,delivered,target_delivered,spend,target_spend,status\n";
  for (const auto& row : result.rows) {
    out += fmt_double(row.sigma);
    out += ',';
    out += fmt_double(row.t_frac);
    out += ',';
    out += std::to_string(row.trial);
    out += ',';
    out += fmt_double(row.delivered);
    out += ',';
    out += fmt_double(row.target_delivered);
    out += ',';
    out += fmt_double(row.spend);
    out += ',';
    out += fmt_double(row.target_spend);
    out += ',';
    out += row.skipped ? "skipped" : "ok";
    out += '\n';
  }
  return out;
}

}  // namespace repalloc
