#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "repalloc/bidding.hpp"
#include "repalloc/landscape.hpp"

namespace repalloc {

// ---------------------------------------------------------------------------
// Monte Carlo auction simulation. Each auction draws one external price from
// the landscape, then one bid per strategy (in listed order); the highest
// contract bid strictly above the price wins and pays the price. Ties and
// no-bids go to the external market. One RNG stream per trial, seeded
// seed ^ trial_index, so trials are independent and reproducible.
// ---------------------------------------------------------------------------

struct SimStrategy {
  std::string label;
  BidStrategy strategy;
  // Expected per-auction delivery (fraction of supply) and spend; used for
  // report error columns.
  double target_win_fraction = 0.0;
  double target_spend_per_auction = 0.0;
};

// Strategy realizing a solved allocation, with targets derived from it.
SimStrategy sim_strategy_from_allocation(const std::string& label, const Allocation& allocation,
                                         const Landscape& landscape);

struct SimConfig {
  Landscape landscape;
  std::vector<SimStrategy> strategies;
  std::size_t n_trials = 1;
  std::size_t n_auctions = 0;
  std::uint64_t seed = 0;
};

struct TrialContractStats {
  std::uint64_t delivered = 0;
  double spend = 0.0;
};

struct SimReport {
  std::size_t n_trials = 0;
  std::size_t n_auctions = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> labels;
  std::vector<double> target_delivered;  // per contract, absolute per trial
  std::vector<double> target_spend;      // per contract, absolute per trial
  std::vector<std::vector<TrialContractStats>> trials;  // [trial][contract]

  std::vector<double> mean_delivered;  // per contract, mean over trials
  std::vector<double> mean_spend;
  double mean_abs_delivery_error = 0.0;  // |delivered - target| / n_auctions
  double max_abs_delivery_error = 0.0;
  double mean_rel_spend_error = 0.0;  // |spend - target| / target
  double max_rel_spend_error = 0.0;
};

// Trials run in parallel worker threads (capped by the REPALLOC_THREADS
// environment variable); per-trial RNG streams keep results byte-identical
// for any thread count.
SimReport run_auctions(const SimConfig& config);

// columns: trial,contract,delivered,target_delivered,spend,target_spend
std::string report_csv(const SimReport& report);
std::string report_summary_json(const SimReport& report);

// Delivery replication across a (sigma, d/s) grid of lognormal(0, sigma)
// landscapes, bidding the minimal-spend solution (constant bid at the d/s
// quantile).
struct AllocationExperimentRow {
  double sigma = 0.0;
  double ds = 0.0;
  std::size_t trial = 0;
  double delivered = 0.0;
  double target_delivered = 0.0;
  double spend = 0.0;
  double target_spend = 0.0;
};

struct AllocationExperimentResult {
  std::vector<AllocationExperimentRow> rows;
  std::size_t n_auctions = 0;
};

AllocationExperimentResult replicate_allocation_experiment(const std::vector<double>& sigma_grid,
                                                           const std::vector<double>& ds_grid,
                                                           std::size_t n_trials,
                                                           std::size_t n_auctions,
                                                           std::uint64_t seed);

// columns: sigma,ds,trial,delivered,target_delivered,spend,target_spend
std::string allocation_experiment_csv(const AllocationExperimentResult& result);

// Spend replication at fixed d/s with spend targets given as fractions of
// the mean price. Cells whose target falls below the minimal feasible spend
// are marked skipped rather than failed.
struct SpendExperimentRow {
  double sigma = 0.0;
  double t_frac = 0.0;  // spend target as a fraction of E[p]
  std::size_t trial = 0;
  double delivered = 0.0;
  double target_delivered = 0.0;
  double spend = 0.0;
  double target_spend = 0.0;
  bool skipped = false;
};

struct SpendExperimentResult {
  std::vector<SpendExperimentRow> rows;
  std::size_t n_auctions = 0;
  double ds = 0.0;
};

SpendExperimentResult replicate_spend_experiment(const std::vector<double>& sigma_grid, double ds,
                                                 const std::vector<double>& t_fracs,
                                                 std::size_t n_trials, std::size_t n_auctions,
                                                 std::uint64_t seed);

// columns: sigma,t_frac,trial,delivered,target_delivered,spend,target_spend,status
std::string spend_experiment_csv(const SpendExperimentResult& result);

}  // namespace repalloc
