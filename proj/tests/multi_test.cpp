#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "repalloc/errors.hpp"
#include "repalloc/multi.hpp"
#include "repalloc/single_l2.hpp"

using namespace repalloc;

namespace {

// Two contracts whose common-slope optimum is known in closed form on
// uniform(0, 1): slope w = 1, p_star = 0.2, cutoffs (0.5, 0.9), flat levels
// (0.3, 0.7). Demands and spends below are the exact integrals of that
// allocation pair.
ContractSet forward_instance() {
  return ContractSet{1.0,
                     {{0.105, 13.0 / 70.0},      // spend 0.0195
                      {0.385, 103.0 / 330.0}}};  // spend 0.1201666...
}

// Coupled but with very different spend tightness: the optimum needs unequal
// spend multipliers, so no common-slope allocation pair reproduces it.
ContractSet skewed_instance() { return ContractSet{1.0, {{0.3, 0.35}, {0.5, 0.48}}}; }

}  // namespace

TEST_CASE("decoupled case returns the independent solutions bit for bit") {
  Landscape uni = Landscape::uniform(0, 1);
  ContractSet set{1.0, {{0.2, 0.3}, {0.25, 0.35}}};
  MultiAllocation multi = solve_multi(uni, set);
  REQUIRE(multi.case_tag == "decoupled");
  CHECK(multi.decentralizable);
  CHECK(multi.p_star == 0.0);
  REQUIRE(multi.allocations.size() == 2);
  for (std::size_t j = 0; j < 2; ++j) {
    SolveResult single = solve_l2(uni, set.contracts[j].d, set.s, set.contracts[j].t);
    const auto& got = std::get<L2LinearAllocation>(multi.allocations[j].form);
    const auto& want = std::get<L2LinearAllocation>(single.allocation.form);
    CHECK(got.z == want.z);
    CHECK(got.p_max == want.p_max);
  }
  // supply never binds
  for (int i = 0; i <= 50; ++i) CHECK(total_fraction(multi, i / 50.0) <= 1.0 + 1e-12);

  DecentralizableReport rep = is_decentralizable(uni, set);
  CHECK(rep.decentralizable);
  CHECK(rep.diagnosis == "independent solutions fit within supply (p_star = 0)");
}

TEST_CASE("symmetric tight contracts split the supply evenly") {
  Landscape uni = Landscape::uniform(0, 1);
  ContractSet set{1.0, {{0.4, 0.45}, {0.4, 0.45}}};
  MultiAllocation multi = solve_multi(uni, set);
  REQUIRE(multi.case_tag == "common_slope");
  CHECK(multi.decentralizable);
  CHECK(multi.p_star > 0.0);
  CHECK(multi.c[0] == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(multi.c[1] == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(multi.p_max[0] == doctest::Approx(multi.p_max[1]).epsilon(1e-8));
  CHECK(multi.residual_norm < 1e-8);
  // the evenly split aggregate solution already solves the system, so the
  // fit needs at most a polishing step or two
  CHECK(multi.iterations <= 3);
  CHECK(total_fraction(multi, 0.5 * multi.p_star) == doctest::Approx(1.0).epsilon(1e-9));

  DecentralizableReport rep = is_decentralizable(uni, set);
  CHECK(rep.decentralizable);
  CHECK(rep.diagnosis == "common-slope system solved; equal spend multipliers");
}

TEST_CASE("asymmetric coupled instance recovers its generating parameters") {
  Landscape uni = Landscape::uniform(0, 1);
  MultiAllocation multi = solve_multi(uni, forward_instance());
  REQUIRE(multi.case_tag == "common_slope");
  CHECK(multi.decentralizable);
  CHECK(multi.common_slope == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(multi.p_star == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(multi.p_max[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(multi.p_max[1] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(multi.c[0] == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(multi.c[1] == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(multi.c[0] + multi.c[1] == doctest::Approx(1.0).epsilon(1e-9));

  // per-contract demand and spend hold under independent quadrature
  const ContractSet set = forward_instance();
  for (std::size_t j = 0; j < 2; ++j) {
    double demand = oracle::demand_quad(multi.allocations[j], uni);
    double spend = oracle::spend_quad(multi.allocations[j], uni);
    CHECK(demand == doctest::Approx(set.contracts[j].d).epsilon(1e-6));
    CHECK(spend == doctest::Approx(set.contracts[j].t * set.contracts[j].d).epsilon(1e-6));
  }

  // supply is exhausted below p_star and never oversubscribed
  CHECK(total_fraction(multi, 0.1) == doctest::Approx(1.0).epsilon(1e-9));
  for (int i = 0; i <= 60; ++i) CHECK(total_fraction(multi, i / 50.0) <= 1.0 + 1e-9);
}

TEST_CASE("forward instance matches the discretized joint projection solver") {
  Landscape uni = Landscape::uniform(0, 1);
  MultiAllocation multi = solve_multi(uni, forward_instance());

  std::vector<double> r{0.105, 0.385};
  std::vector<double> spend{0.105 * 13.0 / 70.0, 0.385 * 103.0 / 330.0};
  // stationarity on the decaying stretch: v_j = r_j + alpha_j - beta_j p,
  // so alpha_j = w q_j - r_j and beta_j = w
  std::vector<double> alpha0{multi.common_slope * multi.p_max[0] - r[0],
                             multi.common_slope * multi.p_max[1] - r[1]};
  std::vector<double> beta0{multi.common_slope, multi.common_slope};
  auto qp = oracle::capped_qp(uni, r, spend, 2000, alpha0, beta0);
  REQUIRE(qp.converged);
  double worst = 0.0;
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t k = 0; k < qp.pbar.size(); ++k)
      worst = std::max(worst,
                       std::abs(eval_allocation(multi.allocations[j], qp.pbar[k]) - qp.v[j][k]));
  CHECK(worst <= 2e-3);
  // equal spend multipliers are exactly what makes the set decentralizable
  CHECK(qp.beta[0] == doctest::Approx(qp.beta[1]).epsilon(1e-3));
  CHECK(qp.beta[0] == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("skewed instance: unequal multipliers detected and certified") {
  Landscape uni = Landscape::uniform(0, 1);
  const ContractSet set = skewed_instance();

  DecentralizableReport rep = is_decentralizable(uni, set);
  CHECK(!rep.decentralizable);
  CHECK(rep.diagnosis.find("unequal slope multipliers") != std::string::npos);
  CHECK(rep.solution.case_tag == "not_decentralizable");
  CHECK(rep.solution.residual_norm > 1e-6);
  CHECK(rep.solution.note.find("closest common-slope fit") != std::string::npos);

  // the true coupled optimum from the projection solver: spend multipliers
  // differ, and below the exhaustion price the looser contract's allocation
  // rises with p (slope (beta_1 - beta_2)/2 > 0)
  SolveResult ind1 = solve_l2(uni, 0.3, 1.0, 0.35);
  SolveResult ind2 = solve_l2(uni, 0.5, 1.0, 0.48);
  std::vector<double> r{0.3, 0.5};
  std::vector<double> spend{0.3 * 0.35, 0.5 * 0.48};
  auto qp = oracle::capped_qp(uni, r, spend, 3000,
                              {ind1.diagnostics.lambda1, ind2.diagnostics.lambda1},
                              {ind1.diagnostics.lambda2, ind2.diagnostics.lambda2});
  REQUIRE(qp.converged);
  CHECK(qp.beta[0] > qp.beta[1] + 0.05);

  double rise = 0.0;
  for (std::size_t k = 1; k < qp.pbar.size(); ++k) {
    double total_prev = qp.v[0][k - 1] + qp.v[1][k - 1];
    double total = qp.v[0][k] + qp.v[1][k];
    if (total_prev > 1.0 - 1e-9 && total > 1.0 - 1e-9)  // supply-bound stretch
      rise += std::max(0.0, qp.v[1][k] - qp.v[1][k - 1]);
  }
  CHECK(rise > 0.005);

  // no common-slope member reaches the coupled optimum's objective
  std::vector<std::function<double(double)>> family;
  for (const auto& a : rep.solution.allocations)
    family.emplace_back([&a](double p) { return eval_allocation(a, p); });
  double family_objective = oracle::capped_qp_objective(qp, family, r);
  CHECK(qp.objective < family_objective - 1e-5);
}

TEST_CASE("infeasible aggregate spend is rejected even when per-contract checks pass") {
  Landscape uni = Landscape::uniform(0, 1);
  // each contract alone is fine at its residual supply, but the pooled spend
  // budget cannot pay for the pooled demand
  try {
    (void)solve_multi(uni, ContractSet{1.0, {{0.4, 0.35}, {0.4, 0.35}}});
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK(std::string(e.what()).find("aggregate problem infeasible") != std::string::npos);
  }
}

TEST_CASE("decentralize: two-contract closed form gives sqrt(p)") {
  // a_j(p)/s = (1 - p)/2 each, so A(p) = s(1 - p), u(p) = p, H_j(p) = sqrt(p)
  std::vector<Allocation> allocs{{1.0, 0.25, L2LinearAllocation{0.5, 1.0}},
                                 {1.0, 0.25, L2LinearAllocation{0.5, 1.0}}};
  auto strategies = decentralize(allocs, 1.0);
  REQUIRE(strategies.size() == 2);
  for (const auto& s : strategies) {
    const auto& pe = std::get<PiecewiseExponentBid>(s.form);
    CHECK(s.bid_probability == 1.0);
    for (int i = 0; i <= 100; ++i) {
      double p = i / 100.0;
      CHECK(pe.cdf(p) == doctest::Approx(std::sqrt(p)).scale(1.0).epsilon(1e-9));
    }
  }
  // identical contracts get identical distributions
  const auto& p0 = std::get<PiecewiseExponentBid>(strategies[0].form);
  const auto& p1 = std::get<PiecewiseExponentBid>(strategies[1].form);
  for (int i = 0; i <= 20; ++i) CHECK(p0.cdf(i / 20.0) == p1.cdf(i / 20.0));
}

TEST_CASE("decentralize: product of the bid cdfs equals the unallocated fraction") {
  Landscape uni = Landscape::uniform(0, 1);
  MultiAllocation multi = solve_multi(uni, forward_instance());
  auto strategies = decentralize(multi.allocations, multi.supply);
  REQUIRE(strategies.size() == 2);
  for (int i = 0; i <= 200; ++i) {
    double p = 1.2 * i / 200.0;
    double prod = 1.0;
    for (const auto& s : strategies) prod *= std::get<PiecewiseExponentBid>(s.form).cdf(p);
    CHECK(prod == doctest::Approx(1.0 - total_fraction(multi, p)).scale(1.0).epsilon(1e-6));
  }
  // each bid cdf is a proper non-decreasing distribution vanishing at p_star
  for (const auto& s : strategies) {
    const auto& pe = std::get<PiecewiseExponentBid>(s.form);
    CHECK(pe.p_star == doctest::Approx(multi.p_star).epsilon(1e-9));
    CHECK(pe.cdf(pe.p_star) == 0.0);
    CHECK(pe.cdf(pe.top) == 1.0);
    double prev = 0.0;
    for (int i = 0; i <= 200; ++i) {
      double h = pe.cdf(1.2 * i / 200.0);
      CHECK(h >= prev - 1e-12);
      prev = h;
    }
  }
}

TEST_CASE("decentralize: single allocation reproduces the direct strategy") {
  Landscape uni = Landscape::uniform(0, 1);
  SolveResult res = solve_l2(uni, 0.5, 1.0, 0.28);
  auto strategies = decentralize({res.allocation}, 1.0);
  REQUIRE(strategies.size() == 1);
  BidStrategy direct = strategy_from_allocation(res.allocation);
  for (int i = 0; i <= 1000; ++i) {
    double p = 1.2 * i / 1000.0;
    CHECK(win_fraction(strategies[0], p) ==
          doctest::Approx(win_fraction(direct, p)).scale(1.0).epsilon(1e-12));
  }
}

TEST_CASE("decentralize rejects inputs with no bid distribution") {
  CHECK_THROWS_AS((void)decentralize({}, 1.0), std::invalid_argument);
  Allocation increasing{1.0, 0.3, TabulatedAllocation{{{0.0, 0.1}, {0.5, 0.6}, {1.0, 0.0}}}};
  CHECK_THROWS_AS((void)decentralize({increasing, increasing}, 1.0), std::invalid_argument);
  // two flat allocations never decay, so no finite bid wins the right share
  Allocation flat{1.0, 0.5, FlatAllocation{0.5}};
  CHECK_THROWS_AS((void)decentralize({flat, flat}, 1.0), std::invalid_argument);
  Allocation zero{1.0, 0.0, FlatAllocation{0.0}};
  CHECK_THROWS_AS((void)decentralize({zero, zero}, 1.0), std::invalid_argument);
  // a single empty contract is fine: it just never bids
  auto never = decentralize({zero}, 1.0);
  REQUIRE(never.size() == 1);
  CHECK(never[0].bid_probability == 0.0);
}

TEST_CASE("scale_spends finds the minimal decentralizing multiplier") {
  Landscape uni = Landscape::uniform(0, 1);
  const ContractSet set = skewed_instance();
  ScaleSpendsResult scaled = scale_spends(uni, set);
  CHECK(scaled.kappa > 1.0);
  CHECK(scaled.kappa < 1000.0);
  CHECK(scaled.solution.decentralizable);
  // ratios preserved
  CHECK(scaled.scaled.contracts[0].t / scaled.scaled.contracts[1].t ==
        doctest::Approx(set.contracts[0].t / set.contracts[1].t).epsilon(1e-12));

  // bracket certificate: decentralizable at kappa, not just below it
  ContractSet below = set;
  for (auto& cspec : below.contracts) cspec.t *= scaled.kappa - 1e-4;
  CHECK(!is_decentralizable(uni, below).decentralizable);

  // already-decentralizable sets come back unchanged
  ScaleSpendsResult id = scale_spends(uni, forward_instance());
  CHECK(id.kappa == 1.0);
}

TEST_CASE("validation and feasibility errors") {
  Landscape uni = Landscape::uniform(0, 1);
  CHECK_THROWS_AS((void)solve_multi(uni, ContractSet{1.0, {}}), std::invalid_argument);
  CHECK_THROWS_AS((void)solve_multi(uni, ContractSet{1.0, {{0.6, 0.4}, {0.6, 0.4}}}),
                  InfeasibleError);
  CHECK_THROWS_AS((void)solve_multi(uni, ContractSet{1.0, {{0.4, -0.1}}}), std::invalid_argument);
  CHECK_THROWS_AS((void)solve_multi(uni, ContractSet{0.0, {{0.4, 0.3}}}), std::invalid_argument);

  // per-contract spend below the residual-supply minimum is rejected up front
  try {
    (void)solve_multi(uni, ContractSet{1.0, {{0.4, 0.12}, {0.4, 0.32}}});
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    std::string what = e.what();
    CHECK(what.find("residual supply") != std::string::npos);
    CHECK(what.find("contract 0") != std::string::npos);
  }
}
