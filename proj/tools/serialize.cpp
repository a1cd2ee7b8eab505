#include "serialize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "config.hpp"

namespace repalloc::cli {

using nlohmann::ordered_json;

nlohmann::ordered_json json_number(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace {

struct FormWriter {
  ordered_json& j;

  void operator()(const FlatAllocation& f) const {
    j["form"] = "flat";
    j["level"] = json_number(f.level);
  }
  void operator()(const L2LinearAllocation& f) const {
    j["form"] = "l2_linear";
    j["z"] = json_number(f.z);
    j["p_max"] = json_number(f.p_max);
  }
  void operator()(const L2SaturatedAllocation& f) const {
    j["form"] = "l2_saturated";
    j["p_min"] = json_number(f.p_min);
    j["p_max"] = json_number(f.p_max);
  }
  void operator()(const KlExponentialAllocation& f) const {
    j["form"] = "kl_exponential";
    j["p0"] = json_number(f.p0);
    j["lambda"] = json_number(f.lambda);
  }
  void operator()(const KlUnsaturatedAllocation& f) const {
    j["form"] = "kl_unsaturated";
    j["scale"] = json_number(f.scale);
    j["lambda"] = json_number(f.lambda);
  }
  void operator()(const TabulatedAllocation& f) const {
    j["form"] = "tabulated";
    ordered_json grid = ordered_json::array();
    for (const auto& [p, v] : f.grid) grid.push_back({json_number(p), json_number(v)});
    j["grid"] = grid;
  }
};

struct BidFormWriter {
  ordered_json& j;

  void operator()(const UniformMixtureBid& b) const {
    j["type"] = "uniform";
    j["lo"] = json_number(b.lo);
    j["hi"] = json_number(b.hi);
  }
  void operator()(const ExponentialTailBid& b) const {
    j["type"] = "exponential_tail";
    j["p0"] = json_number(b.p0);
    j["lambda"] = json_number(b.lambda);
  }
  void operator()(const AboveSupportBid&) const { j["type"] = "above_support"; }
  void operator()(const TabulatedBid& b) const {
    j["type"] = "tabulated";
    ordered_json grid = ordered_json::array();
    for (const auto& [p, q] : b.grid) grid.push_back({json_number(p), json_number(q)});
    j["grid"] = grid;
  }
  void operator()(const PiecewiseExponentBid& b) const {
    j["type"] = "piecewise_exponent";
    j["p_star"] = json_number(b.p_star);
    j["top"] = json_number(b.top);
    ordered_json segments = ordered_json::array();
    for (const auto& seg : b.segments) {
      ordered_json s;
      s["lo"] = json_number(seg.lo);
      s["hi"] = json_number(seg.hi);
      s["u_lo"] = json_number(seg.u_lo);
      s["slope_total"] = json_number(seg.slope_total);
      s["slope_own"] = json_number(seg.slope_own);
      s["tail"] = json_number(seg.tail);
      segments.push_back(s);
    }
    j["segments"] = segments;
  }
};

}  // namespace

nlohmann::ordered_json allocation_json(const Allocation& allocation) {
  ordered_json j;
  std::visit(FormWriter{j}, allocation.form);
  j["supply"] = json_number(allocation.supply);
  j["demand"] = json_number(allocation.demand);
  return j;
}

nlohmann::ordered_json bid_json(const BidStrategy& strategy) {
  ordered_json j;
  j["bid_probability"] = json_number(strategy.bid_probability);
  ordered_json form;
  std::visit(BidFormWriter{form}, strategy.form);
  j["form"] = form;
  return j;
}

nlohmann::ordered_json diagnostics_json(const SolverDiagnostics& diagnostics) {
  ordered_json j;
  j["case"] = diagnostics.case_tag;
  j["lambda1"] = json_number(diagnostics.lambda1);
  j["lambda2"] = json_number(diagnostics.lambda2);
  j["residual_norm"] = json_number(diagnostics.residual_norm);
  j["iterations"] = diagnostics.iterations;
  j["note"] = diagnostics.note;
  return j;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ConfigError("cannot open output file '" + path + "'");
  }
  out << content;
  if (!out) {
    throw ConfigError("failed writing output file '" + path + "'");
  }
}

}  // namespace repalloc::cli
