#pragma once

#include <string>

#include <json.hpp>

#include "repalloc/allocation.hpp"
#include "repalloc/bidding.hpp"
#include "repalloc/solver_types.hpp"

namespace repalloc::cli {

// JSON has no infinities; encode non-finite values as strings.
nlohmann::ordered_json json_number(double x);

nlohmann::ordered_json allocation_json(const Allocation& allocation);
nlohmann::ordered_json bid_json(const BidStrategy& strategy);
nlohmann::ordered_json diagnostics_json(const SolverDiagnostics& diagnostics);

std::string format_double(double x);  // %.17g, locale independent

void write_text_file(const std::string& path, const std::string& content);

}  // namespace repalloc::cli
