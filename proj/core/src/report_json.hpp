#pragma once

#include <cmath>

#include <json.hpp>

#include "apfopf/verify.hpp"

namespace apfopf::detail {

nlohmann::json json_of(const FeasibilityReport& report);
nlohmann::json json_of(const ComparisonReport& report);
nlohmann::json json_of(const std::set<LineKey>& lines);

/// Non-finite values become null so the output stays valid JSON.
inline nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace apfopf::detail
