#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>

#include "jsvuln/js/functions.hpp"

namespace jsvuln::js {

/// Column order of the metric block in the dataset.
enum class Metric : std::size_t {
    CC, CCL, CCO, CI, CLC, LDC,
    McCC, CYCL, NL, NLE,
    CD, TCD, CLOC, TCLOC, DLOC, LLOC, TLLOC, LOC, TLOC, NOS, TNOS,
    NUMPAR, PARAMS,
    HOR_D, HOR_T, HON_D, HON_T, HLEN, HVOC, HDIFF, HVOL, HEFF, HBUGS, HTIME,
    CYCL_DENS,
};

inline constexpr std::size_t kMetricCount = 35;

inline constexpr std::array<std::string_view, kMetricCount> kMetricNames = {
    "CC",     "CCL",    "CCO",   "CI",    "CLC",   "LDC",   "McCC",  "CYCL",  "NL",    "NLE",   "CD",    "TCD",
    "CLOC",   "TCLOC",  "DLOC",  "LLOC",  "TLLOC", "LOC",   "TLOC",  "NOS",   "TNOS",  "NUMPAR", "PARAMS",
    "HOR_D",  "HOR_T",  "HON_D", "HON_T", "HLEN",  "HVOC",  "HDIFF", "HVOL",  "HEFF",  "HBUGS", "HTIME",
    "CYCL_DENS",
};

/// Metrics that are ratios rather than counts.
bool is_ratio_metric(Metric m);

struct MetricVector {
    std::array<double, kMetricCount> values{};

    double& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
    double operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
    /// Lookup by column name; throws std::out_of_range for unknown names.
    double at(std::string_view name) const;

    bool operator==(const MetricVector&) const = default;
};

/// Distinct/total operator and operand counts.
struct HalsteadCounts {
    std::size_t distinct_operators = 0;
    std::size_t total_operators = 0;
    std::size_t distinct_operands = 0;
    std::size_t total_operands = 0;
};

/// Operands are identifiers, literals and `this`/`super`/`null`/`true`/`false`;
/// every other keyword and every punctuator is an operator. Trivia is ignored.
/// `skip` lists token indices left out of the count (declared names).
HalsteadCounts count_halstead(std::span<const Token> tokens, std::span<const std::size_t> skip = {});

/// Writes HOR_D..HTIME from raw counts.
void apply_halstead(const HalsteadCounts& counts, MetricVector& out);

/// Tokens of `fn` that do not belong to a nested function.
std::vector<Token> own_tokens(const SourceFunction& fn);

/// Full metric vector. Plain variants cover the function without its nested
/// functions; T-variants include them. Clone metrics are always zero.
MetricVector compute_metrics(const SourceFunction& fn);

}  // namespace jsvuln::js
