#pragma once

#include <string>

#include "json.hpp"
#include "l0opt/convex_sets.hpp"
#include "l0opt/functions.hpp"
#include "l0opt/optimize.hpp"
#include "l0opt/vi.hpp"

namespace l0opt::io {

using nlohmann::json;

/// Serializes with objects in key order and every floating-point number
/// printed as decimal with 17 significant digits, so equal inputs produce
/// byte-identical files.
std::string dump_canonical(const json& j, int indent = 2);

/// Throws std::invalid_argument naming the offending field when `j` is not
/// an object or contains keys outside `allowed`.
void expect_fields(const json& j, const std::string& where,
                   std::initializer_list<const char*> allowed);

// -- core types ---------------------------------------------------------------

json encode(const ProbSpace& space);
ProbSpace decode_space(const json& j);

json encode(const SigmaAlgebra& algebra);
SigmaAlgebra decode_algebra(const json& j, const ProbSpace& space);

json encode(const RandomVariable& rv);  // {"values": [...]}, inf sentinels as strings
RandomVariable decode_rv(const json& j, const SigmaAlgebra& algebra);

json encode(const ModuleElement& x);  // {"d": k, "data": [[...], ...]}
ModuleElement decode_element(const json& j, const SigmaAlgebra& algebra);

json encode(const IndicatorSet& set);
IndicatorSet decode_indicator(const json& j, const SigmaAlgebra& algebra);

// -- sets, functions, operators -------------------------------------------------

json encode(const StableConvexSet& G);
StableConvexSet decode_set(const json& j, const SigmaAlgebra& algebra);

// Functions and operators are built from their JSON descriptions through
// the public factories; they do not round-trip back to JSON (results only
// ever embed elements, random variables and certificates).
StableFunction decode_function(const json& j, const SigmaAlgebra& algebra);
MonotoneOperator decode_operator(const json& j, const SigmaAlgebra& algebra);

// -- results ---------------------------------------------------------------------

json encode(const MinimizationResult& r);
json encode(const VISolution& s);
json encode(const CompactnessCertificate& c);
json encode(const JamesCertificate& c);
json encode(const FinGenDecomposition& d);
json encode(const ForwardCombinationResult& r);

}  // namespace l0opt::io
