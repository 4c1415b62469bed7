#pragma once
// Canonical JSON forms shared by the API, the CLI and exports. Keys are
// emitted in declaration order; decoders throw ValidationError naming the field.

#include <json.hpp>

#include "hearth/exposure.hpp"
#include "hearth/flowcap.hpp"
#include "hearth/guard.hpp"
#include "hearth/resolver.hpp"
#include "hearth/stage.hpp"
#include "hearth/store.hpp"
#include "hearth/tutor.hpp"

namespace hearth {

using Json = nlohmann::ordered_json;

Json to_json(const FlowRecord& r);
Json to_json(const Device& d);
Json to_json(const CompanyRecord& c);
Json to_json(const TimeWindow& w);
Json to_json(const ExposureBucket& b);
Json to_json(const ExposureProfile& p);
Json to_json(const StatsReport& r);
Json to_json(const std::vector<SeriesPoint>& series);
Json to_json(const PeriodComparison& c);
Json to_json(const FirewallDirective& d);
Json to_json(const CompiledRuleSet& r);
Json to_json(const BlockImpactPreview& p);
Json to_json(const Suggestion& s);
Json to_json(const Blocklist& b);
Json to_json(const StageConfig& s);
Json to_json(const CurriculumModule& m);
Json to_json(const RenderedModule& m);
Json to_json(const RedactionScope& s);
Json to_json(const RedactionRequest& r);
Json to_json(const IngestStats& s);
Json to_json(const AttributedFlow& f);

FlowRecord flow_from_json(const Json& j);
FirewallDirective directive_from_json(const Json& j);
TimeWindow window_from_json(const Json& j);
CompanyScope scope_from_json(const Json& j);
CompanyRecord company_from_json(const Json& j);
Blocklist blocklist_from_json(const Json& j);
StageConfig stage_from_json(const Json& j);
RedactionScope redaction_scope_from_json(const Json& j);

/// Field access helpers used by decoders and route handlers.
const Json& require_field(const Json& j, const char* field);
std::string require_string(const Json& j, const char* field);
std::int64_t require_int(const Json& j, const char* field);
std::uint64_t require_uint(const Json& j, const char* field);

}  // namespace hearth
