#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hearth/exposure.hpp"
#include "hearth/flowcap.hpp"
#include "hearth/prefix_trie.hpp"
#include "hearth/resolver.hpp"
#include "hearth/stage.hpp"

namespace hearth {

enum class DirectiveState : std::uint8_t { Enabled, Disabled };
enum class ScopeKind : std::uint8_t { Company, Group, Blocklist };
enum class Verdict : std::uint8_t { Allow, Block };
enum class BlocklistSource : std::uint8_t { Curated, User };

std::string_view to_string(DirectiveState s) noexcept;
std::string_view to_string(ScopeKind k) noexcept;
std::string_view to_string(Verdict v) noexcept;
std::string_view to_string(BlocklistSource s) noexcept;
std::optional<DirectiveState> parse_directive_state(std::string_view s) noexcept;
std::optional<ScopeKind> parse_scope_kind(std::string_view s) noexcept;
std::optional<BlocklistSource> parse_blocklist_source(std::string_view s) noexcept;

struct CompanyScope {
    ScopeKind kind = ScopeKind::Company;
    std::string name;  // company, group root, or blocklist id

    bool operator==(const CompanyScope&) const = default;
};

struct FirewallDirective {
    std::uint64_t id = 0;
    std::optional<std::string> device_id;  // nullopt: every device
    CompanyScope scope;
    DirectiveState state = DirectiveState::Disabled;
    std::int64_t created_at_ms = 0;
    std::string label;

    bool operator==(const FirewallDirective&) const = default;
};

/// "block all traffic between <device> and <company>"; a missing device name
/// renders as "all devices".
std::string render_label(const std::optional<std::string>& device_name, const CompanyScope& scope);

struct Blocklist {
    std::string id;
    std::string name;
    std::vector<std::string> companies;
    std::vector<Prefix> prefixes;
    BlocklistSource source = BlocklistSource::User;
    bool enabled = true;

    bool empty() const noexcept { return companies.empty() && prefixes.empty(); }
    bool operator==(const Blocklist&) const = default;
};

/// One company name or CIDR per line, `#` comments. A leading `# name: ...`
/// comment sets the display name. Throws ValidationError naming the line.
Blocklist parse_blocklist(std::string_view text, std::string id, BlocklistSource source);
Blocklist load_blocklist(const std::string& path, std::string id, BlocklistSource source);

struct RuleEntry {
    std::uint64_t directive_id = 0;
    std::optional<std::string> device_id;  // nullopt: every device
    std::vector<Prefix> prefixes;          // sorted, none covering another

    bool operator==(const RuleEntry&) const = default;
};

/// Immutable once built; share through shared_ptr<const CompiledRuleSet>.
class CompiledRuleSet {
public:
    CompiledRuleSet() = default;
    CompiledRuleSet(std::uint64_t version, std::int64_t generated_at_ms, std::vector<RuleEntry> entries,
                    std::vector<std::uint64_t> inert, std::uint64_t resolver_generation = 0);

    std::uint64_t version() const noexcept { return version_; }
    std::int64_t generated_at_ms() const noexcept { return generated_at_ms_; }
    const std::vector<RuleEntry>& entries() const noexcept { return entries_; }
    /// Enabled directives whose scope resolved to no addresses.
    const std::vector<std::uint64_t>& inert() const noexcept { return inert_; }
    std::uint64_t resolver_generation() const noexcept { return resolver_generation_; }

    bool matches(std::string_view device_id, const IpAddress& ip) const;

private:
    std::uint64_t version_ = 0;
    std::int64_t generated_at_ms_ = 0;
    std::vector<RuleEntry> entries_;
    std::vector<std::uint64_t> inert_;
    std::uint64_t resolver_generation_ = 0;
    PrefixTrie<char> any_device_;
    std::map<std::string, PrefixTrie<char>, std::less<>> by_device_;
};

/// BLOCK iff the flow's device matches an entry and its remote address lies in
/// that entry's prefixes. For inbound flows the remote address is dst_ip too.
Verdict decide(const FlowRecord& flow, const CompiledRuleSet& rules);

/// Addresses whose resolve() answer is in `companies`, as a minimal prefix
/// list: each company prefix minus the more specific or higher-precedence
/// prefixes owned by companies outside the set.
std::vector<Prefix> covered_prefixes(const std::vector<Attribution>& attributions,
                                     const std::set<std::string, std::less<>>& companies);

/// A flow together with the company and jurisdiction it was attributed to.
struct AttributedFlow {
    FlowRecord flow;
    std::string company;
    std::string jurisdiction;

    bool operator==(const AttributedFlow&) const = default;
};

struct DeviceImpact {
    std::uint64_t matched_bytes = 0;
    std::uint64_t matched_flows = 0;

    bool operator==(const DeviceImpact&) const = default;
};

struct BlockImpactPreview {
    std::uint64_t directive_id = 0;
    TimeWindow window;
    std::uint64_t matched_bytes = 0;
    std::uint64_t matched_flows = 0;
    std::uint64_t window_bytes = 0;
    std::uint64_t window_flows = 0;
    std::vector<std::string> affected_companies;  // sorted
    std::map<std::string, DeviceImpact> per_device;

    bool operator==(const BlockImpactPreview&) const = default;
};

enum class SuggestionReason : std::uint8_t { SameGroup, SameJurisdiction };
std::string_view to_string(SuggestionReason r) noexcept;

struct Suggestion {
    std::string company;
    SuggestionReason reason = SuggestionReason::SameGroup;
    std::uint64_t bytes = 0;

    bool operator==(const Suggestion&) const = default;
};

class AdapterError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Installs a rule set in some enforcement point. install() either takes
/// effect completely or throws AdapterError leaving the previous state.
class EnforcementAdapter {
public:
    virtual ~EnforcementAdapter() = default;
    virtual std::string_view name() const noexcept = 0;
    virtual void install(std::shared_ptr<const CompiledRuleSet> rules) = 0;
};

/// In-process enforcement for replays: blocked flows are dropped silently.
class SimulatedAdapter : public EnforcementAdapter {
public:
    std::string_view name() const noexcept override { return "simulated"; }
    void install(std::shared_ptr<const CompiledRuleSet> rules) override;

    void fail_next_install(bool fail = true);
    Verdict verdict(const FlowRecord& flow) const;
    std::vector<Verdict> replay(const std::vector<FlowRecord>& flows) const;
    std::uint64_t installed_version() const;

private:
    mutable std::mutex mu_;
    std::shared_ptr<const CompiledRuleSet> rules_ = std::make_shared<CompiledRuleSet>();
    bool fail_next_ = false;
};

/// Host firewall via an nftables script applied in one `nft -f` transaction,
/// so the table is replaced atomically. Matching packets are dropped silently.
/// Device-scoped entries match frames sourced from the device's hardware
/// address (replies to blocked requests never arrive); all-device entries match
/// both directions. A device whose address is unknown since start-up fails the
/// install.
class NftablesAdapter : public EnforcementAdapter {
public:
    using MacLookup = std::function<std::optional<MacAddress>(std::string_view device_id)>;
    /// Applies a script; returns the process exit status.
    using Runner = std::function<int(const std::string& script)>;

    explicit NftablesAdapter(MacLookup lookup, Runner runner = run_nft);

    std::string_view name() const noexcept override { return "nftables"; }
    void install(std::shared_ptr<const CompiledRuleSet> rules) override;

    static std::string render(const CompiledRuleSet& rules, const MacLookup& lookup);
    static int run_nft(const std::string& script);

private:
    MacLookup lookup_;
    Runner runner_;
};

/// Directive store, compiler and rule-set holder. decide() is lock-free with
/// respect to compile/apply apart from a pointer copy.
class Guard {
public:
    Guard(const Resolver& resolver, const DeviceRegistry& devices);

    /// Requires stage 3. New directives start DISABLED. Throws StageGateError,
    /// ValidationError (field "device", "company" or "scope").
    FirewallDirective create_directive(const std::optional<std::string>& device_id, CompanyScope scope,
                                       const StageConfig& stage, std::int64_t now_ms);
    /// Requires stage 3. Throws NotFoundError for unknown ids.
    FirewallDirective set_state(std::uint64_t id, DirectiveState state, const StageConfig& stage);

    std::vector<FirewallDirective> directives() const;
    std::optional<FirewallDirective> find(std::uint64_t id) const;
    /// Replaces the directive set (start-up restore; no validation).
    void restore(const std::vector<FirewallDirective>& directives);

    void put_blocklist(Blocklist list);
    std::vector<Blocklist> blocklists() const;
    std::optional<Blocklist> find_blocklist(std::string_view id) const;

    /// Compiles the current directive set under the next version number.
    std::shared_ptr<const CompiledRuleSet> compile(std::int64_t now_ms);
    /// Compiles an arbitrary directive set (ids must be unique).
    std::shared_ptr<const CompiledRuleSet> compile(const std::vector<FirewallDirective>& directives,
                                                   std::int64_t now_ms);

    /// Installs via `adapter`, then publishes `rules` as the active set. On
    /// AdapterError the active set is unchanged and the error propagates.
    void apply(std::shared_ptr<const CompiledRuleSet> rules, EnforcementAdapter& adapter);
    /// Compiles and applies if directives or resolver data changed since the
    /// active set was built. Returns the new set, or null when nothing changed.
    std::shared_ptr<const CompiledRuleSet> refresh(EnforcementAdapter& adapter, std::int64_t now_ms);

    std::shared_ptr<const CompiledRuleSet> active() const;
    Verdict decide(const FlowRecord& flow) const;

    /// What `directive` would have blocked among `flows` inside `window`,
    /// treating it as enabled.
    BlockImpactPreview preview_impact(const FirewallDirective& directive, TimeWindow window,
                                      const std::vector<AttributedFlow>& flows) const;

    /// Group siblings first, then same-jurisdiction companies seen from the
    /// directive's device(s) in `recent`; each tier by bytes descending.
    /// Companies already blocked for those devices are skipped. Throws
    /// ValidationError unless the directive targets a single company.
    std::vector<Suggestion> suggest_similar(const FirewallDirective& directive,
                                            const std::vector<AttributedFlow>& recent) const;

    /// Stable JSON document of every directive.
    std::string export_directives() const;
    /// Adds directives from an export; ids must not clash. Requires stage 3.
    /// All-or-nothing. Returns how many were added.
    std::size_t import_directives(std::string_view json, const StageConfig& stage);

private:
    std::set<std::string, std::less<>> scope_companies(const CompanyScope& scope) const;
    std::vector<Prefix> scope_prefixes(const CompanyScope& scope, const std::vector<Attribution>& attrs) const;
    std::vector<RuleEntry> compile_entries(const std::vector<FirewallDirective>& directives,
                                           std::vector<std::uint64_t>& inert) const;
    std::string device_label(const std::optional<std::string>& device_id) const;
    void validate_locked(const FirewallDirective& d) const;

    const Resolver& resolver_;
    const DeviceRegistry& devices_;

    mutable std::mutex mu_;  // directives, blocklists, counters
    std::map<std::uint64_t, FirewallDirective> directives_;
    std::map<std::string, Blocklist, std::less<>> blocklists_;
    std::uint64_t next_id_ = 1;
    std::uint64_t directive_revision_ = 0;

    std::mutex compile_mu_;  // serializes compile and apply
    std::uint64_t version_ = 0;
    std::uint64_t active_revision_ = 0;
    std::map<std::uint64_t, std::uint64_t> compiled_revisions_;  // version -> directive revision

    mutable std::mutex active_mu_;
    std::shared_ptr<const CompiledRuleSet> active_ = std::make_shared<CompiledRuleSet>();
};

}  // namespace hearth
