#include "hearth/guard.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "hearth/codec.hpp"
#include "hearth/errors.hpp"

namespace hearth {

std::string_view to_string(DirectiveState s) noexcept { return s == DirectiveState::Enabled ? "ENABLED" : "DISABLED"; }

std::string_view to_string(ScopeKind k) noexcept {
    switch (k) {
        case ScopeKind::Company: return "COMPANY";
        case ScopeKind::Group: return "GROUP";
        case ScopeKind::Blocklist: return "BLOCKLIST";
    }
    return "COMPANY";
}

std::string_view to_string(Verdict v) noexcept { return v == Verdict::Block ? "BLOCK" : "ALLOW"; }
std::string_view to_string(BlocklistSource s) noexcept { return s == BlocklistSource::Curated ? "CURATED" : "USER"; }

std::string_view to_string(SuggestionReason r) noexcept {
    return r == SuggestionReason::SameGroup ? "SAME_GROUP" : "SAME_JURISDICTION";
}

std::optional<DirectiveState> parse_directive_state(std::string_view s) noexcept {
    if (s == "ENABLED") return DirectiveState::Enabled;
    if (s == "DISABLED") return DirectiveState::Disabled;
    return std::nullopt;
}

std::optional<ScopeKind> parse_scope_kind(std::string_view s) noexcept {
    if (s == "COMPANY") return ScopeKind::Company;
    if (s == "GROUP") return ScopeKind::Group;
    if (s == "BLOCKLIST") return ScopeKind::Blocklist;
    return std::nullopt;
}

std::optional<BlocklistSource> parse_blocklist_source(std::string_view s) noexcept {
    if (s == "CURATED") return BlocklistSource::Curated;
    if (s == "USER") return BlocklistSource::User;
    return std::nullopt;
}

std::string render_label(const std::optional<std::string>& device_name, const CompanyScope& scope) {
    std::string target;
    switch (scope.kind) {
        case ScopeKind::Company: target = scope.name; break;
        case ScopeKind::Group: target = "companies owned by " + scope.name; break;
        case ScopeKind::Blocklist: target = "blocklist " + scope.name; break;
    }
    return "block all traffic between <" + (device_name ? *device_name : std::string("all devices")) + "> and <" +
           target + ">";
}

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

IpAddress flip_bit(const IpAddress& ip, unsigned i) {
    auto bytes = ip.bytes();
    bytes[i / 8] ^= static_cast<std::uint8_t>(0x80u >> (i % 8));
    if (ip.is_v4())
        return IpAddress::v4(static_cast<std::uint32_t>(bytes[0]) << 24 | static_cast<std::uint32_t>(bytes[1]) << 16 |
                             static_cast<std::uint32_t>(bytes[2]) << 8 | bytes[3]);
    return IpAddress::v6(bytes);
}

// `outer` minus `hole` (hole strictly inside outer): the siblings along the path.
void split_around(const Prefix& outer, const Prefix& hole, std::vector<Prefix>& out) {
    for (unsigned l = outer.length(); l < hole.length(); ++l) out.emplace_back(flip_bit(hole.network(), l), l + 1);
}

void subtract(std::vector<Prefix>& pieces, const Prefix& hole) {
    std::vector<Prefix> next;
    next.reserve(pieces.size());
    for (const auto& p : pieces) {
        if (p.network().family() != hole.network().family()) {
            next.push_back(p);
        } else if (hole.covers(p)) {
            continue;
        } else if (p.covers(hole)) {
            split_around(p, hole, next);
        } else {
            next.push_back(p);
        }
    }
    pieces = std::move(next);
}

// Sorted, with prefixes covered by another removed.
std::vector<Prefix> minimise(std::vector<Prefix> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    std::vector<Prefix> out;
    for (const auto& p : v) {
        // Sorted order puts a covering prefix before everything it covers.
        if (!out.empty() && out.back().covers(p)) continue;
        out.push_back(p);
    }
    return out;
}

bool outranks(const Attribution& a, const Attribution& b) {
    if (a.layer != b.layer) return a.layer > b.layer;
    return a.prefix.length() > b.prefix.length();
}

}  // namespace

Blocklist parse_blocklist(std::string_view text, std::string id, BlocklistSource source) {
    if (id.empty()) throw ValidationError("id", "blocklist id is empty");
    Blocklist b;
    b.id = id;
    b.name = id;
    b.source = source;
    std::istringstream in{std::string(text)};
    std::string raw;
    int lineno = 0;
    std::set<std::string> seen_companies;
    std::set<Prefix> seen_prefixes;
    while (std::getline(in, raw)) {
        ++lineno;
        auto line = trim(raw);
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto body = trim(std::string_view(line).substr(1));
            if (lineno == 1 && body.rfind("name:", 0) == 0) b.name = trim(std::string_view(body).substr(5));
            continue;
        }
        if (auto p = Prefix::parse(line)) {
            if (seen_prefixes.insert(*p).second) b.prefixes.push_back(*p);
        } else if (auto slash = line.find('/'); slash != std::string::npos && IpAddress::parse(line.substr(0, slash))) {
            throw ValidationError("blocklist", "blocklist line " + std::to_string(lineno) + ": invalid CIDR '" + line + "'");
        } else if (seen_companies.insert(line).second) {
            b.companies.push_back(line);
        }
    }
    if (b.empty()) throw ValidationError("blocklist", "blocklist '" + b.id + "' has no entries");
    return b;
}

Blocklist load_blocklist(const std::string& path, std::string id, BlocklistSource source) {
    std::ifstream in(path);
    if (!in) throw ValidationError("path", "cannot open blocklist " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_blocklist(ss.str(), std::move(id), source);
}

CompiledRuleSet::CompiledRuleSet(std::uint64_t version, std::int64_t generated_at_ms, std::vector<RuleEntry> entries,
                                 std::vector<std::uint64_t> inert, std::uint64_t resolver_generation)
    : version_(version),
      generated_at_ms_(generated_at_ms),
      entries_(std::move(entries)),
      inert_(std::move(inert)),
      resolver_generation_(resolver_generation) {
    for (const auto& e : entries_) {
        auto& trie = e.device_id ? by_device_[*e.device_id] : any_device_;
        for (const auto& p : e.prefixes) trie.insert(p, 1);
    }
}

bool CompiledRuleSet::matches(std::string_view device_id, const IpAddress& ip) const {
    if (any_device_.contains(ip)) return true;
    auto it = by_device_.find(device_id);
    return it != by_device_.end() && it->second.contains(ip);
}

Verdict decide(const FlowRecord& flow, const CompiledRuleSet& rules) {
    return rules.matches(flow.device_id, flow.dst_ip) ? Verdict::Block : Verdict::Allow;
}

std::vector<Prefix> covered_prefixes(const std::vector<Attribution>& attributions,
                                     const std::set<std::string, std::less<>>& companies) {
    // Index every binding by prefix; one prefix may be bound in several layers.
    std::multimap<Prefix, const Attribution*> by_prefix;
    for (const auto& a : attributions) by_prefix.emplace(a.prefix, &a);

    std::vector<Prefix> out;
    for (const auto& a : attributions) {
        if (!companies.count(a.company)) continue;
        std::vector<Prefix> pieces{a.prefix};
        auto consider = [&](const Attribution& q) {
            if (companies.count(q.company) || !outranks(q, a)) return;
            subtract(pieces, q.prefix);
        };
        // Bindings at or covering a.prefix.
        for (unsigned l = 0; l <= a.prefix.length() && !pieces.empty(); ++l) {
            auto [lo, hi] = by_prefix.equal_range(Prefix(a.prefix.network(), l));
            for (auto it = lo; it != hi; ++it) consider(*it->second);
        }
        // Bindings strictly inside a.prefix sit contiguously after it.
        for (auto it = by_prefix.upper_bound(a.prefix); it != by_prefix.end() && !pieces.empty(); ++it) {
            if (!a.prefix.covers(it->first)) break;
            consider(*it->second);
        }
        out.insert(out.end(), pieces.begin(), pieces.end());
    }
    return minimise(std::move(out));
}

void SimulatedAdapter::install(std::shared_ptr<const CompiledRuleSet> rules) {
    std::lock_guard lock(mu_);
    if (fail_next_) {
        fail_next_ = false;
        throw AdapterError("simulated adapter failure");
    }
    rules_ = std::move(rules);
}

void SimulatedAdapter::fail_next_install(bool fail) {
    std::lock_guard lock(mu_);
    fail_next_ = fail;
}

Verdict SimulatedAdapter::verdict(const FlowRecord& flow) const {
    std::shared_ptr<const CompiledRuleSet> rules;
    {
        std::lock_guard lock(mu_);
        rules = rules_;
    }
    return decide(flow, *rules);
}

std::vector<Verdict> SimulatedAdapter::replay(const std::vector<FlowRecord>& flows) const {
    std::shared_ptr<const CompiledRuleSet> rules;
    {
        std::lock_guard lock(mu_);
        rules = rules_;
    }
    std::vector<Verdict> out;
    out.reserve(flows.size());
    for (const auto& f : flows) out.push_back(decide(f, *rules));
    return out;
}

std::uint64_t SimulatedAdapter::installed_version() const {
    std::lock_guard lock(mu_);
    return rules_->version();
}

NftablesAdapter::NftablesAdapter(MacLookup lookup, Runner runner)
    : lookup_(std::move(lookup)), runner_(std::move(runner)) {}

std::string NftablesAdapter::render(const CompiledRuleSet& rules, const MacLookup& lookup) {
    std::ostringstream s;
    // Declaring then deleting makes the delete valid on a fresh host.
    s << "table inet hearth {}\n"
      << "delete table inet hearth\n"
      << "table inet hearth {\n"
      << "  chain forward {\n"
      << "    type filter hook forward priority 0; policy accept;\n";
    for (const auto& e : rules.entries()) {
        std::string v4, v6;
        for (const auto& p : e.prefixes) {
            auto& set = p.network().is_v4() ? v4 : v6;
            set += (set.empty() ? "" : ", ") + p.to_string();
        }
        std::string mac;
        if (e.device_id) {
            auto m = lookup(*e.device_id);
            if (!m) throw AdapterError("no hardware address known for device " + *e.device_id);
            mac = m->to_string();
        }
        const std::string tag = " comment \"directive " + std::to_string(e.directive_id) + "\"\n";
        for (const auto& [family, set] : {std::pair{"ip", v4}, std::pair{"ip6", v6}}) {
            if (set.empty()) continue;
            if (e.device_id) {
                s << "    ether saddr " << mac << " " << family << " daddr { " << set << " } drop" << tag;
            } else {
                s << "    " << family << " daddr { " << set << " } drop" << tag;
                s << "    " << family << " saddr { " << set << " } drop" << tag;
            }
        }
    }
    s << "  }\n}\n";
    return s.str();
}

int NftablesAdapter::run_nft(const std::string& script) {
    char path[] = "/tmp/hearth-nft-XXXXXX";
    int fd = ::mkstemp(path);
    if (fd < 0) return -1;
    FILE* f = ::fdopen(fd, "w");
    if (!f) {
        ::close(fd);
        return -1;
    }
    std::fwrite(script.data(), 1, script.size(), f);
    std::fclose(f);
    int rc = std::system((std::string("nft -f ") + path + " 2>/dev/null").c_str());
    std::remove(path);
    return rc;
}

void NftablesAdapter::install(std::shared_ptr<const CompiledRuleSet> rules) {
    const auto script = render(*rules, lookup_);
    if (int rc = runner_(script); rc != 0) throw AdapterError("nft exited with status " + std::to_string(rc));
}

Guard::Guard(const Resolver& resolver, const DeviceRegistry& devices) : resolver_(resolver), devices_(devices) {}

std::string Guard::device_label(const std::optional<std::string>& device_id) const {
    if (!device_id) return "all devices";
    auto d = devices_.find(*device_id);
    return d ? d->friendly_name : *device_id;
}

void Guard::validate_locked(const FirewallDirective& d) const {
    if (d.device_id && !devices_.find(*d.device_id))
        throw ValidationError("device", "unknown device '" + *d.device_id + "'");
    switch (d.scope.kind) {
        case ScopeKind::Company:
            if (!resolver_.is_known_company(d.scope.name))
                throw ValidationError("company", "unknown company '" + d.scope.name + "'");
            break;
        case ScopeKind::Group: {
            GroupResult g;
            try {
                g = resolver_.corporate_group(d.scope.name);
            } catch (const GroupCycleError& e) {
                throw ValidationError("company", e.what());
            }
            if (g.unknown) throw ValidationError("company", "unknown company '" + d.scope.name + "'");
            if (g.root != d.scope.name)
                throw ValidationError("company", "'" + d.scope.name + "' is owned by '" + g.root + "'");
            break;
        }
        case ScopeKind::Blocklist:
            if (!blocklists_.count(d.scope.name))
                throw ValidationError("scope", "unknown blocklist '" + d.scope.name + "'");
            break;
    }
}

FirewallDirective Guard::create_directive(const std::optional<std::string>& device_id, CompanyScope scope,
                                          const StageConfig& stage, std::int64_t now_ms) {
    require(stage, Feature::Controls);
    if (scope.kind == ScopeKind::Group) {
        // Accept any member name; the directive is stored against the root.
        try {
            auto g = resolver_.corporate_group(scope.name);
            if (!g.unknown) scope.name = g.root;
        } catch (const GroupCycleError& e) {
            throw ValidationError("company", e.what());
        }
    }
    FirewallDirective d;
    d.device_id = device_id;
    d.scope = std::move(scope);
    d.state = DirectiveState::Disabled;
    d.created_at_ms = now_ms;
    d.label = render_label(device_label(device_id), d.scope);

    std::lock_guard lock(mu_);
    validate_locked(d);
    for (const auto& [id, other] : directives_)
        if (other.device_id == d.device_id && other.scope == d.scope)
            throw ValidationError("scope", "directive " + std::to_string(id) + " already covers this device and scope");
    d.id = next_id_++;
    directives_.emplace(d.id, d);
    ++directive_revision_;
    return d;
}

FirewallDirective Guard::set_state(std::uint64_t id, DirectiveState state, const StageConfig& stage) {
    require(stage, Feature::Controls);
    std::lock_guard lock(mu_);
    auto it = directives_.find(id);
    if (it == directives_.end()) throw NotFoundError("no directive " + std::to_string(id));
    if (it->second.state != state) {
        it->second.state = state;
        ++directive_revision_;
    }
    auto d = it->second;
    d.label = render_label(device_label(d.device_id), d.scope);
    return d;
}

std::vector<FirewallDirective> Guard::directives() const {
    std::vector<FirewallDirective> out;
    {
        std::lock_guard lock(mu_);
        for (const auto& [_, d] : directives_) out.push_back(d);
    }
    // Device names can change after creation.
    for (auto& d : out) d.label = render_label(device_label(d.device_id), d.scope);
    return out;
}

std::optional<FirewallDirective> Guard::find(std::uint64_t id) const {
    std::optional<FirewallDirective> d;
    {
        std::lock_guard lock(mu_);
        if (auto it = directives_.find(id); it != directives_.end()) d = it->second;
    }
    if (d) d->label = render_label(device_label(d->device_id), d->scope);
    return d;
}

void Guard::restore(const std::vector<FirewallDirective>& directives) {
    std::lock_guard lock(mu_);
    directives_.clear();
    next_id_ = 1;
    for (const auto& d : directives) {
        directives_[d.id] = d;
        next_id_ = std::max(next_id_, d.id + 1);
    }
    ++directive_revision_;
}

void Guard::put_blocklist(Blocklist list) {
    if (list.id.empty()) throw ValidationError("id", "blocklist id is empty");
    if (list.enabled && list.empty()) throw ValidationError("blocklist", "enabled blocklist '" + list.id + "' is empty");
    std::lock_guard lock(mu_);
    blocklists_[list.id] = std::move(list);
    ++directive_revision_;
}

std::vector<Blocklist> Guard::blocklists() const {
    std::lock_guard lock(mu_);
    std::vector<Blocklist> out;
    for (const auto& [_, b] : blocklists_) out.push_back(b);
    return out;
}

std::optional<Blocklist> Guard::find_blocklist(std::string_view id) const {
    std::lock_guard lock(mu_);
    if (auto it = blocklists_.find(id); it != blocklists_.end()) return it->second;
    return std::nullopt;
}

std::set<std::string, std::less<>> Guard::scope_companies(const CompanyScope& scope) const {
    std::set<std::string, std::less<>> out;
    switch (scope.kind) {
        case ScopeKind::Company: out.insert(scope.name); break;
        case ScopeKind::Group:
            for (auto& m : resolver_.group_members(scope.name)) out.insert(std::move(m));
            break;
        case ScopeKind::Blocklist: {
            std::lock_guard lock(mu_);
            auto it = blocklists_.find(scope.name);
            if (it != blocklists_.end() && it->second.enabled) out.insert(it->second.companies.begin(), it->second.companies.end());
            break;
        }
    }
    return out;
}

std::vector<Prefix> Guard::scope_prefixes(const CompanyScope& scope, const std::vector<Attribution>& attrs) const {
    auto prefixes = covered_prefixes(attrs, scope_companies(scope));
    if (scope.kind == ScopeKind::Blocklist) {
        std::lock_guard lock(mu_);
        auto it = blocklists_.find(scope.name);
        if (it != blocklists_.end() && it->second.enabled) {
            prefixes.insert(prefixes.end(), it->second.prefixes.begin(), it->second.prefixes.end());
            prefixes = minimise(std::move(prefixes));
        }
    }
    return prefixes;
}

std::vector<RuleEntry> Guard::compile_entries(const std::vector<FirewallDirective>& directives,
                                              std::vector<std::uint64_t>& inert) const {
    const auto attrs = resolver_.attributions();
    std::vector<const FirewallDirective*> order;
    for (const auto& d : directives) order.push_back(&d);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });

    std::vector<RuleEntry> entries;
    for (const auto* d : order) {
        if (d->state != DirectiveState::Enabled) continue;
        std::vector<Prefix> prefixes;
        try {
            prefixes = scope_prefixes(d->scope, attrs);
        } catch (const GroupCycleError&) {
            // A cyclic group has no well-defined members.
        }
        if (prefixes.empty()) {
            inert.push_back(d->id);
            continue;
        }
        entries.push_back({d->id, d->device_id, std::move(prefixes)});
    }
    return entries;
}

std::shared_ptr<const CompiledRuleSet> Guard::compile(std::int64_t now_ms) {
    std::vector<FirewallDirective> snapshot;
    std::uint64_t revision;
    {
        std::lock_guard lock(mu_);
        for (const auto& [_, d] : directives_) snapshot.push_back(d);
        revision = directive_revision_;
    }
    std::lock_guard lock(compile_mu_);
    const auto generation = resolver_.generation();
    std::vector<std::uint64_t> inert;
    auto entries = compile_entries(snapshot, inert);
    auto rules = std::make_shared<const CompiledRuleSet>(++version_, now_ms, std::move(entries), std::move(inert),
                                                         generation);
    compiled_revisions_[rules->version()] = revision;
    return rules;
}

std::shared_ptr<const CompiledRuleSet> Guard::compile(const std::vector<FirewallDirective>& directives,
                                                      std::int64_t now_ms) {
    std::set<std::uint64_t> ids;
    for (const auto& d : directives)
        if (!ids.insert(d.id).second) throw ValidationError("id", "duplicate directive id " + std::to_string(d.id));
    std::lock_guard lock(compile_mu_);
    const auto generation = resolver_.generation();
    std::vector<std::uint64_t> inert;
    auto entries = compile_entries(directives, inert);
    return std::make_shared<const CompiledRuleSet>(++version_, now_ms, std::move(entries), std::move(inert),
                                                   generation);
}

void Guard::apply(std::shared_ptr<const CompiledRuleSet> rules, EnforcementAdapter& adapter) {
    if (!rules) throw std::invalid_argument("null rule set");
    std::lock_guard lock(compile_mu_);
    adapter.install(rules);
    if (auto it = compiled_revisions_.find(rules->version()); it != compiled_revisions_.end())
        active_revision_ = it->second;
    compiled_revisions_.erase(compiled_revisions_.begin(), compiled_revisions_.upper_bound(rules->version()));
    std::lock_guard swap(active_mu_);
    active_ = std::move(rules);
}

std::shared_ptr<const CompiledRuleSet> Guard::refresh(EnforcementAdapter& adapter, std::int64_t now_ms) {
    std::uint64_t revision;
    {
        std::lock_guard lock(mu_);
        revision = directive_revision_;
    }
    {
        std::lock_guard lock(compile_mu_);
        if (revision == active_revision_ && active()->resolver_generation() == resolver_.generation()) return nullptr;
    }
    auto rules = compile(now_ms);
    apply(rules, adapter);
    return rules;
}

std::shared_ptr<const CompiledRuleSet> Guard::active() const {
    std::lock_guard lock(active_mu_);
    return active_;
}

Verdict Guard::decide(const FlowRecord& flow) const { return hearth::decide(flow, *active()); }

BlockImpactPreview Guard::preview_impact(const FirewallDirective& directive, TimeWindow window,
                                         const std::vector<AttributedFlow>& flows) const {
    auto enabled = directive;
    enabled.state = DirectiveState::Enabled;
    std::vector<std::uint64_t> inert;
    CompiledRuleSet rules(0, 0, compile_entries({enabled}, inert), std::move(inert));

    BlockImpactPreview p;
    p.directive_id = directive.id;
    p.window = window;
    std::set<std::string> companies;
    for (const auto& af : flows) {
        if (!window.contains(af.flow.window_start_ms)) continue;
        p.window_bytes += af.flow.byte_count;
        ++p.window_flows;
        if (hearth::decide(af.flow, rules) != Verdict::Block) continue;
        p.matched_bytes += af.flow.byte_count;
        ++p.matched_flows;
        companies.insert(af.company);
        auto& dev = p.per_device[af.flow.device_id];
        dev.matched_bytes += af.flow.byte_count;
        ++dev.matched_flows;
    }
    p.affected_companies.assign(companies.begin(), companies.end());
    return p;
}

std::vector<Suggestion> Guard::suggest_similar(const FirewallDirective& directive,
                                               const std::vector<AttributedFlow>& recent) const {
    if (directive.scope.kind != ScopeKind::Company)
        throw ValidationError("scope", "suggestions need a directive on a single company");
    const std::string& target = directive.scope.name;

    // Companies already blocked for every device this directive covers.
    std::set<std::string, std::less<>> blocked{target};
    for (const auto& d : directives()) {
        if (d.state != DirectiveState::Enabled) continue;
        if (d.device_id && d.device_id != directive.device_id) continue;
        try {
            auto s = scope_companies(d.scope);
            blocked.insert(s.begin(), s.end());
        } catch (const GroupCycleError&) {
        }
    }

    std::map<std::string, std::uint64_t> bytes;
    std::map<std::string, std::string> jurisdiction;
    for (const auto& af : recent) {
        if (directive.device_id && af.flow.device_id != *directive.device_id) continue;
        if (af.company == kUnknownCompany) continue;
        bytes[af.company] += af.flow.byte_count;
        jurisdiction.emplace(af.company, af.jurisdiction);
    }

    auto rank = [](std::vector<Suggestion>& v) {
        std::sort(v.begin(), v.end(), [](const Suggestion& a, const Suggestion& b) {
            if (a.bytes != b.bytes) return a.bytes > b.bytes;
            return a.company < b.company;
        });
    };

    std::vector<Suggestion> group;
    std::set<std::string> taken;
    try {
        auto root = resolver_.corporate_group(target);
        if (!root.unknown) {
            for (const auto& m : resolver_.group_members(root.root)) {
                if (blocked.count(m)) continue;
                auto it = bytes.find(m);
                group.push_back({m, SuggestionReason::SameGroup, it == bytes.end() ? 0 : it->second});
                taken.insert(m);
            }
        }
    } catch (const GroupCycleError&) {
    }
    rank(group);

    std::string home;
    if (auto info = resolver_.company_info(target)) home = info->jurisdiction;
    std::vector<Suggestion> peers;
    if (!home.empty() && home != kUnknownJurisdiction) {
        for (const auto& [company, b] : bytes) {
            if (blocked.count(company) || taken.count(company) || b == 0) continue;
            if (jurisdiction[company] == home) peers.push_back({company, SuggestionReason::SameJurisdiction, b});
        }
    }
    rank(peers);
    group.insert(group.end(), peers.begin(), peers.end());
    return group;
}

std::string Guard::export_directives() const {
    Json list = Json::array();
    for (const auto& d : directives()) list.push_back(to_json(d));
    return Json{{"schema", "hearth.directives"}, {"version", 1}, {"directives", std::move(list)}}.dump();
}

std::size_t Guard::import_directives(std::string_view json, const StageConfig& stage) {
    require(stage, Feature::Controls);
    Json doc;
    try {
        doc = Json::parse(json);
    } catch (const Json::parse_error& e) {
        throw ValidationError("body", std::string("malformed JSON: ") + e.what());
    }
    if (require_string(doc, "schema") != "hearth.directives")
        throw ValidationError("schema", "not a directive export");
    if (require_int(doc, "version") != 1) throw ValidationError("version", "unsupported directive export version");
    const auto& list = require_field(doc, "directives");
    if (!list.is_array()) throw ValidationError("directives", "directives must be an array");
    std::vector<FirewallDirective> incoming;
    for (const auto& j : list) incoming.push_back(directive_from_json(j));

    std::lock_guard lock(mu_);
    std::set<std::uint64_t> ids;
    for (auto& d : incoming) {
        if (directives_.count(d.id) || !ids.insert(d.id).second)
            throw ValidationError("id", "directive id " + std::to_string(d.id) + " already exists");
        validate_locked(d);
    }
    for (auto& d : incoming) {
        d.label = render_label(device_label(d.device_id), d.scope);
        next_id_ = std::max(next_id_, d.id + 1);
        directives_.emplace(d.id, std::move(d));
    }
    ++directive_revision_;
    return incoming.size();
}

}  // namespace hearth
