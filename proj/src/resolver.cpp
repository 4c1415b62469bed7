#include "hearth/resolver.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace hearth {

std::string_view to_string(Threat t) noexcept {
    switch (t) {
        case Threat::None: return "NONE";
        case Threat::Suspicious: return "SUSPICIOUS";
        case Threat::Malicious: return "MALICIOUS";
        case Threat::Unknown: return "UNKNOWN";
    }
    return "UNKNOWN";
}

std::string_view to_string(RecordSource s) noexcept {
    switch (s) {
        case RecordSource::Fixture: return "FIXTURE";
        case RecordSource::Provider: return "PROVIDER";
        case RecordSource::Manual: return "MANUAL";
    }
    return "FIXTURE";
}

namespace {

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && s[i] == ' ') ++i;
    return s.substr(i);
}

/// Parses `key<TAB>name<TAB>parent<TAB>jurisdiction<TAB>threat` rows; calls
/// `row(line_no, key, record)` for each data line.
template <class Row>
void parse_company_rows(std::string_view text, Row&& row) {
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    std::vector<int> bad;
    std::string first_problem;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        auto cols = split_tabs(line);
        std::string problem;
        CompanyRecord rec;
        if (cols.size() != 5) {
            problem = "expected 5 tab-separated columns";
        } else {
            rec.name = trim(cols[1]);
            std::string parent = trim(cols[2]);
            rec.jurisdiction = upper(trim(cols[3]));
            auto threat = parse_threat(trim(cols[4]));
            if (rec.name.empty()) problem = "empty company name";
            else if (parent.empty()) problem = "empty parent (use -)";
            else if (parent == rec.name) problem = "company is its own parent";
            else if (!is_valid_jurisdiction(rec.jurisdiction)) problem = "invalid jurisdiction '" + cols[3] + "'";
            else if (!threat) problem = "invalid threat '" + cols[4] + "'";
            if (problem.empty()) {
                if (parent != "-") rec.parent = parent;
                rec.threat = *threat;
                problem = row(lineno, trim(cols[0]), std::move(rec));
            }
        }
        if (!problem.empty()) {
            bad.push_back(lineno);
            if (first_problem.empty()) first_problem = "line " + std::to_string(lineno) + ": " + problem;
        }
    }
    if (!bad.empty()) throw FixtureError(first_problem, bad);
}

}  // namespace

std::optional<Threat> parse_threat(std::string_view s) noexcept {
    std::string u;
    for (char c : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (u == "NONE") return Threat::None;
    if (u == "SUSPICIOUS") return Threat::Suspicious;
    if (u == "MALICIOUS") return Threat::Malicious;
    if (u == "UNKNOWN") return Threat::Unknown;
    return std::nullopt;
}

std::optional<RecordSource> parse_record_source(std::string_view s) noexcept {
    if (s == "FIXTURE") return RecordSource::Fixture;
    if (s == "PROVIDER") return RecordSource::Provider;
    if (s == "MANUAL") return RecordSource::Manual;
    return std::nullopt;
}

bool is_valid_jurisdiction(std::string_view code) noexcept {
    if (code == kUnknownJurisdiction) return true;
    return code.size() == 2 && code[0] >= 'A' && code[0] <= 'Z' && code[1] >= 'A' && code[1] <= 'Z';
}

std::vector<FixtureEntry> parse_fixtures(std::string_view text) {
    std::vector<FixtureEntry> out;
    parse_company_rows(text, [&](int line, const std::string& key, CompanyRecord&& rec) -> std::string {
        auto prefix = Prefix::parse(key);
        if (!prefix) return "invalid CIDR '" + key + "'";
        rec.source = RecordSource::Fixture;
        out.push_back({*prefix, std::move(rec), line});
        return {};
    });

    // Equal prefixes must agree on the company; nesting is resolved by length.
    std::map<Prefix, const FixtureEntry*> seen;
    for (const auto& e : out) {
        auto [it, inserted] = seen.emplace(e.cidr, &e);
        if (!inserted && it->second->company.name != e.company.name) {
            throw FixtureError("overlapping prefix " + e.cidr.to_string() + " on lines " +
                                   std::to_string(it->second->line) + " ('" + it->second->company.name +
                                   "') and " + std::to_string(e.line) + " ('" + e.company.name + "')",
                               {it->second->line, e.line});
        }
    }
    // One parent per company name.
    std::map<std::string, const FixtureEntry*> parent_of;
    for (const auto& e : out) {
        auto [it, inserted] = parent_of.emplace(e.company.name, &e);
        if (!inserted && it->second->company.parent != e.company.parent) {
            throw FixtureError("conflicting parents for '" + e.company.name + "' on lines " +
                                   std::to_string(it->second->line) + " and " + std::to_string(e.line),
                               {it->second->line, e.line});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

void RecordedProvider::record(const IpAddress& ip, CompanyRecord response) {
    std::lock_guard lock(mu_);
    response.source = RecordSource::Provider;
    responses_[ip] = std::move(response);
}

void RecordedProvider::load(std::string_view text) {
    parse_company_rows(text, [&](int, const std::string& key, CompanyRecord&& rec) -> std::string {
        auto ip = IpAddress::parse(key);
        if (!ip) return "invalid address '" + key + "'";
        record(*ip, std::move(rec));
        return {};
    });
}

CompanyRecord RecordedProvider::lookup(const IpAddress& ip) {
    std::lock_guard lock(mu_);
    ++calls_;
    if (failing_) throw ProviderError("provider unavailable");
    auto it = responses_.find(ip);
    if (it == responses_.end()) throw ProviderError("no recorded response for " + ip.to_string());
    return it->second;
}

// ---------------------------------------------------------------------------

Resolver::Resolver(ResolverOptions options, std::shared_ptr<ResolutionProvider> provider)
    : options_(options), provider_(std::move(provider)) {}

void Resolver::set_provider(std::shared_ptr<ResolutionProvider> provider) {
    std::unique_lock lock(data_mu_);
    provider_ = std::move(provider);
}

std::size_t Resolver::load_fixtures(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FixtureError("cannot read fixture file '" + path + "'", {});
    std::stringstream ss;
    ss << in.rdbuf();
    return load_fixtures_text(ss.str());
}

std::size_t Resolver::load_fixtures_text(std::string_view text) {
    auto entries = parse_fixtures(text);
    Layer layer;
    for (const auto& e : entries) layer.trie.insert(e.cidr, e.company);
    layer.entries = std::move(entries);
    const std::size_t count = layer.entries.size();
    {
        std::unique_lock lock(data_mu_);
        fixtures_ = std::move(layer);
        rebuild_company_index_locked();
    }
    {
        // Fixture-derived answers may now be stale.
        std::lock_guard lock(cache_mu_);
        std::erase_if(cache_, [](const auto& kv) { return kv.second.source == RecordSource::Fixture; });
        ++generation_;
    }
    return count;
}

void Resolver::assign(const Prefix& prefix, CompanyRecord record) {
    record.source = RecordSource::Manual;
    {
        std::unique_lock lock(data_mu_);
        Layer rebuilt;
        for (auto& e : manual_.entries)
            if (e.cidr != prefix) rebuilt.entries.push_back(e);
        rebuilt.entries.push_back({prefix, record, 0});
        for (const auto& e : rebuilt.entries) rebuilt.trie.insert(e.cidr, e.company);
        manual_ = std::move(rebuilt);
        rebuild_company_index_locked();
    }
    std::lock_guard lock(cache_mu_);
    std::erase_if(cache_, [&](const auto& kv) { return prefix.contains(kv.first); });
    ++generation_;
}

void Resolver::rebuild_company_index_locked() {
    companies_.clear();
    parents_.clear();
    std::vector<std::string> referenced;
    auto add = [&](const CompanyRecord& r) {
        if (companies_.try_emplace(r.name, r).second) parents_[r.name] = r.parent;
        if (r.parent) referenced.push_back(*r.parent);
    };
    for (const auto& e : manual_.entries) add(e.company);
    for (const auto& e : fixtures_.entries) add(e.company);
    {
        std::lock_guard lock(cache_mu_);
        for (const auto& [_, r] : cache_)
            if (r.source == RecordSource::Provider && !r.is_unknown()) add(r);
    }
    // Parents without records of their own are group roots.
    for (const auto& p : referenced) parents_.try_emplace(p, std::nullopt);
}

CompanyRecord Resolver::lookup_uncached(const IpAddress& ip, std::int64_t now_ms) {
    std::shared_ptr<ResolutionProvider> provider;
    {
        std::shared_lock lock(data_mu_);
        const CompanyRecord* hit = manual_.trie.longest_match(ip);
        if (!hit) hit = fixtures_.trie.longest_match(ip);
        if (hit) {
            CompanyRecord r = *hit;
            r.resolved_at_ms = now_ms;
            r.ttl_ms = options_.record_ttl_ms;
            return r;
        }
        provider = provider_;
    }
    CompanyRecord r;
    r.resolved_at_ms = now_ms;
    if (!provider) {
        r.source = RecordSource::Fixture;
        r.ttl_ms = options_.failure_ttl_ms;
        return r;
    }
    try {
        r = provider->lookup(ip);
        if (r.name.empty() || !is_valid_jurisdiction(r.jurisdiction) || (r.parent && *r.parent == r.name))
            throw ProviderError("malformed provider response");
        r.source = RecordSource::Provider;
        r.resolved_at_ms = now_ms;
        r.ttl_ms = options_.record_ttl_ms;
    } catch (const std::exception&) {
        r = CompanyRecord{};
        r.source = RecordSource::Provider;
        r.resolved_at_ms = now_ms;
        r.ttl_ms = options_.failure_ttl_ms;
    }
    return r;
}

CompanyRecord Resolver::resolve(const IpAddress& ip, std::int64_t now_ms) {
    if (is_local_address(ip)) throw std::invalid_argument("resolve called with local address " + ip.to_string());

    std::promise<CompanyRecord> promise;
    std::shared_future<CompanyRecord> waiter;
    {
        std::lock_guard lock(cache_mu_);
        if (auto it = cache_.find(ip); it != cache_.end()) {
            const auto& r = it->second;
            if (now_ms >= r.resolved_at_ms && now_ms - r.resolved_at_ms < r.ttl_ms) return r;
        }
        if (auto it = inflight_.find(ip); it != inflight_.end()) {
            waiter = it->second;
        } else {
            inflight_.emplace(ip, promise.get_future().share());
        }
    }
    if (waiter.valid()) return waiter.get();

    CompanyRecord r = lookup_uncached(ip, now_ms);
    {
        std::lock_guard lock(cache_mu_);
        cache_[ip] = r;
        inflight_.erase(ip);
        if (r.source == RecordSource::Provider && !r.is_unknown()) ++generation_;
    }
    if (r.source == RecordSource::Provider && !r.is_unknown()) {
        std::unique_lock lock(data_mu_);
        if (companies_.try_emplace(r.name, r).second) parents_[r.name] = r.parent;
        if (r.parent) parents_.try_emplace(*r.parent, std::nullopt);
    }
    promise.set_value(r);
    if (on_resolved_) on_resolved_(ip, r);
    return r;
}

GroupResult Resolver::corporate_group(std::string_view company) const {
    std::shared_lock lock(data_mu_);
    auto it = parents_.find(company);
    if (it == parents_.end()) return {std::string(company), true};
    std::vector<std::string> path{std::string(company)};
    std::string at(company);
    for (;;) {
        auto p = parents_.find(at);
        if (p == parents_.end() || !p->second) return {at, false};
        const std::string& next = *p->second;
        if (std::find(path.begin(), path.end(), next) != path.end()) {
            std::string cycle;
            auto start = std::find(path.begin(), path.end(), next);
            for (auto i = start; i != path.end(); ++i) cycle += *i + " -> ";
            throw GroupCycleError("corporate parent cycle: " + cycle + next);
        }
        path.push_back(next);
        at = next;
    }
}

std::vector<std::string> Resolver::group_members(std::string_view root) const {
    std::vector<std::string> names;
    {
        std::shared_lock lock(data_mu_);
        for (const auto& [name, _] : parents_) names.push_back(name);
    }
    std::vector<std::string> out;
    for (const auto& n : names) {
        try {
            if (corporate_group(n).root == root) out.push_back(n);
        } catch (const GroupCycleError&) {
        }
    }
    return out;
}

std::vector<Prefix> Resolver::prefixes_of(std::string_view company) const {
    std::set<Prefix> out;
    {
        std::shared_lock lock(data_mu_);
        for (const auto& e : manual_.entries)
            if (e.company.name == company) out.insert(e.cidr);
        for (const auto& e : fixtures_.entries)
            if (e.company.name == company) out.insert(e.cidr);
    }
    std::lock_guard lock(cache_mu_);
    for (const auto& [ip, r] : cache_)
        if (r.source == RecordSource::Provider && r.name == company) out.insert(Prefix::host(ip));
    return {out.begin(), out.end()};
}

std::vector<Attribution> Resolver::attributions() const {
    std::vector<Attribution> out;
    {
        std::shared_lock lock(data_mu_);
        for (const auto& e : fixtures_.entries) out.push_back({e.cidr, e.company.name, 0});
        for (const auto& e : manual_.entries) out.push_back({e.cidr, e.company.name, 1});
    }
    std::lock_guard lock(cache_mu_);
    for (const auto& [ip, r] : cache_)
        if (r.source == RecordSource::Provider && !r.is_unknown()) out.push_back({Prefix::host(ip), r.name, 2});
    return out;
}

std::vector<std::string> Resolver::company_names() const {
    std::shared_lock lock(data_mu_);
    std::vector<std::string> out;
    for (const auto& [name, _] : parents_) out.push_back(name);
    return out;
}

std::optional<CompanyRecord> Resolver::company_info(std::string_view name) const {
    std::shared_lock lock(data_mu_);
    if (auto it = companies_.find(name); it != companies_.end()) return it->second;
    if (parents_.count(name)) {
        CompanyRecord r;
        r.name = std::string(name);
        return r;
    }
    return std::nullopt;
}

bool Resolver::is_known_company(std::string_view name) const {
    std::shared_lock lock(data_mu_);
    return parents_.find(name) != parents_.end();
}

std::uint64_t Resolver::generation() const noexcept {
    std::lock_guard lock(cache_mu_);
    return generation_;
}

std::vector<CacheEntry> Resolver::cache_snapshot() const {
    std::lock_guard lock(cache_mu_);
    std::vector<CacheEntry> out;
    out.reserve(cache_.size());
    for (const auto& [ip, r] : cache_) out.push_back({ip, r});
    return out;
}

void Resolver::restore_cache(const std::vector<CacheEntry>& entries) {
    {
        std::lock_guard lock(cache_mu_);
        for (const auto& e : entries) cache_[e.ip] = e.record;
        ++generation_;
    }
    std::unique_lock lock(data_mu_);
    rebuild_company_index_locked();
}

std::size_t Resolver::drop_cached(std::string_view company) {
    std::size_t n;
    {
        std::lock_guard lock(cache_mu_);
        n = std::erase_if(cache_, [&](const auto& kv) { return kv.second.name == company; });
        if (n) ++generation_;
    }
    if (n) {
        std::unique_lock lock(data_mu_);
        rebuild_company_index_locked();
    }
    return n;
}

std::size_t Resolver::fixture_count() const {
    std::shared_lock lock(data_mu_);
    return fixtures_.entries.size();
}

void Resolver::on_resolved(std::function<void(const IpAddress&, const CompanyRecord&)> cb) {
    on_resolved_ = std::move(cb);
}

}  // namespace hearth
