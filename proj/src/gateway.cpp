#include "hearth/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "hearth/codec.hpp"
#include "hearth/errors.hpp"

namespace hearth {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kBatchSize = 2048;
constexpr std::int64_t kRetentionEveryMs = 3'600'000;

std::string default_data_dir(const char* sub) {
#ifdef HEARTH_DEFAULT_DATA_DIR
    fs::path p = fs::path(HEARTH_DEFAULT_DATA_DIR) / sub;
    if (fs::is_directory(p)) return p.string();
#endif
    (void)sub;
    return {};
}

int parse_port(const std::string& s, const char* field) {
    try {
        std::size_t used = 0;
        int v = std::stoi(s, &used);
        if (used == s.size() && v >= 0 && v <= 65535) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError(field, std::string(field) + " must be a port number");
}

int parse_stage(const std::string& s, const char* field) {
    if (s == "1" || s == "2" || s == "3") return s[0] - '0';
    throw ValidationError(field, std::string(field) + " must be 1, 2 or 3");
}

std::string string_key(const Json& j, const char* key) {
    if (!j[key].is_string()) throw ValidationError(key, std::string("config key '") + key + "' must be a string");
    return j[key].get<std::string>();
}

std::int64_t int_key(const Json& j, const char* key) {
    if (!j[key].is_number_integer() || j[key].get<std::int64_t>() <= 0)
        throw ValidationError(key, std::string("config key '") + key + "' must be a positive integer");
    return j[key].get<std::int64_t>();
}

bool event_in_scope(const Event& e, const RedactionScope& scope) {
    const auto& d = e.data;
    auto str = [&](const char* k) -> std::string {
        auto it = d.find(k);
        return it != d.end() && it->is_string() ? it->get<std::string>() : std::string();
    };
    switch (scope.kind) {
        case RedactionKind::Device: return str("device_id") == scope.value;
        case RedactionKind::Company:
            if (str("company") == scope.value) return true;
            return d.contains("company") && d["company"].is_object() && d["company"].value("name", "") == scope.value;
        case RedactionKind::TimeRange:
            for (const char* k : {"bucket_start_ms", "window_start_ms"})
                if (d.contains(k) && d[k].is_number_integer() && scope.range.contains(d[k].get<std::int64_t>()))
                    return true;
            return false;
    }
    return false;
}

GatewayConfig salted(GatewayConfig c) {
    if (c.salt.empty()) throw ValidationError("salt", "HEARTH_SALT is not set");
    return c;
}

}  // namespace

std::optional<std::string> process_env(const char* name) {
    const char* v = std::getenv(name);
    if (!v) return std::nullopt;
    return std::string(v);
}

GatewayConfig load_config(const std::string& path, const EnvLookup& env) {
    GatewayConfig c;
    c.curriculum_dir = default_data_dir("curriculum");
    c.blocklist_dir = default_data_dir("blocklists");
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ValidationError("config", "cannot read config file " + path);
        Json j;
        try {
            j = Json::parse(in);
        } catch (const Json::parse_error& e) {
            throw ValidationError("config", std::string("config file is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw ValidationError("config", "config file must hold a JSON object");
        for (const auto& [key, value] : j.items()) {
            if (key == "salt")
                throw ValidationError("salt", "the salt is read from HEARTH_SALT only and must not be stored in a file");
            if (key == "bind") {
                c.bind = string_key(j, "bind");
            } else if (key == "port") {
                if (!value.is_number_integer()) throw ValidationError("port", "config key 'port' must be an integer");
                c.port = parse_port(std::to_string(value.get<std::int64_t>()), "port");
            } else if (key == "db_path") {
                c.db_path = string_key(j, "db_path");
            } else if (key == "fixtures") {
                c.fixtures_path = string_key(j, "fixtures");
            } else if (key == "curriculum_dir") {
                c.curriculum_dir = string_key(j, "curriculum_dir");
            } else if (key == "blocklist_dir") {
                c.blocklist_dir = string_key(j, "blocklist_dir");
            } else if (key == "static_dir") {
                c.static_dir = string_key(j, "static_dir");
            } else if (key == "home_region") {
                c.home_region = string_key(j, "home_region");
            } else if (key == "stage") {
                if (!value.is_number_integer()) throw ValidationError("stage", "config key 'stage' must be 1, 2 or 3");
                c.stage = parse_stage(std::to_string(value.get<std::int64_t>()), "stage");
            } else if (key == "admin_token") {
                c.admin_token = string_key(j, "admin_token");
            } else if (key == "adapter") {
                c.adapter = string_key(j, "adapter");
            } else if (key == "coalesce_window_ms") {
                c.coalesce_window_ms = int_key(j, "coalesce_window_ms");
            } else if (key == "retention_days") {
                c.retention_ms = int_key(j, "retention_days") * kDay;
            } else {
                throw ValidationError(key, "unknown config key '" + key + "'");
            }
        }
    }
    if (auto v = env("HEARTH_PORT")) c.port = parse_port(*v, "HEARTH_PORT");
    if (auto v = env("HEARTH_BIND")) c.bind = *v;
    if (auto v = env("HEARTH_DB")) c.db_path = *v;
    if (auto v = env("HEARTH_SALT")) c.salt = *v;
    if (auto v = env("HEARTH_FIXTURES")) c.fixtures_path = *v;
    if (auto v = env("HEARTH_HOME_REGION")) c.home_region = *v;
    if (auto v = env("HEARTH_STAGE")) c.stage = parse_stage(*v, "HEARTH_STAGE");
    if (auto v = env("HEARTH_ADMIN_TOKEN")) c.admin_token = *v;
    if (c.adapter != "simulated" && c.adapter != "nftables")
        throw ValidationError("adapter", "adapter must be 'simulated' or 'nftables'");
    try {
        parse_home_region(c.home_region);
    } catch (const std::invalid_argument& e) {
        throw ValidationError("home_region", e.what());
    }
    return c;
}

Gateway::Gateway(GatewayConfig config, Clock clock, std::shared_ptr<ResolutionProvider> provider,
                 std::unique_ptr<EnforcementAdapter> adapter)
    : config_(salted(std::move(config))),
      clock_(std::move(clock)),
      home_region_(parse_home_region(config_.home_region)),
      store_(std::make_unique<Store>(config_.db_path, clock_)),
      resolver_(ResolverOptions{}, std::move(provider)),
      registry_(config_.salt),
      exposure_(ExposureOptions{}),
      guard_(resolver_, registry_),
      tutor_(config_.curriculum_dir.empty() ? std::vector<CurriculumModule>{} : load_curriculum(config_.curriculum_dir)),
      adapter_(std::move(adapter)) {
    if (!adapter_) {
        if (config_.adapter == "nftables") {
            adapter_ = std::make_unique<NftablesAdapter>([this](std::string_view id) { return registry_.mac_of(id); });
        } else {
            adapter_ = std::make_unique<SimulatedAdapter>();
        }
    }
    restore();
}

Gateway::~Gateway() { events_.close(); }

void Gateway::restore() {
    const auto t = clock_();
    if (auto s = store_->stage()) {
        stage_ = *s;
    } else {
        stage_.started_ms[0] = t;
    }
    if (config_.stage && *config_.stage != stage_.stage) stage_ = transition(stage_, *config_.stage, t, true);
    store_->put_stage(stage_);

    for (const auto& d : store_->devices()) {
        registry_.restore(d);
        persisted_devices_[d.device_id] = d;
    }
    if (!config_.fixtures_path.empty()) resolver_.load_fixtures(config_.fixtures_path);
    resolver_.restore_cache(store_->cache());

    if (!config_.blocklist_dir.empty() && fs::is_directory(config_.blocklist_dir)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(config_.blocklist_dir))
            if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files)
            guard_.put_blocklist(load_blocklist(f.string(), f.stem().string(), BlocklistSource::Curated));
    }
    for (auto& b : store_->blocklists()) guard_.put_blocklist(std::move(b));
    guard_.restore(store_->directives());

    for (const auto& [id, at] : store_->completions()) {
        if (tutor_.find(id)) tutor_.restore_completion(id, at);
    }
    exposure_.restore(store_->buckets());

    resolver_.on_resolved([this](const IpAddress& ip, const CompanyRecord& r) {
        events_.publish("resolved", Json{{"ip", ip.to_string()}, {"company", to_json(r)}});
        std::lock_guard lock(cache_mu_);
        pending_cache_.push_back({ip, r});
    });

    auto rules = guard_.compile(t);
    guard_.apply(rules, *adapter_);
    last_due_ = tutor_.schedule(stage_, t);
}

IngestResult Gateway::ingest(std::vector<FlowRecord> records) {
    IngestResult out;
    {
        std::lock_guard lock(ingest_mu_);
        const auto t = clock_();
        std::vector<AttributedFlow> flows;
        std::vector<CompanyRecord> companies;
        flows.reserve(records.size());
        companies.reserve(records.size());
        for (auto& r : records) {
            CompanyRecord c;
            if (r.locality == Locality::External) {
                c = resolver_.resolve(r.dst_ip, t);
            } else {
                c.name.clear();
                c.jurisdiction.clear();
            }
            r.id = 0;
            flows.push_back({std::move(r), c.name, c.jurisdiction});
            companies.push_back(std::move(c));
        }

        std::vector<CacheEntry> cache;
        {
            std::lock_guard cl(cache_mu_);
            cache.swap(pending_cache_);
        }
        try {
            if (!cache.empty()) store_->put_cache(cache);
            out.flows_refused = store_->persist_flows(flows);
        } catch (const StorageFullError& e) {
            if (!storage_full_.exchange(true))
                events_.publish("storage", Json{{"full", true}, {"message", e.what()}});
            throw;
        }
        if (storage_full_.exchange(false)) events_.publish("storage", Json{{"full", false}, {"message", ""}});
        out.flows_ingested = flows.size() - out.flows_refused;

        std::map<std::tuple<std::int64_t, std::string, std::string>, ExposureBucket> touched;
        for (std::size_t i = 0; i < flows.size(); ++i) {
            if (flows[i].flow.id == 0) continue;
            if (auto b = exposure_.add_flow(flows[i].flow, companies[i]))
                touched[{b->bucket_start_ms, b->device_id, b->company}] = *b;
        }
        std::vector<ExposureBucket> buckets;
        buckets.reserve(touched.size());
        for (auto& [_, b] : touched) buckets.push_back(std::move(b));
        store_->put_buckets(buckets);
        for (const auto& b : buckets) events_.publish("bucket", to_json(b));
        persist_devices_locked();
    }
    refresh_rules();
    publish_due();
    return out;
}

IngestResult Gateway::replay(const std::string& pcap_path, const std::vector<DeviceMapEntry>& map_in,
                             double speed) {
    // A name given through the API outranks the one in a device map.
    std::vector<DeviceMapEntry> device_map;
    for (const auto& e : map_in) {
        auto known = registry_.find(hash_device_id(e.mac, config_.salt));
        if (known && known->friendly_name.rfind("unrecognised-", 0) != 0) continue;
        device_map.push_back(e);
    }
    IngestOptions options;
    options.coalesce_window_ms = config_.coalesce_window_ms;
    if (speed > 0) {
        std::optional<std::int64_t> first_us;
        auto start = std::chrono::steady_clock::now();
        options.pacer = [first_us, start, speed](std::int64_t ts_us) mutable {
            if (!first_us) first_us = ts_us;
            auto offset = std::chrono::microseconds(static_cast<std::int64_t>(static_cast<double>(ts_us - *first_us) / speed));
            std::this_thread::sleep_until(start + offset);
        };
    }
    IngestResult total;
    std::vector<FlowRecord> batch;
    // Paced replays hand each record over as soon as its window closes.
    const std::size_t limit = speed > 0 ? 1 : kBatchSize;
    auto flush = [&] {
        if (batch.empty()) return;
        auto r = ingest(std::move(batch));
        batch.clear();
        total.flows_ingested += r.flows_ingested;
        total.flows_refused += r.flows_refused;
    };
    total.stats = ingest_pcap(pcap_path, registry_, device_map, options, [&](FlowRecord&& r) {
        batch.push_back(std::move(r));
        if (batch.size() >= limit) flush();
    });
    flush();
    {
        // Device-map entries are registered even when no packet arrives.
        std::lock_guard lock(ingest_mu_);
        persist_devices_locked();
    }
    return total;
}

void Gateway::persist_devices_locked() {
    for (const auto& d : registry_.devices()) {
        auto it = persisted_devices_.find(d.device_id);
        if (it != persisted_devices_.end() && it->second == d) continue;
        store_->put_device(d);
        persisted_devices_[d.device_id] = d;
        events_.publish("device", to_json(d));
    }
}

std::size_t Gateway::load_fixtures_text(std::string_view text) {
    auto n = resolver_.load_fixtures_text(text);
    refresh_rules();
    return n;
}

std::vector<Device> Gateway::devices() const { return registry_.devices(); }

Device Gateway::rename_device(const std::string& device_id, const std::string& name) {
    std::lock_guard lock(ingest_mu_);
    Device d;
    try {
        d = registry_.rename(device_id, name);
    } catch (const DeviceError& e) {
        throw ValidationError("name", e.what());
    }
    store_->put_device(d);
    persisted_devices_[d.device_id] = d;
    events_.publish("device", to_json(d));
    return d;
}

StageConfig Gateway::stage() const {
    std::lock_guard lock(state_mu_);
    return stage_;
}

StageConfig Gateway::set_stage(int target, bool allow_regression) {
    StageConfig s;
    {
        std::lock_guard lock(state_mu_);
        auto next = transition(stage_, target, clock_(), allow_regression);
        store_->put_stage(next);
        stage_ = next;
        s = stage_;
    }
    events_.publish("stage", to_json(s));
    publish_due();
    return s;
}

FirewallDirective Gateway::create_directive(const DirectiveSpec& spec) {
    auto d = guard_.create_directive(spec.device_id, spec.scope, stage(), clock_());
    store_->put_directive(d);
    events_.publish("directive", to_json(d));
    refresh_rules();
    return d;
}

FirewallDirective Gateway::set_directive_state(std::uint64_t id, DirectiveState state) {
    auto d = guard_.set_state(id, state, stage());
    store_->put_directive(d);
    events_.publish("directive", to_json(d));
    refresh_rules();
    return d;
}

std::size_t Gateway::import_directives(std::string_view json) {
    auto n = guard_.import_directives(json, stage());
    for (const auto& d : guard_.directives()) {
        store_->put_directive(d);
        events_.publish("directive", to_json(d));
    }
    refresh_rules();
    return n;
}

FirewallDirective Gateway::adhoc(const DirectiveSpec& spec) const {
    if (spec.scope.name.empty()) throw ValidationError("scope", "scope name is empty");
    if (spec.device_id && !registry_.find(*spec.device_id))
        throw ValidationError("device", "unknown device " + *spec.device_id);
    switch (spec.scope.kind) {
        case ScopeKind::Company:
        case ScopeKind::Group:
            if (!resolver_.is_known_company(spec.scope.name))
                throw ValidationError("company", "unknown company " + spec.scope.name);
            break;
        case ScopeKind::Blocklist:
            if (!guard_.find_blocklist(spec.scope.name))
                throw ValidationError("scope", "unknown blocklist " + spec.scope.name);
            break;
    }
    FirewallDirective d;
    d.device_id = spec.device_id;
    d.scope = spec.scope;
    d.state = DirectiveState::Enabled;
    d.created_at_ms = clock_();
    return d;
}

BlockImpactPreview Gateway::preview(const DirectiveSpec& spec, TimeWindow window) const {
    require(stage(), Feature::Controls);
    auto d = adhoc(spec);
    FlowFilter f;
    f.window = window;
    return guard_.preview_impact(d, window, store_->query_flows(f));
}

BlockImpactPreview Gateway::preview(std::uint64_t directive_id, TimeWindow window) const {
    require(stage(), Feature::Controls);
    auto d = guard_.find(directive_id);
    if (!d) throw NotFoundError("unknown directive " + std::to_string(directive_id));
    FlowFilter f;
    f.window = window;
    return guard_.preview_impact(*d, window, store_->query_flows(f));
}

std::vector<Suggestion> Gateway::suggestions(std::uint64_t directive_id, TimeWindow window) const {
    require(stage(), Feature::Controls);
    auto d = guard_.find(directive_id);
    if (!d) throw NotFoundError("unknown directive " + std::to_string(directive_id));
    FlowFilter f;
    f.window = window;
    return guard_.suggest_similar(*d, store_->query_flows(f));
}

std::vector<std::string> Gateway::curriculum_due() const {
    std::lock_guard lock(state_mu_);
    return tutor_.schedule(stage_, clock_());
}

RenderedModule Gateway::render_module(const std::string& id, TimeWindow window) const {
    require(stage(), Feature::Curriculum);
    FlowFilter f;
    f.window = window;
    auto flows = store_->query_flows(f);
    SlotContext ctx{exposure_, flows, window,
                    [this](const std::string& device_id) {
                        auto d = registry_.find(device_id);
                        return d ? d->friendly_name : device_id;
                    },
                    home_region_};
    std::lock_guard lock(state_mu_);
    return tutor_.render(id, ctx);
}

CurriculumModule Gateway::complete_module(const std::string& id) {
    CurriculumModule m;
    {
        std::lock_guard lock(state_mu_);
        m = tutor_.mark_complete(id, stage_, clock_());
        store_->put_completion(m.id, *m.completed_at_ms);
    }
    publish_due();
    return m;
}

RedactionRequest Gateway::redact(const RedactionScope& scope) {
    RedactionRequest req;
    {
        std::lock_guard lock(ingest_mu_);
        req = store_->redact(scope, &exposure_, exposure_.storage_width_ms());
        if (scope.kind == RedactionKind::Device) {
            registry_.forget(scope.value);
            persisted_devices_.erase(scope.value);
        }
        if (scope.kind == RedactionKind::Company) {
            resolver_.drop_cached(scope.value);
            std::lock_guard cl(cache_mu_);
            std::erase_if(pending_cache_, [&](const CacheEntry& e) { return e.record.name == scope.value; });
        }
        events_.purge([&](const Event& e) { return event_in_scope(e, scope); });
    }
    events_.publish("redaction", to_json(req));
    refresh_rules();
    return req;
}

void Gateway::refresh_rules() {
    try {
        if (auto rules = guard_.refresh(*adapter_, clock_())) publish_rules(rules);
    } catch (const AdapterError& e) {
        // The previous rule set stays active; the next refresh retries.
        events_.publish("enforcement", Json{{"ok", false}, {"adapter", adapter_->name()}, {"message", e.what()}});
    }
}

void Gateway::publish_rules(const std::shared_ptr<const CompiledRuleSet>& rules) {
    events_.publish("ruleset", Json{{"version", rules->version()},
                                    {"generated_at_ms", rules->generated_at_ms()},
                                    {"entries", rules->entries().size()},
                                    {"inert", rules->inert()}});
}

void Gateway::publish_due() {
    std::lock_guard lock(state_mu_);
    auto due = tutor_.schedule(stage_, clock_());
    if (due == last_due_) return;
    last_due_ = due;
    events_.publish("curriculum_due", Json{{"due", due}});
}

void Gateway::tick() {
    const auto t = clock_();
    if (t - last_retention_ms_ >= kRetentionEveryMs) {
        std::lock_guard lock(ingest_mu_);
        store_->retention_sweep(config_.retention_ms);
        last_retention_ms_ = t;
    }
    refresh_rules();
    publish_due();
}

}  // namespace hearth
