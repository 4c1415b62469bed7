#pragma once
// The running gateway: one object owning every module, the single-writer
// ingest pipeline and the event feed. The HTTP layer is a thin shell over it.

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hearth/events.hpp"
#include "hearth/exposure.hpp"
#include "hearth/flowcap.hpp"
#include "hearth/guard.hpp"
#include "hearth/resolver.hpp"
#include "hearth/stage.hpp"
#include "hearth/store.hpp"
#include "hearth/tutor.hpp"

namespace hearth {

struct GatewayConfig {
    std::string bind = "127.0.0.1";
    int port = 8787;
    std::string db_path = "hearth.db";
    std::string salt;  // environment only
    std::string fixtures_path;
    std::string curriculum_dir;
    std::string blocklist_dir;
    std::string static_dir;
    std::string home_region = "EU";
    std::optional<int> stage;  // forces the stage at start-up when set
    std::string admin_token;
    std::string adapter = "simulated";  // or "nftables"
    std::int64_t coalesce_window_ms = kDefaultCoalesceWindowMs;
    std::int64_t retention_ms = kDefaultRetentionMs;
};

using EnvLookup = std::function<std::optional<std::string>(const char* name)>;
std::optional<std::string> process_env(const char* name);

/// Reads the JSON config file (if `path` is non-empty), then applies
/// HEARTH_PORT, HEARTH_BIND, HEARTH_DB, HEARTH_SALT, HEARTH_FIXTURES,
/// HEARTH_HOME_REGION, HEARTH_STAGE and HEARTH_ADMIN_TOKEN. A salt in the file
/// is refused. Throws ValidationError naming the key.
GatewayConfig load_config(const std::string& path, const EnvLookup& env = process_env);

struct IngestResult {
    IngestStats stats;
    std::uint64_t flows_ingested = 0;
    std::uint64_t flows_refused = 0;  // inside a fresh redaction scope
};

/// Ad-hoc directive for previews; not stored.
struct DirectiveSpec {
    std::optional<std::string> device_id;
    CompanyScope scope;
};

class Gateway {
public:
    /// Opens the store and restores every module from it. `adapter` defaults
    /// to the one named in the config.
    explicit Gateway(GatewayConfig config, Clock clock = system_clock_ms,
                     std::shared_ptr<ResolutionProvider> provider = nullptr,
                     std::unique_ptr<EnforcementAdapter> adapter = nullptr);
    ~Gateway();
    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    const GatewayConfig& config() const noexcept { return config_; }
    std::int64_t now() const { return clock_(); }

    Resolver& resolver() noexcept { return resolver_; }
    DeviceRegistry& registry() noexcept { return registry_; }
    ExposureModel& exposure() noexcept { return exposure_; }
    Guard& guard() noexcept { return guard_; }
    Tutor& tutor() noexcept { return tutor_; }
    Store& store() noexcept { return *store_; }
    EventHub& events() noexcept { return events_; }
    EnforcementAdapter& adapter() noexcept { return *adapter_; }
    const RegionSet& home_region() const noexcept { return home_region_; }

    // Ingest. Single writer: batches are serialized with each other and with redaction.
    /// Attributes, persists and buckets `records`. Throws StorageFullError
    /// (ingest paused, nothing from this batch stored).
    IngestResult ingest(std::vector<FlowRecord> records);
    /// `speed` > 0 paces frames at that multiple of capture time; 0 is as fast as possible.
    IngestResult replay(const std::string& pcap_path, const std::vector<DeviceMapEntry>& device_map,
                        double speed = 0);
    bool storage_full() const noexcept { return storage_full_.load(); }

    std::size_t load_fixtures_text(std::string_view text);

    // Devices.
    std::vector<Device> devices() const;
    Device rename_device(const std::string& device_id, const std::string& name);

    // Stage.
    StageConfig stage() const;
    StageConfig set_stage(int target, bool allow_regression);

    // Controls (stage 3).
    FirewallDirective create_directive(const DirectiveSpec& spec);
    FirewallDirective set_directive_state(std::uint64_t id, DirectiveState state);
    std::size_t import_directives(std::string_view json);
    BlockImpactPreview preview(const DirectiveSpec& spec, TimeWindow window) const;
    BlockImpactPreview preview(std::uint64_t directive_id, TimeWindow window) const;
    std::vector<Suggestion> suggestions(std::uint64_t directive_id, TimeWindow window) const;

    // Curriculum (stage 2).
    std::vector<std::string> curriculum_due() const;
    RenderedModule render_module(const std::string& id, TimeWindow window) const;
    CurriculumModule complete_module(const std::string& id);

    // Redaction (any stage).
    RedactionRequest redact(const RedactionScope& scope);

    /// Periodic upkeep: retention sweep, rule refresh, curriculum-due notices.
    void tick();

private:
    void restore();
    void persist_devices_locked();
    void publish_due();
    void publish_rules(const std::shared_ptr<const CompiledRuleSet>& rules);
    void refresh_rules();
    void purge_events(const RedactionScope& scope);
    FirewallDirective adhoc(const DirectiveSpec& spec) const;

    GatewayConfig config_;
    Clock clock_;
    RegionSet home_region_;
    EventHub events_;
    std::unique_ptr<Store> store_;
    Resolver resolver_;
    DeviceRegistry registry_;
    ExposureModel exposure_;
    Guard guard_;
    Tutor tutor_;
    std::unique_ptr<EnforcementAdapter> adapter_;

    std::mutex ingest_mu_;  // writer pipeline and redaction
    std::map<std::string, Device> persisted_devices_;
    std::mutex cache_mu_;
    std::vector<CacheEntry> pending_cache_;
    std::atomic<bool> storage_full_{false};

    mutable std::mutex state_mu_;  // stage, curriculum
    StageConfig stage_;
    std::vector<std::string> last_due_;
    std::int64_t last_retention_ms_ = 0;
};

}  // namespace hearth
