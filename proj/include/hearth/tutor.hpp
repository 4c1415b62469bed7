#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hearth/exposure.hpp"
#include "hearth/guard.hpp"
#include "hearth/stage.hpp"

namespace hearth {

struct CurriculumModule {
    std::string id;
    std::string title;
    std::string body_template;  // `{{slot_name}}` placeholders
    int stage_offset_days = 0;
    std::optional<std::int64_t> completed_at_ms;

    bool operator==(const CurriculumModule&) const = default;
};

/// Front-matter between `---` lines (id, title, offset), then the body.
/// Throws ValidationError naming the missing or malformed key.
CurriculumModule parse_module(std::string_view text);
/// Every `*.txt` file in `dir`, by file name.
std::vector<CurriculumModule> load_curriculum(const std::string& dir);

/// Slot names referenced by a template, in order of first use.
std::vector<std::string> template_slots(std::string_view body);

struct ContextExample {
    std::string slot;
    std::string text;
    TimeWindow window;
    std::string source_query;

    bool operator==(const ContextExample&) const = default;
};

struct RenderedModule {
    std::string id;
    std::string title;
    std::string body;
    std::vector<ContextExample> examples;

    bool operator==(const RenderedModule&) const = default;
};

/// The household data a slot may draw on.
struct SlotContext {
    const ExposureModel& exposure;
    const std::vector<AttributedFlow>& flows;  // stored flows inside `window`
    TimeWindow window;
    std::function<std::string(const std::string& device_id)> device_name;
    RegionSet home_region;
};

using SlotGenerator = std::function<ContextExample(const SlotContext&)>;

class RenderError : public std::runtime_error {
public:
    explicit RenderError(std::string slot)
        : std::runtime_error("no generator registered for slot '" + slot + "'"), slot_(std::move(slot)) {}
    const std::string& slot() const noexcept { return slot_; }

private:
    std::string slot_;
};

/// Devices split by whether any external PLAINTEXT flow was seen.
ContextExample encrypted_vs_plaintext_devices(const SlotContext& ctx);
/// The three companies receiving the most bytes, "A, B, C".
ContextExample top_companies(const SlotContext& ctx);
/// Number of distinct jurisdictions receiving data.
ContextExample jurisdiction_count(const SlotContext& ctx);

/// Curriculum scheduling, rendering and completion state.
class Tutor {
public:
    /// Registers the built-in slots. Throws ValidationError on duplicate ids
    /// or negative offsets.
    explicit Tutor(std::vector<CurriculumModule> modules = {});

    void register_slot(std::string name, SlotGenerator generator);

    /// Empty at stage 1. Otherwise the modules whose curriculum start plus
    /// offset has passed and that are not complete, by offset then id. The
    /// curriculum starts with stage 2, or with stage 3 if stage 2 was skipped.
    std::vector<std::string> schedule(const StageConfig& stage, std::int64_t now_ms) const;

    /// Throws NotFoundError for unknown ids and RenderError for unknown slots.
    RenderedModule render(std::string_view id, const SlotContext& ctx) const;

    /// Requires stage 2. Idempotent: a second call keeps the first timestamp.
    /// Throws NotFoundError, or ValidationError if the module is not yet due.
    CurriculumModule mark_complete(std::string_view id, const StageConfig& stage, std::int64_t now_ms);

    std::vector<CurriculumModule> modules() const;
    std::optional<CurriculumModule> find(std::string_view id) const;
    /// Start-up restore of completion state.
    void restore_completion(std::string_view id, std::int64_t completed_at_ms);

private:
    static std::optional<std::int64_t> curriculum_start(const StageConfig& stage);

    mutable std::mutex mu_;
    std::vector<CurriculumModule> modules_;
    std::map<std::string, SlotGenerator, std::less<>> slots_;
};

}  // namespace hearth
