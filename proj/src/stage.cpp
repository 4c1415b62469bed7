#include "hearth/stage.hpp"

#include "hearth/errors.hpp"

namespace hearth {

std::string_view to_string(Feature f) noexcept {
    switch (f) {
        case Feature::Display: return "display";
        case Feature::Curriculum: return "curriculum";
        case Feature::Controls: return "controls";
    }
    return "display";
}

int required_stage(Feature f) noexcept {
    switch (f) {
        case Feature::Display: return 1;
        case Feature::Curriculum: return 2;
        case Feature::Controls: return 3;
    }
    return 3;
}

std::vector<Feature> StageConfig::features() const {
    std::vector<Feature> out;
    for (auto f : {Feature::Display, Feature::Curriculum, Feature::Controls})
        if (permits(f)) out.push_back(f);
    return out;
}

StageGateError::StageGateError(Feature feature, int required, int current)
    : std::runtime_error(std::string(to_string(feature)) + " requires stage " + std::to_string(required) +
                         " (current stage " + std::to_string(current) + ")"),
      feature_(feature),
      required_(required),
      current_(current) {}

void require(const StageConfig& config, Feature f) {
    if (!config.permits(f)) throw StageGateError(f, required_stage(f), config.stage);
}

StageConfig transition(const StageConfig& config, int target, std::int64_t now_ms, bool allow_regression) {
    if (target < 1 || target > 3) throw ValidationError("stage", "stage must be 1, 2 or 3");
    if (target < config.stage && !allow_regression)
        throw ValidationError("stage", "stage " + std::to_string(config.stage) + " cannot move back to " +
                                           std::to_string(target) + " without override");
    StageConfig next = config;
    if (target != config.stage) {
        next.stage = target;
        next.started_ms[target - 1] = now_ms;
        // A regression forgets the start of the stages being left.
        for (int s = target + 1; s <= 3; ++s) next.started_ms[s - 1].reset();
    }
    if (!next.started_ms[target - 1]) next.started_ms[target - 1] = now_ms;
    return next;
}

}  // namespace hearth
