#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hearth {

enum class Feature : std::uint8_t { Display, Curriculum, Controls };

std::string_view to_string(Feature f) noexcept;
/// 1 for display, 2 for curriculum, 3 for controls.
int required_stage(Feature f) noexcept;

/// Deployment stage: 1 display only, 2 adds curriculum, 3 adds controls.
struct StageConfig {
    int stage = 1;
    std::array<std::optional<std::int64_t>, 3> started_ms{};  // index = stage - 1

    bool permits(Feature f) const noexcept { return stage >= required_stage(f); }
    std::vector<Feature> features() const;
    std::optional<std::int64_t> started(int s) const { return s >= 1 && s <= 3 ? started_ms[s - 1] : std::nullopt; }

    bool operator==(const StageConfig&) const = default;
};

class StageGateError : public std::runtime_error {
public:
    StageGateError(Feature feature, int required, int current);
    Feature feature() const noexcept { return feature_; }
    int required() const noexcept { return required_; }
    int current() const noexcept { return current_; }

private:
    Feature feature_;
    int required_;
    int current_;
};

/// Throws StageGateError unless `config` permits `f`.
void require(const StageConfig& config, Feature f);

/// Moves to `target` and stamps its start time. Regressions need `allow_regression`;
/// skipping forward (1 -> 3) is allowed. Throws ValidationError.
StageConfig transition(const StageConfig& config, int target, std::int64_t now_ms, bool allow_regression = false);

}  // namespace hearth
