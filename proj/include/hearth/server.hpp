#pragma once
// HTTP + JSON front end over a Gateway. Routes live under /v1/; errors are
// {"error":{"class":...,"message":...}} with a class per failure kind so
// clients can tell a locked feature from bad input.

#include <memory>
#include <string>

#include "hearth/codec.hpp"

namespace hearth {

class Gateway;

/// Error classes carried in error bodies; the CLI maps each to an exit code.
namespace error_class {
inline constexpr const char* kValidation = "validation";
inline constexpr const char* kStageGate = "stage_gate";
inline constexpr const char* kNotFound = "not_found";
inline constexpr const char* kAuth = "auth";
inline constexpr const char* kStorageFull = "storage_full";
inline constexpr const char* kEnforcement = "enforcement";
inline constexpr const char* kServer = "server";
}  // namespace error_class

/// Maps the exception currently being handled to (HTTP status, error body).
std::pair<int, Json> describe_current_exception();

class ApiServer {
public:
    explicit ApiServer(Gateway& gateway);
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds and serves on a background thread. Port 0 picks a free port.
    /// Returns the bound port; throws std::runtime_error if binding fails.
    int start(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace hearth
