#pragma once

#include <stdexcept>
#include <string>

namespace hearth {

/// Malformed or inconsistent caller input; `field` names the offending input.
class ValidationError : public std::invalid_argument {
public:
    ValidationError(std::string field, const std::string& what)
        : std::invalid_argument(what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class NotFoundError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hearth
