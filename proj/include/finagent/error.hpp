#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace finagent {

enum class ErrorCode {
    NetworkError,
    NotText,
    EmptyContent,
    ProviderError,
    FileNotFound,
    UnsupportedFormat,
    ConverterFailed,
    DimensionMismatch,
    StorageError,
    CorruptLog,
    UnknownResponse,
    UnknownSession,
    BackendError,
    BudgetExceeded,
    NonFiniteLoss,
    EmptyCollection,
    EmptyInput,
    SchemaError,
    InvalidArgument,
    ConfigError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure surfaced by the agent library carries one of the codes above so
// callers (and the HTTP layer) can map it without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace finagent
