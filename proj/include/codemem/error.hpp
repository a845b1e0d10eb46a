#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace codemem {

enum class ErrorKind {
    ParseError,
    InvalidArgument,
    DuplicateName,
    EmptyRegistry,
    UnknownTool,
    ValidationMissing,
    EmptySource,
    UnknownSkill,
    UnknownVersion,
    IntegrityError,
    StatusRegression,
    MultipleInProgress,
    UnknownSession,
    InterpreterNotFound,
    BridgeAuthFailure,
    BadFrame,
    DuplicateId,
    Timeout,
    NameCollision,
    UnboundTool,
    NotLoaded,
    BindingError,
    FilterParseError,
    UnknownEmail,
    NoAttachment,
    LimitExceeded,
    DriverError,
    StepLimitExceeded,
    TraceExhausted,
    TraceDivergence,
    HttpError,
    EmptyTrajectory,
    SuiteParseError,
    FixtureMissing,
    IncompleteGrid,
    PortInUse,
    BadConfig,
    IoError,
    SessionBusy,
    NotFound,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure surfaced by the runtime carries a machine-readable kind.
/// The kind name is what crosses the bridge, the HTTP API and the LLM context.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace codemem
