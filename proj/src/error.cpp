#include "codemem/error.hpp"

namespace codemem {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DuplicateName: return "DuplicateName";
    case ErrorKind::EmptyRegistry: return "EmptyRegistry";
    case ErrorKind::UnknownTool: return "UnknownTool";
    case ErrorKind::ValidationMissing: return "ValidationMissing";
    case ErrorKind::EmptySource: return "EmptySource";
    case ErrorKind::UnknownSkill: return "UnknownSkill";
    case ErrorKind::UnknownVersion: return "UnknownVersion";
    case ErrorKind::IntegrityError: return "IntegrityError";
    case ErrorKind::StatusRegression: return "StatusRegression";
    case ErrorKind::MultipleInProgress: return "MultipleInProgress";
    case ErrorKind::UnknownSession: return "UnknownSession";
    case ErrorKind::InterpreterNotFound: return "InterpreterNotFound";
    case ErrorKind::BridgeAuthFailure: return "BridgeAuthFailure";
    case ErrorKind::BadFrame: return "BadFrame";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::NameCollision: return "NameCollision";
    case ErrorKind::UnboundTool: return "UnboundTool";
    case ErrorKind::NotLoaded: return "NotLoaded";
    case ErrorKind::BindingError: return "BindingError";
    case ErrorKind::FilterParseError: return "FilterParseError";
    case ErrorKind::UnknownEmail: return "UnknownEmail";
    case ErrorKind::NoAttachment: return "NoAttachment";
    case ErrorKind::LimitExceeded: return "LimitExceeded";
    case ErrorKind::DriverError: return "DriverError";
    case ErrorKind::StepLimitExceeded: return "StepLimitExceeded";
    case ErrorKind::TraceExhausted: return "TraceExhausted";
    case ErrorKind::TraceDivergence: return "TraceDivergence";
    case ErrorKind::HttpError: return "HttpError";
    case ErrorKind::EmptyTrajectory: return "EmptyTrajectory";
    case ErrorKind::SuiteParseError: return "SuiteParseError";
    case ErrorKind::FixtureMissing: return "FixtureMissing";
    case ErrorKind::IncompleteGrid: return "IncompleteGrid";
    case ErrorKind::PortInUse: return "PortInUse";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::SessionBusy: return "SessionBusy";
    case ErrorKind::NotFound: return "NotFound";
    }
    return "Unknown";
}

} // namespace codemem
