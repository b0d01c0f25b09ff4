#pragma once

#include <stdexcept>
#include <string>

namespace checklist_rl {

enum class ErrorCode {
    MalformedDocument,
    StructuralViolation,
    OutOfRange,
    AllZeroWeights,
    DependencyCycle,
    MissingChecklist,
    UnknownDialogue,
    UnknownPredicateKind,
    UnboundItemId,
    EndpointUnavailable,
    EndpointMalformedReply,
    NonFiniteNumber,
    UnknownTool,
    SimulatorUnavailable,
    InconsistentChecklist,
    ZeroTurns,
    GroupTooSmall,
    InstanceTooLarge,
    ShapeMismatch,
    InsufficientData,
    IoFailure,
    InvalidConfig,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

} // namespace checklist_rl
