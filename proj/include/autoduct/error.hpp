// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace autoduct {

enum class Errc {
    missing_column,
    non_finite_value,
    empty_file,
    io_failure,
    fraction_sum_invalid,
    degenerate_feature,
    invalid_argument,
    dimension_mismatch,
    length_mismatch,
    empty_input,
    non_positive_variance,
    diverged_loss,
    empty_ensemble,
    duplicate_seed,
    version_mismatch,
    corrupt_artifact,
    out_of_domain,
    dimension_overflow,
    singular_covariance,
    insufficient_trials,
    zero_target,
    schema_invalid,
    planner_unavailable,
    auth_failure,
    unknown_tool,
    unbound_role,
    sandbox_violation,
    stage_exhausted,
    step_budget_exhausted,
    corrupt_state,
};

inline std::string_view to_string(Errc code) noexcept
{
    switch (code) {
    case Errc::missing_column: return "MissingColumn";
    case Errc::non_finite_value: return "NonFiniteValue";
    case Errc::empty_file: return "EmptyFile";
    case Errc::io_failure: return "IoFailure";
    case Errc::fraction_sum_invalid: return "FractionSumInvalid";
    case Errc::degenerate_feature: return "DegenerateFeature";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::empty_input: return "EmptyInput";
    case Errc::non_positive_variance: return "NonPositiveVariance";
    case Errc::diverged_loss: return "DivergedLoss";
    case Errc::empty_ensemble: return "EmptyEnsemble";
    case Errc::duplicate_seed: return "DuplicateSeed";
    case Errc::version_mismatch: return "VersionMismatch";
    case Errc::corrupt_artifact: return "CorruptArtifact";
    case Errc::out_of_domain: return "OutOfDomain";
    case Errc::dimension_overflow: return "DimensionOverflow";
    case Errc::singular_covariance: return "SingularCovariance";
    case Errc::insufficient_trials: return "InsufficientTrials";
    case Errc::zero_target: return "ZeroTarget";
    case Errc::schema_invalid: return "SchemaInvalid";
    case Errc::planner_unavailable: return "PlannerUnavailable";
    case Errc::auth_failure: return "AuthFailure";
    case Errc::unknown_tool: return "UnknownTool";
    case Errc::unbound_role: return "UnboundRole";
    case Errc::sandbox_violation: return "SandboxViolation";
    case Errc::stage_exhausted: return "StageExhausted";
    case Errc::step_budget_exhausted: return "StepBudgetExhausted";
    case Errc::corrupt_state: return "CorruptState";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above; the
/// message is prefixed with the code name so logs stay greppable.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail)
    {
    }

    [[nodiscard]] Errc code() const noexcept { return code_; }
    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

private:
    Errc code_;
    std::string detail_;
};

} // namespace autoduct
