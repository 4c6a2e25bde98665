#pragma once

#include <stdexcept>
#include <string>

namespace condgeo {

enum class ErrorCode {
    InvalidArgument,
    Dimension,
    SingularGap,
    Domain,
    Orthogonality,
    StepFailure,
    ConstraintDrift,
    Rank,
    Convergence,
    Multiplicity,
    SingularJacobian,
    NotCritical,
    NoConvergence,
    Config,
    Io,
};

/// Base class for all library errors; carries a stable code for the C API.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

#define CONDGEO_DEFINE_ERROR(Name, Code)                                                 \
    class Name : public Error {                                                          \
    public:                                                                              \
        explicit Name(const std::string& what) : Error(ErrorCode::Code, what) {}         \
    }

CONDGEO_DEFINE_ERROR(InvalidArgumentError, InvalidArgument);
CONDGEO_DEFINE_ERROR(DimensionError, Dimension);
CONDGEO_DEFINE_ERROR(SingularGapError, SingularGap);
CONDGEO_DEFINE_ERROR(DomainError, Domain);
CONDGEO_DEFINE_ERROR(OrthogonalityError, Orthogonality);
CONDGEO_DEFINE_ERROR(StepFailureError, StepFailure);
CONDGEO_DEFINE_ERROR(ConstraintDriftError, ConstraintDrift);
CONDGEO_DEFINE_ERROR(RankError, Rank);
CONDGEO_DEFINE_ERROR(ConvergenceError, Convergence);
CONDGEO_DEFINE_ERROR(MultiplicityError, Multiplicity);
CONDGEO_DEFINE_ERROR(SingularJacobianError, SingularJacobian);
CONDGEO_DEFINE_ERROR(NotCriticalError, NotCritical);
CONDGEO_DEFINE_ERROR(NoConvergenceError, NoConvergence);
CONDGEO_DEFINE_ERROR(ConfigError, Config);
CONDGEO_DEFINE_ERROR(IoError, Io);

#undef CONDGEO_DEFINE_ERROR

const char* error_code_name(ErrorCode code) noexcept;

}  // namespace condgeo
