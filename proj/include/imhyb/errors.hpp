#pragma once

#include <stdexcept>
#include <string>

namespace imhyb {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define IMHYB_DEFINE_ERROR(Name)                     \
    class Name : public Error {                      \
    public:                                          \
        explicit Name(const std::string& what)       \
            : Error(#Name ": " + what) {}            \
    }

// numerics
IMHYB_DEFINE_ERROR(SingularSystem);
IMHYB_DEFINE_ERROR(DimensionMismatch);
IMHYB_DEFINE_ERROR(NonSquare);
IMHYB_DEFINE_ERROR(CapMismatch);
IMHYB_DEFINE_ERROR(SingularExpansionPoint);
// systems
IMHYB_DEFINE_ERROR(DomainViolation);
IMHYB_DEFINE_ERROR(InfeasibleEquilibrium);
// pse
IMHYB_DEFINE_ERROR(ResonantOrder);
IMHYB_DEFINE_ERROR(QuadratureNotConverged);
// sampling
IMHYB_DEFINE_ERROR(NonConvergentTrajectory);
IMHYB_DEFINE_ERROR(DegenerateTrajectory);
IMHYB_DEFINE_ERROR(InsufficientSamples);
// training
IMHYB_DEFINE_ERROR(DegenerateNormalizer);
// evaluation
IMHYB_DEFINE_ERROR(ZeroNormReference);
// cli / io
IMHYB_DEFINE_ERROR(ConfigError);
IMHYB_DEFINE_ERROR(ModelFormatError);

#undef IMHYB_DEFINE_ERROR

}  // namespace imhyb
