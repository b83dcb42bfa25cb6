#pragma once

#include <stdexcept>
#include <string>

namespace ntd {

/// Base class of every error thrown by the library. `kind()` names the
/// failure category so callers (and the CLI) can report it without RTTI.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define NTD_DEFINE_ERROR(Name)                                              \
    class Name : public Error {                                             \
    public:                                                                 \
        explicit Name(const std::string& what) : Error(#Name, what) {}      \
    }

// Input / model validation.
NTD_DEFINE_ERROR(InvalidMdp);
NTD_DEFINE_ERROR(InvalidDimension);
NTD_DEFINE_ERROR(DimensionMismatch);
NTD_DEFINE_ERROR(ShapeMismatch);

// Chain analytics.
NTD_DEFINE_ERROR(NonErgodicChain);
NTD_DEFINE_ERROR(SingularSystem);
NTD_DEFINE_ERROR(MixingHorizonExceeded);

// Bug detectors: these fire only when exact algebra or a proven bound fails.
NTD_DEFINE_ERROR(IdentityViolation);
NTD_DEFINE_ERROR(FormMismatch);
NTD_DEFINE_ERROR(BoundViolation);
NTD_DEFINE_ERROR(InitDiagnosticFailed);

NTD_DEFINE_ERROR(NotRepresentable);
NTD_DEFINE_ERROR(NonFiniteUpdate);

// Plumbing.
NTD_DEFINE_ERROR(ConfigError);
NTD_DEFINE_ERROR(PersistFailed);

#undef NTD_DEFINE_ERROR

}  // namespace ntd
