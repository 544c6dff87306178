#pragma once

#include <stdexcept>
#include <string>

namespace linpaint {

// Common base so callers can catch all library errors at once.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define LINPAINT_DEFINE_ERROR(Name)                                    \
    class Name : public Error {                                        \
    public:                                                            \
        explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
    }

LINPAINT_DEFINE_ERROR(RankDeficient);
LINPAINT_DEFINE_ERROR(DimensionMismatch);
LINPAINT_DEFINE_ERROR(OutOfRange);
LINPAINT_DEFINE_ERROR(IndexOutOfRange);
LINPAINT_DEFINE_ERROR(DegenerateVariance);
LINPAINT_DEFINE_ERROR(ShapeMismatch);
LINPAINT_DEFINE_ERROR(InvalidMask);
LINPAINT_DEFINE_ERROR(ScheduleMismatch);
LINPAINT_DEFINE_ERROR(AssumptionViolated);
LINPAINT_DEFINE_ERROR(Diverged);
LINPAINT_DEFINE_ERROR(InvalidRate);
LINPAINT_DEFINE_ERROR(NotContractive);
LINPAINT_DEFINE_ERROR(TooFewPoints);
LINPAINT_DEFINE_ERROR(NonPositiveError);
LINPAINT_DEFINE_ERROR(OffManifold);
LINPAINT_DEFINE_ERROR(ConfigError);
LINPAINT_DEFINE_ERROR(FlagError);

#undef LINPAINT_DEFINE_ERROR

} // namespace linpaint
