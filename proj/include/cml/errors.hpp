#pragma once

#include <stdexcept>
#include <string>

namespace cml {

// Domain errors. Each maps to one named failure mode so callers and tests
// can catch them individually.
#define CML_DEFINE_ERROR(Name)                                    \
    struct Name : std::runtime_error {                            \
        explicit Name(const std::string& what_arg = #Name)       \
            : std::runtime_error(what_arg) {}                     \
    }

CML_DEFINE_ERROR(ZeroVectorError);
CML_DEFINE_ERROR(EmptyInputError);
CML_DEFINE_ERROR(DimensionMismatchError);
CML_DEFINE_ERROR(TapeMismatchError);
CML_DEFINE_ERROR(ShapeMismatchError);
CML_DEFINE_ERROR(NonUnitFeatureError);
CML_DEFINE_ERROR(EmptyClassError);
CML_DEFINE_ERROR(UninitializedCenterError);
CML_DEFINE_ERROR(RequiredClassUninitializedError);
CML_DEFINE_ERROR(InvalidLabelError);
CML_DEFINE_ERROR(OutOfRangeError);
CML_DEFINE_ERROR(MissingPositiveCenterError);
CML_DEFINE_ERROR(DegenerateTemperatureError);
CML_DEFINE_ERROR(MissingClassMeanError);
CML_DEFINE_ERROR(LengthMismatchError);
CML_DEFINE_ERROR(NonDeterministicLossError);
CML_DEFINE_ERROR(InvalidKError);
CML_DEFINE_ERROR(InvalidParamsError);
CML_DEFINE_ERROR(NoPositivePairsError);
CML_DEFINE_ERROR(NoNegativePairsError);
CML_DEFINE_ERROR(InsufficientDataError);
CML_DEFINE_ERROR(InvalidSpecError);
CML_DEFINE_ERROR(IoError);
CML_DEFINE_ERROR(FormatError);
CML_DEFINE_ERROR(ConfigInvalidError);
CML_DEFINE_ERROR(DatasetTooSmallError);
CML_DEFINE_ERROR(UnknownSettingError);
CML_DEFINE_ERROR(ClassTooSmallError);

#undef CML_DEFINE_ERROR

}  // namespace cml
