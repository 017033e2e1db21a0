#pragma once

#include <stdexcept>
#include <string>

namespace adaptest {

// Base for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad input, bad configuration, or a request outside a supported regime.
struct ConfigError : Error {
  using Error::Error;
};

// A numerical procedure could not produce a valid answer.
struct NumericalError : Error {
  using Error::Error;
};

#define ADAPTEST_DEFINE_ERROR(Name, Base)                      \
  struct Name : Base {                                         \
    explicit Name(const std::string& what = #Name)             \
        : Base(std::string(#Name) + ": " + what) {}            \
  };

ADAPTEST_DEFINE_ERROR(AllZeroLoading, ConfigError)
ADAPTEST_DEFINE_ERROR(MultiscaleConstraint, ConfigError)
ADAPTEST_DEFINE_ERROR(RegimeViolation, ConfigError)
ADAPTEST_DEFINE_ERROR(OddSampleSize, ConfigError)
ADAPTEST_DEFINE_ERROR(OddPairCount, ConfigError)
ADAPTEST_DEFINE_ERROR(BudgetExceeded, ConfigError)
ADAPTEST_DEFINE_ERROR(SizeBudget, ConfigError)
ADAPTEST_DEFINE_ERROR(ScanBudgetExceeded, ConfigError)

ADAPTEST_DEFINE_ERROR(NotPositiveDefinite, NumericalError)
ADAPTEST_DEFINE_ERROR(CholeskyFailure, NumericalError)
ADAPTEST_DEFINE_ERROR(BracketFailure, NumericalError)
ADAPTEST_DEFINE_ERROR(ZeroResidualDegenerate, NumericalError)
ADAPTEST_DEFINE_ERROR(KappaOutOfRange, NumericalError)
ADAPTEST_DEFINE_ERROR(DivergentIntegral, NumericalError)
ADAPTEST_DEFINE_ERROR(NotPD, NumericalError)

#undef ADAPTEST_DEFINE_ERROR

}  // namespace adaptest
