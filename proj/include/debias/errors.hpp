#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace debias {

// Numeric-rank failure: a matrix that must be invertible is singular at the
// requested tolerance.  The message names the offending quantity.
struct SingularMatrix : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between containers that must line up (vector lengths,
// matrix dims).
struct DimensionMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// An argument is outside its documented domain (e.g. p not in (0,1)).
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Treatment column contains a value other than 0 or 1.
struct NonBinaryTreatment : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// One experimental arm is too small for the requested operation.
struct DegenerateArm : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A leverage of 1 makes the HC2/HC3 weight undefined.
struct LeverageOne : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// All eigenvalues of the Satterthwaite Gram matrix vanished; no degrees of
// freedom can be assigned.
struct DegenerateSpectrum : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Exact integer arithmetic left the representable range.
struct Overflow : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IndexOutOfRange : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// A run would exceed the configured assignment budget.
struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File could not be opened / read / written.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input data.  row/col are 1-based; the header line is row 1.
struct ParseError : std::runtime_error {
    ParseError(const std::string& what, std::size_t row_, std::size_t col_)
        : std::runtime_error("row " + std::to_string(row_) + ", column " +
                             std::to_string(col_) + ": " + what),
          row(row_), col(col_) {}
    std::size_t row;
    std::size_t col;
};

}  // namespace debias
