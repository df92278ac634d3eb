#ifndef ASD_ERRORS_HPP_
#define ASD_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace asd {

// Common base so callers can catch everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A required column or field is absent from an input file.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A cell or value violates a data invariant (non-numeric, negative, duplicate id).
class DataError : public Error {
 public:
  using Error::Error;
};

// An argument is outside its documented range.
class ParamError : public Error {
 public:
  using Error::Error;
};

// A sample is degenerate for the requested statistic (constant, zero variance).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// An aggregation rule cannot be applied (e.g. zero total weight).
class AggregationError : public Error {
 public:
  using Error::Error;
};

// An estimator cannot produce a defined value on the given inputs.
class EstimationError : public Error {
 public:
  using Error::Error;
};

// No feasible assignment exists for a design problem.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure while reading inputs or writing reports.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace asd

#endif  // ASD_ERRORS_HPP_
