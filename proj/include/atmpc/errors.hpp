#pragma once

#include <stdexcept>
#include <string>

namespace atmpc {

/// Base class for all failures raised by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InfeasibleError : Error {
  explicit InfeasibleError(const std::string& msg) : Error(msg) {}
};

struct UnboundedError : Error {
  explicit UnboundedError(const std::string& msg) : Error(msg) {}
};

struct EmptyIntersectionError : Error {
  explicit EmptyIntersectionError(const std::string& msg) : Error(msg) {}
};

struct DimensionUnsupportedError : Error {
  explicit DimensionUnsupportedError(const std::string& msg) : Error(msg) {}
};

struct ConicInfeasibleError : Error {
  explicit ConicInfeasibleError(const std::string& msg) : Error(msg) {}
};

struct IterationCapError : Error {
  explicit IterationCapError(const std::string& msg) : Error(msg) {}
};

struct UnstableError : Error {
  explicit UnstableError(const std::string& msg) : Error(msg) {}
};

struct NotContractiveError : Error {
  explicit NotContractiveError(const std::string& msg) : Error(msg) {}
};

struct HorizonCapError : Error {
  explicit HorizonCapError(const std::string& msg) : Error(msg) {}
};

struct InfeasibleLmiError : Error {
  explicit InfeasibleLmiError(const std::string& msg) : Error(msg) {}
};

struct MaxIterationsError : Error {
  explicit MaxIterationsError(const std::string& msg) : Error(msg) {}
};

struct InfeasibleAtStepError : Error {
  int step;
  InfeasibleAtStepError(int k, const std::string& msg) : Error(msg), step(k) {}
};

struct SchemaError : Error {
  explicit SchemaError(const std::string& msg) : Error(msg) {}
};

struct OrderingViolationError : Error {
  explicit OrderingViolationError(const std::string& msg) : Error(msg) {}
};

}  // namespace atmpc
