#pragma once

#include <stdexcept>
#include <string>

namespace stgnn {

// Every failure raised by the library derives from Error and carries a short
// machine-readable kind string, which the CLI echoes in its error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define STGNN_DEFINE_ERROR(Name, kind_string)                               \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& message) : Error(kind_string, message) {} \
  }

STGNN_DEFINE_ERROR(DimensionError, "dimension");
STGNN_DEFINE_ERROR(GeometryError, "geometry");
STGNN_DEFINE_ERROR(ContractError, "contract");
STGNN_DEFINE_ERROR(ConfigError, "configuration");
STGNN_DEFINE_ERROR(DegenerateError, "degenerate");
STGNN_DEFINE_ERROR(MetricError, "metric");
STGNN_DEFINE_ERROR(HarnessError, "harness");
STGNN_DEFINE_ERROR(IoError, "io");

#undef STGNN_DEFINE_ERROR

}  // namespace stgnn
