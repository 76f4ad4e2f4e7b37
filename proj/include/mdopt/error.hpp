#pragma once

#include <stdexcept>
#include <string>

namespace mdopt {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Two parameter vectors with incompatible layouts were combined.
struct LayoutError : Error {
  using Error::Error;
};

// A batch referenced a user/item id outside the model's tables.
struct IndexError : Error {
  using Error::Error;
};

// Training produced a non-finite loss or gradient. domain_id is -1 when
// the failing domain is unknown at the throw site.
struct DivergenceError : Error {
  int domain_id;
  explicit DivergenceError(const std::string& msg, int domain = -1)
      : Error(msg), domain_id(domain) {}
};

// Invalid hyperparameters or an unusable run configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed dataset/checkpoint file. line is 0 when not line-oriented.
struct DataError : Error {
  long line;
  explicit DataError(const std::string& msg, long line_no = 0)
      : Error(line_no > 0 ? msg + " (line " + std::to_string(line_no) + ")" : msg),
        line(line_no) {}
};

// A synthetic-data request that cannot be satisfied (e.g. more positives
// than user-item pairs).
struct InfeasibleError : Error {
  using Error::Error;
};

// Metric could not be computed (e.g. single-class labels).
struct EvalError : Error {
  using Error::Error;
};

}  // namespace mdopt
