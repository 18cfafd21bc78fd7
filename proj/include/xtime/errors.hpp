#ifndef XTIME_ERRORS_HPP
#define XTIME_ERRORS_HPP

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>

namespace xtime {

/// Tensor shape or layer configuration does not fit the operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or out-of-domain input data (files, labels, signal ranges).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad command-line usage or invalid configuration values.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf encountered during training or gradient evaluation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of the autodiff machinery (consumed tape, non-scalar loss).
class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {
inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return handler;
}
}  // namespace detail

/// Replaces the process-wide warning sink; returns the previous one.
inline WarningHandler set_warning_handler(WarningHandler handler) {
  return std::exchange(detail::warning_handler(), std::move(handler));
}

inline void warn(const std::string& msg) {
  if (detail::warning_handler()) detail::warning_handler()(msg);
}

}  // namespace xtime

#endif  // XTIME_ERRORS_HPP
