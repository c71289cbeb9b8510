#pragma once

#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace rnan::detail {

template <typename... Args>
[[noreturn]] void fail(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  throw std::invalid_argument(os.str());
}

template <typename... Args>
[[noreturn]] void fail_runtime(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  throw std::runtime_error(os.str());
}

// Finite-output assertion for forward ops. Always on in debug builds,
// opt-in elsewhere via RNAN_CHECK_FINITE=1.
inline bool finite_checks_enabled() {
#ifndef NDEBUG
  return true;
#else
  static const bool on = [] {
    const char* v = std::getenv("RNAN_CHECK_FINITE");
    return v && v[0] == '1';
  }();
  return on;
#endif
}

}  // namespace rnan::detail
