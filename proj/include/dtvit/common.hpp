#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace dtvit {

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

template <class... Parts>
[[noreturn]] void failf(Parts&&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw std::runtime_error(os.str());
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

}  // namespace dtvit
