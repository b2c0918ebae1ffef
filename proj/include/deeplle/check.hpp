#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace deeplle {

// Contract violations (bad shapes, out-of-range arguments) throw this.
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Runtime failures (diverged fit, IO trouble) throw this.
class RuntimeFault : public std::runtime_error {
 public:
  explicit RuntimeFault(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void append_msg(std::ostringstream&) {}
template <typename A, typename... Rest>
void append_msg(std::ostringstream& os, const A& a, const Rest&... rest) {
  os << a;
  append_msg(os, rest...);
}
}  // namespace detail

template <typename... Parts>
[[noreturn]] void fail_contract(const Parts&... parts) {
  std::ostringstream os;
  detail::append_msg(os, parts...);
  throw ContractError(os.str());
}

template <typename... Parts>
[[noreturn]] void fail_runtime(const Parts&... parts) {
  std::ostringstream os;
  detail::append_msg(os, parts...);
  throw RuntimeFault(os.str());
}

}  // namespace deeplle

#define DLLE_CHECK(cond, ...)                      \
  do {                                             \
    if (!(cond)) ::deeplle::fail_contract(__VA_ARGS__); \
  } while (0)
