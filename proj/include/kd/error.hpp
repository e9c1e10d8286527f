#pragma once

#include <stdexcept>
#include <string>

namespace kd {

enum class errc {
  invalid_argument,
  dimension_mismatch,
  numerical_instability,
  budget_exceeded,
  parse_error,
  io_error,
};

// Library-wide exception type. `kind` maps onto the CLI exit codes.
class error : public std::runtime_error {
public:
  error(errc kind, std::string msg, long line = -1)
      : std::runtime_error(std::move(msg)), kind_(kind), line_(line) {}

  errc kind() const noexcept { return kind_; }
  // Input line for parse errors, -1 otherwise.
  long line() const noexcept { return line_; }

private:
  errc kind_;
  long line_;
};

inline void require(bool cond, errc kind, const std::string& msg) {
  if (!cond) throw error(kind, msg);
}

}  // namespace kd
