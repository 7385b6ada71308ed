#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fasthla {

enum class Errc {
  invalid_argument,
  domain,
  empty_trace,
  malformed_trace,
  insufficient_data,
  duplicate_knot,
  extrapolation,
  scenario,
  undefined_variance,
  empty_plan,
  insufficient_window,
  bad_magic,
  wrong_count,
  truncated,
  empty_input,
  no_trainable_data,
  parse,
  io,
  transfer,
};

// Stable kebab-case name, used in CLI messages.
std::string_view errc_name(Errc code) noexcept;

// Process exit status for a failure of this class: 10 + enumerator value.
constexpr int exit_code(Errc code) noexcept { return 10 + static_cast<int>(code); }

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace fasthla
