#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ars {

enum class Errc {
  class_unknown,
  kernel_class_conflict,
  kernel_not_found,
  object_not_found,
  invalid_argument,
  format_error,
  io_error,
  config_error,
  busy,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::class_unknown: return "class-unknown";
    case Errc::kernel_class_conflict: return "kernel-class-conflict";
    case Errc::kernel_not_found: return "kernel-not-found";
    case Errc::object_not_found: return "object-not-found";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::format_error: return "format-error";
    case Errc::io_error: return "io-error";
    case Errc::config_error: return "config-error";
    case Errc::busy: return "rejected-busy";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ars
