#pragma once

#include <stdexcept>
#include <string>

namespace gazestab {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can map failures to a one-line message and a nonzero exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define GAZESTAB_DEFINE_ERROR(Name, tag)                              \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(tag, what) {}      \
  };

GAZESTAB_DEFINE_ERROR(DomainError, "domain")
GAZESTAB_DEFINE_ERROR(ShapeError, "shape")
GAZESTAB_DEFINE_ERROR(InsufficientDataError, "insufficient_data")
GAZESTAB_DEFINE_ERROR(StateError, "state")
GAZESTAB_DEFINE_ERROR(ConfigError, "config")
GAZESTAB_DEFINE_ERROR(IoError, "io")
GAZESTAB_DEFINE_ERROR(NoIntersectionError, "no_intersection")
GAZESTAB_DEFINE_ERROR(SchemaError, "schema")

#undef GAZESTAB_DEFINE_ERROR

}  // namespace gazestab
