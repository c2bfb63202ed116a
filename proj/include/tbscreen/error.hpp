#pragma once

#include <stdexcept>
#include <string>

namespace tbscreen {

/// Coarse failure classes; the CLI maps each one to its own exit code.
enum class ErrorClass { internal, config, data, io, numeric };

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ErrorClass cls = ErrorClass::internal)
      : std::runtime_error(what), class_(cls) {}
  ErrorClass error_class() const noexcept { return class_; }

 private:
  ErrorClass class_;
};

#define TBSCREEN_DEFINE_ERROR(Name, Class)                                   \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& what) : Error(what, ErrorClass::Class) {} \
  };

// Shape and parameter problems.
TBSCREEN_DEFINE_ERROR(DimensionError, config)
TBSCREEN_DEFINE_ERROR(ParameterError, config)
TBSCREEN_DEFINE_ERROR(ConfigError, config)
TBSCREEN_DEFINE_ERROR(GeometryError, config)

// Bad or insufficient data.
TBSCREEN_DEFINE_ERROR(ValidationError, data)
TBSCREEN_DEFINE_ERROR(ShortageError, data)
TBSCREEN_DEFINE_ERROR(GenerationError, data)
TBSCREEN_DEFINE_ERROR(ImageFormatError, data)
TBSCREEN_DEFINE_ERROR(UnsupportedDepthError, data)
TBSCREEN_DEFINE_ERROR(NotGrayscaleError, data)

// Files.
TBSCREEN_DEFINE_ERROR(IoError, io)
TBSCREEN_DEFINE_ERROR(ChecksumError, data)
TBSCREEN_DEFINE_ERROR(TruncatedError, data)
TBSCREEN_DEFINE_ERROR(VersionError, data)
TBSCREEN_DEFINE_ERROR(FormatError, data)
TBSCREEN_DEFINE_ERROR(FamilyMismatchError, config)

// Runtime state.
TBSCREEN_DEFINE_ERROR(StateError, internal)
TBSCREEN_DEFINE_ERROR(UnsupportedError, internal)
TBSCREEN_DEFINE_ERROR(NumericError, numeric)

#undef TBSCREEN_DEFINE_ERROR

}  // namespace tbscreen
