#pragma once

#include <stdexcept>
#include <string>

namespace qagent {

// Base for every failure the library can raise. Subclasses exist so call
// sites can catch narrowly; the what() string carries the details.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : Error { using Error::Error; };
struct DecodeError : Error { using Error::Error; };
struct UnsupportedFormat : Error { using Error::Error; };
struct KernelTooLarge : Error { using Error::Error; };
struct ImageTooSmall : Error { using Error::Error; };
struct DimMismatch : Error { using Error::Error; };
struct ParamOutOfRange : Error { using Error::Error; };
struct EmptySourceSet : Error { using Error::Error; };
struct CorpusTooSmall : Error { using Error::Error; };
struct ModelMissing : Error { using Error::Error; };
struct MissingSlots : Error { using Error::Error; };
struct UnknownTool : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };
struct EmptyClass : Error { using Error::Error; };
struct TooManyTasks : Error { using Error::Error; };
struct CalibrationMissing : Error { using Error::Error; };
struct MissingRecipe : Error { using Error::Error; };
struct TransportError : Error { using Error::Error; };
struct MalformedAnswer : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

} // namespace qagent
