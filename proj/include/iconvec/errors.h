#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace iconvec {

// Base class for all errors raised by the library. The CLI maps these to
// exit code 2 (data errors) unless a more specific class says otherwise.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input text (SVG path data, XML, numbers). Carries the byte
// offset into the offending string or file.
struct ParseError : Error {
    ParseError(const std::string& msg, size_t byte_offset)
        : Error(msg + " (byte " + std::to_string(byte_offset) + ")"), offset(byte_offset) {}
    size_t offset;
};

// Input uses a feature the pipeline deliberately does not handle.
struct UnsupportedFeatureError : Error {
    using Error::Error;
};

// Geometry that cannot be processed (zero-area shape, empty outline, ...).
struct GeometryError : Error {
    using Error::Error;
};

// A document that cannot be normalized (no viewBox, no width/height).
struct NormalizeError : Error {
    using Error::Error;
};

// Script exceeds the fixed slot budget (paths or commands per path).
struct CapacityError : Error {
    using Error::Error;
};

// Token sequence violating the command grammar. `position` is the index in
// the type sequence where parsing failed.
struct DecodeError : Error {
    DecodeError(const std::string& msg, int pos)
        : Error(msg + " at position " + std::to_string(pos)), position(pos) {}
    int position;
};

// Mismatched tensor/mask dimensions or out-of-range numeric inputs.
struct ShapeError : Error {
    using Error::Error;
};

struct RangeError : Error {
    using Error::Error;
};

// File and container problems.
struct IoError : Error {
    using Error::Error;
};

// Training aborted (non-finite loss, bad checkpoint, ...). Exit code 3.
struct TrainError : Error {
    using Error::Error;
};

}  // namespace iconvec
