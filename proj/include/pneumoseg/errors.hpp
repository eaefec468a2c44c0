#pragma once

#include <stdexcept>
#include <string>

namespace pneumoseg {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / dimension mismatches.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// RLE payload problems (odd token count, run past end, negative length).
class CodecError : public Error {
public:
    explicit CodecError(const std::string& msg) : Error(msg) {}
};

// Malformed input files: CSV rows, DICOM elements, PGM headers, configs.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// DICOM transfer syntaxes outside the supported uncompressed subset.
class UnsupportedTransferSyntax : public ParseError {
public:
    explicit UnsupportedTransferSyntax(const std::string& msg) : ParseError(msg) {}
};

// Checkpoint magic/version/tensor-table violations.
class CheckpointFormatError : public Error {
public:
    explicit CheckpointFormatError(const std::string& msg) : Error(msg) {}
};

// Bad experiment configuration (unknown keys, invalid values).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Training diverged (NaN loss/gradients).
class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& msg) : Error(msg) {}
};

}  // namespace pneumoseg
