#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace adk {

// Base of the library error hierarchy. `code()` is a stable machine-readable
// tag; the CLI maps it to exit codes and JSON error output.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

// Vector dimensions do not agree.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error("dimension_error", what) {}
};

// A vector with (near-)zero norm was used where a direction is required.
class DegenerateVectorError : public Error {
public:
    explicit DegenerateVectorError(const std::string& what) : Error("degenerate_vector", what) {}
};

class EmptyInputError : public Error {
public:
    explicit EmptyInputError(const std::string& what) : Error("empty_input", what) {}
};

// An index (class, descriptor, label, k) is out of range.
class IndexError : public Error {
public:
    explicit IndexError(const std::string& what) : Error("index_error", what) {}
};

// Structural mismatch between inputs: ragged banks, misaligned class sets,
// duplicate names, malformed manifests.
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& what) : Error("schema_error", what) {}
};

// A scalar parameter is outside its mathematical domain.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error("domain_error", what) {}
};

// A class referenced by labels or a manifest has no samples.
class MissingClassError : public Error {
public:
    explicit MissingClassError(const std::string& what) : Error("missing_class", what) {}
};

// Payload content is invalid (NaN / infinity).
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error("data_error", what) {}
};

// A file could not be opened or written.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io_error", what) {}
};

// Malformed binary cache: bad magic, version, or truncated/oversized content.
// Carries the byte offset at which parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t byte_offset)
        : Error("format_error", what + " (byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

// Internal postcondition violation. The CLI reports these with exit code 3.
class InvariantError : public Error {
public:
    explicit InvariantError(const std::string& what) : Error("invariant_violation", what) {}
};

}  // namespace adk
