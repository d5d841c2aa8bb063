#pragma once

#include <stdexcept>
#include <string>

namespace freecond {

// Shapes do not line up; the message names both shapes.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A value precondition is violated (non-binary mask, cutoff out of range,
// empty region, negative scale, ...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// File system / format trouble: missing file, unreadable image, bad magic.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Data fails an integrity check: asymmetric spectrum with a large imaginary
// residue, tensor payload length not matching its header, checksum mismatch.
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed textual input (CSV/JSON); carries the line number where known.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Two entries claim the same slot (duplicate score rows).
class ConflictError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace freecond
