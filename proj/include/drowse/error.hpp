#ifndef DROWSE_ERROR_HPP_
#define DROWSE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace drowse {

class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// A computation produced or received NaN/Inf.
class NumericError : public Error
{
public:
    using Error::Error;
};

/// A statistic is undefined for the given input (e.g. zero-variance differences).
class DegenerateError : public Error
{
public:
    using Error::Error;
};

enum class FormatErrc
{
    io,
    bad_magic,
    bad_version,
    truncated,
    bad_header,
    unknown_tensor,
    missing_tensor,
    shape_mismatch,
};

inline const char* to_string(FormatErrc code)
{
    switch (code) {
    case FormatErrc::io: return "io";
    case FormatErrc::bad_magic: return "bad magic";
    case FormatErrc::bad_version: return "unsupported version";
    case FormatErrc::truncated: return "truncated";
    case FormatErrc::bad_header: return "bad header";
    case FormatErrc::unknown_tensor: return "unknown tensor";
    case FormatErrc::missing_tensor: return "missing tensor";
    case FormatErrc::shape_mismatch: return "shape mismatch";
    }
    return "unknown";
}

/// Failure reading or writing one of the binary file formats.
class FormatError : public Error
{
public:
    FormatError(FormatErrc code, const std::string& what)
        : Error(std::string(to_string(code)) + ": " + what), code_(code)
    {}

    FormatErrc code() const noexcept { return code_; }

private:
    FormatErrc code_;
};

} // namespace drowse

#endif // DROWSE_ERROR_HPP_
