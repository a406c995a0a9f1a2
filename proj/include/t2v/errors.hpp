#pragma once

#include <stdexcept>
#include <string>

namespace t2v {

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// A numeric argument lies outside its admissible range.
class RangeError : public Error
{
public:
  using Error::Error;
};

class ShapeError : public Error
{
public:
  using Error::Error;
};

class IndexError : public Error
{
public:
  using Error::Error;
};

/// Malformed file contents (bad magic, truncated payload, checksum mismatch).
class DecodeError : public Error
{
public:
  using Error::Error;
};

class IoError : public Error
{
public:
  using Error::Error;
};

class ConfigError : public Error
{
public:
  using Error::Error;
};

} // namespace t2v
