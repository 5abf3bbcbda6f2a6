#pragma once

#include <stdexcept>
#include <string>

namespace sreg {

// Base class for all toolkit errors.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Two grids (or a grid and a field/mask) that must agree do not.
class ShapeError : public Error {
  public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid parameter value (degenerate magnitude, bad window, ...).
class ValueError : public Error {
  public:
    explicit ValueError(const std::string& msg) : Error(msg) {}
};

// Optimization produced a non-finite loss.
class DivergenceError : public Error {
  public:
    DivergenceError(const std::string& msg, long step) : Error(msg), step_(step) {}
    long step() const { return step_; }

  private:
    long step_;
};

// A theorem precondition does not hold for the supplied fields.
class PreconditionError : public Error {
  public:
    PreconditionError(const std::string& msg, long voxel) : Error(msg), voxel_(voxel) {}
    long voxel() const { return voxel_; }

  private:
    long voxel_;
};

// File format or filesystem failure.
class IoError : public Error {
  public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace sreg
