#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace needlesim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

using NodeId = std::int32_t;
using ElementId = std::int32_t;

inline constexpr ElementId kNoElement = -1;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when an input violates a documented precondition.
class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what) : Error(what) {}
};

/// Raised when a numerical procedure cannot produce a usable result.
class NumericalFailure : public Error {
 public:
  explicit NumericalFailure(const std::string& what) : Error(what) {}
};

}  // namespace needlesim
