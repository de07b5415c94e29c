#ifndef TWOPASS_COMMON_HPP
#define TWOPASS_COMMON_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace twopass {

// All model math runs in 64-bit floats on row-major dense matrices.
using Scalar = double;
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Thrown when operand shapes do not line up.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a NaN or Inf shows up anywhere in forward or backward math.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or truncated files (corpus, checkpoint, decode output).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad argument values outside the file/shape categories.
struct ValueError : std::runtime_error {
  explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string shape_string(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

inline void check_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) {
    throw NumericError(std::string("non-finite values in ") + what);
  }
}

using TokenId = int;
using TokenSeq = std::vector<TokenId>;

}  // namespace twopass

#endif  // TWOPASS_COMMON_HPP
