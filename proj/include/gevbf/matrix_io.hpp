#pragma once

#include <cstdint>
#include <filesystem>

#include <Eigen/Dense>

namespace gevbf {

// Binary matrix dump:
//   u64 n_rows | u64 n_cols | u32 dtype | payload (row-major, little-endian)
// dtype 0 = float64 real, 1 = complex128 as interleaved (re, im) doubles.
enum class MatrixDtype : std::uint32_t { kReal64 = 0, kComplex128 = 1 };

struct MatrixDump {
  MatrixDtype dtype = MatrixDtype::kComplex128;
  Eigen::MatrixXcd data;  // real dumps load with zero imaginary parts
};

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXcd& m);
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
MatrixDump read_matrix(const std::filesystem::path& path);

}  // namespace gevbf
