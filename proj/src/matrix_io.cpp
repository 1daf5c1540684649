#include "gevbf/matrix_io.hpp"

#include <fstream>

#include "gevbf/error.hpp"

namespace gevbf {

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(in.good(), ErrorKind::kIo, "truncated matrix dump");
  return v;
}

std::ofstream open_out(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols, MatrixDtype dtype) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  put<std::uint64_t>(out, static_cast<std::uint64_t>(rows));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(cols));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dtype));
  return out;
}

}  // namespace

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXcd& m) {
  auto out = open_out(path, m.rows(), m.cols(), MatrixDtype::kComplex128);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      put<double>(out, m(i, j).real());
      put<double>(out, m(i, j).imag());
    }
  require(out.good(), ErrorKind::kIo, "short write to " + path.string());
}

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  auto out = open_out(path, m.rows(), m.cols(), MatrixDtype::kReal64);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(out, m(i, j));
  require(out.good(), ErrorKind::kIo, "short write to " + path.string());
}

MatrixDump read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  const auto rows = get<std::uint64_t>(in);
  const auto cols = get<std::uint64_t>(in);
  const auto tag = get<std::uint32_t>(in);
  require(tag <= 1, ErrorKind::kIo, "unknown matrix dtype tag " + std::to_string(tag));
  MatrixDump dump;
  dump.dtype = static_cast<MatrixDtype>(tag);
  dump.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < dump.data.rows(); ++i)
    for (Eigen::Index j = 0; j < dump.data.cols(); ++j) {
      const double re = get<double>(in);
      const double im = dump.dtype == MatrixDtype::kComplex128 ? get<double>(in) : 0.0;
      dump.data(i, j) = {re, im};
    }
  return dump;
}

}  // namespace gevbf
