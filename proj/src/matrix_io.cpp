#include "mscr/matrix_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>

namespace mscr {

namespace {

constexpr std::array<char, 8> kMagic = {'M', 'S', 'C', 'R', 'M', 'A', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "binary matrix format assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw InvalidInput("read_matrix_binary: truncated file " + path.string());
  }
  return value;
}

}  // namespace

void write_matrix_binary(const std::filesystem::path& path, const Matrix& X) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_matrix_binary: cannot open " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::int64_t>(out, X.rows());
  put<std::int64_t>(out, X.cols());
  for (Index i = 0; i < X.rows(); ++i) {
    for (Index j = 0; j < X.cols(); ++j) put<double>(out, X(i, j));
  }
  if (!out) throw std::runtime_error("write_matrix_binary: write failed for " + path.string());
}

Matrix read_matrix_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("read_matrix_binary: cannot open " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw InvalidInput("read_matrix_binary: bad magic in " + path.string());
  }
  const auto rows = get<std::int64_t>(in, path);
  const auto cols = get<std::int64_t>(in, path);
  if (rows < 0 || cols < 0) throw InvalidInput("read_matrix_binary: negative shape in " + path.string());
  Matrix X(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) X(i, j) = get<double>(in, path);
  }
  require_finite(X, "read_matrix_binary");
  return X;
}

nlohmann::json matrix_to_json(const Matrix& X) {
  nlohmann::json data = nlohmann::json::array();
  for (Index i = 0; i < X.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(X.cols()));
    for (Index j = 0; j < X.cols(); ++j) row[static_cast<std::size_t>(j)] = X(i, j);
    data.push_back(std::move(row));
  }
  return {{"rows", X.rows()}, {"cols", X.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows) {
    throw InvalidInput("matrix_from_json: shape does not match data");
  }
  Matrix X(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = data.at(static_cast<std::size_t>(i));
    if (static_cast<Index>(row.size()) != cols) throw InvalidInput("matrix_from_json: ragged row");
    for (Index c = 0; c < cols; ++c) X(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  require_finite(X, "matrix_from_json");
  return X;
}

nlohmann::json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  Vector v(static_cast<Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Index>(i)) = values[i];
  return v;
}

Matrix read_matrix(const std::filesystem::path& path) {
  if (path.extension() == ".json") {
    std::ifstream in(path);
    if (!in) throw InvalidInput("read_matrix: cannot open " + path.string());
    return matrix_from_json(nlohmann::json::parse(in));
  }
  return read_matrix_binary(path);
}

void write_matrix(const std::filesystem::path& path, const Matrix& X) {
  if (path.extension() == ".json") {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_matrix: cannot open " + path.string());
    out << matrix_to_json(X).dump() << '\n';
    return;
  }
  write_matrix_binary(path, X);
}

}  // namespace mscr
