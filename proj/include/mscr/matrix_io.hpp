#pragma once

#include "mscr/spectral_core.hpp"

#include <json.hpp>

#include <filesystem>

namespace mscr {

/// Binary layout: 8-byte magic "MSCRMAT1", int64 rows, int64 cols, then
/// rows·cols little-endian float64 values in row-major order.
void write_matrix_binary(const std::filesystem::path& path, const Matrix& X);
Matrix read_matrix_binary(const std::filesystem::path& path);

/// JSON layout: {"rows": n1, "cols": n2, "data": [[row 0], [row 1], ...]}.
nlohmann::json matrix_to_json(const Matrix& X);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

/// Dispatches on extension: ".json" reads JSON, anything else the binary layout.
Matrix read_matrix(const std::filesystem::path& path);
void write_matrix(const std::filesystem::path& path, const Matrix& X);

}  // namespace mscr
