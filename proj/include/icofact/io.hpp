#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "icofact/design.hpp"

namespace icofact {

// Dense matrix CSV: a header "<row_label>,<col_prefix>1..<col_prefix>N"
// followed by one line per row, led by the row index.
void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& A, std::string_view row_label = "row",
                      std::string_view col_prefix = "c");
Eigen::MatrixXd read_matrix_csv(std::istream& is);

// Binary layout, little-endian: "ICOD", u32 rows, u32 cols, rows*cols f64
// in row-major order.
inline constexpr char kBinaryMagic[4] = {'I', 'C', 'O', 'D'};
void write_matrix_binary(std::ostream& os, const Eigen::MatrixXd& A);
Eigen::MatrixXd read_matrix_binary(std::istream& is);

// Picks the format by content (magic) on read and by extension (".bin") on
// write.
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& A, std::string_view row_label = "row",
                  std::string_view col_prefix = "c");

// Design CSV: a "data_level,<n>" line, header rows "face_id" (level:index),
// "level", "sigma", "tau", "center_x/y/z", then the n_f x n_k values with the
// row index first.
void write_design_csv(std::ostream& os, const DesignMatrix<double>& D);
DesignMatrix<double> read_design_csv(std::istream& is);

}  // namespace icofact
