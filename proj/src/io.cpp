#include "icofact/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "format.hpp"
#include "icofact/errors.hpp"

namespace icofact {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw IoError("malformed number '" + std::string(s) + "'");
    }
    return v;
}

bool getline_trimmed(std::istream& is, std::string& line) {
    if (!std::getline(is, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

void put_u32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                   static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw IoError("truncated binary header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_row(std::ostream& os, std::string& line, Eigen::Index i, const Eigen::MatrixXd& A) {
    line = std::to_string(i);
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
        line += ',';
        detail::append_number(line, A(i, j));
    }
    line += '\n';
    os << line;
}

Eigen::MatrixXd parse_rows(std::istream& is, Eigen::Index expected_cols) {
    std::vector<double> values;
    Eigen::Index rows = 0;
    std::string line;
    while (getline_trimmed(is, line)) {
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (static_cast<Eigen::Index>(fields.size()) != expected_cols + 1) {
            throw IoError("row " + std::to_string(rows) + " has " + std::to_string(fields.size() - 1) +
                          " values, expected " + std::to_string(expected_cols));
        }
        for (std::size_t k = 1; k < fields.size(); ++k) values.push_back(parse_double(fields[k]));
        ++rows;
    }
    Eigen::MatrixXd A(rows, expected_cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < expected_cols; ++j) {
            A(i, j) = values[static_cast<std::size_t>(i * expected_cols + j)];
        }
    }
    return A;
}

}  // namespace

void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& A, std::string_view row_label,
                      std::string_view col_prefix) {
    std::string line(row_label);
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
        line += ',';
        line += col_prefix;
        line += std::to_string(j + 1);
    }
    line += '\n';
    os << line;
    for (Eigen::Index i = 0; i < A.rows(); ++i) write_row(os, line, i, A);
}

Eigen::MatrixXd read_matrix_csv(std::istream& is) {
    std::string header;
    if (!getline_trimmed(is, header)) throw IoError("empty CSV");
    const auto cols = static_cast<Eigen::Index>(split_fields(header).size()) - 1;
    return parse_rows(is, cols);
}

void write_matrix_binary(std::ostream& os, const Eigen::MatrixXd& A) {
    os.write(kBinaryMagic, 4);
    put_u32(os, static_cast<std::uint32_t>(A.rows()));
    put_u32(os, static_cast<std::uint32_t>(A.cols()));
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        for (Eigen::Index j = 0; j < A.cols(); ++j) {
            auto bits = std::bit_cast<std::uint64_t>(A(i, j));
            std::array<char, 8> b{};
            for (int k = 0; k < 8; ++k) b[static_cast<std::size_t>(k)] = static_cast<char>((bits >> (8 * k)) & 0xff);
            os.write(b.data(), 8);
        }
    }
}

Eigen::MatrixXd read_matrix_binary(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kBinaryMagic, 4) != 0) throw IoError("missing ICOD magic");
    const std::uint32_t rows = get_u32(is);
    const std::uint32_t cols = get_u32(is);
    Eigen::MatrixXd A(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
        for (std::uint32_t j = 0; j < cols; ++j) {
            std::array<unsigned char, 8> b{};
            if (!is.read(reinterpret_cast<char*>(b.data()), 8)) throw IoError("truncated binary payload");
            std::uint64_t bits = 0;
            for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(k)]) << (8 * k);
            A(i, j) = std::bit_cast<double>(bits);
        }
    }
    return A;
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    const bool binary = in.gcount() == 4 && std::memcmp(magic, kBinaryMagic, 4) == 0;
    in.clear();
    in.seekg(0);
    return binary ? read_matrix_binary(in) : read_matrix_csv(in);
}

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& A, std::string_view row_label,
                  std::string_view col_prefix) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    if (path.extension() == ".bin") {
        write_matrix_binary(out, A);
    } else {
        write_matrix_csv(out, A, row_label, col_prefix);
    }
    if (!out) throw IoError("write failed for " + path.string());
}

void write_design_csv(std::ostream& os, const DesignMatrix<double>& D) {
    std::string line = "data_level," + std::to_string(D.data_level) + '\n';
    os << line;
    line = "face_id";
    for (const auto& c : D.columns) line += ',' + std::to_string(c.face.level) + ':' + std::to_string(c.face.index);
    os << line << '\n';
    line = "level";
    for (const auto& c : D.columns) line += ',' + std::to_string(c.face.level);
    os << line << '\n';
    line = "sigma";
    for (const auto& c : D.columns) {
        line += ',';
        detail::append_number(line, c.sigma);
    }
    os << line << '\n';
    line = "tau";
    for (const auto& c : D.columns) {
        line += ',';
        detail::append_number(line, c.tau);
    }
    os << line << '\n';
    for (int axis = 0; axis < 3; ++axis) {
        line = axis == 0 ? "center_x" : axis == 1 ? "center_y" : "center_z";
        for (const auto& c : D.columns) {
            line += ',';
            detail::append_number(line, c.center(axis));
        }
        os << line << '\n';
    }
    for (Eigen::Index i = 0; i < D.values.rows(); ++i) write_row(os, line, i, D.values);
}

DesignMatrix<double> read_design_csv(std::istream& is) {
    const char* labels[] = {"face_id", "level", "sigma", "tau", "center_x", "center_y", "center_z"};
    std::vector<std::vector<std::string>> header;
    std::string line;
    if (!getline_trimmed(is, line) || line.rfind("data_level,", 0) != 0) throw IoError("design CSV: missing data_level row");
    const int data_level = static_cast<int>(parse_double(std::string_view(line).substr(11)));
    for (const char* label : labels) {
        if (!getline_trimmed(is, line)) throw IoError("design CSV truncated in header");
        auto fields = split_fields(line);
        if (fields.empty() || fields[0] != label) throw IoError(std::string("design CSV: expected header row ") + label);
        header.emplace_back(fields.begin() + 1, fields.end());
    }
    const std::size_t nk = header[0].size();
    for (const auto& h : header) {
        if (h.size() != nk) throw IoError("design CSV: header rows disagree on column count");
    }
    DesignMatrix<double> D;
    for (std::size_t j = 0; j < nk; ++j) {
        const std::string& id = header[0][j];
        const auto colon = id.find(':');
        if (colon == std::string::npos) throw IoError("design CSV: malformed face id " + id);
        DesignColumn c;
        c.face.level = static_cast<int>(parse_double(std::string_view(id).substr(0, colon)));
        c.face.index = static_cast<int>(parse_double(std::string_view(id).substr(colon + 1)));
        c.sigma = parse_double(header[2][j]);
        c.tau = parse_double(header[3][j]);
        c.center = Point3(parse_double(header[4][j]), parse_double(header[5][j]), parse_double(header[6][j]));
        D.columns.push_back(c);
    }
    D.values = parse_rows(is, static_cast<Eigen::Index>(nk));
    D.data_level = data_level;
    return D;
}

}  // namespace icofact
