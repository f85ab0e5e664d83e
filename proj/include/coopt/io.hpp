#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace coopt::io {

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);
// Hash of a matrix's shape and raw values.
std::string sha256_matrix(const Eigen::MatrixXd& m);

// Shortest representation that round-trips.
std::string format_double(double v);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

// Numeric CSV. Lines starting with '#' are skipped; a first line that does not
// parse as numbers is treated as a header.
struct CsvMatrix {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

CsvMatrix read_csv_matrix(const std::filesystem::path& path);
void write_csv_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header = {});
std::string csv_matrix_string(const Eigen::MatrixXd& m, const std::vector<std::string>& header = {});

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);
bool parse_double(std::string_view s, double& out);

}  // namespace coopt::io
