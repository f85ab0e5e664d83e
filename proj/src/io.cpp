#include "coopt/io.hpp"

#include <openssl/sha.h>

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "coopt/errors.hpp"

namespace coopt::io {

namespace {

std::string to_hex(const unsigned char* digest, std::size_t n) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = kHex[digest[i] >> 4];
    out[2 * i + 1] = kHex[digest[i] & 0xf];
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest.data());
  return to_hex(digest.data(), digest.size());
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

std::string sha256_matrix(const Eigen::MatrixXd& m) {
  std::string buf;
  const std::int64_t dims[2] = {m.rows(), m.cols()};
  buf.append(reinterpret_cast<const char*>(dims), sizeof(dims));
  // Column-major raw bytes; fine because hashes are only compared on one platform.
  buf.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
  return sha256_hex(buf);
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

CsvMatrix read_csv_matrix(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  CsvMatrix result;
  std::vector<std::vector<double>> rows;
  std::size_t cols = 0;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto fields = split(view, ',');
    std::vector<double> values(fields.size());
    bool numeric = true;
    for (std::size_t i = 0; i < fields.size() && numeric; ++i) numeric = parse_double(fields[i], values[i]);
    if (!numeric) {
      if (rows.empty() && result.header.empty()) {
        for (auto f : fields) result.header.emplace_back(trim(f));
        continue;
      }
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": non-numeric field");
    }
    if (cols == 0) cols = values.size();
    if (values.size() != cols) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(cols) + " columns");
    }
    rows.push_back(std::move(values));
  }
  result.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) result.values(i, j) = rows[i][j];
  }
  return result;
}

std::string csv_matrix_string(const Eigen::MatrixXd& m, const std::vector<std::string>& header) {
  std::string out;
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j) out += ',';
      out += header[j];
    }
    out += '\n';
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_csv_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header) {
  write_text(path, csv_matrix_string(m, header));
}

}  // namespace coopt::io
