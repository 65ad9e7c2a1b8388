#include "probe/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace probe::io {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace

std::vector<std::vector<double>> read_csv_columns(const std::filesystem::path& path,
                                                  const std::vector<std::string>& expected) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
  const auto header = split_commas(line);
  if (!expected.empty() && header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw IoError(path.string() + ": expected header '" + want + "', got '" + trim(line) + "'");
  }
  std::vector<std::vector<double>> cols(header.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(header.size()) + " columns");
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      try {
        std::size_t used = 0;
        cols[c].push_back(std::stod(cells[c], &used));
        if (used != cells[c].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": not a number: '" +
                      cells[c] + "'");
      }
    }
  }
  return cols;
}

void write_csv_columns(const std::filesystem::path& path, const std::vector<std::string>& header,
                       const std::vector<std::span<const double>>& columns) {
  if (header.size() != columns.size()) throw IoError("write_csv_columns: header/column mismatch");
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns) {
    if (c.size() != rows) throw IoError("write_csv_columns: ragged columns for " + path.string());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      out << (c ? "," : "") << format_double(columns[c][r]);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

void put_f64(std::vector<unsigned char>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::span<const unsigned char> in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw IoError("unexpected end of data");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

std::uint64_t get_u64(std::span<const unsigned char> in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw IoError("unexpected end of data");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += 8;
  return v;
}

double get_f64(std::span<const unsigned char> in, std::size_t& pos) {
  return std::bit_cast<double>(get_u64(in, pos));
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_signal_binary(const std::filesystem::path& path, std::span<const double> samples) {
  std::vector<unsigned char> bytes;
  bytes.reserve(8 + 8 * samples.size());
  put_u64(bytes, samples.size());
  for (double s : samples) put_f64(bytes, s);
  write_file_bytes(path, bytes);
}

Signal read_signal_binary(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t pos = 0;
  const std::uint64_t n = get_u64(bytes, pos);
  if (bytes.size() != 8 + 8 * n) {
    throw IoError(path.string() + ": sample count header says " + std::to_string(n) +
                  " but file holds " + std::to_string((bytes.size() - 8) / 8));
  }
  Signal out(n);
  for (auto& s : out) s = get_f64(bytes, pos);
  return out;
}

void write_indexed_csv(const std::filesystem::path& path, const std::string& index_name,
                       const std::string& value_name, std::span<const double> values) {
  std::vector<double> idx(values.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<double>(i);
  write_csv_columns(path, {index_name, value_name}, {idx, values});
}

Signal read_indexed_csv(const std::filesystem::path& path) {
  auto cols = read_csv_columns(path, {});
  if (cols.size() != 2) throw IoError(path.string() + ": expected two columns (index,value)");
  for (std::size_t i = 0; i < cols[0].size(); ++i) {
    if (cols[0][i] != static_cast<double>(i)) {
      throw IoError(path.string() + ": index column is not 0..n-1 at row " + std::to_string(i + 2));
    }
  }
  return std::move(cols[1]);
}

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace probe::io
