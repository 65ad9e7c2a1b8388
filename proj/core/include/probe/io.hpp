#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "probe/common.hpp"

namespace probe::io {

/// Columns of a numeric CSV file with a header row. When `expected` is non-empty
/// the header must match it exactly (after trimming whitespace).
std::vector<std::vector<double>> read_csv_columns(const std::filesystem::path& path,
                                                  const std::vector<std::string>& expected);

/// Writes equal-length numeric columns under `header`. Values are printed with
/// 17 significant digits so files round-trip exactly.
void write_csv_columns(const std::filesystem::path& path, const std::vector<std::string>& header,
                       const std::vector<std::span<const double>>& columns);

/// Raw little-endian float64 samples preceded by a uint64 little-endian sample count.
void write_signal_binary(const std::filesystem::path& path, std::span<const double> samples);
Signal read_signal_binary(const std::filesystem::path& path);

/// Two-column `index,value` CSV files used for traces.
void write_indexed_csv(const std::filesystem::path& path, const std::string& index_name,
                       const std::string& value_name, std::span<const double> values);
Signal read_indexed_csv(const std::filesystem::path& path);

void ensure_directory(const std::filesystem::path& dir);

// Little-endian primitive encoding shared by the binary formats.
void put_u32(std::vector<unsigned char>& out, std::uint32_t v);
void put_u64(std::vector<unsigned char>& out, std::uint64_t v);
void put_f64(std::vector<unsigned char>& out, double v);
std::uint32_t get_u32(std::span<const unsigned char> in, std::size_t& pos);
std::uint64_t get_u64(std::span<const unsigned char> in, std::size_t& pos);
double get_f64(std::span<const unsigned char> in, std::size_t& pos);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes);

}  // namespace probe::io
