#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ulearn {

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);
std::string format_optional(const std::optional<double>& v);
double parse_double(std::string_view text);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view text);

void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

/// Minimal CSV table: a header row plus string cells. No quoting is needed
/// for the numeric tables this library writes.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
  std::optional<std::size_t> find_column(std::string_view name) const;
};

std::string to_csv(const CsvTable& table);
CsvTable parse_csv(std::string_view text);
CsvTable read_csv_file(const std::filesystem::path& path);
void write_csv_file(const std::filesystem::path& path, const CsvTable& table);

struct ParamSnapshot {
  std::size_t step = 0;
  std::vector<double> params;
};

/// Binary trajectory file: magic "ULSNAPS1", u32 version, 16-byte config
/// hash, u64 count, u64 dim, then per snapshot u64 step + dim little-endian
/// doubles.
void write_snapshots(const std::filesystem::path& path, const std::vector<ParamSnapshot>& snaps,
                     std::string_view config_hash);
std::vector<ParamSnapshot> read_snapshots(const std::filesystem::path& path, std::string* config_hash = nullptr);

}  // namespace ulearn
