#include "ulearn/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ulearn/error.hpp"

namespace ulearn {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (text == "nan") return std::nan("");
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error("cannot parse number '" + std::string(text) + "'");
  }
  return v;
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<std::size_t> CsvTable::find_column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t CsvTable::column(std::string_view name) const {
  auto c = find_column(name);
  if (!c) throw Error("CSV has no column '" + std::string(name) + "'");
  return *c;
}

namespace {

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    std::string_view cell = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
    cells.emplace_back(cell);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

}  // namespace

std::string to_csv(const CsvTable& table) {
  std::string out;
  auto emit = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
  return out;
}

CsvTable parse_csv(std::string_view text) {
  CsvTable t;
  bool have_header = false;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto cells = split_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw Error("CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                  std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw Error("CSV input is empty");
  return t;
}

CsvTable read_csv_file(const std::filesystem::path& path) { return parse_csv(read_text_file(path)); }

void write_csv_file(const std::filesystem::path& path, const CsvTable& table) {
  write_text_file(path, to_csv(table));
}

namespace {

constexpr char kSnapMagic[8] = {'U', 'L', 'S', 'N', 'A', 'P', 'S', '1'};
constexpr std::uint32_t kSnapVersion = 1;

static_assert(std::endian::native == std::endian::little, "snapshot files assume a little-endian host");

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("truncated snapshot file");
  return v;
}

}  // namespace

void write_snapshots(const std::filesystem::path& path, const std::vector<ParamSnapshot>& snaps,
                     std::string_view config_hash) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  const std::uint64_t dim = snaps.empty() ? 0 : snaps.front().params.size();
  out.write(kSnapMagic, sizeof(kSnapMagic));
  put(out, kSnapVersion);
  char hash[16] = {};
  std::memcpy(hash, config_hash.data(), std::min<std::size_t>(16, config_hash.size()));
  out.write(hash, sizeof(hash));
  put(out, static_cast<std::uint64_t>(snaps.size()));
  put(out, dim);
  for (const auto& s : snaps) {
    if (s.params.size() != dim) throw ShapeError("snapshots must share one dimension");
    put(out, static_cast<std::uint64_t>(s.step));
    out.write(reinterpret_cast<const char*>(s.params.data()), static_cast<std::streamsize>(dim * sizeof(double)));
  }
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<ParamSnapshot> read_snapshots(const std::filesystem::path& path, std::string* config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kSnapMagic, sizeof(magic)) != 0) throw Error(path.string() + " is not a snapshot file");
  const auto version = get<std::uint32_t>(in);
  if (version != kSnapVersion) throw Error("unsupported snapshot version " + std::to_string(version));
  char hash[16];
  in.read(hash, sizeof(hash));
  if (config_hash) config_hash->assign(hash, strnlen(hash, sizeof(hash)));
  const auto count = get<std::uint64_t>(in);
  const auto dim = get<std::uint64_t>(in);
  std::vector<ParamSnapshot> snaps(count);
  for (auto& s : snaps) {
    s.step = get<std::uint64_t>(in);
    s.params.resize(dim);
    in.read(reinterpret_cast<char*>(s.params.data()), static_cast<std::streamsize>(dim * sizeof(double)));
    if (!in) throw Error("truncated snapshot file");
  }
  return snaps;
}

}  // namespace ulearn
