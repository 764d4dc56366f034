#include "ulearn/table_check.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "ulearn/error.hpp"
#include "ulearn/io.hpp"

namespace ulearn {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool parse_flag(const std::string& s) {
  const std::string v = lower(s);
  return v == "1" || v == "true" || v == "yes" || v == "bold";
}

}  // namespace

std::vector<TableRow> parse_table_csv(std::string_view text) {
  const CsvTable t = parse_csv(text);
  const auto dataset_col = t.find_column("dataset");
  const auto bold_col = t.find_column("bold");
  const std::size_t method_col = t.column("method"), lp_col = t.column("lp"), ud_col = t.column("ud");
  std::vector<TableRow> rows;
  for (const auto& r : t.rows) {
    TableRow row;
    row.dataset = dataset_col ? r.at(*dataset_col) : "table";
    row.method = r.at(method_col);
    row.lp = parse_double(r.at(lp_col));
    const std::string& ud = r.at(ud_col);
    if (!ud.empty()) row.ud = parse_double(ud);
    row.bold = bold_col && parse_flag(r.at(*bold_col));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<TableRow> read_table_csv(const std::filesystem::path& path) {
  return parse_table_csv(read_text_file(path));
}

bool TableCheckResult::passed() const {
  if (!errors.empty() || rows.empty()) return false;
  return std::all_of(rows.begin(), rows.end(), [](const RowCheck& r) { return r.ok; }) &&
         std::all_of(datasets.begin(), datasets.end(), [](const DatasetCheck& d) { return d.min_matches_bold; });
}

std::string TableCheckResult::report() const {
  std::ostringstream out;
  for (const auto& e : errors) out << "error: " << e << '\n';
  for (const auto& r : rows) {
    out << (r.ok ? "ok   " : "FAIL ") << r.dataset << ' ' << r.method << ": ud " << format_double(r.reported)
        << " expected " << format_double(r.expected) << " delta " << format_double(r.delta) << '\n';
  }
  for (const auto& d : datasets) {
    out << (d.min_matches_bold ? "ok   " : "FAIL ") << d.dataset << ": min ud " << d.min_method << ", bold "
        << (d.bold_method.empty() ? "(none)" : d.bold_method) << '\n';
  }
  out << (passed() ? "PASS" : "FAIL") << '\n';
  return out.str();
}

TableCheckResult check_table(const std::vector<TableRow>& rows, double tol) {
  TableCheckResult res;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const TableRow*>> groups;
  for (const auto& r : rows) {
    if (!groups.contains(r.dataset)) order.push_back(r.dataset);
    groups[r.dataset].push_back(&r);
  }
  for (const auto& name : order) {
    const auto& group = groups[name];
    const auto base = std::find_if(group.begin(), group.end(), [](const TableRow* r) { return lower(r->method) == "vanilla"; });
    if (base == group.end()) {
      res.errors.push_back(name + ": no vanilla row");
      continue;
    }
    DatasetCheck dc;
    dc.dataset = name;
    dc.lp_vanilla = (*base)->lp;
    if (dc.lp_vanilla == 0.0) {
      res.errors.push_back(name + ": vanilla #LP is zero");
      continue;
    }
    double best = 0.0;
    for (const TableRow* r : group) {
      if (r == *base) continue;
      if (!r->ud) {
        res.errors.push_back(name + " " + r->method + ": missing ud");
        continue;
      }
      RowCheck rc{name, r->method, *r->ud, r->lp / dc.lp_vanilla, 0.0, false};
      rc.delta = rc.reported - rc.expected;
      // Slack for the decimal rounding of the inputs themselves.
      rc.ok = std::abs(rc.delta) <= tol + 1e-12;
      res.rows.push_back(rc);
      if (dc.min_method.empty() || *r->ud < best) {
        best = *r->ud;
        dc.min_method = r->method;
      }
      if (r->bold) dc.bold_method = r->method;
    }
    dc.min_matches_bold = !dc.min_method.empty() && dc.min_method == dc.bold_method;
    res.datasets.push_back(dc);
  }
  return res;
}

}  // namespace ulearn
