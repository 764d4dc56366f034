#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ulearn {

/// One reported benchmark row. The baseline row (method "vanilla") has no UD.
struct TableRow {
  std::string dataset;
  std::string method;
  double lp = 0.0;
  std::optional<double> ud;
  bool bold = false;
};

struct RowCheck {
  std::string dataset;
  std::string method;
  double reported = 0.0;
  double expected = 0.0;  // lp / lp_vanilla
  double delta = 0.0;     // reported - expected
  bool ok = false;
};

struct DatasetCheck {
  std::string dataset;
  double lp_vanilla = 0.0;
  std::string min_method;
  std::string bold_method;  // empty when no row is marked
  bool min_matches_bold = false;
};

struct TableCheckResult {
  std::vector<RowCheck> rows;
  std::vector<DatasetCheck> datasets;
  std::vector<std::string> errors;

  bool passed() const;
  /// Human-readable verdict, one line per row plus one per dataset.
  std::string report() const;
};

/// Columns: dataset (optional, defaults to "table"), method, lp, ud, bold
/// (optional; 1/true/yes). Other columns are ignored.
std::vector<TableRow> parse_table_csv(std::string_view text);
std::vector<TableRow> read_table_csv(const std::filesystem::path& path);

/// Per dataset: every non-baseline UD must equal lp / lp_vanilla within `tol`,
/// and the smallest-UD row must be the bold one.
TableCheckResult check_table(const std::vector<TableRow>& rows, double tol = 1e-3);

}  // namespace ulearn
