#pragma once

#include "ctwfe/panel.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ctwfe {

/// Header names of the long-format panel CSV.
struct ColumnMapping {
    std::string unit = "unit";
    std::string time = "time";
    std::string outcome = "y";
    std::string treatment = "treatment_time";  // empty cell = never treated
    std::vector<std::string> covariates;
};

/// Minimal RFC 4180 reader: comma separated, optional double quotes,
/// first row is the header.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column position by name; throws DataError naming the column.
    std::size_t column(std::string_view name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

/// Reads a long panel (one row per unit and period) in calendar periods.
/// Units keep their first-appearance order. Cells absent from the file are
/// NaN, so `validate` reports them; duplicate rows and inconsistent
/// treatment times are rejected here.
PanelData read_panel(const CsvTable& table, const ColumnMapping& columns);
PanelData read_panel_file(const std::string& path, const ColumnMapping& columns);

/// Writes the panel in calendar periods with the given header names.
void write_panel(std::ostream& out, const PanelData& panel, const ColumnMapping& columns);

/// Shortest decimal text that reads back to the same double; empty for NaN.
std::string format_double(double value);
double parse_double(std::string_view text, std::string_view field);
long long parse_integer(std::string_view text, std::string_view field);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view text);

}  // namespace ctwfe
