#include "ctwfe/io.hpp"

#include "ctwfe/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace ctwfe {

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == name) return j;
    throw DataError("column '" + std::string(name) + "' not found in the CSV header", std::string(name));
}

CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool any = false;  // current record has content
    std::size_t line = 1;

    auto end_record = [&] {
        if (!any && record.empty() && field.empty()) return;  // blank line
        record.push_back(std::move(field));
        field.clear();
        if (table.header.empty()) {
            table.header = std::move(record);
        } else {
            if (record.size() != table.header.size())
                throw DataError("line " + std::to_string(line) + " has " + std::to_string(record.size()) +
                                " fields, the header has " + std::to_string(table.header.size()));
            table.rows.push_back(std::move(record));
        }
        record.clear();
        any = false;
    };

    char c;
    while (in.get(c)) {
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"': quoted = true; any = true; break;
            case ',': record.push_back(std::move(field)); field.clear(); any = true; break;
            case '\r': break;
            case '\n': end_record(); ++line; break;
            default: field += c; any = true;
        }
    }
    if (quoted) throw DataError("unterminated quoted field at end of input");
    end_record();
    if (table.header.empty()) throw DataError("CSV input is empty");
    if (table.header[0].rfind("\xEF\xBB\xBF", 0) == 0) table.header[0].erase(0, 3);
    return table;
}

CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'", "input");
    return read_csv(in);
}

std::string format_double(double value) {
    if (std::isnan(value)) return {};
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
}

double parse_double(std::string_view text, std::string_view field) {
    double value = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || text.empty())
        throw DataError("'" + std::string(text) + "' in column '" + std::string(field) + "' is not a number",
                        std::string(field));
    return value;
}

long long parse_integer(std::string_view text, std::string_view field) {
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        throw DataError("'" + std::string(text) + "' in column '" + std::string(field) + "' is not an integer",
                        std::string(field));
    return value;
}

std::string csv_field(std::string_view text) {
    if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

PanelData read_panel(const CsvTable& table, const ColumnMapping& columns) {
    const std::size_t c_unit = table.column(columns.unit);
    const std::size_t c_time = table.column(columns.time);
    const std::size_t c_y = table.column(columns.outcome);
    const std::size_t c_e = table.column(columns.treatment);
    std::vector<std::size_t> c_x;
    for (const auto& name : columns.covariates) c_x.push_back(table.column(name));

    PanelData panel;
    std::unordered_map<std::string, std::size_t> unit_index;
    std::set<int> period_set;
    std::vector<std::optional<std::string>> treatment_text;
    for (const auto& row : table.rows) {
        const auto& id = row[c_unit];
        if (id.empty()) throw DataError("empty unit identifier", columns.unit);
        if (unit_index.emplace(id, panel.units.size()).second) {
            panel.units.push_back(id);
            treatment_text.emplace_back(row[c_e]);
        } else if (*treatment_text[unit_index[id]] != row[c_e]) {
            throw DataError("unit '" + id + "' has more than one treatment time", columns.treatment);
        }
        period_set.insert(static_cast<int>(parse_integer(row[c_time], columns.time)));
    }
    panel.periods.assign(period_set.begin(), period_set.end());

    const auto n_units = static_cast<Eigen::Index>(panel.units.size());
    const auto n_periods = static_cast<Eigen::Index>(panel.periods.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    panel.outcome = Eigen::MatrixXd::Constant(n_periods, n_units, nan);
    panel.covariates.assign(c_x.size(), Eigen::MatrixXd::Constant(n_periods, n_units, nan));
    panel.covariate_names = columns.covariates;

    std::map<int, Eigen::Index> period_row;
    for (Eigen::Index r = 0; r < n_periods; ++r) period_row[panel.periods[static_cast<std::size_t>(r)]] = r;
    std::vector<bool> seen(static_cast<std::size_t>(n_units * n_periods), false);
    for (const auto& row : table.rows) {
        const auto i = static_cast<Eigen::Index>(unit_index[row[c_unit]]);
        const int t = static_cast<int>(parse_integer(row[c_time], columns.time));
        const Eigen::Index r = period_row[t];
        const auto cell = static_cast<std::size_t>(i * n_periods + r);
        if (seen[cell]) throw DataError("unit '" + row[c_unit] + "' has two rows for period " + std::to_string(t), columns.time);
        seen[cell] = true;
        panel.outcome(r, i) = parse_double(row[c_y], columns.outcome);
        for (std::size_t p = 0; p < c_x.size(); ++p) panel.covariates[p](r, i) = parse_double(row[c_x[p]], columns.covariates[p]);
    }
    for (const auto& text : treatment_text) {
        if (text->empty())
            panel.treatment.emplace_back(std::nullopt);
        else
            panel.treatment.emplace_back(static_cast<int>(parse_integer(*text, columns.treatment)));
    }
    return panel;
}

PanelData read_panel_file(const std::string& path, const ColumnMapping& columns) {
    return read_panel(read_csv_file(path), columns);
}

void write_panel(std::ostream& out, const PanelData& panel, const ColumnMapping& columns) {
    out << csv_field(columns.unit) << ',' << csv_field(columns.time) << ',' << csv_field(columns.outcome) << ','
        << csv_field(columns.treatment);
    for (std::size_t p = 0; p < panel.covariate_count(); ++p) {
        const std::string name = p < columns.covariates.size() ? columns.covariates[p] : panel.covariate_names[p];
        out << ',' << csv_field(name);
    }
    out << '\n';
    for (std::size_t i = 0; i < panel.unit_count(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const std::string e = panel.treatment[i] ? std::to_string(*panel.treatment[i] + panel.calendar_offset) : "";
        for (std::size_t r = 0; r < panel.period_count(); ++r) {
            const auto rr = static_cast<Eigen::Index>(r);
            out << csv_field(panel.units[i]) << ',' << panel.periods[r] + panel.calendar_offset << ','
                << format_double(panel.outcome(rr, ii)) << ',' << e;
            for (const auto& x : panel.covariates) out << ',' << format_double(x(rr, ii));
            out << '\n';
        }
    }
}

}  // namespace ctwfe
