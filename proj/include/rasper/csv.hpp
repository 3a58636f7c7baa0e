#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace rasper {

/// A header row plus string cells. Quoted fields (RFC 4180 style) are
/// unquoted on read; no type conversion happens here.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(const std::string& name) const;
    std::size_t require_column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);

void write_csv(const std::string& path, const CsvTable& table);

/// True for the cell spellings treated as missing ("" and "NA").
bool is_missing_cell(const std::string& cell);

/// Parses a full cell as a decimal floating point value; throws ParseError.
double parse_number(const std::string& cell);

/// 17 significant digits, so every double round-trips.
std::string format_double(double value);

} // namespace rasper
