#include "rasper/csv.hpp"

#include "rasper/error.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace rasper {

std::optional<std::size_t> CsvTable::column(const std::string& name) const
{
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == name) return j;
    }
    return std::nullopt;
}

std::size_t CsvTable::require_column(const std::string& name) const
{
    auto j = column(name);
    if (!j) throw Error(ErrorCode::SchemaMismatch, "column \"" + name + "\" not found");
    return *j;
}

namespace {

std::vector<std::string> split_record(const std::string& text, std::size_t& pos, std::size_t line)
{
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool after_quote = false;
    while (pos < text.size()) {
        char c = text[pos];
        if (quoted) {
            if (c == '"') {
                if (pos + 1 < text.size() && text[pos + 1] == '"') {
                    field.push_back('"');
                    pos += 2;
                    continue;
                }
                quoted = false;
                after_quote = true;
                ++pos;
                continue;
            }
            field.push_back(c);
            ++pos;
            continue;
        }
        if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            after_quote = false;
            ++pos;
            continue;
        }
        if (c == '\r' || c == '\n') {
            if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
            ++pos;
            fields.push_back(std::move(field));
            return fields;
        }
        if (c == '"') {
            if (!field.empty() || after_quote) {
                throw Error(ErrorCode::ParseError,
                            "stray quote on line " + std::to_string(line));
            }
            quoted = true;
            ++pos;
            continue;
        }
        if (after_quote) {
            throw Error(ErrorCode::ParseError,
                        "text after closing quote on line " + std::to_string(line));
        }
        field.push_back(c);
        ++pos;
    }
    if (quoted) throw Error(ErrorCode::ParseError, "unterminated quote on line " + std::to_string(line));
    fields.push_back(std::move(field));
    return fields;
}

} // namespace

CsvTable parse_csv(const std::string& text)
{
    CsvTable table;
    std::size_t pos = 0;
    // UTF-8 byte order mark
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) pos = 3;
    std::size_t line = 1;
    bool have_header = false;
    while (pos < text.size()) {
        auto record = split_record(text, pos, line);
        ++line;
        if (record.size() == 1 && record[0].empty()) continue; // blank line
        if (!have_header) {
            table.header = std::move(record);
            have_header = true;
            continue;
        }
        if (record.size() != table.header.size()) {
            throw Error(ErrorCode::ParseError,
                        "line " + std::to_string(line - 1) + " has " + std::to_string(record.size()) +
                            " fields, header has " + std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(record));
    }
    if (!have_header) throw Error(ErrorCode::ParseError, "missing header row");
    return table;
}

CsvTable read_csv(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_csv(buffer.str());
}

namespace {

std::string quote_if_needed(const std::string& cell)
{
    if (cell.find_first_of(",\"\r\n") == std::string::npos) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

} // namespace

void write_csv(const std::string& path, const CsvTable& table)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    auto write_row = [&](const std::vector<std::string>& row) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out << ',';
            out << quote_if_needed(row[j]);
        }
        out << '\n';
    };
    write_row(table.header);
    for (const auto& row : table.rows) write_row(row);
}

bool is_missing_cell(const std::string& cell)
{
    return cell.empty() || cell == "NA";
}

double parse_number(const std::string& cell)
{
    if (is_missing_cell(cell)) throw Error(ErrorCode::MissingValue, "missing value");
    const char* begin = cell.c_str();
    char* end = nullptr;
    errno = 0;
    double value = std::strtod(begin, &end);
    while (end && (*end == ' ' || *end == '\t')) ++end;
    if (end == begin || *end != '\0' || errno == ERANGE) {
        throw Error(ErrorCode::ParseError, "not a number: \"" + cell + "\"");
    }
    return value;
}

std::string format_double(double value)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

} // namespace rasper
