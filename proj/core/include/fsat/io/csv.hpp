#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fsat::io {

using CsvRow = std::vector<std::string>;

/// Quotes a field when it contains a comma, quote, CR or LF; quotes are doubled.
std::string csv_field(std::string_view field);
std::string csv_line(const CsvRow& row);

/// RFC 4180 records: quoted fields may span lines. CRLF and LF both end a record.
std::vector<CsvRow> parse_csv(std::string_view text);

void write_csv(const std::filesystem::path& path, const CsvRow& header,
               const std::vector<CsvRow>& rows);
std::vector<CsvRow> read_csv(const std::filesystem::path& path);

}  // namespace fsat::io
