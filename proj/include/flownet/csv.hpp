#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace flownet {

// Minimal CSV support for the flat-file interfaces: comma-separated, first
// line is a required header, UTF-8 passthrough, no quoting (identifiers and
// numbers only).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;  // throws InputError if absent
    bool has_column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& origin);

// Field parsers that report file/line context on failure.
double parse_double(const std::string& field, const std::string& context);
long long parse_count(const std::string& field, const std::string& context);

// Stable shortest-round-trip formatting so reruns are byte-identical.
std::string format_double(double x);

// Write-then-rename so interrupted runs never leave partial files.
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace flownet
