#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace mmsched::csv {

/// Splits one CSV line on commas. No quoting: every file this project writes
/// is purely numeric or identifier-valued.
[[nodiscard]] std::vector<std::string> split(std::string_view line);

[[nodiscard]] std::string trim(std::string_view s);

/// Parses a full-field number; throws InputError naming `row` on failure.
[[nodiscard]] double parse_double(std::string_view field, std::size_t row);
[[nodiscard]] std::int64_t parse_int(std::string_view field, std::size_t row);

/// Reads the header line and checks it equals `expected` (whitespace-trimmed).
void expect_header(std::istream& in, std::string_view expected);

/// Reads data rows (skipping blank lines) and checks the column count. The
/// row number passed to `fn` is the 1-based line number in the file.
template <class Fn>
void for_each_row(std::istream& in, std::size_t columns, Fn&& fn);

}  // namespace mmsched::csv

#include "mmsched/error.hpp"

namespace mmsched::csv {

template <class Fn>
void for_each_row(std::istream& in, std::size_t columns, Fn&& fn) {
    std::string line;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto fields = split(line);
        if (fields.size() != columns) {
            throw InputError("row " + std::to_string(row) + ": expected " + std::to_string(columns) +
                             " fields, got " + std::to_string(fields.size()));
        }
        fn(fields, row);
    }
}

}  // namespace mmsched::csv
