#include "mmsched/csv.hpp"

#include <charconv>
#include <cstdlib>

#include "mmsched/error.hpp"

namespace mmsched::csv {

std::string trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    const auto begin = s.find_first_not_of(ws);
    if (begin == std::string_view::npos) return {};
    const auto end = s.find_last_not_of(ws);
    return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

double parse_double(std::string_view field, std::size_t row) {
    const std::string s = trim(field);
    char* end = nullptr;
    const double v = s.empty() ? 0.0 : std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) {
        throw InputError("row " + std::to_string(row) + ": not a number: '" + s + "'");
    }
    return v;
}

std::int64_t parse_int(std::string_view field, std::size_t row) {
    const std::string s = trim(field);
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        throw InputError("row " + std::to_string(row) + ": not an integer: '" + s + "'");
    }
    return v;
}

void expect_header(std::istream& in, std::string_view expected) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("missing header '" + std::string(expected) + "'");
    if (trim(line) != expected) {
        throw InputError("row 1: expected header '" + std::string(expected) + "', got '" + trim(line) + "'");
    }
}

}  // namespace mmsched::csv
