#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fmc {

// Shortest representation that round-trips; identical across runs.
std::string format_double(double x);

struct CsvTable {
    std::vector<std::string> comments; // '#' lines, marker stripped
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const; // throws IoError if absent
};

CsvTable read_csv(const std::filesystem::path& path);
double parse_double(const std::string& field, const std::string& context);

void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace fmc
