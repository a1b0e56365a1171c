#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vtk/common.hpp"
#include "vtk/matrix.hpp"

namespace vtk {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<Vec> rows;
};

// Strictly numeric CSV: comma-separated decimal floats under a one-line
// header, LF newlines. Throws ParseFailure / IoFailure.
CsvTable read_numeric_csv(const std::filesystem::path& path);

void write_numeric_csv(const std::filesystem::path& path,
                       const std::vector<std::string>& header,
                       const std::vector<Vec>& rows);

std::vector<std::string> split_fields(const std::string& line);

}  // namespace vtk
