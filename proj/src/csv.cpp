#include "vtk/csv.hpp"

#include <fstream>

namespace vtk {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    for (;;) {
        size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

CsvTable read_numeric_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoFailure", "cannot open " + path.string());
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw Error("ParseFailure", "empty CSV: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    table.header = split_fields(line);
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_fields(line);
        if (fields.size() != table.header.size()) {
            throw Error("ParseFailure", path.string() + ":" + std::to_string(lineno) +
                                             ": expected " + std::to_string(table.header.size()) +
                                             " fields, got " + std::to_string(fields.size()));
        }
        Vec row;
        row.reserve(fields.size());
        for (const auto& f : fields) row.push_back(parse_double(f));
        table.rows.push_back(std::move(row));
    }
    return table;
}

void write_numeric_csv(const std::filesystem::path& path,
                       const std::vector<std::string>& header,
                       const std::vector<Vec>& rows) {
    std::ofstream out(path, std::ios::binary);  // binary: LF newlines everywhere
    if (!out) throw Error("IoFailure", "cannot write " + path.string());
    for (size_t i = 0; i < header.size(); ++i) {
        if (i) out << ',';
        out << header[i];
    }
    out << '\n';
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << format_double(row[i]);
        }
        out << '\n';
    }
    if (!out) throw Error("IoFailure", "write failed: " + path.string());
}

}  // namespace vtk
