#pragma once

// CSV artifacts: RFC-4180 quoting, 17 significant digits, one provenance header
// line per file, atomic replacement on write.

#include <stdexcept>
#include <string>
#include <vector>

namespace cdpde {

inline constexpr const char* kToolVersion = "cd-pde 1.0.0";

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string format_double(double v);
std::string csv_field(const std::string& s);

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row);
};

// "# <version>,scenario=<name>,seed=<seed>"
std::string header_line(const std::string& scenario, unsigned seed);
std::string render_csv(const std::string& header, const CsvTable& t);
// Parses what render_csv writes; the header line is returned separately.
CsvTable parse_csv(const std::string& text, std::string* header = nullptr);

void write_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);
// Appends rows to a CSV, creating it with the given header when absent.
void append_csv(const std::string& path, const std::string& header, const CsvTable& rows);

}  // namespace cdpde
