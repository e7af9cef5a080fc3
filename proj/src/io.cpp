#include "cdpde/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cdpde {

namespace fs = std::filesystem;

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

void CsvTable::add(std::vector<std::string> row) {
    if (row.size() != columns.size()) throw std::logic_error("csv: row width does not match the columns");
    rows.push_back(std::move(row));
}

std::string header_line(const std::string& scenario, unsigned seed) {
    return std::string("# ") + kToolVersion + ",scenario=" + scenario + ",seed=" + std::to_string(seed);
}

std::string render_csv(const std::string& header, const CsvTable& t) {
    std::ostringstream os;
    if (!header.empty()) os << header << "\r\n";
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << csv_field(r[i]);
        os << "\r\n";
    };
    line(t.columns);
    for (const auto& r : t.rows) line(r);
    return os.str();
}

CsvTable parse_csv(const std::string& text, std::string* header) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> rec;
    std::string field;
    bool quoted = false, any = false;
    std::size_t i = 0;
    if (text.rfind("# ", 0) == 0) {
        const auto end = text.find('\n');
        std::string h = text.substr(0, end);
        if (!h.empty() && h.back() == '\r') h.pop_back();
        if (header) *header = h;
        i = end == std::string::npos ? text.size() : end + 1;
    }
    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = any = true;
        } else if (c == ',') {
            rec.push_back(field);
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                rec.push_back(field);
                records.push_back(rec);
            }
            rec.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw IoError("csv: unterminated quoted field");
    if (any || !field.empty()) {
        rec.push_back(field);
        records.push_back(rec);
    }
    CsvTable t;
    if (records.empty()) return t;
    t.columns = records.front();
    for (std::size_t k = 1; k < records.size(); ++k) {
        if (records[k].size() != t.columns.size()) throw IoError("csv: ragged row " + std::to_string(k));
        t.rows.push_back(records[k]);
    }
    return t;
}

void write_atomic(const std::string& path, const std::string& content) {
    const fs::path target(path);
    std::error_code ec;
    if (target.has_parent_path()) fs::create_directories(target.parent_path(), ec);
    if (ec) throw IoError("io: cannot create " + target.parent_path().string() + ": " + ec.message());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("io: cannot open " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw IoError("io: write failed for " + tmp.string());
    }
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("io: cannot move " + tmp.string() + " into place");
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("io: cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void append_csv(const std::string& path, const std::string& header, const CsvTable& rows) {
    std::string content;
    if (fs::exists(path)) {
        std::string old_header;
        const CsvTable existing = parse_csv(read_file(path), &old_header);
        if (existing.columns != rows.columns) throw IoError("io: " + path + " has different columns");
        CsvTable merged = existing;
        for (const auto& r : rows.rows) merged.rows.push_back(r);
        content = render_csv(old_header, merged);
    } else {
        content = render_csv(header, rows);
    }
    write_atomic(path, content);
}

}  // namespace cdpde
