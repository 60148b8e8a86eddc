#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace trace {

// Number formatting helpers producing shortest round-trip representations
// (via std::to_chars), so logs are deterministic and lossless.
std::string fmt_num(double v);
std::string fmt_num(long long v);
inline std::string fmt_num(int v) { return fmt_num(static_cast<long long>(v)); }
inline std::string fmt_num(size_t v) { return fmt_num(static_cast<long long>(v)); }

// Append-only CSV writer. Writes the header when the file is new and keeps
// appending rows on reopen. Fields must not contain commas or newlines.
class CsvWriter {
public:
    CsvWriter() = default;
    CsvWriter(const std::string& path, const std::vector<std::string>& header);

    void row(const std::vector<std::string>& fields);
    void flush();
    bool is_open() const { return out_.is_open(); }
    const std::string& path() const { return path_; }

private:
    std::ofstream out_;
    std::string path_;
    size_t width_ = 0;
};

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    static CsvTable read(const std::string& path);

    // Index of a column; -1 when absent.
    int col(const std::string& name) const;
};

} // namespace trace
