#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace testutil {

// Least-squares slope of log(freq) vs log(rank) over the top `top_n` ranks
// of a frequency table (sorted descending by count).
inline double zipf_loglog_slope(std::vector<long long> counts, size_t top_n) {
    std::sort(counts.begin(), counts.end(), std::greater<>());
    if (counts.size() > top_n) counts.resize(top_n);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    size_t n = 0;
    for (size_t r = 0; r < counts.size(); ++r) {
        if (counts[r] <= 0) continue;
        const double x = std::log(static_cast<double>(r + 1));
        const double y = std::log(static_cast<double>(counts[r]));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    const double denom = n * sxx - sx * sx;
    return (n * sxy - sx * sy) / denom;
}

// Unique scratch directory per test binary run.
inline std::string scratch_dir(const std::string& tag) {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / ("trace_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

inline std::string read_file(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) return {};
    std::string out;
    char buf[4096];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) out.append(buf, n);
    std::fclose(f);
    return out;
}

} // namespace testutil
