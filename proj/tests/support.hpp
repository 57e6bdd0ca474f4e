#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "ecgcode/signal_io.hpp"

namespace testsupport {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("ecgcode_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

/// Per class: lengths in [min_len, max_len], same-class gaps in [min_gap, min_gap + 1200].
inline ecgcode::AnnotationSet random_clean_set(std::mt19937_64& rng, std::int64_t record_len, std::int64_t min_len = 50,
                                               std::int64_t min_gap = 301, std::int64_t max_len = 400) {
    using namespace ecgcode;
    AnnotationSet set;
    set.record_id = "r";
    std::uniform_int_distribution<std::int64_t> len_d(min_len, max_len), gap_d(min_gap, min_gap + 1200),
        start_d(0, 600);
    for (WaveClass c : kWaveClasses) {
        std::int64_t pos = start_d(rng);
        for (;;) {
            const std::int64_t len = len_d(rng);
            if (pos + len > record_len) break;
            set.segments.push_back({c, pos, pos + len, std::nullopt});
            pos += len + gap_d(rng);
        }
    }
    set.normalize(record_len);
    return set;
}

} // namespace testsupport
