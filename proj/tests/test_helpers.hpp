#pragma once

#include <filesystem>
#include <random>
#include <string>

namespace testutil {

// Scratch directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    TempDir() {
        std::random_device rd;
        const auto tag = std::to_string(std::uniform_int_distribution<unsigned>()(rd));
        path_ = std::filesystem::temp_directory_path() / ("grade_test_" + tag);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(GRADE_TESTS_DIR) / "fixtures" / name;
}

inline std::filesystem::path templates_dir() {
    return std::filesystem::path(GRADE_TEMPLATES_DIR);
}

}  // namespace testutil
