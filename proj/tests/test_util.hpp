#pragma once
// Scratch directories and small file helpers for tests.

#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace hlsflow::testutil {

class TempDir {
public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "hlsflow-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
  std::filesystem::path path_;
};

inline std::filesystem::path data_dir() { return std::filesystem::path(HLSFLOW_TEST_DATA_DIR); }

} // namespace hlsflow::testutil
