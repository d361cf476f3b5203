#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "uc2i/dataset.hpp"
#include "uc2i/rng.hpp"

namespace testutil {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("uc2i_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string write_file(const TempDir& dir, const std::string& name, const std::string& body) {
  const auto path = dir.file(name);
  std::ofstream(path) << body;
  return path;
}

// Each (u, i) kept with probability p; may leave isolated nodes.
inline uc2i::InteractionDataset random_dataset(std::size_t users, std::size_t items, double p,
                                               std::uint64_t seed) {
  uc2i::Rng rng(seed);
  std::vector<uc2i::Edge> edges;
  for (std::size_t u = 0; u < users; ++u) {
    for (std::size_t i = 0; i < items; ++i) {
      if (rng.uniform() < p) edges.emplace_back(u, i);
    }
  }
  return uc2i::InteractionDataset(users, items, edges);
}

}  // namespace testutil
