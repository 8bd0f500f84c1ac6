#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "corpus.hpp"
#include "qaexpert/cli.hpp"

namespace pipeline {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& sub) const { return path_ / sub; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::vector<qaexpert::cli::DumpSource> write_dumps(const std::vector<corpus::SubsiteDump>& sites,
                                                          const std::filesystem::path& dir) {
  std::vector<qaexpert::cli::DumpSource> out;
  for (const auto& s : sites) out.push_back({s.name, s.write(dir)});
  return out;
}

/// User ids from the "rank,user_id,score" output of cmd_recommend.
inline std::vector<long> recommended_users(const std::string& csv) {
  std::vector<long> out;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    out.push_back(std::stol(line.substr(a + 1, b - a - 1)));
  }
  return out;
}

}  // namespace pipeline
