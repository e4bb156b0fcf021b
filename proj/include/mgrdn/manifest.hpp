#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mgrdn/config.hpp"

namespace mgr {

/// Hex SHA-1 of "blob <size>\0<bytes>", the id git gives the same content.
std::string git_blob_sha1(std::string_view bytes);
std::string git_blob_sha1_file(const std::filesystem::path& path);

enum class ExistingRunDir { fail, suffix };

/// Creates `dir`. If it already exists, either throws or picks the first
/// free "<dir>-1", "<dir>-2", ... Returns the directory created.
std::filesystem::path create_run_dir(const std::filesystem::path& dir, ExistingRunDir policy);

/// Everything needed to repeat a CLI run: the command line, the resolved
/// config, the seed, content hashes of inputs, outputs and metrics.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  Json config = Json::object();
  std::uint64_t seed = 0;
  struct Input {
    std::string path;
    std::string sha1;
  };
  std::vector<Input> inputs;
  std::vector<std::string> outputs;
  Json metrics = Json::object();

  void add_input(const std::filesystem::path& path);
  Json to_json() const;
  /// Writes manifest.json into `run_dir`.
  void write(const std::filesystem::path& run_dir) const;
};

}  // namespace mgr
