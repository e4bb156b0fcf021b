#include "mgrdn/manifest.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iterator>
#include <memory>
#include <stdexcept>

namespace mgr {

namespace fs = std::filesystem;

std::string git_blob_sha1(std::string_view bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("sha1 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 15];
  }
  return hex;
}

std::string git_blob_sha1_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return git_blob_sha1(bytes);
}

fs::path create_run_dir(const fs::path& dir, ExistingRunDir policy) {
  if (fs::create_directories(dir)) return dir;
  if (policy == ExistingRunDir::fail) {
    throw std::runtime_error("run directory " + dir.string() + " already exists (pass --suffix to pick a new name)");
  }
  for (int i = 1;; ++i) {
    fs::path candidate = dir;
    candidate += "-" + std::to_string(i);
    if (fs::create_directory(candidate)) return candidate;
  }
}

void RunManifest::add_input(const fs::path& path) { inputs.push_back({path.string(), git_blob_sha1_file(path)}); }

Json RunManifest::to_json() const {
  Json j;
  j["command"] = command;
  j["argv"] = argv;
  j["seed"] = seed;
  j["config"] = config;
  Json in = Json::array();
  for (const auto& i : inputs) in.push_back({{"path", i.path}, {"sha1", i.sha1}});
  j["inputs"] = in;
  j["outputs"] = outputs;
  j["metrics"] = metrics;
  return j;
}

void RunManifest::write(const fs::path& run_dir) const {
  const fs::path path = run_dir / "manifest.json";
  std::ofstream out(path);
  out << to_json().dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace mgr
