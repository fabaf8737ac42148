#include "fsat/io/manifest.hpp"

#include <fstream>

#include "fsat/build_info.hpp"

namespace fsat::io {

std::string build_id() { return std::string(kBuildId); }

std::string manifest_text(const std::string& command, const RunConfig& cfg) {
  return "# fsat run manifest\n# command: " + command + "\n# build: " + build_id() + "\n" +
         cfg.to_text();
}

std::filesystem::path write_manifest(const std::string& command, const RunConfig& cfg) {
  const std::filesystem::path dir = cfg.output_dir();
  std::filesystem::create_directories(dir);
  const std::filesystem::path path = dir / ("manifest_" + command + ".cfg");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest_text(command, cfg);
  if (!out) throw IoError("failed writing " + path.string());
  return path;
}

}  // namespace fsat::io
