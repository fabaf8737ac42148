#pragma once

#include <filesystem>
#include <string>

#include "fsat/io/config.hpp"

namespace fsat::io {

/// Build identifier in git-describe form, fixed at configure time.
std::string build_id();

/// Manifest text: header comments (command, build id) followed by the fully
/// resolved config, so `fsat <command> --config <manifest>` repeats the run.
std::string manifest_text(const std::string& command, const RunConfig& cfg);
/// Writes <output_dir>/manifest_<command>.cfg and returns its path.
std::filesystem::path write_manifest(const std::string& command, const RunConfig& cfg);

}  // namespace fsat::io
