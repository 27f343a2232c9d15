#pragma once

#include <filesystem>
#include <string>

#include "reopt/model_io.hpp"

namespace reopt::testing {

inline std::filesystem::path source_path(const std::string& relative) {
  return std::filesystem::path(REOPT_SOURCE_DIR) / relative;
}

inline ModelState toy_state() { return load_state_file(source_path("scenarios/toy/toy.json")); }

}  // namespace reopt::testing
