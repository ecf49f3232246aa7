#pragma once

#include <string_view>
#include <vector>

namespace icp {

// Data files compiled into the library from data/ at build time, keyed by
// their path relative to data/ (e.g. "rules/es.json"). Throws IoError for
// unknown names.
std::string_view resource(std::string_view name);

std::vector<std::string_view> resource_names();

}  // namespace icp
