#pragma once

// Versioned text container for named parameter arrays.
//
//   somgan-arrays 1
//   <count>
//   <name> <rows> <cols>
//   <row of hex-float values>        (one line per row)
//   ...
//
// Values use C99 hex-float notation ("%a"), so a save/load cycle restores
// every double bit-for-bit.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "somgan/nn.hpp"

namespace somgan {

inline constexpr int kArrayFormatVersion = 1;

std::string format_arrays(const std::vector<nn::NamedArray>& arrays);
std::vector<nn::NamedArray> parse_arrays(const std::string& text);

void save_arrays(const std::vector<nn::NamedArray>& arrays, const std::filesystem::path& path);
std::vector<nn::NamedArray> load_arrays(const std::filesystem::path& path);

std::map<std::string, Matrix> to_map(const std::vector<nn::NamedArray>& arrays);

}  // namespace somgan
