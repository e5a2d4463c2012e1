// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "dpgm/tensor.hpp"

namespace dpgm {

/// CSV layout: a `# shape: d0 d1 ...` header, then one comma-separated line
/// per leading-axis slice. Values are written with 17 significant digits so a
/// round trip is exact.
std::string tensor_to_csv(const Tensor& t);
Tensor tensor_from_csv(std::string_view text);

void save_csv(const std::filesystem::path& path, const Tensor& t);
Tensor load_csv(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_text(const std::filesystem::path& path);

}  // namespace dpgm
