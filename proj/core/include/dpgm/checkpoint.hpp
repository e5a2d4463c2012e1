// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dpgm/tensor.hpp"

namespace dpgm {

/// Named tensors plus a free-form JSON description of the model spec.
struct Checkpoint {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  std::string spec_json = "{}";
};

/// Writes one CSV file per tensor (named after its key) and manifest.json.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace dpgm
