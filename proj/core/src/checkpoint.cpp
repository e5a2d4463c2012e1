// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/checkpoint.hpp"

#include <json.hpp>

#include "dpgm/tensor_io.hpp"

namespace dpgm {

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  if (ckpt.names.size() != ckpt.tensors.size()) {
    throw std::invalid_argument("checkpoint: names and tensors differ in length");
  }
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["spec"] = nlohmann::json::parse(ckpt.spec_json);
  manifest["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ckpt.names.size(); ++i) {
    const auto file = ckpt.names[i] + ".csv";
    save_csv(dir / file, ckpt.tensors[i]);
    manifest["tensors"].push_back(
        {{"name", ckpt.names[i]}, {"file", file}, {"shape", ckpt.tensors[i].shape()}});
  }
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest = nlohmann::json::parse(read_text(dir / "manifest.json"));
  Checkpoint ckpt;
  ckpt.spec_json = manifest.at("spec").dump();
  for (const auto& entry : manifest.at("tensors")) {
    ckpt.names.push_back(entry.at("name").get<std::string>());
    Tensor t = load_csv(dir / entry.at("file").get<std::string>());
    if (t.shape() != entry.at("shape").get<Shape>()) {
      throw ShapeError("checkpoint: " + ckpt.names.back() + " shape differs from manifest");
    }
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace dpgm
