#include "ulearn/checkpoint.hpp"

#include <json.hpp>

#include "ulearn/error.hpp"
#include "ulearn/io.hpp"

namespace ulearn {

using nlohmann::json;

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json layers = json::array();
  for (const auto& l : ckpt.model.layers()) {
    json j;
    j["kind"] = l.is_dense() ? "dense" : "relu";
    j["frozen"] = l.frozen;
    if (l.is_dense()) {
      j["shape"] = {l.in_dim(), l.out_dim()};
      j["weight"] = l.weight.values();
      j["bias"] = l.bias.values();
    }
    layers.push_back(std::move(j));
  }
  json doc{{"format", "ulearn-checkpoint"},
           {"version", kCheckpointVersion},
           {"epoch", ckpt.epoch},
           {"config_hash", ckpt.config_hash},
           {"layers", std::move(layers)}};
  return doc.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
  if (doc.value("format", "") != "ulearn-checkpoint") throw Error("not a ulearn checkpoint");
  if (!doc.contains("version")) throw Error("checkpoint has no version field");
  const int version = doc.at("version").get<int>();
  if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));

  std::vector<Layer> layers;
  for (const auto& j : doc.at("layers")) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "relu") {
      layers.push_back(Layer::relu());
    } else if (kind == "dense") {
      const auto shape = j.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw Error("dense layer shape must have two entries");
      Layer l;
      l.weight = Tensor({shape[0], shape[1]}, j.at("weight").get<std::vector<double>>());
      l.bias = Tensor({shape[1]}, j.at("bias").get<std::vector<double>>());
      layers.push_back(std::move(l));
    } else {
      throw Error("unknown layer kind '" + kind + "'");
    }
    layers.back().frozen = j.value("frozen", false);
  }
  Checkpoint ckpt;
  ckpt.model = Model(std::move(layers));
  ckpt.epoch = doc.at("epoch").get<std::size_t>();
  ckpt.config_hash = doc.value("config_hash", "");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_text_file(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_text_file(path)); }

}  // namespace ulearn
