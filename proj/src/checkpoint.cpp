#include <fstream>

#include <json.hpp>

#include "vecprobe/error.hpp"
#include "vecprobe/model.hpp"

namespace vecprobe::model {
namespace {

constexpr const char* kFormat = "vecprobe-checkpoint";
constexpr int kVersion = 1;

}  // namespace

void write_checkpoint(const ModelParams& params, std::ostream& out) {
  const ModelConfig& c = params.config;
  nlohmann::json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["seed"] = params.seed;
  doc["hyper"] = {{"hidden", c.hidden},
                  {"layers", c.layers},
                  {"history_frames", c.history_frames},
                  {"future_frames", c.future_frames},
                  {"layer_norm", c.layer_norm},
                  {"input_width", c.input_width}};
  nlohmann::json tensors = nlohmann::json::array();
  const auto names = params.tensor_names();
  const auto ts = params.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    tensors.push_back({{"name", names[i]}, {"shape", ts[i]->shape()}, {"data", ts[i]->data()}});
  }
  doc["tensors"] = std::move(tensors);
  out << doc.dump() << '\n';
}

ModelParams read_checkpoint(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kFormat) throw DataError("checkpoint: unexpected format tag");
    if (doc.at("version").get<int>() != kVersion) {
      throw DataError("checkpoint: unsupported version " + std::to_string(doc.at("version").get<int>()));
    }
    const auto& h = doc.at("hyper");
    ModelConfig c;
    c.hidden = h.at("hidden").get<std::size_t>();
    c.layers = h.at("layers").get<std::size_t>();
    c.history_frames = h.at("history_frames").get<int>();
    c.future_frames = h.at("future_frames").get<int>();
    c.layer_norm = h.at("layer_norm").get<bool>();
    c.input_width = h.at("input_width").get<std::size_t>();

    // Shapes come from a fresh init and must match what the file records.
    ModelParams p = init_params(c, doc.at("seed").get<std::uint64_t>());
    const auto names = p.tensor_names();
    auto ts = p.tensors();
    const auto& stored = doc.at("tensors");
    if (stored.size() != ts.size()) throw DataError("checkpoint: tensor count mismatch");
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const auto& s = stored[i];
      if (s.at("name").get<std::string>() != names[i]) throw DataError("checkpoint: unexpected tensor " + s.at("name").get<std::string>());
      grad::Tensor t(s.at("shape").get<std::vector<std::size_t>>(), s.at("data").get<std::vector<double>>());
      if (!t.same_shape(*ts[i])) throw DataError("checkpoint: shape mismatch for " + names[i]);
      *ts[i] = std::move(t);
    }
    if (!p.all_finite()) throw NumericError("checkpoint: non-finite weights");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: bad hyperparameters: ") + e.what());
  }
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  write_checkpoint(params, out);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace vecprobe::model
