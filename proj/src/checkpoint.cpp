#include "aimdit/checkpoint.hpp"

#include <algorithm>
#include <map>

#include "aimdit/error.hpp"
#include "binary_io.hpp"

namespace aimdit {

namespace {
constexpr std::string_view kCheckpointMagic = "AIMC";
}

void save_checkpoint(const std::filesystem::path& path, const AimditModel& model, nlohmann::json config_echo) {
  if (!config_echo.is_object()) config_echo = nlohmann::json::object();
  config_echo["model"] = model.config.to_json();
  const std::string config_text = config_echo.dump();
  const auto params = model.parameters();

  io::ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  w.put_u32(kCheckpointVersion);
  w.put_u32(static_cast<std::uint32_t>(config_text.size()));
  w.put_bytes(config_text);
  w.put_u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.put_u32(static_cast<std::uint32_t>(p.name.size()));
    w.put_bytes(p.name);
    const auto& shape = p.tensor.shape();
    w.put_u32(static_cast<std::uint32_t>(shape.size()));
    for (auto s : shape) w.put_u32(static_cast<std::uint32_t>(s));
    for (double v : p.tensor.data()) w.put_f32(v);
  }
  w.seal();
  io::write_file(path, w.bytes());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  if (bytes.size() < kCheckpointMagic.size() ||
      !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin())) {
    fail(ErrorCode::kMagic, path.string() + " is not a checkpoint (missing magic \"AIMC\")");
  }
  const std::size_t payload = io::verify_sealed(bytes, path.string());
  io::ByteReader r(bytes.data(), payload, ErrorCode::kShape);
  r.seek(kCheckpointMagic.size());
  Checkpoint ckpt;
  ckpt.version = r.get_u32();
  if (ckpt.version != kCheckpointVersion) {
    fail(ErrorCode::kVersion, "checkpoint version " + std::to_string(ckpt.version) + " is not supported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
  }
  const std::string config_text = r.get_bytes(r.get_u32());
  try {
    ckpt.config = nlohmann::json::parse(config_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kShape, std::string("checkpoint config echo is not valid JSON: ") + e.what());
  }
  const std::uint32_t count = r.get_u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_bytes(r.get_u32());
    const std::uint32_t rank = r.get_u32();
    nn::Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.get_u32());
    const std::size_t numel = nn::shape_numel(shape);
    if (numel * 4 > r.remaining()) fail(ErrorCode::kShape, "checkpoint tensor '" + name + "' overruns the file");
    std::vector<double> values(numel);
    for (auto& v : values) v = r.get_f32();
    ckpt.tensors.emplace_back(std::move(name), nn::Tensor::from(std::move(shape), std::move(values)));
  }
  if (r.remaining() != 0) fail(ErrorCode::kShape, "checkpoint has trailing bytes after its last tensor");
  return ckpt;
}

AimditModel model_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.config.contains("model")) fail(ErrorCode::kShape, "checkpoint config echo lacks a model section");
  AimditModel model = make_model(ModelConfig::from_json(ckpt.config.at("model")), 0, InitScheme::kZero);
  std::map<std::string, const nn::Tensor*> stored;
  for (const auto& [name, t] : ckpt.tensors) stored[name] = &t;
  auto params = model.parameters();
  if (stored.size() != params.size()) {
    fail(ErrorCode::kShape, "checkpoint holds " + std::to_string(stored.size()) + " tensors, model expects " +
                                std::to_string(params.size()));
  }
  for (auto& p : params) {
    auto it = stored.find(p.name);
    if (it == stored.end()) fail(ErrorCode::kShape, "checkpoint is missing parameter '" + p.name + "'");
    if (it->second->shape() != p.tensor.shape()) {
      fail(ErrorCode::kShape, "parameter '" + p.name + "' has shape " + nn::shape_str(it->second->shape()) +
                                  " in the checkpoint, model expects " + nn::shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    std::copy(it->second->data().begin(), it->second->data().end(), dst.begin());
  }
  return model;
}

void quantize_parameters(AimditModel& model) {
  for (auto& p : model.parameters())
    for (auto& v : p.tensor.mutable_data()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace aimdit
