#include "ldankit/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ldankit/errors.hpp"

namespace ldankit::nn {

nlohmann::json spec_to_json(const LayerSpec& s) {
  nlohmann::json j;
  j["kind"] = layer_kind_name(s.kind);
  switch (s.kind) {
    case LayerSpec::Kind::kConv3x3:
      j["out_ch"] = s.out_ch;
      j["stride"] = s.stride;
      break;
    case LayerSpec::Kind::kFc:
    case LayerSpec::Kind::kResidualBlock:
      j["out_ch"] = s.out_ch;
      break;
    case LayerSpec::Kind::kDropout:
      j["rate"] = s.rate;
      break;
    default:
      break;
  }
  return j;
}

LayerSpec spec_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv3x3")
    return LayerSpec::conv3x3(j.at("out_ch").get<int>(), j.at("stride").get<int>());
  if (kind == "batchnorm") return LayerSpec::batchnorm();
  if (kind == "relu") return LayerSpec::relu();
  if (kind == "fc") return LayerSpec::fc(j.at("out_ch").get<int>());
  if (kind == "dropout") return LayerSpec::dropout(j.at("rate").get<double>());
  if (kind == "residual_block") return LayerSpec::residual_block(j.at("out_ch").get<int>());
  if (kind == "global_flatten") return LayerSpec::global_flatten();
  if (kind == "tanh") return LayerSpec::tanh();
  throw invalid_input_error("unknown layer kind in checkpoint: " + kind);
}

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, Net<float>*>>& nets,
                     const CheckpointExtras& extras) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["type"] = "ldankit-checkpoint";
  std::vector<const std::vector<float>*> blobs;

  auto& jnets = header["nets"] = nlohmann::json::array();
  for (const auto& [name, net] : nets) {
    nlohmann::json jn;
    jn["name"] = name;
    jn["init_seed"] = net->init_seed();
    jn["input_shape"] = net->input_shape();
    auto& specs = jn["specs"] = nlohmann::json::array();
    for (const auto& s : net->specs()) specs.push_back(spec_to_json(s));
    auto params = net->params();
    auto& tensors = jn["tensors"] = nlohmann::json::array();
    for (const auto& p : params) {
      tensors.push_back({{"name", p.name}, {"shape", p.value->shape}, {"trainable", p.trainable}});
      blobs.push_back(&p.value->data);
    }
    jnets.push_back(std::move(jn));
  }

  if (extras.rng_state) {
    auto& r = header["rng_state"] = nlohmann::json::array();
    for (uint64_t w : *extras.rng_state) r.push_back(w);
  }
  if (!extras.optim_slots.empty()) {
    auto& os = header["optim_slots"] = nlohmann::json::array();
    for (const auto& [name, slot] : extras.optim_slots) {
      nlohmann::json entry;
      entry["name"] = name;
      auto& shapes = entry["shapes"] = nlohmann::json::array();
      for (const auto& t : slot) {
        shapes.push_back(t.shape);
        blobs.push_back(&t.data);
      }
      os.push_back(std::move(entry));
    }
  }
  if (!extras.meta.is_null()) header["meta"] = extras.meta;

  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw missing_input_error("save_checkpoint: cannot write " + path.string());
  char lenbuf[8];
  const uint64_t len = hs.size();
  for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((len >> (8 * i)) & 0xff);
  out.write(lenbuf, 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto* b : blobs)
    out.write(reinterpret_cast<const char*>(b->data()),
              static_cast<std::streamsize>(b->size() * sizeof(float)));
}

void save_checkpoint(const std::filesystem::path& path, Net<float>& net,
                     const CheckpointExtras& extras) {
  save_checkpoint(path, {{"net", &net}}, extras);
}

std::map<std::string, Net<float>> load_checkpoint(const std::filesystem::path& path,
                                                  CheckpointExtras* extras) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw missing_input_error("load_checkpoint: cannot read " + path.string());
  char lenbuf[8];
  in.read(lenbuf, 8);
  if (!in) throw invalid_input_error("load_checkpoint: truncated header");
  uint64_t len = 0;
  for (int i = 0; i < 8; ++i)
    len |= static_cast<uint64_t>(static_cast<unsigned char>(lenbuf[i])) << (8 * i);
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  if (!in) throw invalid_input_error("load_checkpoint: truncated header");
  const nlohmann::json header = nlohmann::json::parse(hs);
  if (header.at("format_version").get<int>() != 1)
    throw invalid_input_error("load_checkpoint: unsupported format version");

  std::map<std::string, Net<float>> nets;
  for (const auto& jn : header.at("nets")) {
    std::vector<LayerSpec> specs;
    for (const auto& j : jn.at("specs")) specs.push_back(spec_from_json(j));
    Net<float> net(specs, jn.at("input_shape").get<std::vector<int>>(),
                   jn.at("init_seed").get<uint64_t>());
    auto params = net.params();
    const auto& tensors = jn.at("tensors");
    if (tensors.size() != params.size())
      throw invalid_input_error("load_checkpoint: tensor count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
      const auto shape = tensors[i].at("shape").get<std::vector<int>>();
      if (shape != params[i].value->shape)
        throw invalid_input_error("load_checkpoint: tensor shape mismatch at " +
                                  params[i].name);
      in.read(reinterpret_cast<char*>(params[i].value->data.data()),
              static_cast<std::streamsize>(params[i].value->data.size() * sizeof(float)));
    }
    nets.emplace(jn.at("name").get<std::string>(), std::move(net));
  }

  if (extras) {
    if (header.contains("rng_state")) {
      std::array<uint64_t, 4> st{};
      for (int i = 0; i < 4; ++i) st[i] = header["rng_state"][i].get<uint64_t>();
      extras->rng_state = st;
    }
    extras->optim_slots.clear();
    if (header.contains("optim_slots")) {
      for (const auto& entry : header["optim_slots"]) {
        std::vector<Tensor<float>> slot;
        for (const auto& shape : entry.at("shapes")) {
          Tensor<float> t(shape.get<std::vector<int>>());
          in.read(reinterpret_cast<char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
          slot.push_back(std::move(t));
        }
        extras->optim_slots.emplace_back(entry.at("name").get<std::string>(), std::move(slot));
      }
    }
    if (header.contains("meta")) extras->meta = header["meta"];
  } else if (header.contains("optim_slots")) {
    for (const auto& entry : header["optim_slots"])
      for (const auto& shape : entry.at("shapes"))
        in.seekg(static_cast<std::streamoff>(
                     Tensor<float>::numel_of(shape.get<std::vector<int>>()) * sizeof(float)),
                 std::ios::cur);
  }
  if (!in) throw invalid_input_error("load_checkpoint: truncated blob");
  return nets;
}

Net<float> load_single_checkpoint(const std::filesystem::path& path,
                                  CheckpointExtras* extras) {
  auto nets = load_checkpoint(path, extras);
  if (nets.size() != 1)
    throw invalid_input_error("load_single_checkpoint: file holds several nets");
  return std::move(nets.begin()->second);
}

uint64_t file_fnv1a(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw missing_input_error("file_fnv1a: cannot read " + path.string());
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[16384];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i)
      h = (h ^ static_cast<unsigned char>(buf[i])) * 0x100000001b3ull;
  }
  return h;
}

}  // namespace ldankit::nn
