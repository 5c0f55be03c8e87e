#include "cloudtomo/io/checkpoint.hpp"

#include <fstream>

namespace cloudtomo::io {

namespace {
constexpr char kMagic[4] = {'C', 'T', 'C', 'K'};
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = "ctomo-checkpoint-v1";
  header["meta"] = ckpt.meta;
  nlohmann::json list = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    uint64_t nbytes = uint64_t(t.numel()) * 4;
    list.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  header["tensors"] = list;
  std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  uint32_t hlen = uint32_t(hs.size());
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(hs.data(), std::streamsize(hs.size()));
  for (const auto& [name, t] : ckpt.tensors)
    out.write(reinterpret_cast<const char*>(t.ptr()), std::streamsize(t.numel() * 4));
  require(out.good(), ErrorCode::io, "short checkpoint write: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot read checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::equal(magic, magic + 4, kMagic), ErrorCode::format,
          "not a checkpoint file: " + path);
  uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 4);
  require(in.gcount() == 4, ErrorCode::corrupt_file, "truncated checkpoint: " + path);
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  require(in.gcount() == std::streamsize(hlen), ErrorCode::corrupt_file,
          "truncated checkpoint header: " + path);
  nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
  require(!header.is_discarded(), ErrorCode::corrupt_file, "bad checkpoint header: " + path);
  require(header.value("format", "") == "ctomo-checkpoint-v1", ErrorCode::format,
          "unsupported checkpoint format: " + path);

  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    std::string name = entry.at("name").get<std::string>();
    std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    uint64_t nbytes = entry.at("nbytes").get<uint64_t>();
    nn::Tensor t(shape);
    require(uint64_t(t.numel()) * 4 == nbytes, ErrorCode::corrupt_file,
            "tensor size mismatch for " + name);
    in.read(reinterpret_cast<char*>(t.ptr()), std::streamsize(nbytes));
    require(in.gcount() == std::streamsize(nbytes), ErrorCode::corrupt_file,
            "truncated tensor payload for " + name);
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  in.peek();
  require(in.eof(), ErrorCode::corrupt_file, "trailing bytes in checkpoint: " + path);
  return ckpt;
}

Checkpoint checkpoint_from_store(const nn::ParamStore& store, nlohmann::json meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  for (const auto& [name, var] : store.params) ckpt.tensors.emplace(name, var->value);
  return ckpt;
}

void load_into_store(const Checkpoint& ckpt, nn::ParamStore& store) {
  for (auto& [name, var] : store.params) {
    auto it = ckpt.tensors.find(name);
    require(it != ckpt.tensors.end(), ErrorCode::format,
            "checkpoint is missing tensor " + name);
    require(it->second.shape == var->value.shape, ErrorCode::format,
            "checkpoint tensor shape mismatch for " + name);
    var->value = it->second;
  }
}

}  // namespace cloudtomo::io
