#include "mainet/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mainet/error.hpp"
#include "mainet/serialize.hpp"

namespace mainet::train {

namespace fs = std::filesystem;
using nlohmann::json;

void save_checkpoint(const std::string& dir,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const CheckpointMeta& meta) {
  fs::create_directories(dir);
  std::ostringstream bin;
  json index;
  index["meta"] = {{"epoch", meta.epoch},
                   {"lr", meta.lr},
                   {"best_val_acc", meta.best_val_acc},
                   {"best_epoch", meta.best_epoch},
                   {"sched_best", meta.sched_best},
                   {"sched_since", meta.sched_since},
                   {"adam_steps", meta.adam_steps},
                   {"seed", meta.seed},
                   {"config_hash", meta.config_hash}};
  json entries = json::array();
  for (const auto& [name, tensor] : tensors) {
    json e;
    e["name"] = name;
    e["offset"] = static_cast<std::size_t>(bin.tellp());
    e["shape"] = tensor.shape();
    entries.push_back(std::move(e));
    io::write_tensor(bin, tensor);
  }
  index["tensors"] = std::move(entries);
  io::write_file((fs::path(dir) / "checkpoint.bin").string(), bin.str());
  std::ofstream jf(fs::path(dir) / "checkpoint.json", std::ios::trunc);
  jf << index.dump(2) << "\n";
}

bool checkpoint_exists(const std::string& dir) {
  return fs::exists(fs::path(dir) / "checkpoint.bin") &&
         fs::exists(fs::path(dir) / "checkpoint.json");
}

namespace {

json read_index(const std::string& dir) {
  if (!checkpoint_exists(dir)) throw MissingInputError("no checkpoint under " + dir);
  return json::parse(io::read_file((fs::path(dir) / "checkpoint.json").string()));
}

Tensor read_at(const std::string& dir, std::size_t offset) {
  std::ifstream bin(fs::path(dir) / "checkpoint.bin", std::ios::binary);
  bin.seekg(static_cast<std::streamoff>(offset));
  return io::read_tensor(bin);
}

CheckpointMeta meta_from(const json& index) {
  const json& m = index.at("meta");
  CheckpointMeta meta;
  meta.epoch = m.value("epoch", std::size_t{0});
  meta.lr = m.value("lr", 0.0);
  meta.best_val_acc = m.value("best_val_acc", 0.0);
  meta.best_epoch = m.value("best_epoch", std::size_t{0});
  meta.sched_best = m.value("sched_best", -1e300);
  meta.sched_since = m.value("sched_since", std::size_t{0});
  meta.adam_steps = m.value("adam_steps", std::size_t{0});
  meta.seed = m.value("seed", std::uint64_t{0});
  meta.config_hash = m.value("config_hash", std::string{});
  return meta;
}

}  // namespace

CheckpointMeta load_checkpoint(const std::string& dir,
                               const std::vector<std::pair<std::string, Tensor>>& tensors) {
  const json index = read_index(dir);
  std::ifstream bin(fs::path(dir) / "checkpoint.bin", std::ios::binary);
  if (!bin) throw MissingInputError("cannot open checkpoint payload under " + dir);

  std::vector<std::pair<std::string, std::size_t>> offsets;
  for (const auto& e : index.at("tensors"))
    offsets.emplace_back(e.at("name").get<std::string>(), e.at("offset").get<std::size_t>());

  for (const auto& [name, tensor] : tensors) {
    bool found = false;
    for (const auto& [sname, off] : offsets) {
      if (sname != name) continue;
      bin.seekg(static_cast<std::streamoff>(off));
      Tensor stored = io::read_tensor(bin);
      if (stored.shape() != tensor.shape())
        throw DataFormatError("checkpoint: tensor '" + name + "' has shape " +
                              shape_str(stored.shape()) + ", expected " +
                              shape_str(tensor.shape()));
      Tensor target = tensor;
      target.mutable_data() = stored.data();
      found = true;
      break;
    }
    if (!found) throw DataFormatError("checkpoint: tensor '" + name + "' missing under " + dir);
  }
  return meta_from(index);
}

Tensor load_checkpoint_tensor(const std::string& dir, const std::string& name) {
  const json index = read_index(dir);
  for (const auto& e : index.at("tensors"))
    if (e.at("name").get<std::string>() == name)
      return read_at(dir, e.at("offset").get<std::size_t>());
  throw DataFormatError("checkpoint: tensor '" + name + "' missing under " + dir);
}

std::vector<std::string> checkpoint_tensor_names(const std::string& dir) {
  const json index = read_index(dir);
  std::vector<std::string> names;
  for (const auto& e : index.at("tensors")) names.push_back(e.at("name").get<std::string>());
  return names;
}

}  // namespace mainet::train
