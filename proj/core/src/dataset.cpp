#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mainet/data.hpp"
#include "mainet/error.hpp"
#include "mainet/rng.hpp"
#include "mainet/serialize.hpp"

namespace mainet::data {

namespace fs = std::filesystem;
using nlohmann::json;

Split split_dataset(const std::vector<int>& labels, std::array<double, 3> ratios,
                    std::uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::fabs(sum - 1.0) > 1e-9)
    throw ConfigError("split: ratios sum to " + std::to_string(sum) + ", expected 1");

  std::array<std::vector<std::size_t>, 3> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] > 2) throw ConfigError("split: label outside {0,1,2}");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }

  Split split;
  rng::Xoshiro256 gen(rng::mix(seed, 77));
  for (std::size_t c = 0; c < 3; ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    if (members.size() < 3)
      throw ConfigError("split: class " + std::to_string(c) + " has " +
                        std::to_string(members.size()) + " samples, need at least 3");
    rng::shuffle(members, gen);
    const auto n_c = static_cast<double>(members.size());
    const auto n_val = static_cast<std::size_t>(std::ceil(ratios[1] * n_c - 1e-9));
    const auto n_test = static_cast<std::size_t>(std::ceil(ratios[2] * n_c - 1e-9));
    if (n_val + n_test >= members.size())
      throw ConfigError("split: class " + std::to_string(c) + " too small for the requested ratios");
    const std::size_t n_train = members.size() - n_val - n_test;
    for (std::size_t i = 0; i < n_train; ++i) split.train.push_back(members[i]);
    for (std::size_t i = n_train; i < n_train + n_val; ++i) split.val.push_back(members[i]);
    for (std::size_t i = n_train + n_val; i < members.size(); ++i) split.test.push_back(members[i]);
  }
  return split;
}

Split split_dataset(const Dataset& ds, std::array<double, 3> ratios, std::uint64_t seed) {
  std::vector<int> labels;
  labels.reserve(ds.size());
  for (const auto& s : ds) labels.push_back(s.label);
  return split_dataset(labels, ratios, seed);
}

namespace {

constexpr std::uint32_t kMapsRecord = 0x4d415031;  // "MAP1"
constexpr std::uint32_t kRawRecord = 0x52415731;   // "RAW1"

json manifest_for(const std::string& kind, std::size_t count,
                  const std::array<std::size_t, 3>& class_counts, std::uint64_t seed,
                  const std::string& config_hash) {
  json m;
  m["kind"] = kind;
  m["count"] = count;
  m["class_counts"] = {class_counts[0], class_counts[1], class_counts[2]};
  m["seed"] = seed;
  m["config_hash"] = config_hash;
  return m;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& ds, std::uint64_t seed,
                  const std::string& config_hash) {
  fs::create_directories(dir);
  std::ofstream bin(fs::path(dir) / "samples.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw MissingInputError("cannot write dataset to " + dir);
  for (const auto& s : ds) {
    io::write_u32(bin, kMapsRecord);
    io::write_i64(bin, s.timestamp_ms);
    io::write_u32(bin, static_cast<std::uint32_t>(s.label));
    io::write_tensor(bin, s.image_map);
    io::write_tensor(bin, s.audio_map);
    const bool has_map = s.wave_map.has_value();
    io::write_u32(bin, has_map ? 1 : 0);
    io::write_tensor(bin, has_map ? *s.wave_map : *s.wave_raw);
  }
  json m = manifest_for("modal_samples", ds.size(), count_classes(ds), seed, config_hash);
  if (!ds.empty()) m["map_size"] = ds.front().image_map.dim(1);
  std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
  mf << m.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir, const preprocess::AudioMapConfig& audio_cfg) {
  const fs::path base(dir);
  if (!fs::exists(base / "samples.bin") || !fs::exists(base / "manifest.json"))
    throw MissingInputError("dataset not found under " + dir +
                            " (samples.bin + manifest.json required)");
  json manifest = json::parse(io::read_file((base / "manifest.json").string()));
  const std::string kind = manifest.value("kind", "modal_samples");
  const auto count = manifest.value("count", std::size_t{0});

  std::ifstream bin(base / "samples.bin", std::ios::binary);
  Dataset ds;
  ds.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t tag = io::read_u32(bin);
    ModalSample s;
    s.timestamp_ms = io::read_i64(bin);
    s.label = static_cast<int>(io::read_u32(bin));
    if (tag == kMapsRecord) {
      s.image_map = io::read_tensor(bin);
      s.audio_map = io::read_tensor(bin);
      const bool has_map = io::read_u32(bin) != 0;
      if (has_map)
        s.wave_map = io::read_tensor(bin);
      else
        s.wave_raw = io::read_tensor(bin);
    } else if (tag == kRawRecord) {
      // raw windows: image map is the frame itself; audio arrives as pcm and
      // is converted here; wave stays raw for the learned embedding
      const double rate = io::read_f64(bin);
      const Tensor image = io::read_tensor(bin);
      const Tensor pcm = io::read_tensor(bin);
      const Tensor wave = io::read_tensor(bin);
      s.image_map = image;
      s.audio_map = preprocess::audio_to_melspec(pcm, rate, audio_cfg);
      s.wave_raw = wave;
    } else {
      throw DataFormatError(dir + ": unknown record tag at sample " + std::to_string(i),
                            static_cast<long>(i));
    }
    ds.push_back(std::move(s));
  }
  return ds;
}

void save_raw_windows(const std::string& dir, const std::vector<preprocess::RawWindow>& windows,
                      std::uint64_t seed, const std::string& config_hash) {
  fs::create_directories(dir);
  std::ofstream bin(fs::path(dir) / "samples.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw MissingInputError("cannot write dataset to " + dir);
  std::array<std::size_t, 3> counts{};
  for (const auto& wnd : windows) {
    io::write_u32(bin, kRawRecord);
    io::write_i64(bin, wnd.timestamp_ms);
    io::write_u32(bin, static_cast<std::uint32_t>(wnd.label));
    io::write_f64(bin, wnd.sample_rate);
    io::write_tensor(bin, wnd.image);
    io::write_tensor(bin, wnd.audio);
    io::write_tensor(bin, wnd.wave);
    ++counts[static_cast<std::size_t>(wnd.label)];
  }
  const json m = manifest_for("raw_windows", windows.size(), counts, seed, config_hash);
  std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
  mf << m.dump(2) << "\n";
}

}  // namespace mainet::data
