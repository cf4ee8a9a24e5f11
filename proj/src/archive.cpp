#include "alstp/archive.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "alstp/tensor.hpp"

namespace alstp {

using nlohmann::json;

void TensorArchive::add(std::string name, std::vector<std::size_t> shape, std::vector<float> values) {
  if (nn::shape_size(shape) != values.size()) {
    throw Error("archive tensor " + name + ": shape " + nn::shape_str(shape) + " does not match " +
                std::to_string(values.size()) + " values");
  }
  if (contains(name)) throw Error("archive tensor " + name + " added twice");
  tensors_.push_back({std::move(name), std::move(shape), std::move(values)});
}

const NamedTensor& TensorArchive::at(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw Error("archive has no tensor named " + name);
}

bool TensorArchive::contains(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return true;
  }
  return false;
}

void TensorArchive::save(const std::filesystem::path& dir, const std::string& stem) const {
  std::filesystem::create_directories(dir);
  json index = json::array();
  std::ofstream bin(dir / (stem + ".bin"), std::ios::binary | std::ios::trunc);
  if (!bin) throw Error("cannot write " + (dir / (stem + ".bin")).string());
  std::size_t offset = 0;
  for (const auto& t : tensors_) {
    for (float v : t.values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      const unsigned char bytes[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                      static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
      bin.write(reinterpret_cast<const char*>(bytes), 4);
    }
    index.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", t.values.size()}});
    offset += t.values.size();
  }
  json manifest = {{"format", "alstp-tensors"}, {"version", 1}, {"dtype", "float32-le"},
                   {"tensors", index},          {"meta", meta}};
  std::ofstream js(dir / (stem + ".json"), std::ios::trunc);
  if (!js) throw Error("cannot write " + (dir / (stem + ".json")).string());
  js << manifest.dump(2) << '\n';
}

TensorArchive TensorArchive::load(const std::filesystem::path& dir, const std::string& stem) {
  std::ifstream js(dir / (stem + ".json"));
  if (!js) throw Error("cannot read " + (dir / (stem + ".json")).string());
  auto manifest = json::parse(js);
  if (manifest.value("format", "") != "alstp-tensors") throw Error("not a tensor archive: " + stem);
  std::ifstream bin(dir / (stem + ".bin"), std::ios::binary);
  if (!bin) throw Error("cannot read " + (dir / (stem + ".bin")).string());
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  TensorArchive a;
  a.meta = manifest.value("meta", json::object());
  for (const auto& e : manifest.at("tensors")) {
    const auto offset = e.at("offset").get<std::size_t>();
    const auto count = e.at("count").get<std::size_t>();
    if ((offset + count) * 4 > raw.size()) throw Error("tensor archive " + stem + " is truncated");
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      const unsigned char* b = raw.data() + (offset + i) * 4;
      const std::uint32_t bits = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
                                 (std::uint32_t(b[3]) << 24);
      std::memcpy(&values[i], &bits, sizeof bits);
    }
    a.add(e.at("name").get<std::string>(), e.at("shape").get<std::vector<std::size_t>>(), std::move(values));
  }
  return a;
}

}  // namespace alstp
