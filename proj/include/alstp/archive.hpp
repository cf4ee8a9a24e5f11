#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

namespace alstp {

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

// Named-tensor container: `<stem>.bin` holds little-endian float32 rows back to
// back, `<stem>.json` lists name/shape/offset per tensor plus free-form metadata.
class TensorArchive {
 public:
  nlohmann::json meta = nlohmann::json::object();

  void add(std::string name, std::vector<std::size_t> shape, std::vector<float> values);
  const NamedTensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<NamedTensor>& tensors() const { return tensors_; }

  void save(const std::filesystem::path& dir, const std::string& stem) const;
  static TensorArchive load(const std::filesystem::path& dir, const std::string& stem);

 private:
  std::vector<NamedTensor> tensors_;
};

}  // namespace alstp
