#include "vadvae/checkpoint.hpp"

#include "vadvae/errors.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>

namespace vadvae {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");

namespace {
constexpr char kMagic[8] = {'V', 'A', 'D', 'V', 'A', 'E', 'C', 'K'};
}

void save_checkpoint(const std::filesystem::path& path, nlohmann::json header,
                     const ParameterList& params) {
  auto entries = nlohmann::json::array();
  for (const auto& p : params) {
    entries.push_back({{"name", p.name}, {"shape", {p.tensor.rows(), p.tensor.cols()}}});
  }
  header["params"] = std::move(entries);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    const Matrix& m = p.tensor.value();
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * static_cast<Index>(sizeof(double))));
  }
  if (!out) throw FileError("failed writing checkpoint " + path.string());
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    throw SchemaError("not a checkpoint file: " + path.string());
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ULL << 32)) throw SchemaError("corrupt checkpoint header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw SchemaError("truncated checkpoint header");

  CheckpointData data;
  try {
    data.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint header: ") + e.what());
  }
  for (const auto& entry : data.header.at("params")) {
    const Index rows = entry.at("shape").at(0).get<Index>();
    const Index cols = entry.at("shape").at(1).get<Index>();
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * static_cast<Index>(sizeof(double))));
    if (!in) throw SchemaError("truncated checkpoint payload");
    data.arrays.emplace_back(entry.at("name").get<std::string>(), std::move(m));
  }
  return data;
}

void load_parameters(const CheckpointData& data, const ParameterList& params) {
  std::map<std::string, const Matrix*> by_name;
  for (const auto& [name, m] : data.arrays) by_name[name] = &m;
  if (by_name.size() != params.size()) {
    throw SchemaError("checkpoint holds " + std::to_string(by_name.size()) +
                      " arrays, model expects " + std::to_string(params.size()));
  }
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw SchemaError("checkpoint missing parameter " + p.name);
    if (it->second->rows() != p.tensor.rows() || it->second->cols() != p.tensor.cols()) {
      throw SchemaError("shape mismatch for parameter " + p.name);
    }
    Tensor t = p.tensor;
    t.mutable_value() = *it->second;
  }
}

}  // namespace vadvae
