#include "gazestab/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gazestab/errors.hpp"

namespace gazestab {

namespace {

constexpr std::array<char, 5> kMagic{'T', 'G', 'Z', 'R', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw SchemaError("checkpoint: truncated header length");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::string& buf, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float get_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

ParamGroup group_from_string(const std::string& s) {
  for (ParamGroup g : {ParamGroup::token_conv, ParamGroup::time_proj, ParamGroup::predict_linear,
                       ParamGroup::backbone, ParamGroup::mha, ParamGroup::attn_out, ParamGroup::linear,
                       ParamGroup::alpha})
    if (to_string(g) == s) return g;
  throw SchemaError("checkpoint: unknown parameter group '" + s + "'");
}

}  // namespace

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  nlohmann::ordered_json header;
  header["format"] = "TGZR1";
  header["config"] = ckpt.config.to_json();
  header["epoch"] = ckpt.epoch;
  header["val_loss"] = ckpt.val_loss;
  header["tensors"] = nlohmann::ordered_json::array();
  std::string payload;
  for (const auto& t : ckpt.params.tensors()) {
    nlohmann::ordered_json entry;
    entry["name"] = t.name;
    entry["group"] = to_string(t.group);
    entry["decay"] = t.decay;
    entry["shape"] = t.shape;
    entry["rows"] = t.value.rows();
    entry["cols"] = t.value.cols();
    entry["offset"] = payload.size();
    entry["count"] = t.value.size();
    header["tensors"].push_back(entry);
    for (Eigen::Index i = 0; i < t.value.size(); ++i) put_f32(payload, t.value.data()[i]);
  }
  const std::string text = header.dump();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("checkpoint: write failed");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  save_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(std::istream& in) {
  std::array<char, 5> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw SchemaError("checkpoint: bad magic, expected TGZR1");
  const std::uint32_t len = get_u32(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw SchemaError("checkpoint: truncated header");
  const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.config = ModelConfig::from_json(header.at("config"));
    ckpt.epoch = header.at("epoch").get<std::size_t>();
    ckpt.val_loss = header.at("val_loss").get<double>();
    for (const auto& entry : header.at("tensors")) {
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      t.group = group_from_string(entry.at("group").get<std::string>());
      t.decay = entry.at("decay").get<bool>();
      t.shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto rows = entry.at("rows").get<Eigen::Index>();
      const auto cols = entry.at("cols").get<Eigen::Index>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      if (static_cast<std::size_t>(rows * cols) != count) throw SchemaError("checkpoint: tensor " + t.name + " shape/count mismatch");
      if (offset + 4 * count > payload.size()) throw SchemaError("checkpoint: tensor " + t.name + " exceeds payload");
      t.value.resize(rows, cols);
      for (std::size_t i = 0; i < count; ++i) t.value.data()[i] = get_f32(payload.data() + offset + 4 * i);
      ckpt.params.add(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint header: ") + e.what());
  }
  Model check(ckpt.config, ckpt.params);  // validates names and shapes
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace gazestab
