#include "layers.hpp"

#include "transmuse/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace transmuse {

namespace {

constexpr char kMagic[4] = {'T', 'M', 'S', 'E'};

nlohmann::json config_to_json(const TmtpnConfig& c) {
  return {{"d_model", c.d_model},       {"num_heads", c.num_heads},   {"enc_layers", c.enc_layers},
          {"dec_layers", c.dec_layers}, {"d_ffn", c.d_ffn},           {"dropout", c.dropout},
          {"input_steps", c.input_steps}, {"horizon", c.horizon},     {"num_services", c.num_services},
          {"lr", c.lr},                 {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
          {"seed", c.seed},             {"patience", c.patience},     {"clip_norm", c.clip_norm}};
}

TmtpnConfig config_from_json(const nlohmann::json& j) {
  TmtpnConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.enc_layers = j.at("enc_layers").get<int>();
  c.dec_layers = j.at("dec_layers").get<int>();
  c.d_ffn = j.at("d_ffn").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.input_steps = j.at("input_steps").get<int>();
  c.horizon = j.at("horizon").get<int>();
  c.num_services = j.at("num_services").get<int>();
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.patience = j.at("patience").get<int>();
  c.clip_norm = j.at("clip_norm").get<double>();
  return c;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const TmtpnModel& model) {
  if (!model.all_finite()) throw InvalidArgument("save_checkpoint: model has non-finite parameters");
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : model.parameters) {
    tensors.push_back({{"name", t.name}, {"shape", {t.value.rows(), t.value.cols()}}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.value.size()) * 4;
  }
  const nlohmann::json header = {
      {"config", config_to_json(model.config)}, {"rng_state", model.rng_state}, {"tensors", tensors}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& t : model.parameters)
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)  // row-major payload
      for (Eigen::Index c = 0; c < t.value.cols(); ++c)
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(t.value(r, c))));
  return out;
}

TmtpnModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 9) throw FormatError("checkpoint truncated before header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad checkpoint magic");
  if (bytes[4] != kCheckpointVersion)
    throw VersionError("unsupported checkpoint version " + std::to_string(bytes[4]) + " (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  const std::uint32_t header_len = get_u32(bytes.data() + 5);
  if (bytes.size() - 9 < header_len) throw FormatError("checkpoint truncated inside header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 9, bytes.begin() + 9 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  TmtpnModel model;
  try {
    model.config = config_from_json(header.at("config"));
    model.rng_state = header.at("rng_state").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is incomplete: ") + e.what());
  }
  try {
    model.config.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }

  const detail::Layout layout(model.config);
  if (!header.contains("tensors")) throw FormatError("checkpoint header lacks a tensor manifest");
  const auto& manifest = header["tensors"];
  if (!manifest.is_array() || manifest.size() != layout.tensors.size())
    throw ShapeError("checkpoint holds " + std::to_string(manifest.size()) + " tensors, config implies " +
                     std::to_string(layout.tensors.size()));

  const std::uint8_t* payload = bytes.data() + 9 + header_len;
  const std::size_t payload_size = bytes.size() - 9 - header_len;
  std::uint64_t expected_offset = 0;
  for (std::size_t i = 0; i < layout.tensors.size(); ++i) {
    const auto& spec = layout.tensors[i];
    const auto& entry = manifest[i];
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    std::uint64_t offset = 0;
    try {
      name = entry.at("name").get<std::string>();
      rows = entry.at("shape").at(0).get<Eigen::Index>();
      cols = entry.at("shape").at(1).get<Eigen::Index>();
      offset = entry.at("offset").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad tensor manifest entry: ") + e.what());
    }
    if (name != spec.name) throw ShapeError("tensor " + std::to_string(i) + " is '" + name + "', expected '" + spec.name + "'");
    if (rows != spec.rows || cols != spec.cols)
      throw ShapeError("tensor " + name + " has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                       ", expected " + std::to_string(spec.rows) + "x" + std::to_string(spec.cols));
    if (offset != expected_offset) throw FormatError("tensor " + name + " has unexpected offset");
    const std::uint64_t nbytes = static_cast<std::uint64_t>(rows * cols) * 4;
    if (offset + nbytes > payload_size) throw FormatError("checkpoint truncated inside tensor " + name);

    Matrix value(rows, cols);
    const std::uint8_t* p = payload + offset;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c, p += 4) value(r, c) = std::bit_cast<float>(get_u32(p));
    if (!value.allFinite()) throw FormatError("tensor " + name + " holds non-finite values");
    model.parameters.push_back({name, std::move(value)});
    expected_offset += nbytes;
  }
  if (expected_offset != payload_size) throw FormatError("trailing bytes after tensor payloads");
  return model;
}

void save_checkpoint(const TmtpnModel& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

TmtpnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace transmuse
