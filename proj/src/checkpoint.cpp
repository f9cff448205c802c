#include "amsps/checkpoint.hpp"

#include <cstring>
#include <json.hpp>

#include "amsps/dataio.hpp"

namespace amsps {

using nlohmann::json;

ModelDims model_dims(const ModelParams& p) {
  ModelDims d;
  d.feature_dim = p.image.input_dim();
  d.embed_dim = p.image.output_dim();
  d.word_dim = p.text.embed_dim();
  d.vocab_size = p.text.vocab_size();
  return d;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return v;
}

ModelParams zero_model(const ModelDims& dims) {
  std::mt19937_64 rng(0);
  return zeros_like(init_model(dims, rng));
}

void append_tensors(std::string& out, const ModelParams& p) {
  for (const auto& t : tensors(const_cast<ModelParams&>(p))) {
    out += encode_matrix_f64(Eigen::Map<const Matrix>(t.data, t.rows, t.cols));
  }
}

void read_tensors(std::string_view bytes, std::size_t& offset, ModelParams& p) {
  for (auto& t : tensors(p)) {
    std::uint32_t version = 0;
    const Matrix m = decode_matrix(bytes, offset, &version);
    if (version != kMatrixVersionF64) {
      throw Error(ErrorCategory::Format, "checkpoint: tensor " + t.name + " is not stored as float64");
    }
    if (m.rows() != t.rows || m.cols() != t.cols) {
      throw Error(ErrorCategory::Shape, "checkpoint: tensor " + t.name + " has shape " + shape_string(m) +
                                            ", expected " + std::to_string(t.rows) + "x" + std::to_string(t.cols));
    }
    std::memcpy(t.data, m.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
  }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const ModelDims dims = model_dims(ckpt.state.params);
  json header;
  header["config"] = json::parse(format_config(ckpt.config));
  header["dataset_fingerprint"] = hex64(ckpt.dataset_fingerprint);
  header["dims"] = {{"feature_dim", dims.feature_dim},
                    {"embed_dim", dims.embed_dim},
                    {"word_dim", dims.word_dim},
                    {"vocab_size", dims.vocab_size}};
  header["vocabulary"] = ckpt.vocabulary;
  header["step"] = ckpt.state.step;
  header["epoch"] = ckpt.state.epoch;
  header["phase"] = ckpt.state.phase;
  json names = json::array();
  for (const auto& t : tensors(const_cast<ModelParams&>(ckpt.state.params))) names.push_back(t.name);
  header["tensors"] = names;
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, text.size());
  out += text;
  append_tensors(out, ckpt.state.params);
  append_tensors(out, ckpt.state.first_moment);
  append_tensors(out, ckpt.state.second_moment);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16) throw Error(ErrorCategory::Format, "checkpoint: file shorter than its header");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw Error(ErrorCategory::Format, "checkpoint: bad magic");
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (version != kCheckpointVersion) {
    throw Error(ErrorCategory::Format, "checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint64_t len = get_le(bytes, 8, 8);
  if (len > bytes.size() - 16) throw Error(ErrorCategory::Format, "checkpoint: truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(16, len));
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::Format, std::string("checkpoint: header is not valid JSON: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.config = parse_config(header.at("config").dump());
    ckpt.dataset_fingerprint = std::stoull(header.at("dataset_fingerprint").get<std::string>(), nullptr, 16);
    ModelDims dims;
    const auto& d = header.at("dims");
    dims.feature_dim = d.at("feature_dim").get<Eigen::Index>();
    dims.embed_dim = d.at("embed_dim").get<Eigen::Index>();
    dims.word_dim = d.at("word_dim").get<Eigen::Index>();
    dims.vocab_size = d.at("vocab_size").get<Eigen::Index>();
    ckpt.vocabulary = header.at("vocabulary").get<std::vector<std::string>>();
    ckpt.state = make_state(zero_model(dims));
    ckpt.state.step = header.at("step").get<std::uint64_t>();
    ckpt.state.epoch = header.at("epoch").get<std::uint64_t>();
    ckpt.state.phase = header.at("phase").get<int>();
    const auto names = header.at("tensors").get<std::vector<std::string>>();
    const auto expected = tensors(ckpt.state.params);
    if (names.size() != expected.size()) throw Error(ErrorCategory::Format, "checkpoint: tensor count differs");
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] != expected[i].name) {
        throw Error(ErrorCategory::Format, "checkpoint: tensor " + std::to_string(i) + " is '" + names[i] +
                                               "', expected '" + expected[i].name + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::Format, std::string("checkpoint: malformed header: ") + e.what());
  }

  std::size_t offset = 16 + len;
  read_tensors(bytes, offset, ckpt.state.params);
  read_tensors(bytes, offset, ckpt.state.first_moment);
  read_tensors(bytes, offset, ckpt.state.second_moment);
  if (offset != bytes.size()) {
    throw Error(ErrorCategory::Format,
                "checkpoint: " + std::to_string(bytes.size() - offset) + " trailing bytes after the last tensor");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace amsps
