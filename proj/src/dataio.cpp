#include "amsps/dataio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace amsps {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(bytes, sizeof(T));
}

template <typename T>
T get_le(std::string_view in, std::size_t offset) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

template <typename Scalar>
std::string encode_impl(const MatrixX<Scalar>& m, std::uint32_t version) {
  if (m.rows() == 0 || m.cols() == 0) {
    throw MatrixFileError(MatrixFileErrorCode::Degenerate, "matrix file: refusing to write a " + shape_string(m) + " matrix");
  }
  std::string out;
  out.reserve(kMatrixHeaderBytes + static_cast<std::size_t>(m.size()) * sizeof(Scalar));
  out.append(kMatrixMagic, 4);
  put_le<std::uint32_t>(out, version);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) put_le<Scalar>(out, m.data()[i]);
  return out;
}

struct RecordHeader {
  std::uint32_t version = 0;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::size_t scalar_bytes = 0;
};

RecordHeader read_header(std::string_view bytes, std::size_t offset) {
  if (bytes.size() < offset + kMatrixHeaderBytes) {
    throw MatrixFileError(MatrixFileErrorCode::Truncated,
                          "matrix file: truncated header (expected " + std::to_string(kMatrixHeaderBytes) +
                              " bytes, got " + std::to_string(bytes.size() - std::min(bytes.size(), offset)) + ")");
  }
  if (std::memcmp(bytes.data() + offset, kMatrixMagic, 4) != 0) {
    throw MatrixFileError(MatrixFileErrorCode::BadMagic, "matrix file: bad magic");
  }
  RecordHeader h;
  h.version = get_le<std::uint32_t>(bytes, offset + 4);
  if (h.version == kMatrixVersionF32) {
    h.scalar_bytes = 4;
  } else if (h.version == kMatrixVersionF64) {
    h.scalar_bytes = 8;
  } else {
    throw MatrixFileError(MatrixFileErrorCode::BadVersion, "matrix file: unsupported version " + std::to_string(h.version));
  }
  h.rows = get_le<std::uint64_t>(bytes, offset + 8);
  h.cols = get_le<std::uint64_t>(bytes, offset + 16);
  if (h.rows == 0 || h.cols == 0) {
    throw MatrixFileError(MatrixFileErrorCode::Degenerate, "matrix file: degenerate shape " + std::to_string(h.rows) +
                                                               "x" + std::to_string(h.cols));
  }
  const std::uint64_t expected = h.rows * h.cols * h.scalar_bytes;
  const std::uint64_t actual = bytes.size() - offset - kMatrixHeaderBytes;
  if (actual < expected) {
    throw MatrixFileError(MatrixFileErrorCode::Truncated, "matrix file: truncated payload (expected " +
                                                              std::to_string(expected) + " bytes, got " +
                                                              std::to_string(actual) + ")");
  }
  return h;
}

}  // namespace

const char* to_string(MatrixFileErrorCode code) {
  switch (code) {
    case MatrixFileErrorCode::Io: return "io";
    case MatrixFileErrorCode::BadMagic: return "bad-magic";
    case MatrixFileErrorCode::BadVersion: return "bad-version";
    case MatrixFileErrorCode::Truncated: return "truncated";
    case MatrixFileErrorCode::Degenerate: return "degenerate";
    case MatrixFileErrorCode::TrailingBytes: return "trailing-bytes";
  }
  return "unknown";
}

std::string encode_matrix(const MatrixF& m) { return encode_impl<float>(m, kMatrixVersionF32); }
std::string encode_matrix_f64(const Matrix& m) { return encode_impl<double>(m, kMatrixVersionF64); }

Matrix decode_matrix(std::string_view bytes, std::size_t& offset, std::uint32_t* version) {
  const auto h = read_header(bytes, offset);
  Matrix m(static_cast<Eigen::Index>(h.rows), static_cast<Eigen::Index>(h.cols));
  std::size_t pos = offset + kMatrixHeaderBytes;
  for (Eigen::Index i = 0; i < m.size(); ++i, pos += h.scalar_bytes) {
    m.data()[i] = h.scalar_bytes == 4 ? static_cast<double>(get_le<float>(bytes, pos)) : get_le<double>(bytes, pos);
  }
  offset = pos;
  if (version != nullptr) *version = h.version;
  return m;
}

void save_matrix(const fs::path& path, const MatrixF& m) { write_file_atomic(path, encode_matrix(m)); }

Matrix load_matrix(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::size_t offset = 0;
  Matrix m = decode_matrix(bytes, offset);
  if (offset != bytes.size()) {
    throw MatrixFileError(MatrixFileErrorCode::TrailingBytes,
                          "matrix file " + path.string() + ": " + std::to_string(bytes.size() - offset) +
                              " unexpected trailing bytes");
  }
  return m;
}

MatrixF load_matrix_f32(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::size_t offset = 0;
  std::uint32_t version = 0;
  Matrix m = decode_matrix(bytes, offset, &version);
  if (version != kMatrixVersionF32) {
    throw MatrixFileError(MatrixFileErrorCode::BadVersion, "matrix file " + path.string() + " is not float32");
  }
  return m.cast<float>();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MatrixFileError(MatrixFileErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCategory::Io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCategory::Io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

// --- captions ---------------------------------------------------------------

std::vector<CaptionRecord> parse_captions(std::string_view content) {
  std::vector<CaptionRecord> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) {
      throw Error(ErrorCategory::Format, "caption file line " + std::to_string(line_no) +
                                             ": expected image_id<TAB>caption_id<TAB>text");
    }
    CaptionRecord r{std::string(line.substr(0, t1)), std::string(line.substr(t1 + 1, t2 - t1 - 1)),
                    std::string(line.substr(t2 + 1))};
    if (r.image_id.empty() || r.caption_id.empty()) {
      throw Error(ErrorCategory::Format, "caption file line " + std::to_string(line_no) + ": empty id");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CaptionRecord> load_captions(const fs::path& path) { return parse_captions(read_file(path)); }

std::string format_captions(const std::vector<CaptionRecord>& captions) {
  std::string out;
  for (const auto& c : captions) {
    out += c.image_id;
    out += '\t';
    out += c.caption_id;
    out += '\t';
    out += c.text;
    out += '\n';
  }
  return out;
}

// --- manifest ---------------------------------------------------------------

DatasetManifest load_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::Format, "manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  try {
    m.image_features = j.at("image_features").get<std::string>();
    m.regions_per_image = j.at("regions_per_image").get<std::size_t>();
    m.captions = j.at("captions").get<std::string>();
    m.corpus = j.at("corpus").get<std::string>();
    m.concepts = j.at("concepts").get<std::string>();
    const auto& splits = j.at("splits");
    m.train = splits.at("train").get<std::vector<std::string>>();
    m.val = splits.value("val", std::vector<std::string>{});
    m.test = splits.at("test").get<std::vector<std::string>>();
    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      m.latents = s.value("latents", "");
      m.word_directions = s.value("word_directions", "");
      m.words = s.value("words", "");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::Format, "manifest " + path.string() + ": " + e.what());
  }
  if (m.regions_per_image == 0) throw Error(ErrorCategory::Data, "manifest: regions_per_image must be positive");
  return m;
}

std::string format_manifest(const DatasetManifest& m) {
  json j;
  j["image_features"] = m.image_features;
  j["regions_per_image"] = m.regions_per_image;
  j["captions"] = m.captions;
  j["corpus"] = m.corpus;
  j["concepts"] = m.concepts;
  j["splits"] = {{"train", m.train}, {"val", m.val}, {"test", m.test}};
  if (!m.latents.empty()) {
    j["synthetic"] = {{"latents", m.latents}, {"word_directions", m.word_directions}, {"words", m.words}};
  }
  return j.dump(2) + "\n";
}

// --- dataset ----------------------------------------------------------------

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw Error(ErrorCategory::Usage, "unknown split '" + name + "'");
}

const std::vector<std::size_t>& Dataset::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  return test;
}

std::size_t Dataset::image_index(const std::string& id) const {
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].image_id == id) return i;
  }
  throw Error(ErrorCategory::Data, "unknown image id '" + id + "'");
}

std::size_t Dataset::caption_index(const std::string& id) const {
  for (std::size_t i = 0; i < captions.size(); ++i) {
    if (captions[i].id == id) return i;
  }
  throw Error(ErrorCategory::Data, "unknown caption id '" + id + "'");
}

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

Dataset load_dataset(const fs::path& manifest_path) { return load_dataset(load_manifest(manifest_path)); }

Dataset load_dataset(const DatasetManifest& manifest) {
  Dataset d;
  d.manifest = manifest;
  const auto& m = d.manifest;

  std::uint64_t fp = fnv1a64(format_manifest(m));
  for (const auto* rel : {&m.image_features, &m.captions, &m.corpus, &m.concepts}) {
    fp = fnv1a64(read_file(m.resolve(*rel)), fp);
  }
  d.fingerprint = fp;

  const Matrix features = load_matrix(m.resolve(m.image_features));
  const auto o = static_cast<Eigen::Index>(m.regions_per_image);
  if (features.rows() % o != 0) {
    throw Error(ErrorCategory::Data, "image features have " + std::to_string(features.rows()) +
                                         " rows, not a multiple of regions_per_image=" + std::to_string(o));
  }
  const auto num_images = features.rows() / o;
  d.images.reserve(static_cast<std::size_t>(num_images));
  for (Eigen::Index i = 0; i < num_images; ++i) {
    d.images.push_back({std::to_string(i), features.middleRows(i * o, o)});
  }

  std::map<std::string, std::size_t> caption_ids;
  d.image_captions.assign(d.images.size(), {});
  for (auto& r : load_captions(m.resolve(m.captions))) {
    std::size_t img = 0;
    try {
      std::size_t used = 0;
      img = std::stoul(r.image_id, &used);
      if (used != r.image_id.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCategory::Data, "caption '" + r.caption_id + "': image id '" + r.image_id +
                                           "' is not a feature block index");
    }
    if (img >= d.images.size()) {
      throw Error(ErrorCategory::Data, "caption '" + r.caption_id + "' refers to missing image " + r.image_id);
    }
    if (!caption_ids.emplace(r.caption_id, d.captions.size()).second) {
      throw Error(ErrorCategory::Data, "duplicate caption id '" + r.caption_id + "'");
    }
    Caption c{r.caption_id, img, r.text, tokenize(r.text)};
    if (c.words.empty()) throw Error(ErrorCategory::Data, "caption '" + c.id + "' has no tokens");
    d.image_captions[img].push_back(d.captions.size());
    d.captions.push_back(std::move(c));
  }

  std::set<std::size_t> seen;
  auto resolve_split = [&](const std::vector<std::string>& ids, const char* name) {
    std::vector<std::size_t> out;
    for (const auto& id : ids) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(id);
      } catch (const std::exception&) {
        throw Error(ErrorCategory::Data, std::string("split ") + name + ": bad image id '" + id + "'");
      }
      if (idx >= d.images.size()) {
        throw Error(ErrorCategory::Data, std::string("split ") + name + ": image " + id + " does not exist");
      }
      if (!seen.insert(idx).second) {
        throw Error(ErrorCategory::Data, std::string("split ") + name + ": image " + id +
                                             " already appears in another split");
      }
      if (d.image_captions[idx].empty()) {
        throw Error(ErrorCategory::Data, "image " + id + " has no captions");
      }
      out.push_back(idx);
    }
    return out;
  };
  d.train = resolve_split(m.train, "train");
  d.val = resolve_split(m.val, "val");
  d.test = resolve_split(m.test, "test");
  for (const auto& c : d.captions) {
    if (!seen.count(c.image)) {
      throw Error(ErrorCategory::Data, "caption '" + c.id + "' belongs to image " + std::to_string(c.image) +
                                           " which is in no split");
    }
  }

  d.corpus.concepts = load_matrix(m.resolve(m.corpus));
  d.corpus.names = read_lines(m.resolve(m.concepts));
  for (auto& name : d.corpus.names) {
    auto words = tokenize(name);
    if (words.size() != 1) throw Error(ErrorCategory::Data, "concept '" + name + "' must be a single word");
    name = words.front();
  }
  // The stored float32 rows are re-normalized in double precision.
  d.corpus.concepts = normalize_rows(d.corpus.concepts);
  validate(d.corpus);
  return d;
}

std::vector<Words> all_sentences(const Dataset& data) {
  std::vector<Words> out;
  out.reserve(data.captions.size());
  for (const auto& c : data.captions) out.push_back(c.words);
  return out;
}

SplitView make_split_view(const Dataset& data, const std::vector<std::size_t>& images) {
  SplitView v;
  v.images = images;
  for (std::size_t local = 0; local < images.size(); ++local) {
    for (auto c : data.image_captions.at(images[local])) {
      v.captions.push_back(c);
      v.caption_to_local_image.push_back(local);
    }
  }
  return v;
}

}  // namespace amsps
