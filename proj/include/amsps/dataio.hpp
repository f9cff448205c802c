#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "amsps/consensus.hpp"
#include "amsps/encoders.hpp"
#include "amsps/numerics.hpp"
#include "amsps/text.hpp"

namespace amsps {

// --- binary matrix container ----------------------------------------------
//
// "AMSP" | u32 version | u64 rows | u64 cols | payload, all little-endian,
// payload row-major. Version 1 stores float32, version 2 float64.

inline constexpr char kMatrixMagic[4] = {'A', 'M', 'S', 'P'};
inline constexpr std::uint32_t kMatrixVersionF32 = 1;
inline constexpr std::uint32_t kMatrixVersionF64 = 2;
inline constexpr std::size_t kMatrixHeaderBytes = 24;

enum class MatrixFileErrorCode {
  Io,
  BadMagic,
  BadVersion,
  Truncated,
  Degenerate,
  TrailingBytes,
};

const char* to_string(MatrixFileErrorCode code);

class MatrixFileError : public Error {
 public:
  MatrixFileError(MatrixFileErrorCode code, const std::string& what)
      : Error(code == MatrixFileErrorCode::Io ? ErrorCategory::Io : ErrorCategory::Format, what), code_(code) {}
  MatrixFileErrorCode code() const noexcept { return code_; }

 private:
  MatrixFileErrorCode code_;
};

/// Serializes as float32 (version 1).
std::string encode_matrix(const MatrixF& m);
/// Serializes as float64 (version 2); used for checkpoints.
std::string encode_matrix_f64(const Matrix& m);

/// Decodes one record starting at `offset`, advancing it past the record.
/// Either version is accepted; float32 payloads are widened exactly.
Matrix decode_matrix(std::string_view bytes, std::size_t& offset, std::uint32_t* version = nullptr);

void save_matrix(const std::filesystem::path& path, const MatrixF& m);
Matrix load_matrix(const std::filesystem::path& path);
/// Payload as stored (float32 files only), for bit-exact comparisons.
MatrixF load_matrix_f32(const std::filesystem::path& path);

// --- small file helpers ---------------------------------------------------

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// --- captions ---------------------------------------------------------------

struct CaptionRecord {
  std::string image_id;
  std::string caption_id;
  std::string text;
};

/// One caption per line: image_id TAB caption_id TAB text.
std::vector<CaptionRecord> parse_captions(std::string_view content);
std::vector<CaptionRecord> load_captions(const std::filesystem::path& path);
std::string format_captions(const std::vector<CaptionRecord>& captions);

// --- dataset ----------------------------------------------------------------

struct DatasetManifest {
  std::filesystem::path base_dir;
  std::string image_features;
  std::size_t regions_per_image = 0;
  std::string captions;
  std::string corpus;
  std::string concepts;
  std::vector<std::string> train, val, test;  // image ids
  std::string latents;          // optional, synthetic data only
  std::string word_directions;  // optional, synthetic data only
  std::string words;            // optional, synthetic data only

  std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }
};

DatasetManifest load_manifest(const std::filesystem::path& path);
std::string format_manifest(const DatasetManifest& m);

struct Caption {
  std::string id;
  std::size_t image = 0;  // index into Dataset::images
  std::string text;
  Words words;
};

enum class Split { Train, Val, Test };
Split parse_split(const std::string& name);

struct Dataset {
  DatasetManifest manifest;
  std::vector<RegionFeatures> images;
  std::vector<Caption> captions;
  std::vector<std::vector<std::size_t>> image_captions;
  std::vector<std::size_t> train, val, test;  // image indices
  CorpusEmbedding corpus;
  std::uint64_t fingerprint = 0;

  const std::vector<std::size_t>& split(Split s) const;
  std::size_t image_index(const std::string& id) const;
  std::size_t caption_index(const std::string& id) const;
  Eigen::Index feature_dim() const { return images.empty() ? 0 : images.front().regions.cols(); }
};

/// Loads and validates every referenced file; split overlap is an error.
Dataset load_dataset(const std::filesystem::path& manifest_path);
Dataset load_dataset(const DatasetManifest& manifest);

/// All sentences of the dataset, in caption order.
std::vector<Words> all_sentences(const Dataset& data);

/// Images of a split with their captions, re-indexed from 0.
struct SplitView {
  std::vector<std::size_t> images;    // dataset image indices
  std::vector<std::size_t> captions;  // dataset caption indices
  std::vector<std::size_t> caption_to_local_image;
};

SplitView make_split_view(const Dataset& data, const std::vector<std::size_t>& images);

}  // namespace amsps
