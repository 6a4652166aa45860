#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mmfuse/core.hpp"

namespace mmfuse {

class BinReader;
class BinWriter;

// One stored block: magic "EMB1", u16 version, u16 name length, modality
// name, u32 rows, u32 cols, rows*cols f32 little-endian row-major.
constexpr std::uint16_t kEmbRecordVersion = 1;

void write_embedding_record(BinWriter& out, ModalityId modality, const Eigen::MatrixXf& frames);

// Reads one record starting at the reader's cursor; validates the modality
// name and finite entries.
EmbeddingSequence read_embedding_record(BinReader& in, const std::string& context);

struct ManifestEntry {
  SegmentKey key;
  ModalityId modality = ModalityId::FED;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

// Append-only writer; close() emits the text manifest "<archive>.idx" with
// one "key<TAB>modality<TAB>offset<TAB>length" line per record, sorted.
class ArchiveWriter {
 public:
  explicit ArchiveWriter(const std::string& path);
  ~ArchiveWriter();

  void add(const SegmentKey& key, const EmbeddingSequence& seq);
  void close();

 private:
  std::string path_;
  std::unique_ptr<BinWriter> out_;
  std::vector<ManifestEntry> entries_;
};

// Random-access reader over an archive file plus its manifest.
class EmbeddingArchive {
 public:
  static EmbeddingArchive open(const std::string& path);

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::vector<SegmentKey> keys() const;  // sorted, unique
  bool has(const SegmentKey& key, ModalityId modality) const;
  EmbeddingSequence read(const SegmentKey& key, ModalityId modality) const;

  // All modalities stored for one key.
  std::map<ModalityId, EmbeddingSequence> read_key(const SegmentKey& key) const;

 private:
  std::string path_;
  std::vector<char> data_;
  std::vector<ManifestEntry> entries_;
  std::map<std::pair<std::string, ModalityId>, std::size_t> index_;
};

std::string manifest_path(const std::string& archive_path);

}  // namespace mmfuse
