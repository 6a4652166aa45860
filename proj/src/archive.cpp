#include "mmfuse/archive.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "mmfuse/binio.hpp"
#include "mmfuse/errors.hpp"

namespace mmfuse {

std::string manifest_path(const std::string& archive_path) { return archive_path + ".idx"; }

void write_embedding_record(BinWriter& out, ModalityId modality, const Eigen::MatrixXf& frames) {
  if (frames.cols() < 1) throw DomainError("embedding record needs at least one column");
  const std::string name = modality_name(modality);
  out.magic("EMB1");
  out.u16(kEmbRecordVersion);
  out.u16(static_cast<std::uint16_t>(name.size()));
  out.bytes(name.data(), name.size());
  out.u32(static_cast<std::uint32_t>(frames.rows()));
  out.u32(static_cast<std::uint32_t>(frames.cols()));
  // row-major on disk
  for (Eigen::Index r = 0; r < frames.rows(); ++r) {
    Eigen::RowVectorXf row = frames.row(r);
    out.f32_array(row.data(), static_cast<std::size_t>(row.size()));
  }
}

EmbeddingSequence read_embedding_record(BinReader& in, const std::string& context) {
  in.magic("EMB1", "record magic");
  const std::uint16_t version = in.u16("record version");
  if (version != kEmbRecordVersion)
    throw DataError(context + ": unsupported record version " + std::to_string(version));
  const std::uint16_t name_len = in.u16("modality name length");
  const std::string name = in.utf8(name_len, "modality name");
  const auto modality = modality_from_name(name);
  if (!modality.has_value()) throw DataError(context + ": unknown modality '" + name + "'");
  const std::uint32_t rows = in.u32("frame count");
  const std::uint32_t cols = in.u32("frame width");
  if (cols == 0 || cols > 1u << 20 || rows > 1u << 24)
    throw DataError(context + ": implausible record shape " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  Eigen::MatrixXf frames(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    Eigen::RowVectorXf row(cols);
    in.f32_array(row.data(), cols, "frame data");
    frames.row(r) = row;
  }
  if (rows == 0) return EmbeddingSequence::zero_frames(*modality, static_cast<int>(cols));
  try {
    return EmbeddingSequence(*modality, std::move(frames));
  } catch (const DomainError& e) {
    throw DataError(context + ": " + e.what());
  }
}

ArchiveWriter::ArchiveWriter(const std::string& path)
    : path_(path), out_(std::make_unique<BinWriter>(path)) {}

ArchiveWriter::~ArchiveWriter() = default;

void ArchiveWriter::add(const SegmentKey& key, const EmbeddingSequence& seq) {
  if (out_ == nullptr) throw DataError("archive writer already closed: " + path_);
  for (const auto& e : entries_) {
    if (e.key == key && e.modality == seq.modality())
      throw DomainError("duplicate archive record for " + key.str() + "/" +
                        modality_name(seq.modality()));
  }
  ManifestEntry entry;
  entry.key = key;
  entry.modality = seq.modality();
  entry.offset = out_->offset();
  write_embedding_record(*out_, seq.modality(), seq.frames());
  entry.length = out_->offset() - entry.offset;
  entries_.push_back(std::move(entry));
}

void ArchiveWriter::close() {
  if (out_ == nullptr) return;
  out_->close();
  out_.reset();
  // Lines come out lexicographically sorted, so the manifest is diff-stable.
  std::sort(entries_.begin(), entries_.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
    const std::string ka = a.key.str(), kb = b.key.str();
    if (ka != kb) return ka < kb;
    return std::string_view(modality_name(a.modality)) < modality_name(b.modality);
  });
  std::ofstream idx(manifest_path(path_), std::ios::trunc);
  if (!idx) throw DataError("cannot open for writing: " + manifest_path(path_));
  for (const auto& e : entries_) {
    idx << e.key.str() << '\t' << modality_name(e.modality) << '\t' << e.offset << '\t' << e.length
        << '\n';
  }
  idx.close();
  if (!idx) throw DataError("write failed: " + manifest_path(path_));
}

namespace {

std::uint64_t parse_u64_field(const std::string& text, const std::string& context) {
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw DataError(context + ": bad integer field '" + text + "'");
  return value;
}

}  // namespace

EmbeddingArchive EmbeddingArchive::open(const std::string& path) {
  EmbeddingArchive archive;
  archive.path_ = path;

  std::ifstream data_in(path, std::ios::binary);
  if (!data_in) throw DataError("cannot open: " + path);
  std::vector<char> data((std::istreambuf_iterator<char>(data_in)),
                         std::istreambuf_iterator<char>());

  const std::string idx_path = manifest_path(path);
  std::ifstream idx(idx_path);
  if (!idx) throw DataError("cannot open: " + idx_path);
  std::string line;
  int line_no = 0;
  while (std::getline(idx, line)) {
    line_no++;
    if (line.empty()) continue;
    const std::string context = idx_path + ":" + std::to_string(line_no);
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == '\t') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 4)
      throw DataError(context + ": expected 4 tab-separated fields, got " +
                      std::to_string(fields.size()));
    ManifestEntry entry;
    try {
      entry.key = SegmentKey::parse(fields[0]);
    } catch (const DataError& e) {
      throw DataError(context + ": " + e.what());
    }
    const auto modality = modality_from_name(fields[1]);
    if (!modality.has_value()) throw DataError(context + ": unknown modality '" + fields[1] + "'");
    entry.modality = *modality;
    entry.offset = parse_u64_field(fields[2], context);
    entry.length = parse_u64_field(fields[3], context);
    if (entry.offset + entry.length > data.size())
      throw DataError(context + ": record [" + std::to_string(entry.offset) + ", +" +
                      std::to_string(entry.length) + ") extends past end of " + path + " (" +
                      std::to_string(data.size()) + " bytes)");
    const auto slot = std::make_pair(entry.key.str(), entry.modality);
    if (archive.index_.contains(slot))
      throw DataError(context + ": duplicate manifest entry for " + fields[0] + "/" + fields[1]);
    archive.index_[slot] = archive.entries_.size();
    archive.entries_.push_back(std::move(entry));
  }
  archive.data_ = std::move(data);
  return archive;
}

std::vector<SegmentKey> EmbeddingArchive::keys() const {
  std::vector<SegmentKey> out;
  for (const auto& e : entries_) {
    if (out.empty() || !(out.back() == e.key)) out.push_back(e.key);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool EmbeddingArchive::has(const SegmentKey& key, ModalityId modality) const {
  return index_.contains(std::make_pair(key.str(), modality));
}

EmbeddingSequence EmbeddingArchive::read(const SegmentKey& key, ModalityId modality) const {
  const auto it = index_.find(std::make_pair(key.str(), modality));
  if (it == index_.end())
    throw DataError(path_ + ": no record for " + key.str() + "/" + modality_name(modality));
  const ManifestEntry& entry = entries_[it->second];
  const std::string context = path_ + " record " + key.str() + "/" + modality_name(modality);
  BinReader in(context,
               std::vector<char>(data_.begin() + static_cast<std::ptrdiff_t>(entry.offset),
                                 data_.begin() + static_cast<std::ptrdiff_t>(entry.offset + entry.length)));
  EmbeddingSequence seq = read_embedding_record(in, context);
  in.expect_end("frame data");
  if (seq.modality() != modality)
    throw DataError(context + ": record holds " + std::string(modality_name(seq.modality())));
  return seq;
}

std::map<ModalityId, EmbeddingSequence> EmbeddingArchive::read_key(const SegmentKey& key) const {
  std::map<ModalityId, EmbeddingSequence> out;
  for (ModalityId m : kAllModalities) {
    if (has(key, m)) out.emplace(m, read(key, m));
  }
  if (out.empty()) throw DataError(path_ + ": no records for key " + key.str());
  return out;
}

}  // namespace mmfuse
