#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mmfuse/errors.hpp"

namespace mmfuse {

constexpr int kUniformDim = 1024;  // per-modality vector length after pad/truncate
constexpr int kFusedDim = 3072;    // FED | SER | TED
constexpr int kNumClasses = 5;
constexpr int kAedTagCount = 527;

// FED/SER/TED are the fusion modalities; AED carries auxiliary audio tags only.
enum class ModalityId : int { FED = 0, SER = 1, TED = 2, AED = 3 };

constexpr std::array<ModalityId, 3> kFusionModalities = {ModalityId::FED, ModalityId::SER,
                                                         ModalityId::TED};
constexpr std::array<ModalityId, 4> kAllModalities = {ModalityId::FED, ModalityId::SER,
                                                      ModalityId::TED, ModalityId::AED};

const char* modality_name(ModalityId m);
std::optional<ModalityId> modality_from_name(std::string_view name);
inline bool is_fusion_modality(ModalityId m) { return m != ModalityId::AED; }

// Ordinal sentiment on the 5-point scale; ordering follows the underlying
// [-3,3] intensity scale.
enum class SentimentClass : int {
  VeryNegative = 0,
  Negative = 1,
  Neutral = 2,
  Positive = 3,
  VeryPositive = 4,
};

const char* sentiment_name(SentimentClass c);
inline int ordinal(SentimentClass c) { return static_cast<int>(c); }
SentimentClass sentiment_from_ordinal(int o);
std::optional<SentimentClass> sentiment_from_name(std::string_view name);

// Identifies one video segment. Serialized as "<video_id>_<segment_index>";
// video ids may themselves contain underscores, the index is everything after
// the last one.
struct SegmentKey {
  std::string video_id;
  std::uint32_t segment_index = 0;

  std::string str() const;
  static SegmentKey parse(const std::string& text);

  auto operator<=>(const SegmentKey&) const = default;
};

// T x d frame matrix for one modality of one segment. T may be zero (the
// supervisor uses zero-frame placeholders for gated or failed modalities).
// Construction rejects NaN/Inf.
class EmbeddingSequence {
 public:
  EmbeddingSequence(ModalityId modality, Eigen::MatrixXf frames);

  static EmbeddingSequence zero_frames(ModalityId modality, int dim);

  ModalityId modality() const { return modality_; }
  const Eigen::MatrixXf& frames() const { return frames_; }
  Eigen::Index frame_count() const { return frames_.rows(); }
  Eigen::Index dim() const { return frames_.cols(); }

 private:
  ModalityId modality_;
  Eigen::MatrixXf frames_;
};

struct LabeledSample {
  SegmentKey key;
  double score = 0.0;  // in [-3, 3]
  std::map<ModalityId, EmbeddingSequence> embeddings;
};

struct EvalReport {
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  double mae = 0.0;
  // confusion[truth][pred]; rows of confusion_normalized sum to 1, or stay
  // all-zero for a class absent from the truths.
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> confusion{};
  std::array<std::array<double, kNumClasses>, kNumClasses> confusion_normalized{};
  std::int64_t sample_count = 0;
};

// Bins from the 5-class discretization of the [-3,3] scale:
//   [-3,-1) -> VeryNegative, [-1,-0.3) -> Negative, [-0.3,0.3] -> Neutral,
//   (0.3,1] -> Positive, (1,3] -> VeryPositive.
SentimentClass discretize_sentiment(double score);

// Accuracy, weighted F1 (zero-support classes contribute zero weight), MAE
// over class ordinals, and the 5x5 confusion matrix.
EvalReport compute_metrics(const std::vector<SentimentClass>& predictions,
                           const std::vector<SentimentClass>& truths);

// Disjoint folds covering [0, labels.size()); per-class counts across folds
// differ by at most one. Deterministic for a fixed seed.
std::vector<std::vector<int>> stratified_kfold(const std::vector<SentimentClass>& labels, int k,
                                               std::uint64_t seed);

// Label file: one record per line, "<key>\t<score>" with a decimal score.
struct LabelRecord {
  SegmentKey key;
  double score = 0.0;
};

std::vector<LabelRecord> read_label_file(const std::string& path);
void write_label_file(const std::string& path, const std::vector<LabelRecord>& records);

}  // namespace mmfuse
