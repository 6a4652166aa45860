#include "mmfuse/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>

#include "mmfuse/rng.hpp"
#include "mmfuse/textio.hpp"

namespace mmfuse {

const char* modality_name(ModalityId m) {
  switch (m) {
    case ModalityId::FED: return "FED";
    case ModalityId::SER: return "SER";
    case ModalityId::TED: return "TED";
    case ModalityId::AED: return "AED";
  }
  return "?";
}

std::optional<ModalityId> modality_from_name(std::string_view name) {
  for (ModalityId m : kAllModalities) {
    if (name == modality_name(m)) return m;
  }
  return std::nullopt;
}

const char* sentiment_name(SentimentClass c) {
  switch (c) {
    case SentimentClass::VeryNegative: return "VeryNegative";
    case SentimentClass::Negative: return "Negative";
    case SentimentClass::Neutral: return "Neutral";
    case SentimentClass::Positive: return "Positive";
    case SentimentClass::VeryPositive: return "VeryPositive";
  }
  return "?";
}

SentimentClass sentiment_from_ordinal(int o) {
  if (o < 0 || o >= kNumClasses) {
    throw DomainError("sentiment ordinal out of range [0,4]: " + std::to_string(o));
  }
  return static_cast<SentimentClass>(o);
}

std::optional<SentimentClass> sentiment_from_name(std::string_view name) {
  for (int o = 0; o < kNumClasses; ++o) {
    auto c = static_cast<SentimentClass>(o);
    if (name == sentiment_name(c)) return c;
  }
  return std::nullopt;
}

std::string SegmentKey::str() const {
  return video_id + "_" + std::to_string(segment_index);
}

SegmentKey SegmentKey::parse(const std::string& text) {
  auto pos = text.rfind('_');
  if (pos == std::string::npos || pos == 0 || pos + 1 == text.size()) {
    throw DataError("segment key must be '<video_id>_<segment_index>': '" + text + "'");
  }
  std::string_view index_part(text.data() + pos + 1, text.size() - pos - 1);
  std::uint32_t index = 0;
  auto [ptr, ec] = std::from_chars(index_part.data(), index_part.data() + index_part.size(), index);
  if (ec != std::errc{} || ptr != index_part.data() + index_part.size()) {
    throw DataError("segment index is not a nonnegative integer: '" + text + "'");
  }
  return SegmentKey{text.substr(0, pos), index};
}

EmbeddingSequence::EmbeddingSequence(ModalityId modality, Eigen::MatrixXf frames)
    : modality_(modality), frames_(std::move(frames)) {
  if (frames_.cols() < 1) {
    throw DomainError("embedding sequence needs dimension >= 1");
  }
  if (!frames_.allFinite()) {
    throw DomainError("embedding sequence contains NaN/Inf frames");
  }
}

EmbeddingSequence EmbeddingSequence::zero_frames(ModalityId modality, int dim) {
  return EmbeddingSequence(modality, Eigen::MatrixXf(0, dim));
}

SentimentClass discretize_sentiment(double score) {
  if (!std::isfinite(score) || score < -3.0 || score > 3.0) {
    throw DomainError("sentiment score must be finite and in [-3,3], got " + fmt_g17(score));
  }
  if (score < -1.0) return SentimentClass::VeryNegative;  // [-3,-1)
  if (score < -0.3) return SentimentClass::Negative;      // [-1,-0.3)
  if (score <= 0.3) return SentimentClass::Neutral;       // [-0.3,0.3]
  if (score <= 1.0) return SentimentClass::Positive;      // (0.3,1]
  return SentimentClass::VeryPositive;                    // (1,3]
}

EvalReport compute_metrics(const std::vector<SentimentClass>& predictions,
                           const std::vector<SentimentClass>& truths) {
  if (predictions.empty()) {
    throw DomainError("compute_metrics: empty input");
  }
  if (predictions.size() != truths.size()) {
    throw DomainError("compute_metrics: length mismatch (" + std::to_string(predictions.size()) +
                      " predictions vs " + std::to_string(truths.size()) + " truths)");
  }

  EvalReport report;
  const auto n = static_cast<std::int64_t>(predictions.size());
  report.sample_count = n;

  std::int64_t correct = 0;
  double abs_error = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int t = ordinal(truths[i]);
    const int p = ordinal(predictions[i]);
    report.confusion[t][p] += 1;
    if (t == p) ++correct;
    abs_error += std::abs(t - p);
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  report.mae = abs_error / static_cast<double>(n);

  for (int c = 0; c < kNumClasses; ++c) {
    std::int64_t support = 0;   // truths of class c
    std::int64_t predicted = 0; // predictions of class c
    for (int p = 0; p < kNumClasses; ++p) support += report.confusion[c][p];
    for (int t = 0; t < kNumClasses; ++t) predicted += report.confusion[t][c];

    const auto tp = static_cast<double>(report.confusion[c][c]);
    const double precision = predicted > 0 ? tp / static_cast<double>(predicted) : 0.0;
    const double recall = support > 0 ? tp / static_cast<double>(support) : 0.0;
    const double f1 = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    report.weighted_f1 += f1 * static_cast<double>(support) / static_cast<double>(n);

    if (support > 0) {
      for (int p = 0; p < kNumClasses; ++p) {
        report.confusion_normalized[c][p] =
            static_cast<double>(report.confusion[c][p]) / static_cast<double>(support);
      }
    }
  }
  return report;
}

std::vector<std::vector<int>> stratified_kfold(const std::vector<SentimentClass>& labels, int k,
                                               std::uint64_t seed) {
  const int n = static_cast<int>(labels.size());
  if (k < 2) {
    throw DomainError("stratified_kfold: k must be >= 2");
  }
  if (k > n) {
    throw DomainError("stratified_kfold: k=" + std::to_string(k) + " exceeds sample count " +
                      std::to_string(n));
  }

  std::array<std::vector<int>, kNumClasses> by_class;
  for (int i = 0; i < n; ++i) {
    by_class[ordinal(labels[i])].push_back(i);
  }

  std::mt19937_64 rng(derive_seed(seed, "stratified_kfold"));
  std::vector<std::vector<int>> folds(k);
  // Deal each class round-robin; the rotating start spreads remainders so
  // fold sizes stay balanced too.
  int start = 0;
  for (auto& indices : by_class) {
    deterministic_shuffle(indices, rng);
    for (std::size_t j = 0; j < indices.size(); ++j) {
      folds[(start + static_cast<int>(j)) % k].push_back(indices[j]);
    }
    start = (start + static_cast<int>(indices.size())) % k;
  }
  for (auto& fold : folds) {
    std::sort(fold.begin(), fold.end());
  }
  return folds;
}

std::vector<LabelRecord> read_label_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open label file: " + path);
  }
  std::vector<LabelRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": expected '<key>\\t<score>', got '" + line + "'");
    }
    LabelRecord rec;
    try {
      rec.key = SegmentKey::parse(line.substr(0, tab));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const char* first = line.data() + tab + 1;
    const char* last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, rec.score);
    if (ec != std::errc{} || ptr != last || !std::isfinite(rec.score) || rec.score < -3.0 ||
        rec.score > 3.0) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": score must be a decimal literal in [-3,3], got '" +
                      std::string(first, last) + "'");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_label_file(const std::string& path, const std::vector<LabelRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw DataError("cannot write label file: " + path);
  }
  for (const auto& rec : records) {
    out << rec.key.str() << '\t' << fmt_g17(rec.score) << '\n';
  }
  if (!out) {
    throw DataError("write failed: " + path);
  }
}

}  // namespace mmfuse
