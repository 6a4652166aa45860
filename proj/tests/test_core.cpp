#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mmfuse/core.hpp"
#include "mmfuse/rng.hpp"

using namespace mmfuse;

namespace {

// Independent metrics oracle: per-class tallies via plain counting loops, no
// shared code with compute_metrics.
struct OracleMetrics {
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  double mae = 0.0;
  long confusion[kNumClasses][kNumClasses] = {};
};

OracleMetrics oracle_metrics(const std::vector<SentimentClass>& pred,
                             const std::vector<SentimentClass>& truth) {
  OracleMetrics m;
  const std::size_t n = truth.size();
  long correct = 0;
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int p = static_cast<int>(pred[i]);
    const int t = static_cast<int>(truth[i]);
    m.confusion[t][p]++;
    if (p == t) correct++;
    abs_sum += std::abs(p - t);
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  m.mae = abs_sum / static_cast<double>(n);

  double f1_weighted = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    long tp = m.confusion[c][c];
    long fp = 0, fn = 0, support = 0;
    for (int o = 0; o < kNumClasses; ++o) {
      if (o != c) {
        fp += m.confusion[o][c];
        fn += m.confusion[c][o];
      }
      support += m.confusion[c][o];
    }
    if (support == 0) continue;
    const double precision =
        (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(support);
    const double f1 =
        (precision + recall) == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    f1_weighted += f1 * static_cast<double>(support) / static_cast<double>(n);
  }
  m.weighted_f1 = f1_weighted;
  return m;
}

std::filesystem::path temp_file(const char* stem) {
  return std::filesystem::temp_directory_path() /
         (std::string(stem) + "_" + std::to_string(::getpid()) + ".tmp");
}

}  // namespace

TEST_CASE("discretize_sentiment maps the documented boundaries exactly") {
  CHECK(discretize_sentiment(-3.0) == SentimentClass::VeryNegative);
  CHECK(discretize_sentiment(-1.0000001) == SentimentClass::VeryNegative);
  CHECK(discretize_sentiment(-1.0) == SentimentClass::Negative);
  CHECK(discretize_sentiment(-0.3000001) == SentimentClass::Negative);
  CHECK(discretize_sentiment(-0.3) == SentimentClass::Neutral);
  CHECK(discretize_sentiment(0.0) == SentimentClass::Neutral);
  CHECK(discretize_sentiment(0.3) == SentimentClass::Neutral);
  CHECK(discretize_sentiment(0.3000001) == SentimentClass::Positive);
  CHECK(discretize_sentiment(1.0) == SentimentClass::Positive);
  CHECK(discretize_sentiment(1.0000001) == SentimentClass::VeryPositive);
  CHECK(discretize_sentiment(3.0) == SentimentClass::VeryPositive);
}

TEST_CASE("discretize_sentiment rejects out-of-range and non-finite scores") {
  CHECK_THROWS_AS(discretize_sentiment(-3.0001), DomainError);
  CHECK_THROWS_AS(discretize_sentiment(3.0001), DomainError);
  CHECK_THROWS_AS(discretize_sentiment(std::nan("")), DomainError);
  CHECK_THROWS_AS(discretize_sentiment(std::numeric_limits<double>::infinity()), DomainError);
}

TEST_CASE("discretize_sentiment tiles a dense grid with interval semantics") {
  // Reference bin from first principles for every grid point; intervals are
  // [-3,-1) [-1,-0.3) [-0.3,0.3] (0.3,1] (1,3].
  const int steps = 600000;
  int checked = 0;
  for (int i = 0; i <= steps; ++i) {
    const double s = -3.0 + 6.0 * static_cast<double>(i) / static_cast<double>(steps);
    SentimentClass expect;
    if (s < -1.0) {
      expect = SentimentClass::VeryNegative;
    } else if (s < -0.3) {
      expect = SentimentClass::Negative;
    } else if (s <= 0.3) {
      expect = SentimentClass::Neutral;
    } else if (s <= 1.0) {
      expect = SentimentClass::Positive;
    } else {
      expect = SentimentClass::VeryPositive;
    }
    if (discretize_sentiment(s) != expect) {
      CAPTURE(s);
      REQUIRE(discretize_sentiment(s) == expect);
    }
    checked++;
  }
  CHECK(checked == steps + 1);
}

TEST_CASE("sentiment names and ordinals round-trip") {
  for (int o = 0; o < kNumClasses; ++o) {
    const SentimentClass c = sentiment_from_ordinal(o);
    CHECK(ordinal(c) == o);
    CHECK(sentiment_from_name(sentiment_name(c)) == c);
  }
  CHECK_THROWS_AS(sentiment_from_ordinal(-1), DomainError);
  CHECK_THROWS_AS(sentiment_from_ordinal(5), DomainError);
  CHECK_FALSE(sentiment_from_name("Sideways").has_value());
}

TEST_CASE("modality names round-trip") {
  for (ModalityId m : kAllModalities) {
    CHECK(modality_from_name(modality_name(m)) == m);
  }
  CHECK_FALSE(modality_from_name("XYZ").has_value());
  CHECK(is_fusion_modality(ModalityId::FED));
  CHECK_FALSE(is_fusion_modality(ModalityId::AED));
}

TEST_CASE("compute_metrics matches the counting oracle on random fixtures") {
  std::mt19937_64 rng(derive_seed(42, "metrics_fixtures"));
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + bounded_uniform(rng, 400);
    std::vector<SentimentClass> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<SentimentClass>(bounded_uniform(rng, kNumClasses));
      truth[i] = static_cast<SentimentClass>(bounded_uniform(rng, kNumClasses));
    }
    const EvalReport got = compute_metrics(pred, truth);
    const OracleMetrics want = oracle_metrics(pred, truth);
    CHECK(got.sample_count == static_cast<std::int64_t>(n));
    CHECK(std::abs(got.accuracy - want.accuracy) < 1e-12);
    CHECK(std::abs(got.weighted_f1 - want.weighted_f1) < 1e-12);
    CHECK(std::abs(got.mae - want.mae) < 1e-12);
    for (int t = 0; t < kNumClasses; ++t)
      for (int p = 0; p < kNumClasses; ++p)
        CHECK(got.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] ==
              want.confusion[t][p]);
  }
}

TEST_CASE("compute_metrics hand-checked example") {
  using S = SentimentClass;
  // truth:   N  N  P  VP N
  // pred:    N  P  P  VP VN
  const std::vector<S> truth = {S::Negative, S::Negative, S::Positive, S::VeryPositive,
                                S::Negative};
  const std::vector<S> pred = {S::Negative, S::Positive, S::Positive, S::VeryPositive,
                               S::VeryNegative};
  const EvalReport r = compute_metrics(pred, truth);
  CHECK(r.accuracy == doctest::Approx(3.0 / 5.0).epsilon(1e-15));
  CHECK(r.mae == doctest::Approx((0 + 2 + 0 + 0 + 1) / 5.0).epsilon(1e-15));
  CHECK(r.confusion[1][1] == 1);
  CHECK(r.confusion[1][3] == 1);
  CHECK(r.confusion[1][0] == 1);
  // Negative: tp=1 fp=0 fn=2 -> p=1, r=1/3, f1=0.5, support 3.
  // Positive: tp=1 fp=1 fn=0 -> p=0.5, r=1, f1=2/3, support 1.
  // VeryPositive: tp=1 -> f1=1, support 1.
  const double want_f1 = (0.5 * 3 + (2.0 / 3.0) * 1 + 1.0 * 1) / 5.0;
  CHECK(r.weighted_f1 == doctest::Approx(want_f1).epsilon(1e-12));
}

TEST_CASE("compute_metrics normalized confusion rows sum to one or stay zero") {
  using S = SentimentClass;
  const std::vector<S> truth = {S::Neutral, S::Neutral, S::Positive};
  const std::vector<S> pred = {S::Neutral, S::Positive, S::Positive};
  const EvalReport r = compute_metrics(pred, truth);
  double neutral_row = 0.0, vn_row = 0.0;
  for (int p = 0; p < kNumClasses; ++p) {
    neutral_row += r.confusion_normalized[2][static_cast<std::size_t>(p)];
    vn_row += r.confusion_normalized[0][static_cast<std::size_t>(p)];
  }
  CHECK(neutral_row == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(vn_row == 0.0);
}

TEST_CASE("compute_metrics validates its inputs") {
  using S = SentimentClass;
  CHECK_THROWS_AS(compute_metrics({}, {}), DomainError);
  CHECK_THROWS_AS(compute_metrics({S::Neutral}, {S::Neutral, S::Neutral}), DomainError);
}

TEST_CASE("stratified_kfold satisfies the counting oracle") {
  std::mt19937_64 rng(derive_seed(7, "kfold_fixtures"));
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + static_cast<int>(bounded_uniform(rng, 6));
    const std::size_t n = static_cast<std::size_t>(k) + bounded_uniform(rng, 200);
    std::vector<SentimentClass> labels(n);
    for (auto& l : labels) l = static_cast<SentimentClass>(bounded_uniform(rng, kNumClasses));

    const auto folds = stratified_kfold(labels, k, 123);
    REQUIRE(folds.size() == static_cast<std::size_t>(k));

    // Disjoint cover of [0, n).
    std::vector<int> seen(n, 0);
    for (const auto& fold : folds) {
      for (int idx : fold) {
        REQUIRE(idx >= 0);
        REQUIRE(static_cast<std::size_t>(idx) < n);
        seen[static_cast<std::size_t>(idx)]++;
      }
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));

    // Per-class fold counts differ by at most one.
    for (int c = 0; c < kNumClasses; ++c) {
      std::vector<long> per_fold;
      for (const auto& fold : folds) {
        long count = 0;
        for (int idx : fold)
          if (labels[static_cast<std::size_t>(idx)] == static_cast<SentimentClass>(c)) count++;
        per_fold.push_back(count);
      }
      const auto [lo, hi] = std::minmax_element(per_fold.begin(), per_fold.end());
      CHECK(*hi - *lo <= 1);
    }
  }
}

TEST_CASE("stratified_kfold is deterministic per seed and varies across seeds") {
  std::vector<SentimentClass> labels(100);
  std::mt19937_64 rng(derive_seed(9, "kfold_seeds"));
  for (auto& l : labels) l = static_cast<SentimentClass>(bounded_uniform(rng, kNumClasses));
  const auto a = stratified_kfold(labels, 5, 1);
  const auto b = stratified_kfold(labels, 5, 1);
  const auto c = stratified_kfold(labels, 5, 2);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("stratified_kfold validates k") {
  std::vector<SentimentClass> labels(10, SentimentClass::Neutral);
  CHECK_THROWS_AS(stratified_kfold(labels, 1, 0), DomainError);
  CHECK_THROWS_AS(stratified_kfold(labels, 11, 0), DomainError);
  CHECK_THROWS_AS(stratified_kfold({}, 2, 0), DomainError);
}

TEST_CASE("SegmentKey serializes and parses with the last-underscore rule") {
  const SegmentKey key{"abc_def", 17};
  CHECK(key.str() == "abc_def_17");
  const SegmentKey parsed = SegmentKey::parse("abc_def_17");
  CHECK(parsed.video_id == "abc_def");
  CHECK(parsed.segment_index == 17);
  CHECK(parsed == key);

  const SegmentKey simple = SegmentKey::parse("v_0");
  CHECK(simple.video_id == "v");
  CHECK(simple.segment_index == 0);

  CHECK_THROWS_AS(SegmentKey::parse("nounderscore"), DataError);
  CHECK_THROWS_AS(SegmentKey::parse("trailing_"), DataError);
  CHECK_THROWS_AS(SegmentKey::parse("_5"), DataError);
  CHECK_THROWS_AS(SegmentKey::parse("v_notanumber"), DataError);
  CHECK_THROWS_AS(SegmentKey::parse("v_-3"), DataError);
}

TEST_CASE("EmbeddingSequence rejects non-finite frames and supports zero frames") {
  Eigen::MatrixXf good(2, 3);
  good << 1, 2, 3, 4, 5, 6;
  const EmbeddingSequence seq(ModalityId::FED, good);
  CHECK(seq.frame_count() == 2);
  CHECK(seq.dim() == 3);

  Eigen::MatrixXf bad = good;
  bad(1, 2) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(EmbeddingSequence(ModalityId::FED, bad), DomainError);

  const EmbeddingSequence empty = EmbeddingSequence::zero_frames(ModalityId::TED, 8);
  CHECK(empty.frame_count() == 0);
  CHECK(empty.dim() == 8);
}

TEST_CASE("label file round-trips scores exactly") {
  const auto path = temp_file("labels_roundtrip");
  std::vector<LabelRecord> records;
  std::mt19937_64 rng(derive_seed(3, "label_file"));
  for (int i = 0; i < 64; ++i) {
    LabelRecord r;
    r.key = SegmentKey{"vid_" + std::to_string(i % 7), static_cast<std::uint32_t>(i)};
    r.score = -3.0 + 6.0 * uniform_unit(rng);
    records.push_back(r);
  }
  write_label_file(path.string(), records);
  const auto loaded = read_label_file(path.string());
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].key == records[i].key);
    CHECK(loaded[i].score == records[i].score);  // %.17g survives the round trip bit-exactly
  }
  std::filesystem::remove(path);
}

TEST_CASE("label file rejects malformed rows with a line reference") {
  const auto path = temp_file("labels_malformed");
  {
    std::ofstream out(path);
    out << "ok_0\t1.5\n";
    out << "missing_score\n";
  }
  try {
    read_label_file(path.string());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  std::filesystem::remove(path);

  CHECK_THROWS_AS(read_label_file("/nonexistent/labels.tsv"), DataError);
}

TEST_CASE("label file rejects out-of-range scores") {
  const auto path = temp_file("labels_range");
  {
    std::ofstream out(path);
    out << "v_0\t3.5\n";
  }
  CHECK_THROWS_AS(read_label_file(path.string()), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("pinned rng primitives have their documented contracts") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 10000; ++i) {
    const double u = uniform_unit(rng);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const std::uint64_t b = bounded_uniform(rng, 7);
    CHECK(b < 7);
  }

  // derive_seed separates streams by tag and salt.
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));

  // Shuffle is a permutation and deterministic per seed.
  std::vector<int> items(50);
  std::iota(items.begin(), items.end(), 0);
  std::vector<int> copy = items;
  std::mt19937_64 r1(derive_seed(5, "shuffle")), r2(derive_seed(5, "shuffle"));
  deterministic_shuffle(items, r1);
  deterministic_shuffle(copy, r2);
  CHECK(items == copy);
  std::vector<int> sorted = items;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(sorted == expect);
}

TEST_CASE("gaussian draws have plausible first moments") {
  std::mt19937_64 rng(derive_seed(8, "gaussian_moments"));
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = gaussian(rng);
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}
