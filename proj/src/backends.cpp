#include <atomic>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

#include "mmfuse/agents.hpp"
#include "mmfuse/archive.hpp"
#include "mmfuse/binio.hpp"
#include "mmfuse/rng.hpp"

namespace mmfuse {

int synthetic_default_dim(ModalityId m) {
  switch (m) {
    case ModalityId::FED: return 512;
    case ModalityId::SER: return 256;
    case ModalityId::TED: return 768;
    case ModalityId::AED: return kAedTagCount;
  }
  throw DomainError("unknown modality");
}

namespace {

class SyntheticBackend : public EncoderBackend {
 public:
  SyntheticBackend(std::uint64_t seed, ModalityId modality, SyntheticProfile profile)
      : seed_(seed), modality_(modality), profile_(std::move(profile)) {
    if (profile_.min_frames < 1 || profile_.max_frames < profile_.min_frames)
      throw DomainError("synthetic backend: bad frame count range");
    if (!(profile_.noise >= 0.0)) throw DomainError("synthetic backend: negative noise");
    if (!(profile_.speech_fraction >= 0.0 && profile_.speech_fraction <= 1.0))
      throw DomainError("synthetic backend: speech_fraction must lie in [0,1]");
  }

  ModalityId modality() const override { return modality_; }
  int declared_dim() const override { return synthetic_default_dim(modality_); }

  EmbeddingSequence extract(const SegmentKey& key, const std::string&) override {
    // One stream per (seed, segment, modality): request order never matters.
    std::mt19937_64 rng(derive_seed(seed_, key.str(), static_cast<std::uint64_t>(modality_)));
    if (modality_ == ModalityId::AED) return make_tags(rng);

    const int dim = declared_dim();
    const int span = profile_.max_frames - profile_.min_frames + 1;
    const int frames =
        profile_.min_frames + static_cast<int>(bounded_uniform(rng, static_cast<std::uint64_t>(span)));
    const int label = profile_.class_of ? profile_.class_of(key) : -1;

    Eigen::MatrixXf out(frames, dim);
    for (int t = 0; t < frames; ++t) {
      for (int j = 0; j < dim; ++j) {
        out(t, j) = static_cast<float>(profile_.noise * gaussian(rng));
      }
      if (label >= 0 && label < kNumClasses && label < dim) {
        out(t, label) += static_cast<float>(profile_.shift);
      }
    }
    return EmbeddingSequence(modality_, std::move(out));
  }

 private:
  EmbeddingSequence make_tags(std::mt19937_64& rng) {
    Eigen::MatrixXf scores(1, kAedTagCount);
    for (int j = 0; j < kAedTagCount; ++j) {
      scores(0, j) = static_cast<float>(0.3 * uniform_unit(rng));
    }
    const bool speech = uniform_unit(rng) < profile_.speech_fraction;
    if (speech) {
      scores(0, 0) = 0.95f;  // "Speech" dominates the top-5
    } else {
      // five non-speech tags crowd out everything else
      for (int j = 0; j < 5; ++j) scores(0, 100 + j) = static_cast<float>(0.95 - 0.01 * j);
    }
    return EmbeddingSequence(ModalityId::AED, std::move(scores));
  }

  std::uint64_t seed_;
  ModalityId modality_;
  SyntheticProfile profile_;
};

}  // namespace

std::shared_ptr<EncoderBackend> synthetic_backend(std::uint64_t seed, ModalityId modality,
                                                  SyntheticProfile profile) {
  return std::make_shared<SyntheticBackend>(seed, modality, std::move(profile));
}

// ---------------------------------------------------------------------------
// External process exchange
// ---------------------------------------------------------------------------

namespace {

// fork/exec, poll for exit until the deadline, SIGKILL on overrun.
int run_with_timeout(const std::vector<std::string>& argv, std::chrono::milliseconds timeout) {
  std::vector<char*> cargv;
  cargv.reserve(argv.size() + 1);
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);

  const pid_t pid = fork();
  if (pid < 0) throw BackendFailure(FailureCode::BackendError, "fork failed");
  if (pid == 0) {
    execvp(cargv[0], cargv.data());
    _exit(127);
  }

  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    int status = 0;
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) {
      if (WIFEXITED(status)) return WEXITSTATUS(status);
      return 128;  // killed by signal
    }
    if (r < 0) throw BackendFailure(FailureCode::BackendError, "waitpid failed");
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      throw BackendFailure(FailureCode::Timeout,
                           "command exceeded " + std::to_string(timeout.count()) + " ms");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
}

class ExternalProcessBackend : public EncoderBackend {
 public:
  explicit ExternalProcessBackend(ExternalProcessSpec spec) : spec_(std::move(spec)) {
    if (spec_.command.empty()) throw DomainError("external backend: empty command");
    if (spec_.dim < 1) throw DomainError("external backend: declared dimension required");
    if (spec_.timeout.count() <= 0) throw DomainError("external backend: timeout must be positive");
    std::error_code ec;
    std::filesystem::create_directories(spec_.exchange_dir, ec);
    if (!std::filesystem::is_directory(spec_.exchange_dir))
      throw DomainError("external backend: exchange directory unavailable: " + spec_.exchange_dir);
  }

  ModalityId modality() const override { return spec_.modality; }
  int declared_dim() const override { return spec_.dim; }

  EmbeddingSequence extract(const SegmentKey& key, const std::string& input_descriptor) override {
    const std::uint64_t id = next_exchange_id_.fetch_add(1);
    const std::filesystem::path dir(spec_.exchange_dir);
    const std::filesystem::path req = dir / (std::to_string(id) + ".req");
    const std::filesystem::path emb = dir / (std::to_string(id) + ".emb");

    {
      std::ofstream out(req, std::ios::trunc);
      out << key.str() << '\n' << modality_name(spec_.modality) << '\n' << input_descriptor << '\n';
      out.close();
      if (!out) throw BackendFailure(FailureCode::BackendError,
                                     "cannot write request file " + req.string());
    }

    struct Cleanup {
      std::filesystem::path req, emb;
      ~Cleanup() {
        std::error_code ec;
        std::filesystem::remove(req, ec);
        std::filesystem::remove(emb, ec);
      }
    } cleanup{req, emb};

    std::vector<std::string> argv = spec_.command;
    argv.push_back(req.string());
    const int exit_code = run_with_timeout(argv, spec_.timeout);
    if (exit_code != 0)
      throw BackendFailure(FailureCode::NonzeroExit,
                           "command exited with " + std::to_string(exit_code));

    EmbeddingSequence seq = [&] {
      try {
        BinReader in = BinReader::from_file(emb.string());
        EmbeddingSequence s = read_embedding_record(in, emb.string());
        in.expect_end("frame data");
        return s;
      } catch (const DataError& e) {
        throw BackendFailure(FailureCode::MalformedOutput, e.what());
      }
    }();
    if (seq.modality() != spec_.modality)
      throw BackendFailure(FailureCode::MalformedOutput,
                           std::string("response holds ") + modality_name(seq.modality()));
    if (seq.dim() != spec_.dim)
      throw BackendFailure(FailureCode::DimensionMismatch,
                           "response width " + std::to_string(seq.dim()) + ", declared " +
                               std::to_string(spec_.dim));
    return seq;
  }

 private:
  ExternalProcessSpec spec_;
  static std::atomic<std::uint64_t> next_exchange_id_;
};

std::atomic<std::uint64_t> ExternalProcessBackend::next_exchange_id_{1};

}  // namespace

std::shared_ptr<EncoderBackend> external_process_backend(ExternalProcessSpec spec) {
  return std::make_shared<ExternalProcessBackend>(std::move(spec));
}

// ---------------------------------------------------------------------------
// Archive-backed serving
// ---------------------------------------------------------------------------

namespace {

class ArchiveBackend : public EncoderBackend {
 public:
  ArchiveBackend(std::shared_ptr<const EmbeddingArchive> archive, ModalityId modality)
      : archive_(std::move(archive)), modality_(modality) {
    if (archive_ == nullptr) throw DomainError("archive backend: null archive");
    dim_ = synthetic_default_dim(modality_);
    for (const auto& entry : archive_->entries()) {
      if (entry.modality == modality_) {
        dim_ = static_cast<int>(archive_->read(entry.key, modality_).dim());
        break;
      }
    }
  }

  ModalityId modality() const override { return modality_; }
  int declared_dim() const override { return dim_; }

  EmbeddingSequence extract(const SegmentKey& key, const std::string&) override {
    try {
      return archive_->read(key, modality_);
    } catch (const DataError& e) {
      throw BackendFailure(FailureCode::BackendError, e.what());
    }
  }

 private:
  std::shared_ptr<const EmbeddingArchive> archive_;
  ModalityId modality_;
  int dim_ = 0;
};

}  // namespace

std::shared_ptr<EncoderBackend> archive_backend(std::shared_ptr<const EmbeddingArchive> archive,
                                                ModalityId modality) {
  return std::make_shared<ArchiveBackend>(archive, modality);
}

}  // namespace mmfuse
