#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mmfuse/core.hpp"
#include "mmfuse/errors.hpp"
#include "mmfuse/pipeline.hpp"

namespace mmfuse {

// Raised by the supervisor when the FailClosed policy meets a failed
// modality; names the modality in the message.
class OrchestrationError : public DomainError {
 public:
  using DomainError::DomainError;
};

// ---------------------------------------------------------------------------
// Audio event tags and the speech gate
// ---------------------------------------------------------------------------

struct AedTags {
  Eigen::VectorXd scores;                     // length 527, entries in [0,1]
  std::vector<std::pair<int, double>> top_k;  // (tag index, score), descending score

  // Ties rank the lower index first.
  static AedTags from_scores(const Eigen::VectorXd& scores, int k);
};

struct SpeechCategorySet {
  std::vector<int> indices;  // within [0,527), parallel to names
  std::vector<std::string> names;

  // The speech-related AudioSet categories: Speech, Male/Female speech,
  // Conversation, Shout, Screaming, Whispering.
  static const SpeechCategorySet& audioset_default();

  bool contains(int index) const;
  void validate() const;  // nonempty, indices in range
};

// True iff any top-k tag index is speech-related.
bool speech_present(const AedTags& tags, int k, const SpeechCategorySet& categories);

// ---------------------------------------------------------------------------
// Message protocol
// ---------------------------------------------------------------------------

enum class MessageKind : std::uint8_t {
  ExtractRequest,
  ExtractResponse,
  HealthPing,
  HealthAck,
  Failure,
};

enum class FailureCode : std::uint8_t {
  None = 0,
  Timeout,
  BackendError,
  DimensionMismatch,
  MalformedOutput,
  NonzeroExit,
  AgentUnavailable,
};

const char* failure_code_name(FailureCode code);

struct AgentMessage {
  std::uint64_t request_id = 0;
  MessageKind kind = MessageKind::ExtractRequest;
  SegmentKey segment;
  ModalityId modality = ModalityId::FED;
  std::string input_descriptor;                // request payload
  std::optional<EmbeddingSequence> embedding;  // response payload (AED: 1x527 scores)
  FailureCode failure = FailureCode::None;     // set on Failure messages
  std::string error;
  std::chrono::steady_clock::time_point timestamp;
};

// Thrown by backends; the agent converts it into a Failure message.
class BackendFailure : public std::runtime_error {
 public:
  BackendFailure(FailureCode code, const std::string& what)
      : std::runtime_error(what), code(code) {}
  FailureCode code;
};

// Produces the embedding payload for one (segment, modality) request.
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;
  virtual ModalityId modality() const = 0;
  virtual int declared_dim() const = 0;
  virtual EmbeddingSequence extract(const SegmentKey& key, const std::string& input_descriptor) = 0;
};

// ---------------------------------------------------------------------------
// Response routing (supervisor side)
// ---------------------------------------------------------------------------

// One waiting slot per outstanding request_id; responses arriving after the
// waiter gave up are dropped and counted, never delivered twice.
class ResponseRouter {
 public:
  std::uint64_t open_slot();
  void deliver(AgentMessage message);
  std::optional<AgentMessage> wait(std::uint64_t request_id,
                                   std::chrono::steady_clock::time_point deadline);
  std::uint64_t late_count() const;
  std::uint64_t issued_count() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::uint64_t next_id_ = 1;
  std::map<std::uint64_t, std::optional<AgentMessage>> slots_;
  std::uint64_t late_ = 0;
};

// ---------------------------------------------------------------------------
// Agent worker
// ---------------------------------------------------------------------------

// Single worker thread draining a request queue; every ExtractRequest gets
// exactly one terminal response unless the agent is killed first, in which
// case queued work is dropped without a response and the caller times out.
class AgentInstance {
 public:
  AgentInstance(std::string id, std::shared_ptr<EncoderBackend> backend, ResponseRouter& router);
  ~AgentInstance();

  AgentInstance(const AgentInstance&) = delete;
  AgentInstance& operator=(const AgentInstance&) = delete;

  const std::string& id() const { return id_; }
  ModalityId modality() const { return modality_; }
  int declared_dim() const;

  void submit(AgentMessage request);
  void kill();
  bool alive() const;

 private:
  void run();

  std::string id_;
  ModalityId modality_;
  std::shared_ptr<EncoderBackend> backend_;
  ResponseRouter& router_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<AgentMessage> queue_;
  bool stop_ = false;
  std::thread worker_;
};

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

struct RegistryEvent {
  std::chrono::steady_clock::time_point timestamp;
  std::string text;
};

enum class AgentHealth { Ok, Unresponsive };

// Registration-ordered agent directory; the first healthy instance of a
// modality serves requests, later registrations are its backups.
class AgentRegistry {
 public:
  AgentRegistry() = default;
  AgentRegistry(const AgentRegistry&) = delete;
  AgentRegistry& operator=(const AgentRegistry&) = delete;

  ResponseRouter& router() { return router_; }

  void register_agent(std::shared_ptr<AgentInstance> agent);  // duplicate id → domain error
  void deregister(const std::string& id);  // unknown id → warning event, no-op
  AgentHealth health_check(const std::string& id, std::chrono::milliseconds timeout);
  std::shared_ptr<AgentInstance> active_for(ModalityId modality);  // nullptr when none healthy
  std::optional<AgentHealth> health_of(const std::string& id) const;
  std::vector<RegistryEvent> events() const;

 private:
  void log_locked(std::string text);

  ResponseRouter router_;
  mutable std::mutex mu_;
  struct Entry {
    std::shared_ptr<AgentInstance> agent;
    AgentHealth health = AgentHealth::Ok;
    std::chrono::steady_clock::time_point last_seen;
  };
  std::vector<Entry> entries_;
  std::vector<RegistryEvent> events_;
};

// ---------------------------------------------------------------------------
// Supervisor
// ---------------------------------------------------------------------------

enum class DegradationPolicy : std::uint8_t { ZeroFill = 0, FailClosed = 1 };

struct SupervisorConfig {
  std::chrono::milliseconds timeout{5000};
  int retries = 1;  // attempts per modality = retries + 1
  DegradationPolicy policy = DegradationPolicy::ZeroFill;
  PoolingModes pooling;
  int speech_top_k = 5;
  SpeechCategorySet speech_categories = SpeechCategorySet::audioset_default();
};

struct SupervisorResult {
  Prediction prediction;
  bool degraded = false;  // a fusion modality was zero-filled after failure
  std::map<ModalityId, std::string> modality_status;  // "ok", "gated", "failed:<code>"
  bool speech = true;
  std::optional<AedTags> tags;
};

// Algorithm: dispatch FED/SER/TED/AED concurrently, retry failures, apply the
// speech gate to TED, degrade per policy, and classify what remains.
SupervisorResult supervisor_infer(const SegmentKey& key, const std::string& input_descriptor,
                                  AgentRegistry& registry, const FusionModel& model,
                                  const SupervisorConfig& config);

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

int synthetic_default_dim(ModalityId m);  // FED 512, SER 256, TED 768, AED 527

struct SyntheticProfile {
  int min_frames = 3;
  int max_frames = 8;
  double noise = 1.0;
  // Class-conditional mean shift added to the class's own coordinate (first
  // five dims) of every frame; gives fused vectors learnable linear signal.
  double shift = 4.0;
  std::function<int(const SegmentKey&)> class_of;  // absent or -1 → no shift
  // AED only: fraction of segments whose top-5 contains a speech tag.
  double speech_fraction = 1.0;
};

// Deterministic per (seed, segment, modality); request order never matters.
std::shared_ptr<EncoderBackend> synthetic_backend(std::uint64_t seed, ModalityId modality,
                                                  SyntheticProfile profile = {});

struct ExternalProcessSpec {
  std::vector<std::string> command;  // argv; the request path is appended as the sole argument
  std::string exchange_dir;
  ModalityId modality = ModalityId::FED;
  int dim = 0;
  std::chrono::milliseconds timeout{5000};
};

// Writes "<request_id>.req" (three lines: key, modality, input descriptor),
// runs the command, reads back "<request_id>.emb" as one embedding record.
std::shared_ptr<EncoderBackend> external_process_backend(ExternalProcessSpec spec);

class EmbeddingArchive;

// Serves stored records; the agent-facing seam batch inference runs on.
// Declared width comes from the archive's first record of the modality
// (synthetic default when the archive holds none).
std::shared_ptr<EncoderBackend> archive_backend(std::shared_ptr<const EmbeddingArchive> archive,
                                                ModalityId modality);

}  // namespace mmfuse
