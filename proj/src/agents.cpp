#include "mmfuse/agents.hpp"

#include <algorithm>

namespace mmfuse {

AedTags AedTags::from_scores(const Eigen::VectorXd& scores, int k) {
  if (scores.size() != kAedTagCount)
    throw DomainError("audio tags must have exactly 527 scores, got " +
                      std::to_string(scores.size()));
  if (k < 1 || k > kAedTagCount) throw DomainError("top-k must lie in [1,527]");
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const double s = scores(i);
    if (!(s >= 0.0 && s <= 1.0))
      throw DomainError("audio tag score out of [0,1] at index " + std::to_string(i));
  }
  std::vector<int> order(kAedTagCount);
  for (int i = 0; i < kAedTagCount; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores(a) > scores(b); });
  AedTags tags;
  tags.scores = scores;
  tags.top_k.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    tags.top_k.emplace_back(order[static_cast<std::size_t>(i)],
                            scores(order[static_cast<std::size_t>(i)]));
  }
  return tags;
}

const SpeechCategorySet& SpeechCategorySet::audioset_default() {
  static const SpeechCategorySet set{
      {0, 1, 2, 4, 8, 14, 15},
      {"Speech", "Male speech, man speaking", "Female speech, woman speaking", "Conversation",
       "Shout", "Screaming", "Whispering"}};
  return set;
}

bool SpeechCategorySet::contains(int index) const {
  return std::find(indices.begin(), indices.end(), index) != indices.end();
}

void SpeechCategorySet::validate() const {
  if (indices.empty()) throw DomainError("speech category set is empty");
  if (names.size() != indices.size())
    throw DomainError("speech category names do not parallel indices");
  for (int i : indices) {
    if (i < 0 || i >= kAedTagCount)
      throw DomainError("speech category index out of [0,527): " + std::to_string(i));
  }
}

bool speech_present(const AedTags& tags, int k, const SpeechCategorySet& categories) {
  categories.validate();
  if (k < 1 || k > kAedTagCount) throw DomainError("top-k must lie in [1,527]");
  const std::size_t limit = std::min(static_cast<std::size_t>(k), tags.top_k.size());
  for (std::size_t i = 0; i < limit; ++i) {
    if (categories.contains(tags.top_k[i].first)) return true;
  }
  return false;
}

const char* failure_code_name(FailureCode code) {
  switch (code) {
    case FailureCode::None: return "none";
    case FailureCode::Timeout: return "timeout";
    case FailureCode::BackendError: return "backend_error";
    case FailureCode::DimensionMismatch: return "dimension_mismatch";
    case FailureCode::MalformedOutput: return "malformed_output";
    case FailureCode::NonzeroExit: return "nonzero_exit";
    case FailureCode::AgentUnavailable: return "agent_unavailable";
  }
  throw DomainError("unknown failure code");
}

// ---------------------------------------------------------------------------
// ResponseRouter
// ---------------------------------------------------------------------------

std::uint64_t ResponseRouter::open_slot() {
  std::lock_guard lock(mu_);
  const std::uint64_t id = next_id_++;
  slots_.emplace(id, std::nullopt);
  return id;
}

void ResponseRouter::deliver(AgentMessage message) {
  {
    std::lock_guard lock(mu_);
    const auto it = slots_.find(message.request_id);
    if (it == slots_.end() || it->second.has_value()) {
      late_++;  // waiter gone, or a duplicate terminal response
      return;
    }
    it->second = std::move(message);
  }
  cv_.notify_all();
}

std::optional<AgentMessage> ResponseRouter::wait(std::uint64_t request_id,
                                                 std::chrono::steady_clock::time_point deadline) {
  std::unique_lock lock(mu_);
  const auto it = slots_.find(request_id);
  if (it == slots_.end()) throw DomainError("waiting on an unknown request id");
  cv_.wait_until(lock, deadline, [&] { return it->second.has_value(); });
  std::optional<AgentMessage> out = std::move(it->second);
  slots_.erase(it);
  return out;
}

std::uint64_t ResponseRouter::late_count() const {
  std::lock_guard lock(mu_);
  return late_;
}

std::uint64_t ResponseRouter::issued_count() const {
  std::lock_guard lock(mu_);
  return next_id_ - 1;
}

// ---------------------------------------------------------------------------
// AgentInstance
// ---------------------------------------------------------------------------

AgentInstance::AgentInstance(std::string id, std::shared_ptr<EncoderBackend> backend,
                             ResponseRouter& router)
    : id_(std::move(id)), modality_(backend->modality()), backend_(std::move(backend)),
      router_(router) {
  worker_ = std::thread([this] { run(); });
}

AgentInstance::~AgentInstance() { kill(); }

int AgentInstance::declared_dim() const { return backend_->declared_dim(); }

void AgentInstance::submit(AgentMessage request) {
  {
    std::lock_guard lock(mu_);
    if (stop_) return;  // killed: drop without response, caller times out
    queue_.push_back(std::move(request));
  }
  cv_.notify_one();
}

void AgentInstance::kill() {
  // Only the caller that flips stop_ joins; later calls are no-ops.
  bool winner = false;
  {
    std::lock_guard lock(mu_);
    if (!stop_) {
      stop_ = true;
      queue_.clear();
      winner = true;
    }
  }
  cv_.notify_all();
  if (winner && worker_.joinable()) worker_.join();
}

bool AgentInstance::alive() const {
  std::lock_guard lock(mu_);
  return !stop_;
}

void AgentInstance::run() {
  for (;;) {
    AgentMessage request;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
      if (stop_) return;
      request = std::move(queue_.front());
      queue_.pop_front();
    }

    AgentMessage response;
    response.request_id = request.request_id;
    response.segment = request.segment;
    response.modality = request.modality;

    if (request.kind == MessageKind::HealthPing) {
      response.kind = MessageKind::HealthAck;
    } else if (request.kind == MessageKind::ExtractRequest) {
      try {
        if (request.modality != modality_)
          throw BackendFailure(FailureCode::BackendError,
                               std::string("agent serves ") + modality_name(modality_));
        EmbeddingSequence seq = backend_->extract(request.segment, request.input_descriptor);
        if (seq.dim() != backend_->declared_dim())
          throw BackendFailure(FailureCode::DimensionMismatch,
                               "backend emitted width " + std::to_string(seq.dim()) +
                                   ", declared " + std::to_string(backend_->declared_dim()));
        response.kind = MessageKind::ExtractResponse;
        response.embedding = std::move(seq);
      } catch (const BackendFailure& e) {
        response.kind = MessageKind::Failure;
        response.failure = e.code;
        response.error = e.what();
      } catch (const std::exception& e) {
        response.kind = MessageKind::Failure;
        response.failure = FailureCode::BackendError;
        response.error = e.what();
      }
    } else {
      response.kind = MessageKind::Failure;
      response.failure = FailureCode::BackendError;
      response.error = "agent cannot serve this message kind";
    }
    response.timestamp = std::chrono::steady_clock::now();
    router_.deliver(std::move(response));
  }
}

// ---------------------------------------------------------------------------
// AgentRegistry
// ---------------------------------------------------------------------------

void AgentRegistry::log_locked(std::string text) {
  events_.push_back(RegistryEvent{std::chrono::steady_clock::now(), std::move(text)});
}

void AgentRegistry::register_agent(std::shared_ptr<AgentInstance> agent) {
  if (agent == nullptr) throw DomainError("cannot register a null agent");
  std::lock_guard lock(mu_);
  for (const auto& e : entries_) {
    if (e.agent->id() == agent->id())
      throw DomainError("agent id already registered: " + agent->id());
  }
  log_locked("register " + agent->id() + " (" + modality_name(agent->modality()) + ")");
  entries_.push_back(Entry{std::move(agent), AgentHealth::Ok, std::chrono::steady_clock::now()});
}

void AgentRegistry::deregister(const std::string& id) {
  std::lock_guard lock(mu_);
  const auto it = std::find_if(entries_.begin(), entries_.end(),
                               [&](const Entry& e) { return e.agent->id() == id; });
  if (it == entries_.end()) {
    log_locked("warning: deregister of unknown agent " + id);
    return;
  }
  log_locked("deregister " + id);
  entries_.erase(it);
}

AgentHealth AgentRegistry::health_check(const std::string& id, std::chrono::milliseconds timeout) {
  std::shared_ptr<AgentInstance> agent;
  {
    std::lock_guard lock(mu_);
    const auto it = std::find_if(entries_.begin(), entries_.end(),
                                 [&](const Entry& e) { return e.agent->id() == id; });
    if (it == entries_.end()) throw DomainError("health_check on unknown agent " + id);
    agent = it->agent;
  }

  bool ok = false;
  if (agent->alive()) {
    const std::uint64_t request_id = router_.open_slot();
    AgentMessage ping;
    ping.request_id = request_id;
    ping.kind = MessageKind::HealthPing;
    ping.timestamp = std::chrono::steady_clock::now();
    agent->submit(ping);
    const auto reply = router_.wait(request_id, std::chrono::steady_clock::now() + timeout);
    ok = reply.has_value() && reply->kind == MessageKind::HealthAck;
  }

  std::lock_guard lock(mu_);
  const auto it = std::find_if(entries_.begin(), entries_.end(),
                               [&](const Entry& e) { return e.agent->id() == id; });
  if (it == entries_.end()) return AgentHealth::Unresponsive;  // deregistered mid-check
  it->health = ok ? AgentHealth::Ok : AgentHealth::Unresponsive;
  if (ok) {
    it->last_seen = std::chrono::steady_clock::now();
  } else {
    log_locked("health_check: " + id + " unresponsive");
  }
  return it->health;
}

std::shared_ptr<AgentInstance> AgentRegistry::active_for(ModalityId modality) {
  std::lock_guard lock(mu_);
  std::shared_ptr<AgentInstance> primary;
  for (const auto& e : entries_) {
    if (e.agent->modality() != modality) continue;
    if (primary == nullptr) primary = e.agent;
    if (e.health == AgentHealth::Ok && e.agent->alive()) {
      if (e.agent != primary)
        log_locked("failover: " + std::string(modality_name(modality)) + " served by " +
                   e.agent->id() + " instead of " + primary->id());
      return e.agent;
    }
  }
  if (primary != nullptr)
    log_locked("no healthy agent for " + std::string(modality_name(modality)));
  return nullptr;
}

std::optional<AgentHealth> AgentRegistry::health_of(const std::string& id) const {
  std::lock_guard lock(mu_);
  for (const auto& e : entries_) {
    if (e.agent->id() == id) return e.health;
  }
  return std::nullopt;
}

std::vector<RegistryEvent> AgentRegistry::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

// ---------------------------------------------------------------------------
// Supervisor
// ---------------------------------------------------------------------------

namespace {

struct ModalityAttempt {
  std::shared_ptr<AgentInstance> agent;
  std::uint64_t request_id = 0;
  std::chrono::steady_clock::time_point deadline;
  bool pending = false;

  // terminal outcome
  std::optional<EmbeddingSequence> embedding;
  FailureCode failure = FailureCode::AgentUnavailable;
  std::string error = "no agent registered";
};

void dispatch(ModalityAttempt& attempt, AgentRegistry& registry, ModalityId modality,
              const SegmentKey& key, const std::string& input_descriptor,
              std::chrono::milliseconds timeout) {
  attempt.agent = registry.active_for(modality);
  attempt.pending = false;
  if (attempt.agent == nullptr) {
    attempt.failure = FailureCode::AgentUnavailable;
    attempt.error = "no agent registered";
    return;
  }
  AgentMessage request;
  request.request_id = registry.router().open_slot();
  request.kind = MessageKind::ExtractRequest;
  request.segment = key;
  request.modality = modality;
  request.input_descriptor = input_descriptor;
  request.timestamp = std::chrono::steady_clock::now();
  attempt.request_id = request.request_id;
  attempt.deadline = request.timestamp + timeout;
  attempt.pending = true;
  attempt.agent->submit(std::move(request));
}

// Blocks until the attempt resolves or its deadline passes.
void collect(ModalityAttempt& attempt, ResponseRouter& router) {
  if (!attempt.pending) return;
  attempt.pending = false;
  auto reply = router.wait(attempt.request_id, attempt.deadline);
  if (!reply.has_value()) {
    attempt.failure = FailureCode::Timeout;
    attempt.error = "no response before deadline";
    return;
  }
  if (reply->kind == MessageKind::ExtractResponse && reply->embedding.has_value()) {
    attempt.embedding = std::move(reply->embedding);
    attempt.failure = FailureCode::None;
    attempt.error.clear();
  } else {
    attempt.failure = reply->failure == FailureCode::None ? FailureCode::BackendError
                                                          : reply->failure;
    attempt.error = reply->error.empty() ? "malformed response" : reply->error;
  }
}

}  // namespace

SupervisorResult supervisor_infer(const SegmentKey& key, const std::string& input_descriptor,
                                  AgentRegistry& registry, const FusionModel& model,
                                  const SupervisorConfig& config) {
  if (config.timeout.count() <= 0) throw DomainError("supervisor timeout must be positive");
  if (config.retries < 0) throw DomainError("supervisor retries must be nonnegative");
  config.speech_categories.validate();

  std::map<ModalityId, ModalityAttempt> attempts;
  for (ModalityId m : kAllModalities) {
    dispatch(attempts[m], registry, m, key, input_descriptor, config.timeout);
  }
  for (ModalityId m : kAllModalities) collect(attempts[m], registry.router());

  // Sequential retries for whatever failed the concurrent round; active_for
  // re-resolves so a backup can take over from a dead primary.
  for (int retry = 0; retry < config.retries; ++retry) {
    for (ModalityId m : kAllModalities) {
      ModalityAttempt& attempt = attempts[m];
      if (attempt.embedding.has_value()) continue;
      dispatch(attempt, registry, m, key, input_descriptor, config.timeout);
      collect(attempt, registry.router());
    }
  }

  SupervisorResult result;

  // Speech gate: AED failure fails open.
  ModalityAttempt& aed = attempts[ModalityId::AED];
  if (aed.embedding.has_value()) {
    try {
      if (aed.embedding->frames().rows() != 1)
        throw DomainError("audio tags must arrive as a single frame");
      const Eigen::VectorXd scores = aed.embedding->frames().row(0).transpose().cast<double>();
      result.tags = AedTags::from_scores(scores, config.speech_top_k);
      result.speech = speech_present(*result.tags, config.speech_top_k, config.speech_categories);
      result.modality_status[ModalityId::AED] = "ok";
    } catch (const DomainError&) {
      result.speech = true;
      result.modality_status[ModalityId::AED] =
          std::string("failed:") + failure_code_name(FailureCode::MalformedOutput);
    }
  } else {
    result.speech = true;
    result.modality_status[ModalityId::AED] =
        std::string("failed:") + failure_code_name(aed.failure);
  }

  std::map<ModalityId, EmbeddingSequence> embeddings;
  for (ModalityId m : kFusionModalities) {
    ModalityAttempt& attempt = attempts[m];
    if (m == ModalityId::TED && !result.speech) {
      embeddings.emplace(m, EmbeddingSequence::zero_frames(m, kUniformDim));
      result.modality_status[m] = "gated";
      continue;
    }
    if (attempt.embedding.has_value()) {
      embeddings.emplace(m, std::move(*attempt.embedding));
      result.modality_status[m] = "ok";
      continue;
    }
    if (config.policy == DegradationPolicy::FailClosed) {
      throw OrchestrationError(std::string("modality ") + modality_name(m) +
                               " failed (" + failure_code_name(attempt.failure) + "): " +
                               attempt.error);
    }
    embeddings.emplace(m, EmbeddingSequence::zero_frames(m, kUniformDim));
    result.modality_status[m] = std::string("failed:") + failure_code_name(attempt.failure);
    result.degraded = true;
  }

  result.prediction = predict_pipeline(model, embeddings, config.pooling);
  return result;
}

}  // namespace mmfuse
