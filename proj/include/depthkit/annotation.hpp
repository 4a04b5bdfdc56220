#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthkit/benchmark.hpp"

namespace depthkit {

enum class Decision { FirstCloser, SecondCloser, Skip };
enum class AnnotatorRole { Primary, Verifier };
enum class PairStatus { Queued, Claimed, AwaitingVerification, Finalized, Discarded };
enum class DiscardReason { None, Skipped, Contested };

inline constexpr std::size_t kPairStatusCount = 5;

std::string_view to_string(Decision v);
std::string_view to_string(AnnotatorRole v);
std::string_view to_string(PairStatus v);
std::string_view to_string(DiscardReason v);
Decision decision_from_string(std::string_view s);

struct AnnotationRecord {
  std::string pair_id;
  std::string annotator_id;
  Decision decision = Decision::Skip;
  AnnotatorRole role = AnnotatorRole::Primary;
  std::int64_t timestamp_ms = 0;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct PairState {
  PointPair pair;
  PairStatus status = PairStatus::Queued;
  // while Claimed
  std::string holder;
  std::int64_t lease_expiry_ms = 0;
  PairStatus prior = PairStatus::Queued;
  // terminal
  PairLabel label = PairLabel::Unlabeled;
  DiscardReason reason = DiscardReason::None;
  std::vector<AnnotationRecord> records;

  bool touched_by(std::string_view annotator) const;
  /// Role the next claimant would take.
  AnnotatorRole next_role() const;

  friend bool operator==(const PairState&, const PairState&) = default;
};

enum class EventType { Register, Enqueue, Claim, Submit, LeaseExpired };
std::string_view to_string(EventType v);

/// One line of the append-only log.
struct Event {
  std::uint64_t seq = 0;
  std::int64_t time_ms = 0;
  EventType type = EventType::Register;
  std::string annotator;
  std::string pair_id;
  Decision decision = Decision::Skip;    // Submit
  std::int64_t lease_expiry_ms = 0;      // Claim
  std::optional<PointPair> pair;         // Enqueue

  friend bool operator==(const Event&, const Event&) = default;
};

nlohmann::json to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);

/// Service state as a pure fold over the event log.
class AnnotationState {
public:
  /// Throws if `e` is not a legal next event; never mutates.
  void validate(const Event& e) const;
  /// Validates, then folds `e` in.
  void apply(const Event& e);

  std::uint64_t last_seq() const noexcept { return last_seq_; }
  bool has_annotator(std::string_view id) const;
  const PairState* find(std::string_view pair_id) const;
  /// Pairs in enqueue order.
  const std::vector<std::string>& order() const noexcept { return order_; }
  const std::map<std::string, PairState, std::less<>>& pairs() const noexcept { return pairs_; }
  const std::vector<std::string>& annotators() const noexcept { return annotators_; }
  /// The pair `annotator` currently holds a lease on, if any.
  const PairState* held_by(std::string_view annotator) const;

  nlohmann::json to_json() const;
  static AnnotationState from_json(const nlohmann::json& j);

  friend bool operator==(const AnnotationState&, const AnnotationState&) = default;

private:
  std::uint64_t last_seq_ = 0;
  std::vector<std::string> annotators_;
  std::vector<std::string> order_;
  std::map<std::string, PairState, std::less<>> pairs_;
};

AnnotationState replay(std::span<const Event> events);
std::vector<Event> load_event_log(const std::filesystem::path& path);

struct Progress {
  std::uint64_t seq = 0;
  std::array<std::array<std::size_t, kScenarioCount>, kPairStatusCount> counts{};

  std::size_t total(PairStatus s) const;
  std::size_t count(PairStatus s, Scenario sc) const {
    return counts[static_cast<std::size_t>(s)][static_cast<std::size_t>(sc)];
  }
  friend bool operator==(const Progress&, const Progress&) = default;
};

Progress compute_progress(const AnnotationState& state);
nlohmann::json to_json(const Progress& p);

struct ServiceOptions {
  std::int64_t lease_ms = 10 * 60 * 1000;
  /// Milliseconds; defaults to the system clock.
  std::function<std::int64_t()> clock;
  /// Append-only JSONL log. Existing events are replayed on open.
  std::optional<std::filesystem::path> log_path;
};

struct Claim {
  PointPair pair;
  AnnotatorRole role = AnnotatorRole::Primary;
  std::int64_t lease_expiry_ms = 0;
};

/// Thread-safe front end. Every transition goes through one mutex and one
/// log append; progress() reads an immutable snapshot without locking.
class AnnotationService {
public:
  explicit AnnotationService(ServiceOptions opts = {});
  /// Restores from a snapshot file, then replays log events newer than it.
  AnnotationService(const std::filesystem::path& snapshot, ServiceOptions opts);

  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  void register_annotator(const std::string& annotator);
  /// Queues pairs for annotation. Labeled or duplicate pairs are rejected.
  void enqueue(std::span<const PointPair> pairs);

  /// Verification work first, then fresh pairs, both in enqueue order.
  /// Returns the annotator's existing lease if one is live.
  std::optional<Claim> claim_next(const std::string& annotator);
  PairState submit(const std::string& annotator, const std::string& pair_id, Decision d);
  /// Returns expired leases to their prior status. Returns how many.
  std::size_t expire_leases();

  std::shared_ptr<const Progress> progress() const;
  AnnotationState state() const;
  std::vector<Event> events() const;
  std::optional<PointPair> find_pair(std::string_view pair_id) const;

  void save_snapshot(const std::filesystem::path& path) const;

private:
  std::int64_t now() const;
  void commit(Event e);
  std::size_t expire_locked(std::int64_t now);
  void open_log();

  ServiceOptions opts_;
  mutable std::mutex mu_;
  AnnotationState state_;
  std::vector<Event> events_;
  std::ofstream log_;
  std::shared_ptr<const Progress> progress_;
};

/// Writes human outcomes back: Finalized pairs take their label, Discarded
/// pairs become Skipped; both with label_source HumanConsensus.
/// Returns the number of pairs changed.
std::size_t apply_annotations(BenchmarkManifest& benchmark, const AnnotationState& state);

} // namespace depthkit
