#include "depthkit/annotation.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

#include "depthkit/depthio.hpp"
#include "depthkit/error.hpp"

namespace depthkit {

using nlohmann::json;

std::string_view to_string(Decision v) {
  switch (v) {
  case Decision::FirstCloser: return "first_closer";
  case Decision::SecondCloser: return "second_closer";
  case Decision::Skip: return "skip";
  }
  return "?";
}

std::string_view to_string(AnnotatorRole v) {
  return v == AnnotatorRole::Primary ? "primary" : "verifier";
}

std::string_view to_string(PairStatus v) {
  switch (v) {
  case PairStatus::Queued: return "queued";
  case PairStatus::Claimed: return "claimed";
  case PairStatus::AwaitingVerification: return "awaiting_verification";
  case PairStatus::Finalized: return "finalized";
  case PairStatus::Discarded: return "discarded";
  }
  return "?";
}

std::string_view to_string(DiscardReason v) {
  switch (v) {
  case DiscardReason::None: return "none";
  case DiscardReason::Skipped: return "skipped";
  case DiscardReason::Contested: return "contested";
  }
  return "?";
}

std::string_view to_string(EventType v) {
  switch (v) {
  case EventType::Register: return "register";
  case EventType::Enqueue: return "enqueue";
  case EventType::Claim: return "claim";
  case EventType::Submit: return "submit";
  case EventType::LeaseExpired: return "lease_expired";
  }
  return "?";
}

Decision decision_from_string(std::string_view s) {
  if (s == "first_closer" || s == "1") return Decision::FirstCloser;
  if (s == "second_closer" || s == "2") return Decision::SecondCloser;
  if (s == "skip") return Decision::Skip;
  throw Error(ErrorCode::InvalidArgument, "unknown decision '" + std::string(s) + "'");
}

namespace {

template <typename E, std::size_t N>
E enum_from_string(std::string_view s, const std::array<E, N>& all, const char* what) {
  for (E v : all) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::MalformedHeader, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::array kStatuses{PairStatus::Queued, PairStatus::Claimed,
                               PairStatus::AwaitingVerification, PairStatus::Finalized,
                               PairStatus::Discarded};
constexpr std::array kReasons{DiscardReason::None, DiscardReason::Skipped,
                              DiscardReason::Contested};
constexpr std::array kEvents{EventType::Register, EventType::Enqueue, EventType::Claim,
                             EventType::Submit, EventType::LeaseExpired};
constexpr std::array kRoles{AnnotatorRole::Primary, AnnotatorRole::Verifier};
constexpr std::array kDecisions{Decision::FirstCloser, Decision::SecondCloser, Decision::Skip};

PairLabel label_of(Decision d) {
  return d == Decision::FirstCloser ? PairLabel::FirstCloser : PairLabel::SecondCloser;
}

} // namespace

bool PairState::touched_by(std::string_view annotator) const {
  return std::any_of(records.begin(), records.end(),
                     [&](const AnnotationRecord& r) { return r.annotator_id == annotator; });
}

AnnotatorRole PairState::next_role() const {
  return records.empty() ? AnnotatorRole::Primary : AnnotatorRole::Verifier;
}

json to_json(const Event& e) {
  json j{{"seq", e.seq}, {"t", e.time_ms}, {"type", to_string(e.type)}};
  switch (e.type) {
  case EventType::Register: j["annotator"] = e.annotator; break;
  case EventType::Enqueue: j["pair"] = to_json(*e.pair); break;
  case EventType::Claim:
    j["annotator"] = e.annotator;
    j["pair_id"] = e.pair_id;
    j["expires"] = e.lease_expiry_ms;
    break;
  case EventType::Submit:
    j["annotator"] = e.annotator;
    j["pair_id"] = e.pair_id;
    j["decision"] = to_string(e.decision);
    break;
  case EventType::LeaseExpired: j["pair_id"] = e.pair_id; break;
  }
  return j;
}

Event event_from_json(const json& j) {
  try {
    Event e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.time_ms = j.at("t").get<std::int64_t>();
    e.type = enum_from_string(j.at("type").get<std::string>(), kEvents, "event type");
    switch (e.type) {
    case EventType::Register: e.annotator = j.at("annotator").get<std::string>(); break;
    case EventType::Enqueue: e.pair = pair_from_json(j.at("pair")); break;
    case EventType::Claim:
      e.annotator = j.at("annotator").get<std::string>();
      e.pair_id = j.at("pair_id").get<std::string>();
      e.lease_expiry_ms = j.at("expires").get<std::int64_t>();
      break;
    case EventType::Submit:
      e.annotator = j.at("annotator").get<std::string>();
      e.pair_id = j.at("pair_id").get<std::string>();
      e.decision = enum_from_string(j.at("decision").get<std::string>(), kDecisions, "decision");
      break;
    case EventType::LeaseExpired: e.pair_id = j.at("pair_id").get<std::string>(); break;
    }
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::MalformedHeader, std::string("bad event record: ") + ex.what());
  }
}

// ------------------------------------------------------------ state

bool AnnotationState::has_annotator(std::string_view id) const {
  return std::find(annotators_.begin(), annotators_.end(), id) != annotators_.end();
}

const PairState* AnnotationState::find(std::string_view pair_id) const {
  auto it = pairs_.find(pair_id);
  return it == pairs_.end() ? nullptr : &it->second;
}

const PairState* AnnotationState::held_by(std::string_view annotator) const {
  for (const auto& [id, ps] : pairs_) {
    if (ps.status == PairStatus::Claimed && ps.holder == annotator) return &ps;
  }
  return nullptr;
}

void AnnotationState::validate(const Event& e) const {
  if (e.seq != last_seq_ + 1) {
    throw Error(ErrorCode::InvalidArgument, "event seq " + std::to_string(e.seq) +
                                                " does not follow " + std::to_string(last_seq_));
  }
  auto need_annotator = [&] {
    if (!has_annotator(e.annotator)) {
      throw Error(ErrorCode::UnknownAnnotator, "annotator '" + e.annotator + "' is not registered");
    }
  };
  auto need_pair = [&]() -> const PairState& {
    const PairState* ps = find(e.pair_id);
    if (!ps) throw Error(ErrorCode::UnknownPair, "no queued pair '" + e.pair_id + "'");
    return *ps;
  };
  switch (e.type) {
  case EventType::Register:
    if (e.annotator.empty()) throw Error(ErrorCode::InvalidArgument, "empty annotator id");
    break;
  case EventType::Enqueue:
    if (!e.pair) throw Error(ErrorCode::InvalidArgument, "enqueue without a pair");
    e.pair->validate();
    if (e.pair->label != PairLabel::Unlabeled) {
      throw Error(ErrorCode::InvalidArgument, "pair '" + e.pair->pair_id + "' is already labeled");
    }
    if (find(e.pair->pair_id)) {
      throw Error(ErrorCode::InvalidArgument, "pair '" + e.pair->pair_id + "' is already queued");
    }
    break;
  case EventType::Claim: {
    need_annotator();
    const PairState& ps = need_pair();
    if (ps.status != PairStatus::Queued && ps.status != PairStatus::AwaitingVerification) {
      throw Error(ErrorCode::InvalidArgument, "pair '" + e.pair_id + "' is not claimable");
    }
    if (ps.touched_by(e.annotator)) {
      throw Error(ErrorCode::DuplicateSubmission,
                  "annotator '" + e.annotator + "' already annotated '" + e.pair_id + "'");
    }
    if (held_by(e.annotator)) {
      throw Error(ErrorCode::InvalidArgument, "annotator '" + e.annotator + "' already holds a lease");
    }
    break;
  }
  case EventType::Submit: {
    need_annotator();
    const PairState& ps = need_pair();
    if (ps.touched_by(e.annotator)) {
      throw Error(ErrorCode::DuplicateSubmission,
                  "annotator '" + e.annotator + "' already annotated '" + e.pair_id + "'");
    }
    if (ps.status != PairStatus::Claimed || ps.holder != e.annotator) {
      throw Error(ErrorCode::LeaseExpired,
                  "annotator '" + e.annotator + "' holds no lease on '" + e.pair_id + "'");
    }
    break;
  }
  case EventType::LeaseExpired: {
    const PairState& ps = need_pair();
    if (ps.status != PairStatus::Claimed) {
      throw Error(ErrorCode::InvalidArgument, "pair '" + e.pair_id + "' has no lease to expire");
    }
    break;
  }
  }
}

void AnnotationState::apply(const Event& e) {
  validate(e);
  last_seq_ = e.seq;
  switch (e.type) {
  case EventType::Register:
    if (!has_annotator(e.annotator)) annotators_.push_back(e.annotator);
    break;
  case EventType::Enqueue: {
    PairState ps;
    ps.pair = *e.pair;
    order_.push_back(ps.pair.pair_id);
    pairs_.emplace(ps.pair.pair_id, std::move(ps));
    break;
  }
  case EventType::Claim: {
    PairState& ps = pairs_.find(e.pair_id)->second;
    ps.prior = ps.status;
    ps.status = PairStatus::Claimed;
    ps.holder = e.annotator;
    ps.lease_expiry_ms = e.lease_expiry_ms;
    break;
  }
  case EventType::LeaseExpired: {
    PairState& ps = pairs_.find(e.pair_id)->second;
    ps.status = ps.prior;
    ps.holder.clear();
    ps.lease_expiry_ms = 0;
    break;
  }
  case EventType::Submit: {
    PairState& ps = pairs_.find(e.pair_id)->second;
    const AnnotatorRole role = ps.next_role();
    ps.records.push_back({e.pair_id, e.annotator, e.decision, role, e.time_ms});
    ps.holder.clear();
    ps.lease_expiry_ms = 0;
    if (e.decision == Decision::Skip) {
      ps.status = PairStatus::Discarded;
      ps.reason = DiscardReason::Skipped;
    } else if (role == AnnotatorRole::Verifier && e.decision != ps.records.front().decision) {
      ps.status = PairStatus::Discarded;
      ps.reason = DiscardReason::Contested;
    } else if (ps.records.size() == 3) {
      ps.status = PairStatus::Finalized;
      ps.label = label_of(e.decision);
    } else {
      ps.status = PairStatus::AwaitingVerification;
    }
    break;
  }
  }
}

json AnnotationState::to_json() const {
  json pairs = json::array();
  for (const auto& id : order_) {
    const PairState& ps = pairs_.at(id);
    json records = json::array();
    for (const auto& r : ps.records) {
      records.push_back({{"annotator", r.annotator_id},
                         {"decision", depthkit::to_string(r.decision)},
                         {"role", depthkit::to_string(r.role)},
                         {"t", r.timestamp_ms}});
    }
    pairs.push_back({{"pair", depthkit::to_json(ps.pair)},
                     {"status", depthkit::to_string(ps.status)},
                     {"holder", ps.holder},
                     {"lease_expiry", ps.lease_expiry_ms},
                     {"prior", depthkit::to_string(ps.prior)},
                     {"label", depthkit::to_string(ps.label)},
                     {"reason", depthkit::to_string(ps.reason)},
                     {"records", std::move(records)}});
  }
  return json{{"seq", last_seq_}, {"annotators", annotators_}, {"pairs", std::move(pairs)}};
}

AnnotationState AnnotationState::from_json(const json& j) {
  try {
    AnnotationState s;
    s.last_seq_ = j.at("seq").get<std::uint64_t>();
    s.annotators_ = j.at("annotators").get<std::vector<std::string>>();
    for (const auto& pj : j.at("pairs")) {
      PairState ps;
      ps.pair = pair_from_json(pj.at("pair"));
      ps.status = enum_from_string(pj.at("status").get<std::string>(), kStatuses, "status");
      ps.holder = pj.at("holder").get<std::string>();
      ps.lease_expiry_ms = pj.at("lease_expiry").get<std::int64_t>();
      ps.prior = enum_from_string(pj.at("prior").get<std::string>(), kStatuses, "status");
      ps.label = pair_label_from_string(pj.at("label").get<std::string>());
      ps.reason = enum_from_string(pj.at("reason").get<std::string>(), kReasons, "reason");
      for (const auto& rj : pj.at("records")) {
        ps.records.push_back(
            {ps.pair.pair_id, rj.at("annotator").get<std::string>(),
             enum_from_string(rj.at("decision").get<std::string>(), kDecisions, "decision"),
             enum_from_string(rj.at("role").get<std::string>(), kRoles, "role"),
             rj.at("t").get<std::int64_t>()});
      }
      s.order_.push_back(ps.pair.pair_id);
      if (!s.pairs_.emplace(ps.pair.pair_id, std::move(ps)).second) {
        throw Error(ErrorCode::MalformedHeader, "duplicate pair in snapshot");
      }
    }
    return s;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::MalformedHeader, std::string("bad snapshot: ") + ex.what());
  }
}

AnnotationState replay(std::span<const Event> events) {
  AnnotationState s;
  for (const auto& e : events) s.apply(e);
  return s;
}

std::vector<Event> load_event_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open log '" + path.string() + "'");
  std::vector<Event> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(event_from_json(json::parse(line)));
    } catch (const json::parse_error& ex) {
      throw Error(ErrorCode::MalformedHeader,
                  path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    } catch (const Error& ex) {
      throw Error(ex.code(), path.string() + ":" + std::to_string(line_no) + ": " + ex.detail());
    }
  }
  return out;
}

// ------------------------------------------------------------ progress

std::size_t Progress::total(PairStatus s) const {
  std::size_t n = 0;
  for (auto c : counts[static_cast<std::size_t>(s)]) n += c;
  return n;
}

Progress compute_progress(const AnnotationState& state) {
  Progress p;
  p.seq = state.last_seq();
  for (const auto& [id, ps] : state.pairs()) {
    ++p.counts[static_cast<std::size_t>(ps.status)][static_cast<std::size_t>(ps.pair.scenario)];
  }
  return p;
}

json to_json(const Progress& p) {
  json by_status = json::object();
  json by_scenario = json::object();
  for (PairStatus st : kStatuses) by_status[std::string(to_string(st))] = p.total(st);
  for (Scenario sc : kAllScenarios) {
    json row = json::object();
    for (PairStatus st : kStatuses) row[std::string(to_string(st))] = p.count(st, sc);
    by_scenario[std::string(to_string(sc))] = std::move(row);
  }
  return json{{"seq", p.seq}, {"totals", std::move(by_status)}, {"per_scenario", std::move(by_scenario)}};
}

// ------------------------------------------------------------ service

AnnotationService::AnnotationService(ServiceOptions opts) : opts_(std::move(opts)) {
  if (opts_.lease_ms <= 0) throw Error(ErrorCode::ConfigError, "lease duration must be positive");
  if (opts_.log_path && std::filesystem::exists(*opts_.log_path)) {
    events_ = load_event_log(*opts_.log_path);
    state_ = replay(events_);
  }
  open_log();
  progress_ = std::make_shared<const Progress>(compute_progress(state_));
}

AnnotationService::AnnotationService(const std::filesystem::path& snapshot, ServiceOptions opts)
    : opts_(std::move(opts)) {
  if (opts_.lease_ms <= 0) throw Error(ErrorCode::ConfigError, "lease duration must be positive");
  const std::string text = [&] {
    auto bytes = read_file(snapshot);
    return std::string(bytes.begin(), bytes.end());
  }();
  try {
    state_ = AnnotationState::from_json(json::parse(text));
  } catch (const json::parse_error& ex) {
    throw Error(ErrorCode::MalformedHeader, snapshot.string() + ": " + ex.what());
  }
  if (opts_.log_path && std::filesystem::exists(*opts_.log_path)) {
    events_ = load_event_log(*opts_.log_path);
    for (const auto& e : events_) {
      if (e.seq > state_.last_seq()) state_.apply(e);
    }
  }
  open_log();
  progress_ = std::make_shared<const Progress>(compute_progress(state_));
}

void AnnotationService::open_log() {
  if (!opts_.log_path) return;
  if (opts_.log_path->has_parent_path()) {
    std::filesystem::create_directories(opts_.log_path->parent_path());
  }
  log_.open(*opts_.log_path, std::ios::app);
  if (!log_) throw Error(ErrorCode::IoFailure, "cannot open log '" + opts_.log_path->string() + "'");
}

std::int64_t AnnotationService::now() const {
  if (opts_.clock) return opts_.clock();
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void AnnotationService::commit(Event e) {
  e.seq = state_.last_seq() + 1;
  state_.validate(e);
  if (log_.is_open()) {
    log_ << to_json(e).dump() << '\n';
    log_.flush();
    if (!log_) throw Error(ErrorCode::IoFailure, "failed to append to the annotation log");
  }
  state_.apply(e);
  events_.push_back(std::move(e));
  std::atomic_store(&progress_, std::make_shared<const Progress>(compute_progress(state_)));
}

std::size_t AnnotationService::expire_locked(std::int64_t t) {
  std::vector<std::string> expired;
  for (const auto& id : state_.order()) {
    const PairState& ps = *state_.find(id);
    if (ps.status == PairStatus::Claimed && ps.lease_expiry_ms <= t) expired.push_back(id);
  }
  for (const auto& id : expired) {
    Event e;
    e.time_ms = t;
    e.type = EventType::LeaseExpired;
    e.pair_id = id;
    commit(std::move(e));
  }
  return expired.size();
}

std::size_t AnnotationService::expire_leases() {
  std::lock_guard lock(mu_);
  return expire_locked(now());
}

void AnnotationService::register_annotator(const std::string& annotator) {
  std::lock_guard lock(mu_);
  if (state_.has_annotator(annotator)) return;
  Event e;
  e.time_ms = now();
  e.type = EventType::Register;
  e.annotator = annotator;
  commit(std::move(e));
}

void AnnotationService::enqueue(std::span<const PointPair> pairs) {
  std::lock_guard lock(mu_);
  const std::int64_t t = now();
  for (const auto& p : pairs) {
    Event e;
    e.time_ms = t;
    e.type = EventType::Enqueue;
    e.pair = p;
    commit(std::move(e));
  }
}

std::optional<Claim> AnnotationService::claim_next(const std::string& annotator) {
  std::lock_guard lock(mu_);
  if (!state_.has_annotator(annotator)) {
    throw Error(ErrorCode::UnknownAnnotator, "annotator '" + annotator + "' is not registered");
  }
  const std::int64_t t = now();
  expire_locked(t);
  if (const PairState* held = state_.held_by(annotator)) {
    return Claim{held->pair, held->next_role(), held->lease_expiry_ms};
  }
  const PairState* pick = nullptr;
  for (PairStatus wanted : {PairStatus::AwaitingVerification, PairStatus::Queued}) {
    for (const auto& id : state_.order()) {
      const PairState& ps = *state_.find(id);
      if (ps.status == wanted && !ps.touched_by(annotator)) {
        pick = &ps;
        break;
      }
    }
    if (pick) break;
  }
  if (!pick) return std::nullopt;
  Event e;
  e.time_ms = t;
  e.type = EventType::Claim;
  e.annotator = annotator;
  e.pair_id = pick->pair.pair_id;
  e.lease_expiry_ms = t + opts_.lease_ms;
  commit(e);
  const PairState& ps = *state_.find(e.pair_id);
  return Claim{ps.pair, ps.next_role(), ps.lease_expiry_ms};
}

PairState AnnotationService::submit(const std::string& annotator, const std::string& pair_id,
                                    Decision d) {
  std::lock_guard lock(mu_);
  if (!state_.has_annotator(annotator)) {
    throw Error(ErrorCode::UnknownAnnotator, "annotator '" + annotator + "' is not registered");
  }
  const PairState* ps = state_.find(pair_id);
  if (!ps) throw Error(ErrorCode::UnknownPair, "no queued pair '" + pair_id + "'");
  if (ps->touched_by(annotator)) {
    throw Error(ErrorCode::DuplicateSubmission,
                "annotator '" + annotator + "' already annotated '" + pair_id + "'");
  }
  const std::int64_t t = now();
  expire_locked(t);
  Event e;
  e.time_ms = t;
  e.type = EventType::Submit;
  e.annotator = annotator;
  e.pair_id = pair_id;
  e.decision = d;
  commit(std::move(e));
  return *state_.find(pair_id);
}

std::shared_ptr<const Progress> AnnotationService::progress() const {
  return std::atomic_load(&progress_);
}

AnnotationState AnnotationService::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

std::vector<Event> AnnotationService::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::optional<PointPair> AnnotationService::find_pair(std::string_view pair_id) const {
  std::lock_guard lock(mu_);
  const PairState* ps = state_.find(pair_id);
  if (!ps) return std::nullopt;
  return ps->pair;
}

void AnnotationService::save_snapshot(const std::filesystem::path& path) const {
  std::string text;
  {
    std::lock_guard lock(mu_);
    text = state_.to_json().dump();
  }
  write_text_file(path, text + "\n");
}

std::size_t apply_annotations(BenchmarkManifest& benchmark, const AnnotationState& state) {
  std::size_t changed = 0;
  for (auto& pair : benchmark) {
    const PairState* ps = state.find(pair.pair_id);
    if (!ps) continue;
    if (ps->status == PairStatus::Finalized) {
      pair.label = ps->label;
    } else if (ps->status == PairStatus::Discarded) {
      pair.label = PairLabel::Skipped;
    } else {
      continue;
    }
    pair.label_source = LabelSource::HumanConsensus;
    ++changed;
  }
  return changed;
}

} // namespace depthkit
