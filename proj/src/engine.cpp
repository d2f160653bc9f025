#include "mathink/engine.hpp"

#include <algorithm>
#include <chrono>
#include <future>

namespace mathink::engine {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void reanalyze(SessionState& s, const render::RenderOptions& options) {
  s.strokes.clear();
  for (const auto& stroke : s.ink.strokes()) {
    const auto& rec = s.recognition.at(stroke.id);
    structure::RecognizedStroke r{stroke.id, rec.label, ink::bbox_of(stroke), rec.classification.confidence};
    if (auto it = s.overrides.find(stroke.id); it != s.overrides.end()) {
      r.label = it->second;
      r.confidence = 1.0;
    }
    s.strokes.push_back(std::move(r));
  }
  const auto& base = s.model->knowledge;
  if (s.overlay.empty())
    s.analysis = structure::analyze(s.strokes, base);
  else
    s.analysis = structure::analyze(s.strokes, structure::apply_overlay(base, s.overlay));
  s.latex = render::to_latex(s.analysis.tree, options);
}

}  // namespace

StrokeRecognition recognize_stroke(const nefclass::FuzzyModel& model, const ink::Stroke& stroke) {
  const auto start = std::chrono::steady_clock::now();
  StrokeRecognition r;
  r.x = features::extract_features(stroke, model.feature_params);
  r.classification = nefclass::classify(model, r.x);
  r.label = nefclass::label_of(model, r.classification);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

bool same_result(const SessionState& a, const SessionState& b) {
  return a.analysis.symbols == b.analysis.symbols && a.analysis.tree == b.analysis.tree &&
         a.analysis.diagnostics == b.analysis.diagnostics && a.latex == b.latex;
}

SessionState initial_state(SnapshotPtr model, const render::RenderOptions& options) {
  SessionState s;
  s.model = std::move(model);
  reanalyze(s, options);
  return s;
}

SessionState handle(const Event& event, const SessionState& state, const SnapshotPtr& model,
                    const render::RenderOptions& options) {
  if (!model) throw DataError("no model snapshot");
  SessionState next = state;
  if (next.model != model) {
    next.model = model;
    next.recognition.clear();
    for (const auto& stroke : next.ink.strokes()) next.recognition[stroke.id] = recognize_stroke(model->model, stroke);
  }
  std::visit(overloaded{
                 [&](const StrokeAdded& e) {
                   next.ink.add(e.stroke);
                   next.recognition[e.stroke.id] = recognize_stroke(model->model, e.stroke);
                 },
                 [&](const StrokeDeleted& e) {
                   next.ink.remove(e.stroke_id);
                   next.recognition.erase(e.stroke_id);
                   next.overrides.erase(e.stroke_id);
                 },
                 [&](const SymbolCorrected& e) {
                   if (!next.ink.find(e.stroke_id)) throw DataError("unknown stroke '" + e.stroke_id + "'");
                   if (model->model.class_index(e.label) < 0) throw DataError("unknown label '" + e.label + "'");
                   next.overrides[e.stroke_id] = e.label;
                   next.ink.record_correction(e.stroke_id, e.label);
                 },
                 [&](const StructureCorrected& e) {
                   structure::KnowledgeOverlay overlay = next.overlay;
                   auto it = std::find_if(overlay.rules.begin(), overlay.rules.end(),
                                          [&](const auto& r) { return r.id == e.rule.id; });
                   if (it != overlay.rules.end())
                     *it = e.rule;
                   else
                     overlay.rules.push_back(e.rule);
                   structure::apply_overlay(model->knowledge, overlay).validate();
                   next.overlay = std::move(overlay);
                   next.ink.record_correction("rule:" + e.rule.id, e.rule.result);
                 },
                 [&](const ModelUpdated&) {},
             },
             event);
  reanalyze(next, options);
  next.revision = state.revision + 1;
  return next;
}

// ------------------------------------------------------------------ Engine

Engine::Engine(ModelSnapshot initial, EngineConfig config) : config_(std::move(config)) {
  initial.model.validate();
  initial.knowledge.validate();
  std::atomic_store(&model_, SnapshotPtr(std::make_shared<const ModelSnapshot>(std::move(initial))));
  if (config_.store_dir) {
    store_.emplace(*config_.store_dir);
    const auto m = model();
    for (const auto& s : store_->load_corrections().samples) {
      const int c = m->model.class_index(s.label);
      if (c >= 0 && s.x.size() == m->model.inputs()) reservoir_.push_back({s.x, c});
    }
  }
  worker_ = std::thread([this] { worker_loop(); });
}

Engine::~Engine() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

SnapshotPtr Engine::model() const { return std::atomic_load(&model_); }

std::string Engine::create_session() {
  std::unique_lock lock(sessions_mutex_);
  const std::string id = "s" + std::to_string(next_session_++);
  auto session = std::make_shared<Session>();
  std::atomic_store(&session->published, std::shared_ptr<const SessionState>(
                                             std::make_shared<const SessionState>(initial_state(model(), config_.render))));
  sessions_[id] = std::move(session);
  return id;
}

void Engine::close_session(const std::string& id) {
  std::unique_lock lock(sessions_mutex_);
  if (!sessions_.erase(id)) throw DataError("unknown session '" + id + "'");
}

bool Engine::has_session(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.count(id) > 0;
}

std::shared_ptr<Engine::Session> Engine::find(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw DataError("unknown session '" + id + "'");
  return it->second;
}

std::shared_ptr<const SessionState> Engine::snapshot(const std::string& session) const {
  return std::atomic_load(&find(session)->published);
}

std::shared_ptr<const SessionState> Engine::apply(const std::string& id, const Event& event) {
  auto session = find(id);
  std::shared_ptr<const SessionState> next;
  {
    std::lock_guard lock(session->mutex);
    const auto current = std::atomic_load(&session->published);
    next = std::make_shared<const SessionState>(handle(event, *current, model(), config_.render));
    std::atomic_store(&session->published, next);
  }

  if (const auto* c = std::get_if<SymbolCorrected>(&event)) {
    const auto& m = next->model->model;
    const nefclass::LabeledSample sample{next->recognition.at(c->stroke_id).x, m.class_index(c->label)};
    if (store_) store_->record_correction({sample.x, c->label}, m.labels, {}, next->model->knowledge);
    {
      std::lock_guard lock(reservoir_mutex_);
      reservoir_.push_back(sample);
      while (reservoir_.size() > store::kReservoirCapacity) reservoir_.erase(reservoir_.begin());
    }
    if (config_.finetune_on_correction) enqueue([this, sample] { finetune_correction(sample); });
  } else if (const auto* s = std::get_if<StructureCorrected>(&event)) {
    structure::KnowledgeOverlay update;
    update.rules.push_back(s->rule);
    if (store_) {
      auto file = store_->load_knowledge(next->model->knowledge);
      auto it = std::find_if(file.overlay.rules.begin(), file.overlay.rules.end(),
                             [&](const auto& r) { return r.id == s->rule.id; });
      if (it != file.overlay.rules.end())
        *it = s->rule;
      else
        file.overlay.rules.push_back(s->rule);
      store_->save_knowledge(file);
    }
    enqueue([this, update] { publish_model(model()->model, &update); });
  }
  return next;
}

void Engine::publish_model(nefclass::FuzzyModel m, const structure::KnowledgeOverlay* overlay_update) {
  SnapshotPtr snapshot;
  {
    std::lock_guard lock(model_write_);
    const auto current = model();
    auto next = std::make_shared<ModelSnapshot>();
    next->model = std::move(m);
    next->knowledge = overlay_update ? structure::apply_overlay(current->knowledge, *overlay_update) : current->knowledge;
    next->version = current->version + 1;
    snapshot = next;
    std::atomic_store(&model_, snapshot);
    if (store_ && !overlay_update) {
      auto file = store_->has_model() ? store_->load_model() : store::ModelFile{};
      file.model = snapshot->model;
      if (file.provenance.trainer.empty()) file.provenance.trainer = "cg";
      store_->save_model(file);
    }
  }
  std::vector<std::shared_ptr<Session>> sessions;
  {
    std::shared_lock lock(sessions_mutex_);
    for (const auto& [id, s] : sessions_) sessions.push_back(s);
  }
  for (const auto& session : sessions) {
    std::lock_guard lock(session->mutex);
    const auto current = std::atomic_load(&session->published);
    auto next = std::make_shared<const SessionState>(handle(ModelUpdated{}, *current, model(), config_.render));
    std::atomic_store(&session->published, std::shared_ptr<const SessionState>(next));
  }
}

TrainReport Engine::finetune_correction(const nefclass::LabeledSample& sample) {
  const auto current = model();
  nefclass::FuzzyModel m = current->model;
  // A rule built on the corrected sample's best antecedent wins for that
  // sample under the min t-norm; CG then adapts the memberships.
  const auto antecedent = nefclass::best_antecedent(m.partition, sample.x.values);
  std::erase_if(m.rules, [&](const nefclass::FuzzyRule& r) { return r.antecedent == antecedent; });
  m.rules.push_back({antecedent, sample.label});

  std::vector<nefclass::LabeledSample> reservoir;
  {
    std::lock_guard lock(reservoir_mutex_);
    reservoir = reservoir_;
  }
  if (!reservoir.empty() && reservoir.back().label == sample.label && reservoir.back().x == sample.x) reservoir.pop_back();
  const auto batch = train::correction_batch(sample, reservoir, config_.correction_batch_extra, config_.cg.rng_seed);
  auto tuned = train::run_cg(config_.cg, m, batch);

  TrainReport report{"cg", true, {}, tuned.loss_before, tuned.loss_after, tuned.iterations, 0};
  const auto check = nefclass::classify(tuned.model, sample.x);
  if (check.rejected || check.best != sample.label) {
    report.notice = "fine-tuned memberships lost the corrected sample; kept the rule update only";
    report.metric_after = report.metric_before;
    publish_model(std::move(m), nullptr);
  } else {
    publish_model(std::move(tuned.model), nullptr);
  }
  report.model_version = model()->version;
  return report;
}

TrainReport Engine::train(const std::string& kind) {
  if (kind != "ga" && kind != "cg") throw DataError("unknown trainer '" + kind + "'");
  auto task = std::make_shared<std::packaged_task<TrainReport()>>([this, kind] {
    TrainReport report;
    report.kind = kind;
    const auto current = model();
    if (kind == "ga") {
      if (config_.training_set.empty()) {
        report.notice = "no training set configured";
        report.model_version = current->version;
        return report;
      }
      auto result = train::run_ga(config_.ga, config_.training_set, current->model);
      report.performed = true;
      report.metric_before = result.history.front();
      report.metric_after = result.fitness;
      report.iterations = static_cast<int>(result.history.size()) - 1;
      publish_model(std::move(result.model), nullptr);
    } else {
      std::vector<nefclass::LabeledSample> reservoir;
      {
        std::lock_guard lock(reservoir_mutex_);
        reservoir = reservoir_;
      }
      if (reservoir.empty()) {
        report.notice = "correction reservoir is empty; nothing to fine-tune";
        report.model_version = current->version;
        return report;
      }
      const auto latest = reservoir.back();
      reservoir.pop_back();
      const auto batch = train::correction_batch(latest, reservoir, config_.correction_batch_extra, config_.cg.rng_seed);
      auto result = train::run_cg(config_.cg, current->model, batch);
      report.performed = true;
      report.metric_before = result.loss_before;
      report.metric_after = result.loss_after;
      report.iterations = result.iterations;
      publish_model(std::move(result.model), nullptr);
    }
    report.model_version = model()->version;
    return report;
  });
  auto future = task->get_future();
  enqueue([task] { (*task)(); });
  return future.get();
}

void Engine::enqueue(std::function<void()> job) {
  {
    std::lock_guard lock(queue_mutex_);
    queue_.push_back(std::move(job));
  }
  queue_cv_.notify_one();
}

void Engine::wait_idle() {
  std::unique_lock lock(queue_mutex_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && !busy_; });
}

void Engine::worker_loop() {
  while (true) {
    std::function<void()> job;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
      busy_ = true;
    }
    try {
      job();
    } catch (...) {
      // A failed background job leaves the published model unchanged.
    }
    {
      std::lock_guard lock(queue_mutex_);
      busy_ = false;
    }
    idle_cv_.notify_all();
  }
}

// ----------------------------------------------------------------- protocol

json result_message(const std::string& session, const SessionState& state) {
  json symbols = json::array();
  for (const auto& s : state.analysis.symbols)
    symbols.push_back({{"id", s.id},
                       {"label", s.label},
                       {"confidence", s.confidence},
                       {"strokes", s.strokes},
                       {"bbox", {s.bbox.min_x, s.bbox.min_y, s.bbox.max_x, s.bbox.max_y}}});
  json diagnostics = json::array();
  for (const auto& d : state.analysis.diagnostics)
    diagnostics.push_back({{"stage", d.stage}, {"message", d.message}, {"subjects", d.subjects}});
  return {{"v", kProtocolVersion},  {"session", session},          {"revision", state.revision},
          {"symbols", symbols},     {"tree", expr::to_json(state.analysis.tree)}, {"latex", state.latex},
          {"diagnostics", diagnostics}};
}

namespace {

struct ProtocolError {
  std::string code;
  std::string message;
};

const json& require(const json& request, const char* key) {
  auto it = request.find(key);
  if (it == request.end()) throw ProtocolError{"bad_request", std::string("missing field '") + key + "'"};
  return *it;
}

std::string require_string(const json& request, const char* key) {
  const auto& v = require(request, key);
  if (!v.is_string()) throw ProtocolError{"bad_request", std::string("field '") + key + "' must be a string"};
  return v.get<std::string>();
}

json error_message(const json& request, const std::string& code, const std::string& message) {
  json out{{"v", kProtocolVersion}, {"error", {{"code", code}, {"message", message}}}};
  if (request.is_object()) {
    if (auto it = request.find("op"); it != request.end() && it->is_string()) out["op"] = *it;
    if (auto it = request.find("session"); it != request.end() && it->is_string()) out["session"] = *it;
  }
  return out;
}

ink::Stroke parse_stroke(const json& stroke) {
  const json doc{{"version", 1}, {"strokes", json::array({stroke})}};
  auto session = ink::parse_ink(doc.dump());
  return session.strokes().front();
}

}  // namespace

json Service::handle(const json& request) {
  try {
    if (!request.is_object()) throw ProtocolError{"bad_request", "message must be a JSON object"};
    if (auto it = request.find("v"); it != request.end() && *it != kProtocolVersion)
      throw ProtocolError{"unsupported_version", "protocol version must be 1"};
    const std::string op = require_string(request, "op");

    if (op == "create_session") {
      const auto id = engine_.create_session();
      return {{"v", kProtocolVersion}, {"session", id}, {"revision", 0}};
    }
    if (op == "train") {
      const auto report = engine_.train(require_string(request, "kind"));
      json out{{"v", kProtocolVersion},
               {"op", "train"},
               {"kind", report.kind},
               {"performed", report.performed},
               {"before", report.metric_before},
               {"after", report.metric_after},
               {"iterations", report.iterations},
               {"model_version", report.model_version}};
      if (!report.notice.empty()) out["notice"] = report.notice;
      return out;
    }

    const std::string session = require_string(request, "session");
    if (!engine_.has_session(session)) throw ProtocolError{"unknown_session", "unknown session '" + session + "'"};

    if (op == "snapshot") return result_message(session, *engine_.snapshot(session));
    if (op == "close_session") {
      engine_.close_session(session);
      return {{"v", kProtocolVersion}, {"session", session}, {"closed", true}};
    }
    if (op == "add_stroke") {
      const auto stroke = parse_stroke(require(request, "stroke"));
      return result_message(session, *engine_.apply(session, StrokeAdded{stroke}));
    }
    if (op == "delete_stroke") {
      const auto id = require_string(request, "stroke_id");
      return result_message(session, *engine_.apply(session, StrokeDeleted{id}));
    }
    if (op == "correct") {
      const auto& target = require(request, "target");
      const auto& value = require(request, "value");
      if (target.is_string() && value.is_string()) {
        auto out = result_message(session, *engine_.apply(session, SymbolCorrected{target, value}));
        out["retrain"] = engine_.config().finetune_on_correction ? "scheduled" : "disabled";
        return out;
      }
      if (value.is_object()) {
        auto rule = structure::rule_from_json(value, "/value");
        auto out = result_message(session, *engine_.apply(session, StructureCorrected{std::move(rule)}));
        out["retrain"] = "scheduled";
        return out;
      }
      throw ProtocolError{"bad_request", "correct needs a stroke id and label, or a rule object as value"};
    }
    throw ProtocolError{"unknown_op", "unknown op '" + op + "'"};
  } catch (const ProtocolError& e) {
    return error_message(request, e.code, e.message);
  } catch (const FormatError& e) {
    return error_message(request, "malformed", e.what());
  } catch (const DataError& e) {
    return error_message(request, "invalid", e.what());
  } catch (const json::exception& e) {
    return error_message(request, "bad_request", e.what());
  } catch (const std::exception& e) {
    return error_message(request, "internal", e.what());
  }
}

std::string Service::handle_line(const std::string& line) {
  json request;
  try {
    request = json::parse(line);
  } catch (const json::parse_error& e) {
    return error_message(json(), "malformed", std::string("invalid JSON: ") + e.what()).dump();
  }
  return handle(request).dump();
}

}  // namespace mathink::engine
