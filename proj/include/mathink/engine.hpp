#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mathink/ink.hpp"
#include "mathink/nefclass.hpp"
#include "mathink/render.hpp"
#include "mathink/store.hpp"
#include "mathink/structure.hpp"
#include "mathink/train.hpp"

namespace mathink::engine {

/// An immutable classifier plus knowledge base. Sessions hold a shared
/// reference, so a swap never changes an analysis in flight.
struct ModelSnapshot {
  nefclass::FuzzyModel model;
  structure::Knowledge knowledge;
  std::uint64_t version = 0;
};
using SnapshotPtr = std::shared_ptr<const ModelSnapshot>;

struct StrokeRecognition {
  features::FeatureVector x;
  nefclass::Classification classification;
  std::string label;  // kUnknownLabel when rejected
  double seconds = 0.0;
};

/// features + classify for one stroke.
StrokeRecognition recognize_stroke(const nefclass::FuzzyModel& model, const ink::Stroke& stroke);

struct StrokeAdded {
  ink::Stroke stroke;
};
struct StrokeDeleted {
  std::string stroke_id;
};
/// The user says this stroke is the given symbol class.
struct SymbolCorrected {
  std::string stroke_id;
  std::string label;
};
/// The user supplies a heuristic rule that fixes a structural result.
struct StructureCorrected {
  structure::HeuristicRule rule;
};
/// A new model snapshot was published; re-analyze against it.
struct ModelUpdated {};

using Event = std::variant<StrokeAdded, StrokeDeleted, SymbolCorrected, StructureCorrected, ModelUpdated>;

struct SessionState {
  ink::InkSession ink;
  std::map<std::string, StrokeRecognition> recognition;  // by stroke id
  std::map<std::string, std::string> overrides;           // corrected stroke labels
  structure::KnowledgeOverlay overlay;                    // session structural corrections
  SnapshotPtr model;
  std::vector<structure::RecognizedStroke> strokes;       // in ink order
  structure::AnalysisReport analysis;
  std::string latex;
  std::uint64_t revision = 0;
};

/// Results that a client observes; two states with equal views are
/// indistinguishable over the protocol.
bool same_result(const SessionState& a, const SessionState& b);

SessionState initial_state(SnapshotPtr model, const render::RenderOptions& options = {});

/// Applies one event and re-analyzes from scratch against the given model.
/// Throws DataError for events that do not resolve in the state; the input
/// state is untouched in that case.
SessionState handle(const Event& event, const SessionState& state, const SnapshotPtr& model,
                    const render::RenderOptions& options = {});

struct TrainReport {
  std::string kind;  // "ga" or "cg"
  bool performed = false;
  std::string notice;
  double metric_before = 0.0;  // fitness (ga) or loss (cg)
  double metric_after = 0.0;
  int iterations = 0;
  std::uint64_t model_version = 0;
};

struct EngineConfig {
  std::optional<store::fs::path> store_dir;
  bool finetune_on_correction = true;
  train::CGConfig cg;
  train::GAConfig ga;
  std::vector<nefclass::LabeledSample> training_set;  // for "ga" requests
  render::RenderOptions render;
  std::size_t correction_batch_extra = 31;
};

class Engine {
 public:
  Engine(ModelSnapshot initial, EngineConfig config = {});
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  std::string create_session();
  void close_session(const std::string& id);
  bool has_session(const std::string& id) const;

  /// Applies an event in this session's arrival order and publishes the new
  /// state. Throws DataError for unknown sessions or unresolved events.
  std::shared_ptr<const SessionState> apply(const std::string& session, const Event& event);

  /// Latest published state; never waits for event handling or training.
  std::shared_ptr<const SessionState> snapshot(const std::string& session) const;

  SnapshotPtr model() const;

  /// Runs a trainer on the background worker and waits for it.
  TrainReport train(const std::string& kind);

  /// Blocks until every queued background job has finished.
  void wait_idle();

  const EngineConfig& config() const { return config_; }

 private:
  struct Session {
    std::mutex mutex;
    std::shared_ptr<const SessionState> published;
  };

  void publish_model(nefclass::FuzzyModel model, const structure::KnowledgeOverlay* overlay_update);
  void enqueue(std::function<void()> job);
  void worker_loop();
  TrainReport finetune_correction(const nefclass::LabeledSample& sample);
  std::shared_ptr<Session> find(const std::string& id) const;

  EngineConfig config_;
  SnapshotPtr model_;  // accessed through std::atomic_load / atomic_store
  std::mutex model_write_;
  std::optional<store::Store> store_;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_session_ = 1;

  std::mutex reservoir_mutex_;
  std::vector<nefclass::LabeledSample> reservoir_;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::function<void()>> queue_;
  bool busy_ = false;
  bool stopping_ = false;
  std::thread worker_;
};

// ------------------------------------------------------------ wire protocol

inline constexpr int kProtocolVersion = 1;

/// Result message for a published session state.
nlohmann::json result_message(const std::string& session, const SessionState& state);

/// Maps protocol messages onto an Engine. Malformed or failing requests
/// produce {"v":1,"error":{...}} and leave sessions intact.
class Service {
 public:
  explicit Service(Engine& engine) : engine_(engine) {}
  nlohmann::json handle(const nlohmann::json& request);
  /// Parses one line; parse failures become error responses.
  std::string handle_line(const std::string& line);

 private:
  Engine& engine_;
};

/// Newline-delimited JSON over a loopback TCP socket, one thread per client.
class LineServer {
 public:
  LineServer(Service& service, int port = 0);  // 0 picks a free port
  ~LineServer();
  int port() const { return port_; }
  void stop();

 private:
  void accept_loop();
  void serve_client(int fd);

  Service& service_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex clients_mutex_;
  std::vector<std::thread> clients_;
  std::vector<int> client_fds_;
};

/// HTTP mapping of the protocol: POST /v1 with a whole message, or
/// POST /v1/<op> with the remaining fields.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  /// Binds to host:port (0 picks a free port) and returns the port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mathink::engine
