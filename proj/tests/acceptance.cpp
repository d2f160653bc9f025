// Acceptance run: one PASS/FAIL line per primary criterion, nonzero exit if
// any fails.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "mathink/engine.hpp"
#include "mathink/eval.hpp"
#include "mathink/store.hpp"
#include "mathink/train.hpp"
#include "support.hpp"

using namespace mathink;
using nlohmann::json;

namespace {

const std::string kCli = MATHINK_CLI;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

// Shared between the corpus criterion and the ones that reuse its model.
struct Shared {
  testing::TempDir dir{"acceptance"};
  std::string model_path;
  json eval_report;
} shared;

// ------------------------------------------------------------------ oracles

Outcome nefclass_oracle() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  int points = 0;
  for (int i = 0; i < 200; ++i) {
    const int inputs = 1 + static_cast<int>(rng() % 4);
    const int classes = 1 + static_cast<int>(rng() % 4);
    const int terms = 2 + static_cast<int>(rng() % 3);
    const int rules = 1 + static_cast<int>(rng() % 10);
    const auto tnorm = i % 2 ? nefclass::TNorm::Product : nefclass::TNorm::Min;
    const auto m = testing::random_model(rng, inputs, classes, terms, rules, tnorm);
    for (int k = 0; k < 50; ++k) {
      const auto x = testing::random_point(rng, inputs);
      const auto got = nefclass::classify(m, {x});
      const auto want = testing::brute_force_scores(m, x);
      for (std::size_t c = 0; c < want.size(); ++c) worst = std::max(worst, std::abs(got.scores[c] - want[c]));
      ++points;
    }
  }
  return {worst <= 1e-12, "200 models, " + std::to_string(points) + " points, max |d| = " + fmt(worst)};
}

Outcome gradient_check() {
  std::mt19937_64 rng(77);
  const double h = 1e-5;
  double worst = 0.0;
  int components = 0;
  for (int i = 0; i < 50; ++i) {
    const int inputs = 1 + static_cast<int>(rng() % 4);
    const int classes = 2 + static_cast<int>(rng() % 3);
    const auto m = testing::random_model(rng, inputs, classes, 3, 2 + static_cast<int>(rng() % 7),
                                         nefclass::TNorm::Product);
    std::vector<nefclass::LabeledSample> batch;
    for (int s = 0; s < 6; ++s)
      batch.push_back({{testing::random_point(rng, inputs)}, static_cast<int>(rng() % classes)});
    const auto g = train::gradient(m, batch);
    const auto x = train::encode(m.partition);
    for (std::size_t k = 0; k < x.size(); ++k) {
      auto up = m, down = m;
      auto xu = x, xd = x;
      xu[k] += h;
      xd[k] -= h;
      train::decode(xu, up.partition);
      train::decode(xd, down.partition);
      const double fd = (train::loss(up, batch) - train::loss(down, batch)) / (2 * h);
      // Components below 1e-6 in both are compared against that floor.
      const double rel = std::abs(fd - g[k]) / std::max({std::abs(fd), std::abs(g[k]), 1e-6});
      worst = std::max(worst, rel);
      ++components;
    }
  }
  return {worst <= 1e-4, "50 models, " + std::to_string(components) + " components, max rel err = " + fmt(worst)};
}

Outcome ga_monotone_deterministic() {
  std::mt19937_64 rng(5);
  const auto samples = testing::blobs(rng, 4, 30, 0.3);
  auto m = nefclass::make_model({"a", "b"}, {0.02, 2}, 3);
  train::GAConfig cfg;
  cfg.generations = 60;
  cfg.rng_seed = 11;
  const auto a = train::run_ga(cfg, samples, m);
  const auto b = train::run_ga(cfg, samples, m);
  bool monotone = a.history.size() == 61;
  for (std::size_t g = 1; g < a.history.size(); ++g) monotone = monotone && a.history[g] >= a.history[g - 1];
  const bool same = store::dump(store::to_json(a.model)) == store::dump(store::to_json(b.model));
  return {monotone && same, "60 generations, fitness " + fmt(a.history.front()) + " -> " + fmt(a.fitness) +
                                (monotone ? ", non-decreasing" : ", DECREASED") +
                                (same ? ", byte-identical rerun" : ", rerun DIFFERS")};
}

Outcome placement_law() {
  const auto k = structure::default_knowledge();
  std::vector<std::string> labels;
  for (const auto& [label, row] : k.positions.classes) labels.push_back(label);
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> pick(0, labels.size() - 1);
  std::uniform_real_distribution<double> pos(0.0, 80.0), size(1.0, 30.0);
  auto box = [&] {
    const double x = pos(rng), y = pos(rng);
    return ink::BBox{x, y, x + size(rng), y + size(rng)};
  };
  int mismatches = 0, forbidden = 0, placed = 0;
  for (int scene = 0; scene < 1000; ++scene) {
    std::vector<structure::SymbolInstance> anchors;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      const auto id = "a" + std::to_string(i);
      anchors.push_back({id, labels[pick(rng)], {id}, box(), 1.0});
    }
    const structure::SymbolInstance sym{"s", labels[pick(rng)], {"s"}, box(), 1.0};
    const auto got = structure::place_symbol(sym, anchors, k.positions, k.geometry);
    const double best = testing::exhaustive_best_np(sym, anchors, k.positions, k.geometry);
    if (best == 0.0) {
      mismatches += got.has_value();
      continue;
    }
    ++placed;
    if (!got || std::abs(got->np - best) > 1e-9 * std::max(1.0, best)) ++mismatches;
    if (got && got->k == 0.0) ++forbidden;
  }
  return {mismatches == 0 && forbidden == 0, "1000 scenes (" + std::to_string(placed) + " placeable), " +
                                                 std::to_string(mismatches) + " mismatches, " +
                                                 std::to_string(forbidden) + " forbidden picks"};
}

Outcome structural_goldens() {
  const auto k = structure::default_knowledge();
  int exact = 0, permutation_failures = 0, scenes = 0;
  std::mt19937_64 rng(13);
  auto permuted_ok = [&](std::vector<structure::RecognizedStroke> strokes) {
    const auto ref = structure::analyze(strokes, k);
    for (int i = 0; i < 5; ++i) {
      std::shuffle(strokes.begin(), strokes.end(), rng);
      const auto again = structure::analyze(strokes, k);
      if (!(again.tree == ref.tree) || !(again.symbols == ref.symbols)) return false;
    }
    return true;
  };
  for (const auto& g : testing::golden_suite()) {
    const auto strokes = testing::labeled_scene(g.tree, corpus::Jitter::none(), 1);
    const auto r = structure::analyze(strokes, k);
    if (r.tree == g.tree && render::to_latex(r.tree) == g.latex) ++exact;
    ++scenes;
    permutation_failures += !permuted_ok(strokes);
    ++scenes;
    permutation_failures += !permuted_ok(testing::labeled_scene(g.tree, corpus::Jitter{}, 2));
  }
  for (int i = 0; i < 60; ++i) {
    ++scenes;
    permutation_failures += !permuted_ok(testing::labeled_scene(corpus::random_tree(rng), corpus::Jitter{}, 50 + i));
  }
  const auto total = testing::golden_suite().size();
  return {exact == static_cast<int>(total) && permutation_failures == 0,
          std::to_string(exact) + "/" + std::to_string(total) + " goldens exact, " +
              std::to_string(permutation_failures) + " order-dependent scenes of " + std::to_string(scenes)};
}

// ------------------------------------------------------------ corpus analog

Outcome corpus_accuracy() {
  const auto corpus = (shared.dir / "corpus.json").string();
  const auto model = (shared.dir / "model.json").string();
  auto r = testing::run_command({kCli, "gen-corpus", "--seed", "1", "--train", "300", "--test", "150", "--out", corpus});
  if (r.exit_code != 0) return {false, "gen-corpus failed: " + r.err};
  r = testing::run_command({kCli, "train", "--init", "--corpus", corpus, "--model", model, "--seed", "1"});
  if (r.exit_code != 0) return {false, "train --init failed: " + r.err};
  const auto train_report = json::parse(r.out);
  shared.model_path = model;
  r = testing::run_command({kCli, "eval", "--model", model, "--corpus", corpus, "--split", "test"});
  if (r.exit_code != 0) return {false, "eval failed: " + r.err};
  shared.eval_report = json::parse(r.out);
  const double s = shared.eval_report.at("stroke_accuracy"), c = shared.eval_report.at("reconstruction_accuracy"),
               t = shared.eval_report.at("structural_accuracy");
  return {s >= 90.0 && c >= 93.0 && t >= 70.0,
          "stroke " + fmt(s) + "% (>= 90), reconstruction " + fmt(c) + "% (>= 93), structural " + fmt(t) +
              "% (>= 70); GA fitness " + fmt(train_report.at("fitness").get<double>())};
}

Outcome latency() {
  if (shared.eval_report.is_null()) return {false, "no eval report (corpus criterion did not run)"};
  const double mean = shared.eval_report.at("latency_ms").at("mean"), p95 = shared.eval_report.at("latency_ms").at("p95");
  return {mean <= 150.0 && mean <= 20.0,
          "mean " + fmt(mean) + " ms (<= 150, <= 20), p95 " + fmt(p95) + " ms over " +
              std::to_string(shared.eval_report.at("strokes").get<int>()) + " strokes"};
}

// ------------------------------------------------------------ correction loop

Outcome correction_loop() {
  if (shared.model_path.empty()) return {false, "no trained model (corpus criterion did not run)"};
  engine::ModelSnapshot snap{store::load_model(shared.model_path).model, structure::default_knowledge(), 0};
  engine::Engine engine(snap, {});
  const auto session = engine.create_session();

  corpus::CorpusConfig cc;
  cc.seed = 42;
  cc.train_count = 0;
  cc.test_count = 5;
  const auto c = corpus::generate(cc);
  int corrected = 0, held = 0, monotone_runs = 0;
  const auto& labels = snap.model.labels;
  std::mt19937_64 rng(3);
  std::vector<nefclass::LabeledSample> reservoir;
  for (const auto& e : c.test) {
    const auto& stroke = e.strokes.front();
    const auto state = engine.apply(session, engine::StrokeAdded{stroke});
    const std::string current = state->recognition.at(stroke.id).label;
    std::string target;
    do target = labels[rng() % labels.size()];
    while (target == current);
    engine.apply(session, engine::SymbolCorrected{stroke.id, target});
    engine.wait_idle();
    const auto& m = engine.model()->model;
    const auto x = features::extract_features(stroke, m.feature_params);
    ++corrected;
    held += nefclass::label_of(m, nefclass::classify(m, x)) == target;

    const nefclass::LabeledSample sample{x, m.class_index(target)};
    const auto batch = train::correction_batch(sample, reservoir, 31, 1);
    reservoir.push_back(sample);
    const auto tuned = train::run_cg({}, m, batch);
    bool monotone = tuned.loss_after <= tuned.loss_before;
    for (std::size_t i = 1; i < tuned.loss_history.size(); ++i)
      monotone = monotone && tuned.loss_history[i] <= tuned.loss_history[i - 1];
    monotone_runs += monotone;
  }
  return {held == corrected && monotone_runs == corrected,
          std::to_string(held) + "/" + std::to_string(corrected) + " corrections classify to the new label, " +
              std::to_string(monotone_runs) + "/" + std::to_string(corrected) + " fine-tunes with non-increasing loss"};
}

// ------------------------------------------------------------ persistence

struct Crash {};

Outcome persistence() {
  testing::TempDir dir("persist");
  std::mt19937_64 rng(8);
  int equal = 0;
  for (int i = 0; i < 100; ++i) {
    const int vertices = 2 + static_cast<int>(rng() % 3);
    auto m = testing::random_model(rng, 2 * vertices, 1 + static_cast<int>(rng() % 5), 2 + static_cast<int>(rng() % 3),
                                   1 + static_cast<int>(rng() % 8));
    m.feature_params.vertices = vertices;
    const store::ModelFile f{m, {"ga", store::sha256_hex(std::to_string(i)), rng(), 0.5}};
    store::save_model(dir / "m.json", f);
    equal += store::load_model(dir / "m.json") == f;
  }

  int crashes = 0, intact = 0, partial_ok = 0, partial_total = 0;
  store::ModelFile previous = store::load_model(dir / "m.json");
  for (int i = 0; i < 20; ++i) {
    auto next = previous;
    next.provenance.seed += 1;
    const auto point = i % 2 ? store::FaultPoint::BeforeRename : store::FaultPoint::TempWritten;
    store::set_fault_hook([point](store::FaultPoint p, const store::fs::path&) {
      if (p == point) throw Crash{};
    });
    try {
      store::save_model(dir / "m.json", next);
    } catch (const Crash&) {
      ++crashes;
    }
    store::set_fault_hook(nullptr);
    try {
      intact += store::load_model(dir / "m.json") == previous;
    } catch (const std::exception&) {
    }
    store::save_model(dir / "m.json", next);
    previous = next;
  }
  std::ifstream in(dir / "m.json", std::ios::binary);
  const std::string text{std::istreambuf_iterator<char>(in), {}};
  for (std::size_t cut = 0; cut < text.size(); cut += std::max<std::size_t>(1, text.size() / 50)) {
    std::ofstream(dir / "t.json", std::ios::binary) << text.substr(0, cut);
    ++partial_total;
    try {
      store::load_model(dir / "t.json");
    } catch (const store::PartialFileError&) {
      ++partial_ok;
    } catch (const std::exception&) {
    }
  }
  return {equal == 100 && crashes == 20 && intact == 20 && partial_ok == partial_total,
          std::to_string(equal) + "/100 round trips, " + std::to_string(intact) + "/" + std::to_string(crashes) +
              " crashed saves left the previous state, " + std::to_string(partial_ok) + "/" +
              std::to_string(partial_total) + " truncations refused as partial"};
}

// ------------------------------------------------------------ linearizability

class LineClient {
 public:
  explicit LineClient(int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    ok_ = ::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0;
  }
  ~LineClient() { ::close(fd_); }
  bool ok() const { return ok_; }

  json call(const std::string& line) {
    const std::string out = line + "\n";
    if (::send(fd_, out.data(), out.size(), 0) != static_cast<ssize_t>(out.size())) return {};
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        const auto reply = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return json::parse(reply);
      }
      char chunk[8192];
      const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n <= 0) return {};
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_ = -1;
  bool ok_ = false;
  std::string buffer_;
};

json stroke_json(const ink::Stroke& s) {
  json pts = json::array();
  for (const auto& p : s.points) pts.push_back({p.x, p.y, p.t});
  return {{"id", s.id}, {"points", pts}};
}

Outcome linearizability() {
  testing::TempDir dir("serve");
  const auto model_path = dir / "model.json";
  store::save_model(model_path, {testing::clean_snapshot()->model, {}});
  testing::Child server({kCli, "serve", "--port", "0", "--model", model_path.string()});
  json hello;
  try {
    hello = json::parse(server.read_line());
  } catch (const std::exception&) {
    return {false, "serve did not announce a port"};
  }
  const int port = hello.value("listening", 0);

  const auto snapshot = std::make_shared<const engine::ModelSnapshot>(
      engine::ModelSnapshot{store::load_model(model_path).model, structure::default_knowledge(), 0});

  corpus::CorpusConfig cc;
  cc.seed = 77;
  cc.train_count = 0;
  cc.test_count = 2;
  const auto c = corpus::generate(cc);

  struct Run {
    std::vector<engine::Event> events;
    std::vector<std::string> lines;
    std::vector<json> replies;
    bool malformed_ok = true;
  };
  auto script = [](const corpus::Expression& e, const std::string& session) {
    Run r;
    for (const auto& s : e.strokes) r.events.push_back(engine::StrokeAdded{s});
    r.events.push_back(engine::StrokeDeleted{e.strokes.front().id});
    r.events.push_back(engine::StrokeDeleted{e.strokes.back().id});
    r.events.push_back(engine::StrokeAdded{e.strokes.front()});
    for (const auto& ev : r.events) {
      json msg{{"v", 1}, {"session", session}};
      if (const auto* a = std::get_if<engine::StrokeAdded>(&ev)) {
        msg["op"] = "add_stroke";
        msg["stroke"] = stroke_json(a->stroke);
      } else {
        msg["op"] = "delete_stroke";
        msg["stroke_id"] = std::get<engine::StrokeDeleted>(ev).stroke_id;
      }
      r.lines.push_back(msg.dump());
    }
    return r;
  };

  std::vector<Run> runs;
  std::vector<std::string> sessions;
  {
    LineClient setup(port);
    if (!setup.ok()) return {false, "cannot connect to serve"};
    for (int i = 0; i < 2; ++i) sessions.push_back(setup.call(R"({"v":1,"op":"create_session"})").value("session", ""));
  }
  for (int i = 0; i < 2; ++i) runs.push_back(script(c.test[i], sessions[i]));

  std::vector<std::thread> threads;
  for (int i = 0; i < 2; ++i)
    threads.emplace_back([&, i] {
      LineClient client(port);
      for (std::size_t k = 0; k < runs[i].lines.size(); ++k) {
        runs[i].replies.push_back(client.call(runs[i].lines[k]));
        if (k == 2) runs[i].malformed_ok = client.call("{\"op\": \"add_stroke\"").contains("error");
      }
    });
  for (auto& t : threads) t.join();

  int gapless = 0, identical = 0, steps = 0;
  bool malformed = true;
  for (int i = 0; i < 2; ++i) {
    auto& r = runs[i];
    malformed = malformed && r.malformed_ok;
    bool ordered = r.replies.size() == r.events.size();
    auto state = engine::initial_state(snapshot);
    for (std::size_t k = 0; k < r.replies.size(); ++k) {
      ordered = ordered && r.replies[k].value("revision", -1) == static_cast<int>(k + 1);
      state = engine::handle(r.events[k], state, snapshot);
      auto want = engine::result_message(sessions[i], state);
      ++steps;
      identical += want == r.replies[k];
    }
    gapless += ordered;
  }
  server.terminate();
  return {gapless == 2 && identical == steps && malformed,
          std::to_string(identical) + "/" + std::to_string(steps) + " replies equal sequential replay, " +
              std::to_string(gapless) + "/2 sessions gapless" + (malformed ? "" : ", malformed line mishandled")};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"NEFCLASS forward pass matches brute force", 5, nefclass_oracle},
      {"CG gradient matches finite differences", 30, gradient_check},
      {"GA best fitness monotone and deterministic", 60, ga_monotone_deterministic},
      {"placement equals exhaustive NP enumeration", 10, placement_law},
      {"structural goldens and order invariance", 5, structural_goldens},
      {"synthetic corpus analog of the reported accuracies", 600, corpus_accuracy},
      {"per-stroke recognition latency", 600, latency},
      {"correction loop", 30, correction_loop},
      {"persistence round trip and fault injection", 60, persistence},
      {"engine linearizability through serve", 60, linearizability},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  " << c.name << ": " << o.detail << " [" << fmt(secs, 3) << " s, budget "
              << c.budget_s << " s" << (in_time ? "" : ", OVER BUDGET") << "]" << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
