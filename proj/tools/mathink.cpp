// mathink: train, recognize, evaluate, generate corpora, serve.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mathink/corpus.hpp"
#include "mathink/engine.hpp"
#include "mathink/eval.hpp"
#include "mathink/ink.hpp"
#include "mathink/store.hpp"
#include "mathink/train.hpp"

using namespace mathink;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kDataError = 2;
constexpr int kInternal = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-")
    std::cout << text << std::flush;
  else
    store::atomic_write(out, text);
}

/// A knowledge file is either a bare knowledge document or a store file with
/// a base and an overlay.
structure::Knowledge load_knowledge(const std::string& path) {
  if (path.empty()) return structure::default_knowledge();
  const auto j = store::read_document(path);
  if (j.is_object() && j.contains("base")) return store::knowledge_file_from_json(j).effective();
  return structure::knowledge_from_json(j);
}

corpus::Corpus load_corpus(const std::string& path) { return corpus::corpus_from_json(store::read_document(path)); }

std::vector<corpus::Expression> split_of(const corpus::Corpus& c, const std::string& split) {
  if (split == "train") return c.train;
  if (split == "test") return c.test;
  auto all = c.train;
  all.insert(all.end(), c.test.begin(), c.test.end());
  return all;
}

/// Model classes: the generator's symbol set, then any other corpus label.
std::vector<std::string> corpus_labels(const corpus::Corpus& c) {
  auto labels = corpus::stroke_classes();
  std::set<std::string> extra;
  for (const auto* part : {&c.train, &c.test})
    for (const auto& e : *part)
      for (const auto& l : e.stroke_labels)
        if (std::find(labels.begin(), labels.end(), l) == labels.end()) extra.insert(l);
  labels.insert(labels.end(), extra.begin(), extra.end());
  return labels;
}

json ga_config_json(const train::GAConfig& g) {
  return {{"population_size", g.population_size}, {"generations", g.generations},
          {"tournament_k", g.tournament_k},       {"crossover_rate", g.crossover_rate},
          {"mutation_rate", g.mutation_rate},     {"mutation_sigma", g.mutation_sigma},
          {"elitism_count", g.elitism_count},     {"rng_seed", g.rng_seed}};
}

// ------------------------------------------------------------------ commands

struct TrainArgs {
  bool init = false;
  bool finetune = false;
  std::string corpus;
  std::string model;
  std::string corrections;
  std::uint64_t seed = 1;
  int generations = 60;
  int population = 40;
  int terms = 4;
  int max_rules = 3;
  int threads = 0;
  std::string out;
};

int cmd_train_init(const TrainArgs& a) {
  if (a.corpus.empty()) throw CLI::ValidationError("--corpus", "required with --init");
  const std::string corpus_text = read_file(a.corpus);
  const auto c = corpus::corpus_from_json(store::parse_document(corpus_text));

  features::SimplifyParams fp;
  auto model = nefclass::make_model(corpus_labels(c), fp, a.terms);
  model.max_rules_per_class = a.max_rules;
  const auto samples = eval::stroke_samples(model, c.train);
  model.rules = nefclass::generate_rules(samples, model.partition, static_cast<int>(model.classes()), a.max_rules);

  train::GAConfig g;
  g.generations = a.generations;
  g.population_size = a.population;
  g.rng_seed = a.seed;
  g.threads = a.threads;
  const auto result = train::run_ga(g, samples, model);

  json config = ga_config_json(g);
  config["terms_per_dimension"] = a.terms;
  config["max_rules_per_class"] = a.max_rules;
  config["epsilon"] = fp.epsilon;
  config["vertices"] = fp.vertices;
  config["corpus_sha256"] = store::sha256_hex(corpus_text);
  store::ModelFile file{result.model, {"ga", store::sha256_hex(config.dump()), a.seed, result.fitness}};
  store::save_model(a.model, file);

  json report{{"trainer", "ga"},
              {"samples", samples.size()},
              {"rules", result.model.rules.size()},
              {"initial_fitness", result.history.front()},
              {"fitness", result.fitness},
              {"generations", static_cast<int>(result.history.size()) - 1},
              {"model", a.model}};
  emit(report.dump(2) + "\n", a.out);
  return kOk;
}

int cmd_train_finetune(const TrainArgs& a) {
  auto file = store::load_model(a.model);
  const std::string corrections =
      a.corrections.empty() ? (store::fs::path(a.model).parent_path() / "corrections.json").string() : a.corrections;
  store::CorrectionsFile reservoir;
  if (store::fs::exists(corrections)) reservoir = store::load_corrections(corrections);
  if (reservoir.samples.empty()) {
    emit(json{{"trainer", "cg"}, {"performed", false}, {"notice", "correction reservoir is empty; nothing to fine-tune"}}
                 .dump(2) + "\n",
         a.out);
    return kOk;
  }
  std::vector<nefclass::LabeledSample> batch;
  for (const auto& s : reservoir.samples) {
    const int k = file.model.class_index(s.label);
    if (k < 0) throw DataError("correction label '" + s.label + "' is not a model class");
    batch.push_back({s.x, k});
  }
  train::CGConfig cg;
  cg.rng_seed = a.seed;
  const auto result = train::run_cg(cg, file.model, batch);
  json config{{"trainer", "cg"}, {"temperature", cg.temperature}, {"max_iterations", cg.max_iterations},
              {"corrections_sha256", store::sha256_hex(read_file(corrections))}};
  file.model = result.model;
  file.provenance = {"cg", store::sha256_hex(config.dump()), a.seed, train::accuracy(result.model, batch)};
  store::save_model(a.model, file);
  emit(json{{"trainer", "cg"},
            {"performed", true},
            {"samples", batch.size()},
            {"loss_before", result.loss_before},
            {"loss_after", result.loss_after},
            {"iterations", result.iterations}}
               .dump(2) + "\n",
       a.out);
  return kOk;
}

struct RecognizeArgs {
  std::string ink;
  std::string model;
  std::string knowledge;
  std::string format = "latex";
  std::string out;
};

int cmd_recognize(const RecognizeArgs& a) {
  const auto session = ink::parse_ink(read_file(a.ink));
  const auto model = store::load_model(a.model).model;
  const auto knowledge = load_knowledge(a.knowledge);
  render::RenderOptions options;
  options.target = render::target_from_string(a.format);

  std::vector<structure::RecognizedStroke> strokes;
  json recognized = json::array();
  for (const auto& s : session.strokes()) {
    const auto r = engine::recognize_stroke(model, s);
    strokes.push_back({s.id, r.label, ink::bbox_of(s), r.classification.confidence});
    recognized.push_back({{"id", s.id}, {"label", r.label}, {"confidence", r.classification.confidence}});
  }
  engine::SessionState state;
  state.analysis = structure::analyze(strokes, knowledge);
  state.latex = render::to_latex(state.analysis.tree);
  auto out = engine::result_message("", state);
  out.erase("session");
  out.erase("revision");
  out["strokes"] = recognized;
  out["format"] = a.format;
  out["output"] = render::render(state.analysis.tree, options);
  emit(out.dump(2) + "\n", a.out);
  return kOk;
}

struct EvalArgs {
  std::string model;
  std::string corpus;
  std::string knowledge;
  std::string split = "test";
  bool no_reject = false;
  bool feed_labels = false;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  const auto c = load_corpus(a.corpus);
  const auto knowledge = load_knowledge(a.knowledge);
  nefclass::FuzzyModel model;
  if (!a.model.empty())
    model = store::load_model(a.model).model;
  else if (!a.feed_labels)
    throw CLI::ValidationError("--model", "required unless --feed-labels is given");
  const auto expressions = split_of(c, a.split);
  const auto report = eval::evaluate(model, knowledge, expressions, {!a.no_reject, a.feed_labels});
  emit(eval::to_json(report).dump(2) + "\n", a.out);
  std::cerr << "stroke " << report.stroke_accuracy << "%  reconstruction " << report.reconstruction_accuracy
            << "%  structural " << report.structural_accuracy << "%  latency mean " << report.mean_latency_ms
            << " ms p95 " << report.p95_latency_ms << " ms\n";
  return kOk;
}

struct GenArgs {
  std::uint64_t seed = 1;
  int train = 300;
  int test = 150;
  bool no_jitter = false;
  std::string out;
};

int cmd_gen_corpus(const GenArgs& a) {
  corpus::CorpusConfig config;
  config.seed = a.seed;
  config.train_count = a.train;
  config.test_count = a.test;
  if (a.no_jitter) config.jitter = corpus::Jitter::none();
  emit(store::dump(corpus::to_json(corpus::generate(config))), a.out);
  return kOk;
}

struct ServeArgs {
  int port = 0;
  std::string host = "127.0.0.1";
  bool http = false;
  std::string model;
  std::string knowledge;
  std::string store_dir;
  std::string corpus;
};

volatile std::sig_atomic_t g_stop = 0;

int cmd_serve(const ServeArgs& a) {
  engine::EngineConfig config;
  engine::ModelSnapshot snapshot;
  snapshot.knowledge = load_knowledge(a.knowledge);
  if (!a.store_dir.empty()) {
    store::fs::create_directories(a.store_dir);
    config.store_dir = a.store_dir;
    store::Store st(a.store_dir);
    if (!a.model.empty() && !st.has_model()) st.save_model(store::load_model(a.model));
    if (!st.has_model()) throw DataError("no model: pass --model or use a store that has one");
    snapshot.model = st.load_model().model;
    snapshot.knowledge = st.load_knowledge(snapshot.knowledge).effective();
  } else {
    if (a.model.empty()) throw CLI::ValidationError("--model", "required without --store");
    snapshot.model = store::load_model(a.model).model;
  }
  if (!a.corpus.empty()) config.training_set = eval::stroke_samples(snapshot.model, load_corpus(a.corpus).train);

  engine::Engine engine(std::move(snapshot), std::move(config));
  engine::Service service(engine);
  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });

  if (a.http) {
    engine::HttpServer server(service);
    const int port = server.bind(a.host, a.port);
    std::cout << json{{"listening", port}, {"transport", "http"}}.dump() << std::endl;
    std::thread waiter([&] {
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
      server.stop();
    });
    server.listen();
    g_stop = 1;
    waiter.join();
  } else {
    engine::LineServer server(service, a.port);
    std::cout << json{{"listening", server.port()}, {"transport", "ndjson"}}.dump() << std::endl;
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
  }
  engine.wait_idle();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Handwritten math expression recognition"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a classifier (GA) or fine-tune it (CG)");
  auto* init_flag = train->add_flag("--init", ta.init, "genetic-algorithm training from a corpus");
  train->add_flag("--finetune", ta.finetune, "conjugate-gradient fine-tuning on stored corrections")->excludes(init_flag);
  train->add_option("--corpus", ta.corpus, "corpus file");
  train->add_option("--model", ta.model, "model file to write (--init) or update (--finetune)")->required();
  train->add_option("--corrections", ta.corrections, "corrections file (default: next to the model)");
  train->add_option("--seed", ta.seed, "random seed");
  train->add_option("--generations", ta.generations)->check(CLI::PositiveNumber);
  train->add_option("--population", ta.population)->check(CLI::Range(2, 100000));
  train->add_option("--terms", ta.terms, "membership functions per input")->check(CLI::Range(2, 64));
  train->add_option("--max-rules", ta.max_rules, "rules per class")->check(CLI::PositiveNumber);
  train->add_option("--threads", ta.threads, "fitness threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  train->add_option("--out", ta.out, "report file (default stdout)");

  RecognizeArgs ra;
  auto* recognize = app.add_subcommand("recognize", "recognize an ink file");
  recognize->add_option("ink", ra.ink, "ink file")->required();
  recognize->add_option("--model", ra.model, "model file")->required();
  recognize->add_option("--knowledge", ra.knowledge, "knowledge file (default: built-in)");
  recognize->add_option("--format", ra.format)->check(CLI::IsMember({"latex", "mathml"}));
  recognize->add_option("--out", ra.out, "result file (default stdout)");

  EvalArgs ea;
  auto* evaluate = app.add_subcommand("eval", "evaluate a model on a labeled corpus");
  evaluate->add_option("--model", ea.model, "model file");
  evaluate->add_option("--corpus", ea.corpus, "corpus file")->required();
  evaluate->add_option("--knowledge", ea.knowledge, "knowledge file (default: built-in)");
  evaluate->add_option("--split", ea.split)->check(CLI::IsMember({"train", "test", "all"}));
  evaluate->add_flag("--no-reject", ea.no_reject, "score the best class even below the reject threshold");
  evaluate->add_flag("--feed-labels", ea.feed_labels, "use the true stroke labels instead of the classifier");
  evaluate->add_option("--out", ea.out, "report file (default stdout)");

  GenArgs ga;
  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic labeled corpus");
  gen->add_option("--seed", ga.seed, "random seed");
  gen->add_option("--train", ga.train, "training expressions")->check(CLI::NonNegativeNumber);
  gen->add_option("--test", ga.test, "test expressions")->check(CLI::NonNegativeNumber);
  gen->add_flag("--no-jitter", ga.no_jitter, "noiseless strokes");
  gen->add_option("--out", ga.out, "corpus file (default stdout)");

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "run the engine over NDJSON or HTTP");
  serve->add_option("--port", sa.port, "port, 0 picks a free one")->check(CLI::Range(0, 65535));
  serve->add_option("--host", sa.host, "HTTP bind address");
  serve->add_flag("--http", sa.http, "HTTP mapping instead of NDJSON");
  serve->add_option("--model", sa.model, "model file");
  serve->add_option("--knowledge", sa.knowledge, "knowledge base file (default: built-in)");
  serve->add_option("--store", sa.store_dir, "store directory for the model, overlay and corrections");
  serve->add_option("--corpus", sa.corpus, "corpus whose training split backs ga train requests");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) {
      if (ta.init == ta.finetune) throw CLI::ValidationError("train", "exactly one of --init or --finetune");
      return ta.init ? cmd_train_init(ta) : cmd_train_finetune(ta);
    }
    if (*recognize) return cmd_recognize(ra);
    if (*evaluate) return cmd_eval(ea);
    if (*gen) return cmd_gen_corpus(ga);
    if (*serve) return cmd_serve(sa);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}
