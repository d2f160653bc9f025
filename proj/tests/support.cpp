#include "support.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "mathink/eval.hpp"
#include "mathink/ink.hpp"

namespace testing {

using namespace mathink;
using namespace mathink::expr;

TempDir::TempDir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  for (;;) {
    path_ = fs::temp_directory_path() / ("mathink-" + tag + "-" + std::to_string(rng() % 1000000000));
    if (fs::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

const std::vector<Golden>& golden_suite() {
  static const std::vector<Golden> suite = [] {
    const auto s = [](const char* l) { return sym(l); };
    std::vector<Golden> g;
    g.push_back({"fraction", row({frac(s("a"), s("b"))}), "\\frac{a}{b}"});
    g.push_back({"superscript", row({sup(s("x"), num("2"))}), "x^{2}"});
    g.push_back({"subscript", row({sub(s("a"), s("n")), s("+"), num("1")}), "a_{n}+1"});
    g.push_back({"square root", row({expr::sqrt(row({s("x"), s("+"), num("1")}))}), "\\sqrt{x+1}"});
    g.push_back({"root with degree", row({expr::sqrt(num("8"), num("3"))}), "\\sqrt[3]{8}"});
    g.push_back({"sum with limits", row({bigop(BigOpKind::Sum, row({s("i"), s("="), num("1")}), s("n"), s("i"))}),
                 "\\sum_{i=1}^{n} i"});
    g.push_back({"product with limits",
                 row({bigop(BigOpKind::Product, row({s("i"), s("="), num("1")}), s("n"), sub(s("x"), s("i")))}),
                 "\\prod_{i=1}^{n} x_{i}"});
    g.push_back({"integral with limits",
                 row({bigop(BigOpKind::Integral, num("0"), num("1"), row({s("x"), s("d"), s("x")}))}),
                 "\\int_{0}^{1} xdx"});
    g.push_back({"group with exponent", row({sup(group(BracketKind::Paren, row({s("a"), s("+"), s("b")})), num("2"))}),
                 "(a+b)^{2}"});
    g.push_back({"square brackets", row({group(BracketKind::Square, row({s("x"), s("-"), num("1")}))}), "[x-1]"});
    g.push_back({"decimal point", row({num("3.14")}), "3.14"});
    g.push_back({"decimal comma", row({num("2,5"), s("+"), s("x")}), "2,5+x"});
    g.push_back({"compound fraction", row({frac(row({s("x"), s("+"), num("1")}), row({s("y"), s("-"), num("2")}))}),
                 "\\frac{x+1}{y-2}"});
    g.push_back({"function", row({s("sin"), s("x")}), "\\sin x"});
    g.push_back({"nested fraction", row({frac(frac(s("a"), s("b")), s("c"))}), "\\frac{\\frac{a}{b}}{c}"});
    g.push_back({"sub and superscript", row({subsup(s("a"), s("n"), num("2"))}), "a_{n}^{2}"});
    g.push_back({"root of fraction", row({expr::sqrt(frac(s("a"), s("b")))}), "\\sqrt{\\frac{a}{b}}"});
    g.push_back({"equation", row({group(BracketKind::Paren, row({s("x"), s("+"), s("y")})), s("="), s("m")}),
                 "(x+y)=m"});
    g.push_back({"function call", row({s("cos"), group(BracketKind::Paren, s("x")), s("+"), num("1")}),
                 "\\cos(x)+1"});
    g.push_back({"coefficient", row({num("12"), s("x"), s("-"), num("7.5")}), "12x-7.5"});
    return g;
  }();
  return suite;
}

std::vector<structure::RecognizedStroke> labeled_scene(const ExprNode& tree, const corpus::Jitter& jitter,
                                                       std::uint64_t seed, const std::string& id) {
  std::mt19937_64 rng(seed);
  const auto e = corpus::render_expression(tree, jitter, rng, 40.0, id);
  std::vector<structure::RecognizedStroke> out;
  for (std::size_t i = 0; i < e.strokes.size(); ++i)
    out.push_back({e.strokes[i].id, e.stroke_labels[i], ink::bbox_of(e.strokes[i]), 1.0});
  return out;
}

std::shared_ptr<const engine::ModelSnapshot> clean_snapshot() {
  static const auto snapshot = [] {
    corpus::CorpusConfig cfg;
    cfg.train_count = 200;
    cfg.test_count = 0;
    cfg.jitter = corpus::Jitter::none();
    const auto c = corpus::generate(cfg);
    auto m = nefclass::make_model(corpus::stroke_classes(), {}, 4);
    m.max_rules_per_class = 12;
    const auto samples = eval::stroke_samples(m, c.train);
    m.rules = nefclass::generate_rules(samples, m.partition, static_cast<int>(m.classes()), m.max_rules_per_class);
    auto s = std::make_shared<engine::ModelSnapshot>();
    s->model = std::move(m);
    s->knowledge = structure::default_knowledge();
    return std::shared_ptr<const engine::ModelSnapshot>(std::move(s));
  }();
  return snapshot;
}

corpus::Expression clean_ink(const ExprNode& tree, const std::string& id) {
  std::mt19937_64 rng(1);
  return corpus::render_expression(tree, corpus::Jitter::none(), rng, 40.0, id);
}

namespace {

using ink::BBox;
using structure::RelPosition;

BBox oracle_region(const BBox& a, RelPosition p, const structure::RegionGeometry& g) {
  const double w = a.max_x - a.min_x, h = a.max_y - a.min_y, r = g.reach * std::max(w, h);
  const double top = a.min_y, bottom = a.max_y, left = a.min_x, right = a.max_x;
  switch (p) {
    case RelPosition::Left: return {left - r, top, left, bottom};
    case RelPosition::Right: return {right, top, right + r, bottom};
    case RelPosition::Above: return {left, top - r, right, top};
    case RelPosition::Below: return {left, bottom, right, bottom + r};
    case RelPosition::SuperScript: return {right, top - g.reach * h, right + r, top + g.script_band * h};
    case RelPosition::SubScript: return {right, bottom - g.script_band * h, right + r, bottom + g.reach * h};
    case RelPosition::UpperLeft: return {left - r, top - g.reach * h, left, top + g.script_band * h};
    case RelPosition::LowerLeft: return {left - r, bottom - g.script_band * h, left, bottom + g.reach * h};
    case RelPosition::Inside: return {left + g.inset * w, top + g.inset * h, right - g.inset * w, bottom - g.inset * h};
  }
  return a;
}

BBox grow(BBox b, double min_extent) {
  if (b.max_x - b.min_x < min_extent) {
    const double c = 0.5 * (b.min_x + b.max_x);
    b.min_x = c - min_extent / 2;
    b.max_x = c + min_extent / 2;
  }
  if (b.max_y - b.min_y < min_extent) {
    const double c = 0.5 * (b.min_y + b.max_y);
    b.min_y = c - min_extent / 2;
    b.max_y = c + min_extent / 2;
  }
  return b;
}

double oracle_overlap(const BBox& p, const BBox& r) {
  const double iw = std::max(0.0, std::min(p.max_x, r.max_x) - std::max(p.min_x, r.min_x));
  const double ih = std::max(0.0, std::min(p.max_y, r.max_y) - std::max(p.min_y, r.min_y));
  return 100.0 * iw * ih / ((p.max_x - p.min_x) * (p.max_y - p.min_y));
}

std::vector<char*> argv_of(const std::vector<std::string>& args) {
  std::vector<char*> out;
  for (const auto& a : args) out.push_back(const_cast<char*>(a.c_str()));
  out.push_back(nullptr);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

double exhaustive_best_np(const structure::SymbolInstance& sym, const std::vector<structure::SymbolInstance>& anchors,
                          const structure::PositionTable& table, const structure::RegionGeometry& geometry) {
  BBox scene = sym.bbox;
  for (const auto& a : anchors) scene = scene.united(a.bbox);
  const double eps = geometry.epsilon_box * std::hypot(scene.width(), scene.height());
  double best = 0.0;
  for (const auto& a : anchors)
    for (auto pos : structure::kAllPositions)
      best = std::max(best, oracle_overlap(grow(sym.bbox, eps), oracle_region(grow(a.bbox, eps), pos, geometry)) *
                                table.k(a.label, pos));
  return best;
}

CommandResult run_command(const std::vector<std::string>& argv) {
  TempDir dir("cmd");
  const auto out_path = (dir / "out").string(), err_path = (dir / "err").string();
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, 1, out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_addopen(&actions, 2, err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  auto args = argv_of(argv);
  pid_t pid = -1;
  const int rc = posix_spawn(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  CommandResult r;
  if (rc != 0) return r;
  int status = 0;
  ::waitpid(pid, &status, 0);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

Child::Child(const std::vector<std::string>& argv) {
  int fds[2];
  if (::pipe(fds) != 0) return;
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], 1);
  posix_spawn_file_actions_addclose(&actions, fds[0]);
  auto args = argv_of(argv);
  pid_t pid = -1;
  if (posix_spawn(&pid, args[0], &actions, nullptr, args.data(), environ) == 0) pid_ = pid;
  posix_spawn_file_actions_destroy(&actions);
  ::close(fds[1]);
  fd_ = fds[0];
}

Child::~Child() {
  terminate();
  if (fd_ >= 0) ::close(fd_);
}

std::string Child::read_line() {
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      auto line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[1024];
    const auto n = ::read(fd_, chunk, sizeof chunk);
    if (n <= 0) return std::exchange(buffer_, {});
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

int Child::terminate() {
  if (pid_ > 0 && !reaped_) {
    ::kill(pid_, SIGTERM);
    int status = 0;
    ::waitpid(pid_, &status, 0);
    reaped_ = true;
    status_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  }
  return status_;
}

nefclass::FuzzyModel random_model(std::mt19937_64& rng, int inputs, int classes, int terms, int rules,
                                  nefclass::TNorm tnorm) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> width(0.05, 0.5);
  std::vector<std::string> labels;
  for (int c = 0; c < classes; ++c) labels.push_back("c" + std::to_string(c));
  auto m = nefclass::make_model(labels, {0.02, std::max(1, inputs / 2)}, terms);
  // make_model sizes the partition from the feature length; rebuild it for odd input counts.
  m.partition.terms.assign(inputs, {});
  for (auto& dim : m.partition.terms)
    for (int t = 0; t < terms; ++t) dim.push_back({unit(rng), width(rng)});
  m.tnorm = tnorm;
  std::set<std::vector<int>> seen;
  std::uniform_int_distribution<int> term(0, terms - 1), cls(0, classes - 1);
  for (int guard = 0; static_cast<int>(m.rules.size()) < rules && guard < 1000; ++guard) {
    std::vector<int> a(inputs);
    for (auto& v : a) v = term(rng);
    if (seen.insert(a).second) m.rules.push_back({a, cls(rng)});
  }
  return m;
}

std::vector<double> random_point(std::mt19937_64& rng, int inputs) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> x(inputs);
  for (auto& v : x) v = unit(rng);
  return x;
}

std::vector<double> brute_force_scores(const nefclass::FuzzyModel& model, const std::vector<double>& x) {
  std::vector<double> scores(model.labels.size(), 0.0);
  for (const auto& rule : model.rules) {
    double act = 1.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      const auto& mf = model.partition.terms[d][rule.antecedent[d]];
      const double z = (x[d] - mf.c) / mf.sigma;
      const double mu = std::exp(-0.5 * z * z);
      act = model.tnorm == nefclass::TNorm::Min ? std::min(act, mu) : act * mu;
    }
    scores[rule.consequent] = std::max(scores[rule.consequent], act);
  }
  return scores;
}

std::vector<nefclass::LabeledSample> blobs(std::mt19937_64& rng, int dims, int per_class, double spread) {
  std::normal_distribution<double> noise(0.0, spread);
  std::vector<nefclass::LabeledSample> out;
  for (int c = 0; c < 2; ++c) {
    const double center = c == 0 ? 0.25 : 0.75;
    for (int i = 0; i < per_class; ++i) {
      features::FeatureVector x;
      for (int d = 0; d < dims; ++d) x.values.push_back(std::clamp(center + noise(rng), 0.0, 1.0));
      out.push_back({x, c});
    }
  }
  return out;
}

}  // namespace testing
