#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mathink/corpus.hpp"
#include "mathink/engine.hpp"
#include "mathink/expr.hpp"
#include "mathink/nefclass.hpp"
#include "mathink/structure.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

struct Golden {
  std::string name;
  mathink::expr::ExprNode tree;
  std::string latex;
};

/// Authored expressions covering fractions, scripts, roots, big operators
/// with limits, bracket groups and decimal numbers.
const std::vector<Golden>& golden_suite();

/// Ink for a tree with the true stroke labels attached.
std::vector<mathink::structure::RecognizedStroke> labeled_scene(const mathink::expr::ExprNode& tree,
                                                                const mathink::corpus::Jitter& jitter,
                                                                std::uint64_t seed, const std::string& id = "g");

/// Rules generated from noiseless corpus ink (T = 4, up to 12 rules per
/// class) with the default knowledge. Clean strokes classify to their true
/// class.
std::shared_ptr<const mathink::engine::ModelSnapshot> clean_snapshot();

/// Ink for a tree without noise, as drawn by the corpus generator.
mathink::corpus::Expression clean_ink(const mathink::expr::ExprNode& tree, const std::string& id = "e");

/// Highest NP over every anchor and position, from the region definitions
/// and box inflation written out independently of the library.
double exhaustive_best_np(const mathink::structure::SymbolInstance& sym,
                          const std::vector<mathink::structure::SymbolInstance>& anchors,
                          const mathink::structure::PositionTable& table,
                          const mathink::structure::RegionGeometry& geometry);

struct CommandResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

/// Runs a program to completion with captured stdout and stderr.
CommandResult run_command(const std::vector<std::string>& argv);

/// A child process whose stdout is readable line by line. Killed with
/// SIGTERM and reaped on destruction.
class Child {
 public:
  explicit Child(const std::vector<std::string>& argv);
  ~Child();
  Child(const Child&) = delete;
  Child& operator=(const Child&) = delete;
  /// Next stdout line, or empty at end of stream.
  std::string read_line();
  /// Sends SIGTERM and returns the exit status.
  int terminate();

 private:
  int pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
  bool reaped_ = false;
  int status_ = -1;
};

/// Random model with F inputs, C classes, T terms and the given rule count
/// (distinct antecedents).
mathink::nefclass::FuzzyModel random_model(std::mt19937_64& rng, int inputs, int classes, int terms, int rules,
                                           mathink::nefclass::TNorm tnorm = mathink::nefclass::TNorm::Min);

std::vector<double> random_point(std::mt19937_64& rng, int inputs);

/// Scores by a plain loop over every rule and dimension.
std::vector<double> brute_force_scores(const mathink::nefclass::FuzzyModel& model, const std::vector<double>& x);

/// Two Gaussian blobs in [0,1]^dims, n samples each.
std::vector<mathink::nefclass::LabeledSample> blobs(std::mt19937_64& rng, int dims, int per_class, double spread);

}  // namespace testing
