#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mathink/error.hpp"
#include "mathink/knowledge.hpp"
#include "mathink/nefclass.hpp"

namespace mathink::store {

namespace fs = std::filesystem;

inline constexpr int kFormatVersion = 1;
inline constexpr std::size_t kReservoirCapacity = 1024;

/// A document ended before it was complete (interrupted write or truncation).
class PartialFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Document has a different format version.
class VersionError : public DataError {
 public:
  using DataError::DataError;
};

struct Provenance {
  std::string trainer;        // "ga", "cg" or "none"
  std::string config_digest;  // hex SHA-256 of the canonical training config
  std::uint64_t seed = 0;
  double fitness = 0.0;
  bool operator==(const Provenance&) const = default;
};

struct ModelFile {
  nefclass::FuzzyModel model;
  Provenance provenance;
  bool operator==(const ModelFile&) const = default;
};

struct KnowledgeFile {
  structure::Knowledge base;
  structure::KnowledgeOverlay overlay;

  structure::Knowledge effective() const { return structure::apply_overlay(base, overlay); }
  bool operator==(const KnowledgeFile&) const = default;
};

struct CorrectionSample {
  features::FeatureVector x;
  std::string label;
  bool operator==(const CorrectionSample&) const = default;
};

struct CorrectionsFile {
  std::vector<CorrectionSample> samples;  // oldest first
  bool operator==(const CorrectionsFile&) const = default;
};

// JSON mapping. Readers report the first violation with a JSON pointer.
nlohmann::json to_json(const nefclass::FuzzyModel& model);
nefclass::FuzzyModel model_from_json(const nlohmann::json& j, const std::string& path = "");
nlohmann::json to_json(const ModelFile& file);
ModelFile model_file_from_json(const nlohmann::json& j);
nlohmann::json to_json(const KnowledgeFile& file);
KnowledgeFile knowledge_file_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CorrectionsFile& file);
CorrectionsFile corrections_file_from_json(const nlohmann::json& j);

/// Canonical text form: two-space indent, trailing newline.
std::string dump(const nlohmann::json& j);

/// Parses a whole document. Input that ends early raises PartialFileError.
nlohmann::json parse_document(const std::string& text);
nlohmann::json read_document(const fs::path& path);

/// Points in atomic_write where a test can simulate a crash by throwing.
enum class FaultPoint { TempWritten, BeforeRename };
using FaultHook = std::function<void(FaultPoint, const fs::path& temp)>;
void set_fault_hook(FaultHook hook);

/// Write to a temporary sibling, fsync, then rename over the target.
void atomic_write(const fs::path& path, const std::string& text);

ModelFile load_model(const fs::path& path);
void save_model(const fs::path& path, const ModelFile& file);
KnowledgeFile load_knowledge(const fs::path& path);
void save_knowledge(const fs::path& path, const KnowledgeFile& file);
CorrectionsFile load_corrections(const fs::path& path);
void save_corrections(const fs::path& path, const CorrectionsFile& file);

/// Hex SHA-256.
std::string sha256_hex(const std::string& data);

/// Exclusive advisory lock on <dir>/.lock for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  int fd_ = -1;
};

/// A store directory holding model.json, knowledge.json and corrections.json.
/// knowledge.json carries the base it was seeded from plus the user overlay;
/// only the overlay ever changes.
class Store {
 public:
  explicit Store(fs::path dir);

  const fs::path& dir() const { return dir_; }
  fs::path model_path() const { return dir_ / "model.json"; }
  fs::path knowledge_path() const { return dir_ / "knowledge.json"; }
  fs::path corrections_path() const { return dir_ / "corrections.json"; }

  bool has_model() const;
  ModelFile load_model() const;
  void save_model(const ModelFile& file);

  /// Creates knowledge.json from the given base when missing.
  KnowledgeFile load_knowledge(const structure::Knowledge& seed_base) const;
  void save_knowledge(const KnowledgeFile& file);

  CorrectionsFile load_corrections() const;

  /// Appends the sample (FIFO beyond the reservoir capacity) and merges the
  /// overlay updates. Both are durable before returning. A label outside
  /// known_labels needs allow_new_label.
  void record_correction(const CorrectionSample& sample, const std::vector<std::string>& known_labels,
                         const structure::KnowledgeOverlay& overlay_updates, const structure::Knowledge& seed_base,
                         bool allow_new_label = false);

 private:
  fs::path dir_;
};

}  // namespace mathink::store
