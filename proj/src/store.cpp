#include "mathink/store.hpp"

#include <atomic>
#include <fcntl.h>
#include <openssl/evp.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

namespace mathink::store {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw DataError((path.empty() ? std::string("/") : path) + ": " + message);
}

const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) fail(path + "/" + key, "missing");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

long long integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<long long>();
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

const json& array(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  return j;
}

void check_version(const json& j) {
  const auto v = integer(field(j, "version", ""), "/version");
  if (v != kFormatVersion)
    throw VersionError("/version: unsupported format version " + std::to_string(v) + " (expected " +
                       std::to_string(kFormatVersion) + ")");
}

std::mutex hook_mutex;
FaultHook fault_hook;

void fsync_path(const fs::path& p, int flags) {
  const int fd = ::open(p.c_str(), flags);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

}  // namespace

// ------------------------------------------------------------------ model

json to_json(const nefclass::FuzzyModel& m) {
  json terms = json::array();
  for (const auto& dim : m.partition.terms) {
    json d = json::array();
    for (const auto& mf : dim) d.push_back({{"c", mf.c}, {"sigma", mf.sigma}});
    terms.push_back(std::move(d));
  }
  json rules = json::array();
  for (const auto& r : m.rules) rules.push_back({{"antecedent", r.antecedent}, {"consequent", r.consequent}});
  return {{"inputs", m.inputs()},
          {"classes", m.classes()},
          {"labels", m.labels},
          {"features", {{"epsilon", m.feature_params.epsilon}, {"vertices", m.feature_params.vertices}}},
          {"tnorm", m.tnorm == nefclass::TNorm::Min ? "min" : "product"},
          {"reject_threshold", m.reject_threshold},
          {"max_rules_per_class", m.max_rules_per_class},
          {"partition", terms},
          {"rules", rules}};
}

nefclass::FuzzyModel model_from_json(const json& j, const std::string& path) {
  nefclass::FuzzyModel m;
  const auto& labels = array(field(j, "labels", path), path + "/labels");
  for (std::size_t i = 0; i < labels.size(); ++i) m.labels.push_back(text(labels[i], path + "/labels/" + std::to_string(i)));
  if (m.labels.empty()) fail(path + "/labels", "model has no classes");

  const auto& feat = field(j, "features", path);
  m.feature_params.epsilon = number(field(feat, "epsilon", path + "/features"), path + "/features/epsilon");
  m.feature_params.vertices = static_cast<int>(integer(field(feat, "vertices", path + "/features"), path + "/features/vertices"));
  if (m.feature_params.vertices < 2) fail(path + "/features/vertices", "needs at least 2 vertices");

  const auto tnorm = text(field(j, "tnorm", path), path + "/tnorm");
  if (tnorm == "min")
    m.tnorm = nefclass::TNorm::Min;
  else if (tnorm == "product")
    m.tnorm = nefclass::TNorm::Product;
  else
    fail(path + "/tnorm", "unknown t-norm '" + tnorm + "'");
  m.reject_threshold = number(field(j, "reject_threshold", path), path + "/reject_threshold");
  if (m.reject_threshold < 0.0 || m.reject_threshold > 1.0) fail(path + "/reject_threshold", "outside [0,1]");
  m.max_rules_per_class = static_cast<int>(integer(field(j, "max_rules_per_class", path), path + "/max_rules_per_class"));
  if (m.max_rules_per_class < 1) fail(path + "/max_rules_per_class", "must be positive");

  const std::string pp = path + "/partition";
  const auto& terms = array(field(j, "partition", path), pp);
  for (std::size_t d = 0; d < terms.size(); ++d) {
    const std::string dp = pp + "/" + std::to_string(d);
    const auto& dim = array(terms[d], dp);
    if (dim.empty()) fail(dp, "dimension has no terms");
    std::vector<nefclass::GaussianMF> mfs;
    for (std::size_t t = 0; t < dim.size(); ++t) {
      const std::string tp = dp + "/" + std::to_string(t);
      nefclass::GaussianMF mf{number(field(dim[t], "c", tp), tp + "/c"), number(field(dim[t], "sigma", tp), tp + "/sigma")};
      if (mf.c < 0.0 || mf.c > 1.0) fail(tp + "/c", "center outside [0,1]");
      if (mf.sigma < nefclass::kSigmaMin || mf.sigma > nefclass::kSigmaMax) fail(tp + "/sigma", "width outside bounds");
      mfs.push_back(mf);
    }
    m.partition.terms.push_back(std::move(mfs));
  }
  if (static_cast<int>(m.inputs()) != m.feature_params.feature_length())
    fail(pp, "partition has " + std::to_string(m.inputs()) + " dimensions but the feature length is " +
                 std::to_string(m.feature_params.feature_length()));
  if (j.contains("inputs") && integer(j["inputs"], path + "/inputs") != static_cast<long long>(m.inputs()))
    fail(path + "/inputs", "does not match the partition");
  if (j.contains("classes") && integer(j["classes"], path + "/classes") != static_cast<long long>(m.classes()))
    fail(path + "/classes", "does not match the labels");

  const std::string rp = path + "/rules";
  const auto& rules = array(field(j, "rules", path), rp);
  for (std::size_t r = 0; r < rules.size(); ++r) {
    const std::string p = rp + "/" + std::to_string(r);
    nefclass::FuzzyRule rule;
    const auto& ante = array(field(rules[r], "antecedent", p), p + "/antecedent");
    if (ante.size() != m.inputs()) fail(p + "/antecedent", "wrong arity");
    for (std::size_t d = 0; d < ante.size(); ++d) {
      const auto t = integer(ante[d], p + "/antecedent/" + std::to_string(d));
      if (t < 0 || t >= static_cast<long long>(m.partition.terms[d].size()))
        fail(p + "/antecedent/" + std::to_string(d), "references a missing term");
      rule.antecedent.push_back(static_cast<int>(t));
    }
    const auto c = integer(field(rules[r], "consequent", p), p + "/consequent");
    if (c < 0 || c >= static_cast<long long>(m.classes())) fail(p + "/consequent", "references a missing class");
    rule.consequent = static_cast<int>(c);
    m.rules.push_back(std::move(rule));
  }
  try {
    m.validate();
  } catch (const DataError& e) {
    fail(path, e.what());
  }
  return m;
}

json to_json(const ModelFile& f) {
  return {{"version", kFormatVersion},
          {"model", to_json(f.model)},
          {"provenance",
           {{"trainer", f.provenance.trainer},
            {"config_digest", f.provenance.config_digest},
            {"seed", f.provenance.seed},
            {"fitness", f.provenance.fitness}}}};
}

ModelFile model_file_from_json(const json& j) {
  check_version(j);
  ModelFile f;
  f.model = model_from_json(field(j, "model", ""), "/model");
  if (j.contains("provenance")) {
    const auto& p = j["provenance"];
    f.provenance.trainer = text(field(p, "trainer", "/provenance"), "/provenance/trainer");
    f.provenance.config_digest = text(field(p, "config_digest", "/provenance"), "/provenance/config_digest");
    const auto& seed = field(p, "seed", "/provenance");
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0))
      fail("/provenance/seed", "expected a non-negative integer");
    f.provenance.seed = seed.get<std::uint64_t>();
    f.provenance.fitness = number(field(p, "fitness", "/provenance"), "/provenance/fitness");
  }
  return f;
}

// -------------------------------------------------------------- knowledge

json to_json(const KnowledgeFile& f) {
  return {{"version", kFormatVersion}, {"base", structure::to_json(f.base)}, {"overlay", structure::to_json(f.overlay)}};
}

KnowledgeFile knowledge_file_from_json(const json& j) {
  check_version(j);
  KnowledgeFile f;
  f.base = structure::knowledge_from_json(field(j, "base", ""), "/base");
  if (j.contains("overlay")) f.overlay = structure::overlay_from_json(j["overlay"], "/overlay");
  try {
    f.effective().validate();
  } catch (const DataError& e) {
    fail("/overlay", e.what());
  }
  return f;
}

// ------------------------------------------------------------ corrections

json to_json(const CorrectionsFile& f) {
  json samples = json::array();
  for (const auto& s : f.samples) samples.push_back({{"label", s.label}, {"features", s.x.values}});
  return {{"version", kFormatVersion}, {"capacity", kReservoirCapacity}, {"samples", samples}};
}

CorrectionsFile corrections_file_from_json(const json& j) {
  check_version(j);
  CorrectionsFile f;
  const auto& samples = array(field(j, "samples", ""), "/samples");
  if (samples.size() > kReservoirCapacity) fail("/samples", "more samples than the reservoir capacity");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string p = "/samples/" + std::to_string(i);
    CorrectionSample s;
    s.label = text(field(samples[i], "label", p), p + "/label");
    const auto& values = array(field(samples[i], "features", p), p + "/features");
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double v = number(values[k], p + "/features/" + std::to_string(k));
      if (v < 0.0 || v > 1.0) fail(p + "/features/" + std::to_string(k), "feature outside [0,1]");
      s.x.values.push_back(v);
    }
    f.samples.push_back(std::move(s));
  }
  return f;
}

// ------------------------------------------------------------------ files

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json parse_document(const std::string& content) {
  try {
    return json::parse(content);
  } catch (const json::parse_error& e) {
    std::size_t at = e.byte == 0 ? 0 : e.byte - 1;
    // The parser reports one past the last byte when input runs out.
    const bool ran_out = e.byte >= content.size() || std::string(e.what()).find("end of input") != std::string::npos;
    if (ran_out) throw PartialFileError("document is incomplete (truncated or interrupted write)", at);
    throw FormatError("malformed document", at);
  }
}

json read_document(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_document(ss.str());
  } catch (const PartialFileError& e) {
    throw PartialFileError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

void set_fault_hook(FaultHook hook) {
  std::lock_guard lock(hook_mutex);
  fault_hook = std::move(hook);
}

void atomic_write(const fs::path& path, const std::string& content) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  static std::atomic<unsigned> counter{0};
  const fs::path temp = dir / ("." + path.filename().string() + ".tmp." + std::to_string(::getpid()) + "." +
                               std::to_string(counter++));
  FaultHook hook;
  {
    std::lock_guard lock(hook_mutex);
    hook = fault_hook;
  }
  {
    const int fd = ::open(temp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) throw Error("cannot create " + temp.string());
    std::size_t written = 0;
    while (written < content.size()) {
      const auto n = ::write(fd, content.data() + written, content.size() - written);
      if (n <= 0) {
        ::close(fd);
        fs::remove(temp);
        throw Error("write failed for " + temp.string());
      }
      written += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
  }
  if (hook) hook(FaultPoint::TempWritten, temp);
  if (hook) hook(FaultPoint::BeforeRename, temp);
  fs::rename(temp, path);
  fsync_path(dir, O_RDONLY | O_DIRECTORY);
}

ModelFile load_model(const fs::path& path) {
  try {
    return model_file_from_json(read_document(path));
  } catch (const VersionError& e) {
    throw VersionError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_model(const fs::path& path, const ModelFile& file) {
  file.model.validate();
  atomic_write(path, dump(to_json(file)));
}

KnowledgeFile load_knowledge(const fs::path& path) {
  try {
    return knowledge_file_from_json(read_document(path));
  } catch (const VersionError& e) {
    throw VersionError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_knowledge(const fs::path& path, const KnowledgeFile& file) {
  file.effective().validate();
  atomic_write(path, dump(to_json(file)));
}

CorrectionsFile load_corrections(const fs::path& path) {
  try {
    return corrections_file_from_json(read_document(path));
  } catch (const VersionError& e) {
    throw VersionError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_corrections(const fs::path& path, const CorrectionsFile& file) {
  if (file.samples.size() > kReservoirCapacity) throw DataError("reservoir over capacity");
  atomic_write(path, dump(to_json(file)));
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

DirectoryLock::DirectoryLock(const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path lock = dir / ".lock";
  fd_ = ::open(lock.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd_ < 0) throw Error("cannot open lock file " + lock.string());
  if (::flock(fd_, LOCK_EX) != 0) {
    ::close(fd_);
    throw Error("cannot lock " + lock.string());
  }
}

DirectoryLock::~DirectoryLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

// ------------------------------------------------------------------ store

Store::Store(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

bool Store::has_model() const { return fs::exists(model_path()); }

ModelFile Store::load_model() const { return store::load_model(model_path()); }

void Store::save_model(const ModelFile& file) {
  DirectoryLock lock(dir_);
  store::save_model(model_path(), file);
}

KnowledgeFile Store::load_knowledge(const structure::Knowledge& seed_base) const {
  if (!fs::exists(knowledge_path())) return {seed_base, {}};
  return store::load_knowledge(knowledge_path());
}

void Store::save_knowledge(const KnowledgeFile& file) {
  DirectoryLock lock(dir_);
  store::save_knowledge(knowledge_path(), file);
}

CorrectionsFile Store::load_corrections() const {
  if (!fs::exists(corrections_path())) return {};
  return store::load_corrections(corrections_path());
}

void Store::record_correction(const CorrectionSample& sample, const std::vector<std::string>& known_labels,
                              const structure::KnowledgeOverlay& updates, const structure::Knowledge& seed_base,
                              bool allow_new_label) {
  if (!allow_new_label && std::find(known_labels.begin(), known_labels.end(), sample.label) == known_labels.end())
    throw DataError("unknown label '" + sample.label + "'; adding a class must be requested explicitly");
  DirectoryLock lock(dir_);
  auto corrections = load_corrections();
  corrections.samples.push_back(sample);
  while (corrections.samples.size() > kReservoirCapacity) corrections.samples.erase(corrections.samples.begin());
  if (!updates.empty()) {
    auto knowledge = load_knowledge(seed_base);
    for (const auto& rule : updates.rules) {
      auto it = std::find_if(knowledge.overlay.rules.begin(), knowledge.overlay.rules.end(),
                             [&](const structure::HeuristicRule& r) { return r.id == rule.id; });
      if (it != knowledge.overlay.rules.end())
        *it = rule;
      else
        knowledge.overlay.rules.push_back(rule);
    }
    for (const auto& [label, row] : updates.positions) knowledge.overlay.positions[label] = row;
    store::save_knowledge(knowledge_path(), knowledge);
  }
  store::save_corrections(corrections_path(), corrections);
}

}  // namespace mathink::store
