/* Copyright 2026 The cmfkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "cmf/semantic_encoder.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cmf {

static_assert(std::endian::native == std::endian::little,
              "binary artifact formats assume a little-endian host");

namespace {

constexpr std::string_view kBackboneFormat = "cmfkit-backbone/1";
constexpr std::string_view kTableMagic = "CMFEMB1\n";

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArtifactError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ArtifactError("cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw ArtifactError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
void put_pod(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_pod(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw ArtifactError("truncated binary artifact");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string hex_to_bytes(const std::string& hex) {
  std::string out(hex.size() / 2, '\0');
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<char>(std::stoi(hex.substr(2 * i, 2), nullptr, 16));
  }
  return out;
}

std::string bytes_to_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : bytes) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0xf]);
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::string matrix_bytes(const Eigen::MatrixXd& m) {
  std::string out;
  put_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_pod<double>(out, m(r, c));
  return out;
}

Eigen::MatrixXd matrix_from_bytes(std::string_view bytes) {
  std::size_t pos = 0;
  const auto rows = get_pod<std::uint64_t>(bytes, pos);
  const auto cols = get_pod<std::uint64_t>(bytes, pos);
  Eigen::MatrixXd m(rows, cols);
  for (std::uint64_t r = 0; r < rows; ++r)
    for (std::uint64_t c = 0; c < cols; ++c) m(r, c) = get_pod<double>(bytes, pos);
  if (pos != bytes.size()) throw ArtifactError("trailing bytes in adapter weights");
  return m;
}

std::string table_bytes(const EmbeddingTable& table) {
  std::string out(kTableMagic);
  put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(table.identifier().size()));
  out += table.identifier();
  put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(table.dimension()));
  // Sorted by digest so identical tables serialize identically.
  std::vector<const std::pair<const std::string, Eigen::VectorXd>*> rows;
  for (const auto& kv : table.rows()) rows.push_back(&kv);
  std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->first < b->first; });
  put_pod<std::uint64_t>(out, rows.size());
  for (const auto* kv : rows) {
    out += hex_to_bytes(kv->first);
    for (Eigen::Index i = 0; i < kv->second.size(); ++i) put_pod<double>(out, kv->second[i]);
  }
  return out;
}

EmbeddingTable table_from_bytes(std::string_view bytes) {
  if (bytes.substr(0, kTableMagic.size()) != kTableMagic) {
    throw ArtifactError("not an embedding table (bad magic)");
  }
  std::size_t pos = kTableMagic.size();
  const auto id_len = get_pod<std::uint32_t>(bytes, pos);
  if (pos + id_len > bytes.size()) throw ArtifactError("truncated binary artifact");
  std::string identifier(bytes.substr(pos, id_len));
  pos += id_len;
  const auto dim = get_pod<std::uint32_t>(bytes, pos);
  const auto count = get_pod<std::uint64_t>(bytes, pos);
  EmbeddingTable table(identifier, dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    if (pos + 32 > bytes.size()) throw ArtifactError("truncated binary artifact");
    std::string digest = bytes_to_hex(bytes.substr(pos, 32));
    pos += 32;
    Eigen::VectorXd v(dim);
    for (std::uint32_t i = 0; i < dim; ++i) v[i] = get_pod<double>(bytes, pos);
    table.put_digest(digest, std::move(v));
  }
  if (pos != bytes.size()) throw ArtifactError("trailing bytes in embedding table");
  return table;
}

// Dense adapter output W x for a sparse x.
Eigen::VectorXd project(const Eigen::MatrixXd& w, const SparseFeatures& x) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(w.rows());
  for (std::size_t k = 0; k < x.index.size(); ++k) u.noalias() += w.col(x.index[k]) * x.value[k];
  return u;
}

}  // namespace

std::string_view to_string(BackboneKind kind) {
  return kind == BackboneKind::kHashing ? "hashing" : "pretrained_transformer";
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw DomainError("cosine_similarity: dimension mismatch " + std::to_string(a.size()) +
                      " vs " + std::to_string(b.size()));
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine_similarity: zero vector has no angle");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine_similarity(a.values, b.values);
}

std::string HashingConfig::identifier() const {
  return "hashing/v1:m=" + std::to_string(dimension) + ":n=" + std::to_string(max_ngram) +
         ":salt=" + salt;
}

std::string sentence_digest(std::string_view text) { return sha256_hex(text); }

EmbeddingTable::EmbeddingTable(std::string identifier, std::size_t dimension)
    : identifier_(std::move(identifier)), dimension_(dimension) {}

void EmbeddingTable::put_digest(const std::string& digest_hex, Eigen::VectorXd values) {
  if (static_cast<std::size_t>(values.size()) != dimension_) {
    throw DomainError("embedding table " + identifier_ + " expects dimension " +
                      std::to_string(dimension_));
  }
  rows_[digest_hex] = std::move(values);
}

void EmbeddingTable::put(std::string_view text, Eigen::VectorXd values) {
  put_digest(sentence_digest(text), std::move(values));
}

const Eigen::VectorXd* EmbeddingTable::find(std::string_view text) const {
  return find_digest(sentence_digest(text));
}

const Eigen::VectorXd* EmbeddingTable::find_digest(const std::string& digest_hex) const {
  auto it = rows_.find(digest_hex);
  return it == rows_.end() ? nullptr : &it->second;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  write_file_atomic(path, table_bytes(*this));
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  return table_from_bytes(read_file(path));
}

EncoderBackbone EncoderBackbone::hashing(HashingConfig config) {
  if (config.dimension == 0) throw DomainError("hashing dimension must be positive");
  if (config.max_ngram < 1) throw DomainError("hashing max_ngram must be at least 1");
  EncoderBackbone b;
  b.loaded_ = true;
  b.kind_ = BackboneKind::kHashing;
  b.base_dimension_ = config.dimension;
  b.base_identifier_ = config.identifier();
  b.identifier_ = b.base_identifier_;
  b.hashing_ = std::move(config);
  return b;
}

EncoderBackbone EncoderBackbone::pretrained_transformer(std::string checkpoint_id,
                                                        std::shared_ptr<const EmbeddingTable> table) {
  if (!table || table->dimension() == 0) throw ArtifactError("transformer backbone needs an embedding table");
  EncoderBackbone b;
  b.loaded_ = true;
  b.kind_ = BackboneKind::kPretrainedTransformer;
  b.base_dimension_ = table->dimension();
  b.checkpoint_ = std::move(checkpoint_id);
  b.base_identifier_ = "transformer/" + b.checkpoint_;
  b.identifier_ = b.base_identifier_;
  b.table_ = std::move(table);
  return b;
}

std::size_t EncoderBackbone::dimension() const {
  return adapter_ ? static_cast<std::size_t>(adapter_->rows()) : base_dimension_;
}

EncoderBackbone EncoderBackbone::with_adapter(std::size_t output_dimension, std::uint64_t seed) const {
  if (!loaded_) throw Error("backbone not loaded");
  if (output_dimension == 0) throw DomainError("adapter dimension must be positive");
  Eigen::MatrixXd w;
  if (output_dimension == base_dimension_) {
    w = Eigen::MatrixXd::Identity(base_dimension_, base_dimension_);
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(output_dimension)));
    w.resize(output_dimension, base_dimension_);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = normal(rng);
  }
  return with_adapter_weights(std::move(w));
}

EncoderBackbone EncoderBackbone::with_adapter_weights(Eigen::MatrixXd weights) const {
  if (!loaded_) throw Error("backbone not loaded");
  if (static_cast<std::size_t>(weights.cols()) != base_dimension_) {
    throw DomainError("adapter input width must equal base dimension " +
                      std::to_string(base_dimension_));
  }
  EncoderBackbone b = *this;
  b.identifier_ = base_identifier_ + "+adapter/" + sha256_hex(matrix_bytes(weights)).substr(0, 16);
  b.adapter_ = std::move(weights);
  return b;
}

SparseFeatures EncoderBackbone::base_features(std::string_view text) const {
  if (!loaded_) throw Error("backbone not loaded");
  if (text.empty()) throw DomainError("cannot encode an empty sentence");
  SparseFeatures out;
  if (kind_ == BackboneKind::kPretrainedTransformer) {
    const Eigen::VectorXd* v = table_->find(text);
    if (!v) {
      throw Error("sentence not present in embedding table for " + checkpoint_ +
                  "; export it with cmfkit-embed first");
    }
    out.index.resize(v->size());
    std::iota(out.index.begin(), out.index.end(), 0u);
    out.value.assign(v->data(), v->data() + v->size());
    return out;
  }

  std::map<std::uint32_t, double> acc;
  const auto tokens = tokenize(text);
  const std::uint64_t seed = fnv1a64(hashing_.salt);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::string gram;
    for (int n = 1; n <= hashing_.max_ngram && i + n <= tokens.size(); ++n) {
      if (n > 1) gram.push_back('\x1e');
      gram += tokens[i + n - 1];
      const std::uint64_t h = fnv1a64(gram, seed ^ static_cast<std::uint64_t>(n));
      const auto bucket = static_cast<std::uint32_t>(h % hashing_.dimension);
      acc[bucket] += (h >> 63) ? -1.0 : 1.0;
    }
  }
  for (const auto& [k, v] : acc) {
    if (v == 0.0) continue;
    out.index.push_back(k);
    out.value.push_back(v);
  }
  return out;
}

EmbeddingVector EncoderBackbone::encode(std::string_view text) const {
  const SparseFeatures x = base_features(text);
  EmbeddingVector out;
  if (adapter_) {
    out.values = project(*adapter_, x);
  } else {
    out.values = Eigen::VectorXd::Zero(base_dimension_);
    for (std::size_t k = 0; k < x.index.size(); ++k) out.values[x.index[k]] += x.value[k];
  }
  return out;
}

EmbeddingVector EncoderBackbone::encode(const PseudoSentence& sentence) const {
  return encode(sentence.text);
}

std::vector<EmbeddingVector> EncoderBackbone::encode_batch(std::span<const PseudoSentence> sentences) const {
  std::vector<EmbeddingVector> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(encode(s));
  return out;
}

void FineTuneConfig::validate() const {
  if (epochs < 0) throw Error("fine-tune epochs must be non-negative");
  if (batch_size <= 0) throw Error("fine-tune batch_size must be positive");
  if (!(learning_rate > 0.0)) throw Error("fine-tune learning_rate must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw Error("fine-tune validation_fraction must lie in (0, 1)");
  }
}

double pair_loss(const EncoderBackbone& backbone, std::span<const ScenarioPair> pairs,
                 const SentenceMap& sentences) {
  std::map<std::string, Eigen::VectorXd> memo;
  auto emb = [&](const std::string& id) -> const Eigen::VectorXd& {
    auto it = memo.find(id);
    if (it != memo.end()) return it->second;
    auto s = sentences.find(id);
    if (s == sentences.end()) throw Error("no pseudo sentence for record " + id);
    return memo.emplace(id, backbone.encode(s->second).values).first->second;
  };
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : pairs) {
    const auto& a = emb(p.left_id);
    const auto& b = emb(p.right_id);
    if (a.norm() == 0.0 || b.norm() == 0.0) continue;
    const double d = cosine_similarity(a, b) - p.gold_score;
    sum += d * d;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

FineTuneResult fine_tune(const EncoderBackbone& backbone, const std::vector<ScenarioPair>& pairs,
                         const SentenceMap& sentences, const FineTuneConfig& config) {
  if (!backbone.trainable()) throw Error("backbone not trainable");
  if (pairs.empty()) throw Error("fine-tuning needs at least one pair");
  config.validate();

  FineTuneResult result;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * pairs.size()));
  if (pairs.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, pairs.size() - 1);
  else n_val = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? result.validation_pairs : result.train_pairs).push_back(pairs[order[i]]);
  }

  std::map<std::string, SparseFeatures> features;
  for (const auto& p : pairs) {
    for (const auto* id : {&p.left_id, &p.right_id}) {
      if (features.count(*id)) continue;
      auto s = sentences.find(*id);
      if (s == sentences.end()) throw Error("no pseudo sentence for record " + *id);
      features.emplace(*id, backbone.base_features(s->second.text));
    }
  }

  Eigen::MatrixXd w = *backbone.adapter();
  auto current = [&] { return backbone.with_adapter_weights(w); };
  result.train_loss.push_back(pair_loss(backbone, result.train_pairs, sentences));
  result.validation_loss.push_back(pair_loss(backbone, result.validation_pairs, sentences));

  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::int64_t step = 0;

  std::vector<std::size_t> train_order(result.train_pairs.size());
  std::iota(train_order.begin(), train_order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(train_order.begin(), train_order.end(), rng);
    for (std::size_t start = 0; start < train_order.size(); start += config.batch_size) {
      const std::size_t end = std::min(train_order.size(), start + config.batch_size);
      grad.setZero();
      std::size_t used = 0;
      for (std::size_t t = start; t < end; ++t) {
        const auto& p = result.train_pairs[train_order[t]];
        const auto& xa = features.at(p.left_id);
        const auto& xb = features.at(p.right_id);
        const Eigen::VectorXd u = project(w, xa);
        const Eigen::VectorXd v = project(w, xb);
        const double nu = u.norm(), nv = v.norm();
        if (nu == 0.0 || nv == 0.0) continue;
        const double c = u.dot(v) / (nu * nv);
        const double coef = 2.0 * (c - p.gold_score);
        const Eigen::VectorXd du = coef * (v / (nu * nv) - c * u / (nu * nu));
        const Eigen::VectorXd dv = coef * (u / (nu * nv) - c * v / (nv * nv));
        for (std::size_t k = 0; k < xa.index.size(); ++k) grad.col(xa.index[k]) += du * xa.value[k];
        for (std::size_t k = 0; k < xb.index.size(); ++k) grad.col(xb.index[k]) += dv * xb.value[k];
        ++used;
      }
      if (used == 0) continue;
      grad /= static_cast<double>(used);
      ++step;
      m1 = kBeta1 * m1 + (1.0 - kBeta1) * grad;
      m2 = kBeta2 * m2 + (1.0 - kBeta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(kBeta1, double(step));
      const double c2 = 1.0 - std::pow(kBeta2, double(step));
      w.array() -= config.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + kEps);
    }
    const EncoderBackbone snapshot = current();
    result.train_loss.push_back(pair_loss(snapshot, result.train_pairs, sentences));
    result.validation_loss.push_back(pair_loss(snapshot, result.validation_pairs, sentences));
  }
  result.backbone = config.epochs == 0 ? backbone : current();
  return result;
}

void save_backbone(const EncoderBackbone& backbone, const std::filesystem::path& dir) {
  if (!backbone.loaded()) throw Error("backbone not loaded");
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = kBackboneFormat;
  manifest["kind"] = std::string(to_string(backbone.kind()));
  manifest["identifier"] = backbone.identifier();
  manifest["dimension"] = backbone.dimension();
  manifest["base_dimension"] = backbone.base_dimension();
  manifest["trainable"] = backbone.trainable();
  if (backbone.kind() == BackboneKind::kHashing) {
    const auto& h = backbone.hashing_config();
    manifest["hashing"] = {{"dimension", h.dimension}, {"max_ngram", h.max_ngram}, {"salt", h.salt}};
  } else {
    manifest["checkpoint"] = backbone.checkpoint();
  }
  std::string payload;
  nlohmann::json files = nlohmann::json::array();
  if (backbone.adapter()) {
    const std::string bytes = matrix_bytes(*backbone.adapter());
    write_file_atomic(dir / "adapter.bin", bytes);
    payload += bytes;
    files.push_back("adapter.bin");
  }
  if (backbone.kind() == BackboneKind::kPretrainedTransformer) {
    const std::string bytes = table_bytes(*backbone.table());
    write_file_atomic(dir / "table.emb", bytes);
    payload += bytes;
    files.push_back("table.emb");
  }
  manifest["files"] = files;
  manifest["digest"] = sha256_hex(payload);
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

EncoderBackbone load_backbone(const std::filesystem::path& dir,
                              std::optional<std::size_t> expected_dimension) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw ArtifactError("corrupt backbone manifest: " + std::string(e.what()));
  }
  try {
    if (manifest.at("format").get<std::string>() != kBackboneFormat) {
      throw ArtifactError("unsupported backbone format " + manifest.at("format").dump());
    }
    const auto dimension = manifest.at("dimension").get<std::size_t>();
    if (expected_dimension && *expected_dimension != dimension) {
      throw ArtifactError("backbone dimension " + std::to_string(dimension) +
                          " does not match configured dimension " +
                          std::to_string(*expected_dimension));
    }
    std::map<std::string, std::string> blobs;
    std::string payload;
    for (const auto& f : manifest.at("files")) {
      const auto name = f.get<std::string>();
      blobs[name] = read_file(dir / name);
      payload += blobs[name];
    }
    const std::string digest = sha256_hex(payload);
    if (digest != manifest.at("digest").get<std::string>()) {
      throw ArtifactError("backbone digest mismatch: manifest " +
                          manifest.at("digest").get<std::string>() + ", payload " + digest);
    }
    EncoderBackbone base;
    if (manifest.at("kind").get<std::string>() == "hashing") {
      const auto& h = manifest.at("hashing");
      HashingConfig cfg;
      cfg.dimension = h.at("dimension").get<std::size_t>();
      cfg.max_ngram = h.at("max_ngram").get<int>();
      cfg.salt = h.at("salt").get<std::string>();
      base = EncoderBackbone::hashing(cfg);
    } else {
      auto table = std::make_shared<EmbeddingTable>(table_from_bytes(blobs.at("table.emb")));
      base = EncoderBackbone::pretrained_transformer(manifest.at("checkpoint").get<std::string>(),
                                                     std::move(table));
    }
    EncoderBackbone out = blobs.count("adapter.bin")
                              ? base.with_adapter_weights(matrix_from_bytes(blobs.at("adapter.bin")))
                              : base;
    if (out.identifier() != manifest.at("identifier").get<std::string>() || out.dimension() != dimension) {
      throw ArtifactError("backbone manifest identifier/dimension inconsistent with payload");
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError("invalid backbone manifest: " + std::string(e.what()));
  }
}

EmbeddingCache::EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path EmbeddingCache::file_for(const std::string& identifier) const {
  return dir_ / (sha256_hex(identifier).substr(0, 16) + ".emb");
}

EmbeddingTable& EmbeddingCache::table_for(const std::string& identifier, std::size_t dimension) {
  auto it = tables_.find(identifier);
  if (it != tables_.end()) return it->second;
  const auto path = file_for(identifier);
  EmbeddingTable table(identifier, dimension);
  if (std::filesystem::exists(path)) {
    try {
      EmbeddingTable loaded = EmbeddingTable::load(path);
      if (loaded.identifier() == identifier) table = std::move(loaded);
    } catch (const ArtifactError&) {
      // Unreadable cache file: start fresh, it is rewritten on flush.
    }
  }
  return tables_.emplace(identifier, std::move(table)).first->second;
}

std::optional<Eigen::VectorXd> EmbeddingCache::get(const std::string& identifier, std::string_view text) {
  std::lock_guard lock(mu_);
  auto& table = table_for(identifier, 0);
  if (const auto* v = table.find(text)) return *v;
  return std::nullopt;
}

void EmbeddingCache::put(const std::string& identifier, std::string_view text,
                         const Eigen::VectorXd& values) {
  std::lock_guard lock(mu_);
  auto& table = table_for(identifier, static_cast<std::size_t>(values.size()));
  if (table.dimension() == 0) table = EmbeddingTable(identifier, values.size());
  table.put(text, values);
  dirty_[identifier] = true;
}

EmbeddingVector EmbeddingCache::encode(const EncoderBackbone& backbone, std::string_view text) {
  if (auto v = get(backbone.identifier(), text)) return EmbeddingVector{std::move(*v), false};
  EmbeddingVector e = backbone.encode(text);
  put(backbone.identifier(), text, e.values);
  return e;
}

void EmbeddingCache::flush() {
  std::lock_guard lock(mu_);
  for (auto& [identifier, dirty] : dirty_) {
    if (!dirty) continue;
    tables_.at(identifier).save(file_for(identifier));
    dirty = false;
  }
}

}  // namespace cmf
