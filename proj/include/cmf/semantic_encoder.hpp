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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cmf/scenario_text.hpp"
#include "cmf/spsf.hpp"

namespace cmf {

enum class BackboneKind { kHashing, kPretrainedTransformer };

std::string_view to_string(BackboneKind kind);

struct EmbeddingVector {
  Eigen::VectorXd values;
  bool normalized = false;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

// Inner product of the l2-normalized vectors. Throws DomainError on a
// dimension mismatch or an all-zero vector.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Sparse view of a backbone's base representation (before any adapter).
struct SparseFeatures {
  std::vector<std::uint32_t> index;
  std::vector<double> value;
};

// Token n-gram feature hashing: text is lowercased and split on any
// non-alphanumeric byte; each unigram and bigram adds +/-1 to one of
// `dimension` buckets, so repeated tokens accumulate (frequency weighting).
struct HashingConfig {
  std::size_t dimension = 256;
  int max_ngram = 2;
  std::string salt = "cmfkit";

  std::string identifier() const;
};

// Embedding lookup keyed by sentence digest. Backs the pretrained transformer
// kind: vectors are produced offline by a sentence-transformers checkpoint
// and stored in the embedding-cache file format.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::string identifier, std::size_t dimension);

  const std::string& identifier() const { return identifier_; }
  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return rows_.size(); }

  void put_digest(const std::string& digest_hex, Eigen::VectorXd values);
  void put(std::string_view text, Eigen::VectorXd values);
  const Eigen::VectorXd* find(std::string_view text) const;
  const Eigen::VectorXd* find_digest(const std::string& digest_hex) const;
  const std::unordered_map<std::string, Eigen::VectorXd>& rows() const { return rows_; }

  // Binary format: "CMFEMB1\n", u32 identifier length, identifier bytes,
  // u32 dimension, u64 record count, then per record 32 raw digest bytes
  // followed by `dimension` little-endian float64 values.
  void save(const std::filesystem::path& path) const;  // write-temp-then-rename
  static EmbeddingTable load(const std::filesystem::path& path);

 private:
  std::string identifier_;
  std::size_t dimension_ = 0;
  std::unordered_map<std::string, Eigen::VectorXd> rows_;
};

// Digest used to key sentences in tables and caches.
std::string sentence_digest(std::string_view text);

class EncoderBackbone {
 public:
  EncoderBackbone() = default;  // not loaded; encode throws

  static EncoderBackbone hashing(HashingConfig config = {});
  static EncoderBackbone pretrained_transformer(std::string checkpoint_id,
                                               std::shared_ptr<const EmbeddingTable> table);

  bool loaded() const { return loaded_; }
  BackboneKind kind() const { return kind_; }
  const std::string& identifier() const { return identifier_; }
  std::size_t dimension() const;
  std::size_t base_dimension() const { return base_dimension_; }
  bool trainable() const { return adapter_.has_value(); }
  const HashingConfig& hashing_config() const { return hashing_; }
  const std::string& checkpoint() const { return checkpoint_; }
  const std::shared_ptr<const EmbeddingTable>& table() const { return table_; }
  const std::optional<Eigen::MatrixXd>& adapter() const { return adapter_; }

  // Trainable copy with a linear adapter on top of the frozen base encoder.
  // A square adapter starts at the identity, so it embeds exactly like the
  // base until trained; otherwise it starts as a seeded Gaussian projection.
  EncoderBackbone with_adapter(std::size_t output_dimension, std::uint64_t seed) const;
  // Same base, adapter weights replaced; identifier re-derived from weights.
  EncoderBackbone with_adapter_weights(Eigen::MatrixXd weights) const;

  SparseFeatures base_features(std::string_view text) const;
  EmbeddingVector encode(std::string_view text) const;
  EmbeddingVector encode(const PseudoSentence& sentence) const;
  std::vector<EmbeddingVector> encode_batch(std::span<const PseudoSentence> sentences) const;

 private:
  bool loaded_ = false;
  BackboneKind kind_ = BackboneKind::kHashing;
  std::string identifier_;
  std::string base_identifier_;
  std::size_t base_dimension_ = 0;
  HashingConfig hashing_;
  std::string checkpoint_;
  std::shared_ptr<const EmbeddingTable> table_;
  std::optional<Eigen::MatrixXd> adapter_;
};

struct FineTuneConfig {
  int epochs = 4;
  int batch_size = 32;
  double learning_rate = 2e-5;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;

  void validate() const;  // throws Error
};

struct FineTuneResult {
  EncoderBackbone backbone;
  std::vector<ScenarioPair> train_pairs;
  std::vector<ScenarioPair> validation_pairs;
  // Index 0 is the loss before training, then one entry per epoch.
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
};

using SentenceMap = std::map<std::string, PseudoSentence>;

// Mean of (cos(encode(left), encode(right)) - gold)^2 over the pairs. Pairs
// where either embedding is all-zero are skipped.
double pair_loss(const EncoderBackbone& backbone, std::span<const ScenarioPair> pairs,
                 const SentenceMap& sentences);

// Siamese fine-tuning of the adapter with Adam on the mean squared error
// between embedding cosine similarity and the pair's gold score. The input
// backbone is left untouched. Throws Error("backbone not trainable") for a
// backbone without an adapter and Error on empty pairs.
FineTuneResult fine_tune(const EncoderBackbone& backbone, const std::vector<ScenarioPair>& pairs,
                         const SentenceMap& sentences, const FineTuneConfig& config);

// Artifact directory: manifest.json {format, kind, identifier, dimension,
// base_dimension, digest, ...} plus adapter.bin and, for the transformer
// kind, table.emb. `digest` is the SHA-256 of the payload files.
void save_backbone(const EncoderBackbone& backbone, const std::filesystem::path& dir);
// Throws ArtifactError on digest mismatch or when `expected_dimension` is set
// and differs from the manifest.
EncoderBackbone load_backbone(const std::filesystem::path& dir,
                              std::optional<std::size_t> expected_dimension = std::nullopt);

// On-disk embedding cache keyed by (backbone identifier, sentence digest).
// One table file per identifier; a fine-tuned backbone has a new identifier,
// so its entries never collide with the base backbone's.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path dir);

  std::optional<Eigen::VectorXd> get(const std::string& identifier, std::string_view text);
  void put(const std::string& identifier, std::string_view text, const Eigen::VectorXd& values);
  EmbeddingVector encode(const EncoderBackbone& backbone, std::string_view text);
  void flush();
  std::filesystem::path file_for(const std::string& identifier) const;

 private:
  EmbeddingTable& table_for(const std::string& identifier, std::size_t dimension);

  std::filesystem::path dir_;
  std::mutex mu_;
  std::map<std::string, EmbeddingTable> tables_;
  std::map<std::string, bool> dirty_;
};

}  // namespace cmf
