#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "depx/errors.hpp"
#include "depx/log.hpp"
#include "depx/numerics/random.hpp"
#include "depx/text/unicode.hpp"

namespace depx::embedding {

inline constexpr std::size_t kWordDim = 300;
inline constexpr std::size_t kSentenceDim = 768;
inline constexpr std::size_t kTableBuckets = 2'000'000;
inline constexpr std::size_t kSyntheticBuckets = 4'096;

// Key -> vector rows loaded from the TSV interchange format:
//   #dim=<d>
//   key<TAB>v1<TAB>...<TAB>vd
// Keys are normalized on load so lookups match normalized queries.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 0) : dim_(dim) {}

  static EmbeddingTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open embedding table " + path);
    return parse(in, path);
  }

  static EmbeddingTable parse(std::istream& in, const std::string& source = "<stream>") {
    std::string line;
    std::size_t lineno = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line.rfind("#dim=", 0) == 0) {
        try {
          dim = std::stoul(line.substr(5));
        } catch (const std::exception&) {
          throw ParseError(source, lineno, "bad #dim header");
        }
        break;
      }
      throw ParseError(source, lineno, "expected #dim=<d> header");
    }
    if (dim == 0) throw ParseError(source, lineno, "missing or zero #dim header");
    EmbeddingTable table(dim);
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string_view> fields;
      std::string_view rest(line);
      for (std::size_t pos; (pos = rest.find('\t')) != std::string_view::npos; rest.remove_prefix(pos + 1))
        fields.push_back(rest.substr(0, pos));
      fields.push_back(rest);
      if (fields.size() != dim + 1) {
        throw ParseError(source, lineno,
                         "expected " + std::to_string(dim + 1) + " fields, found " + std::to_string(fields.size()));
      }
      std::vector<double> v(dim);
      for (std::size_t k = 0; k < dim; ++k) {
        std::string field(fields[k + 1]);
        std::size_t used = 0;
        try {
          v[k] = std::stod(field, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != field.size() || !std::isfinite(v[k])) throw ParseError(source, lineno, "bad number \"" + field + "\"");
      }
      const std::string key = text::normalize(fields[0]);
      if (key.empty()) throw ParseError(source, lineno, "empty key");
      if (!table.insert(key, std::move(v))) log::warn(source + ":" + std::to_string(lineno) + ": duplicate key \"" + key + "\" ignored");
    }
    return table;
  }

  // Returns false when the (already normalized) key exists.
  bool insert(const std::string& key, std::vector<double> v) {
    if (v.size() != dim_) throw ContractError("embedding row has dimension " + std::to_string(v.size()));
    return rows_.emplace(key, std::move(v)).second;
  }

  const std::vector<double>* find(const std::string& normalized_key) const {
    auto it = rows_.find(normalized_key);
    return it == rows_.end() ? nullptr : &it->second;
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return rows_.size(); }

 private:
  std::size_t dim_;
  std::unordered_map<std::string, std::vector<double>> rows_;
};

// Seeded standard-normal vector scaled by `scale`.
inline std::vector<double> gaussian_vector(std::uint64_t seed, std::size_t dim, double scale) {
  Rng rng(seed);
  std::vector<double> v(dim);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// Word-level vectors. Table hits return the stored row; everything else is the
// mean of hashed character n-gram (n = 3..6 over "<token>") bucket vectors.
class WordEmbedder {
 public:
  static constexpr int kMinN = 3;
  static constexpr int kMaxN = 6;

  static WordEmbedder synthetic(std::uint64_t seed, std::size_t dim = kWordDim, std::size_t buckets = kSyntheticBuckets) {
    return WordEmbedder(nullptr, seed, dim, buckets);
  }

  static WordEmbedder from_table(EmbeddingTable table, std::uint64_t seed, std::size_t buckets = kTableBuckets) {
    const std::size_t dim = table.dim();
    return WordEmbedder(std::make_shared<const EmbeddingTable>(std::move(table)), seed, dim, buckets);
  }

  std::size_t dimension() const { return dim_; }
  std::size_t buckets() const { return buckets_; }
  bool has_table() const { return table_ != nullptr; }

  std::vector<double> embed(std::string_view token) const {
    const std::string norm = text::normalize(token);
    if (norm.empty()) throw ContractError("embed_word: empty token");
    if (table_) {
      if (const auto* row = table_->find(norm)) return *row;
    }
    std::vector<double> acc(dim_, 0.0);
    const auto grams = char_ngrams(norm);
    for (const auto& g : grams) {
      const auto b = bucket_vector(bucket_of(g));
      for (std::size_t k = 0; k < dim_; ++k) acc[k] += b[k];
    }
    for (double& x : acc) x /= static_cast<double>(grams.size());
    return acc;
  }

  // Character n-grams (in code points) of "<" + token + ">".
  static std::vector<std::string> char_ngrams(std::string_view normalized_token) {
    auto cps = text::code_points(normalized_token);
    cps.insert(cps.begin(), U'<');
    cps.push_back(U'>');
    std::vector<std::string> out;
    for (int n = kMinN; n <= kMaxN; ++n) {
      const auto len = static_cast<std::size_t>(n);
      if (cps.size() < len) break;
      for (std::size_t i = 0; i + len <= cps.size(); ++i) out.push_back(text::to_utf8(cps, i, i + len));
    }
    return out;
  }

  std::size_t bucket_of(std::string_view gram) const { return static_cast<std::size_t>(fnv1a64(gram) % buckets_); }

  std::vector<double> bucket_vector(std::size_t bucket) const {
    return gaussian_vector(derive_seed(seed_ ^ bucket, "word-bucket"), dim_, 1.0 / std::sqrt(static_cast<double>(dim_)));
  }

 private:
  WordEmbedder(std::shared_ptr<const EmbeddingTable> table, std::uint64_t seed, std::size_t dim, std::size_t buckets)
      : table_(std::move(table)), seed_(seed), dim_(dim), buckets_(buckets) {
    if (dim_ == 0 || buckets_ == 0) throw ConfigError("word embedder needs positive dimension and bucket count");
  }

  std::shared_ptr<const EmbeddingTable> table_;
  std::uint64_t seed_;
  std::size_t dim_;
  std::size_t buckets_;
};

// Sentence- and post-level vectors from one provider.
class SentenceEmbedder {
 public:
  enum class Mode { kSynthetic, kFileLookup };

  static SentenceEmbedder synthetic(std::uint64_t seed, std::size_t dim = kSentenceDim) {
    if (dim == 0) throw ConfigError("sentence embedder needs a positive dimension");
    return SentenceEmbedder(Mode::kSynthetic, nullptr, seed, dim);
  }

  static SentenceEmbedder from_table(EmbeddingTable table) {
    const std::size_t dim = table.dim();
    return SentenceEmbedder(Mode::kFileLookup, std::make_shared<const EmbeddingTable>(std::move(table)), 0, dim);
  }

  Mode mode() const { return mode_; }
  std::size_t dimension() const { return dim_; }

  std::vector<double> embed_sentence(std::string_view text) const { return embed(text); }
  std::vector<double> embed_post(std::string_view text) const { return embed(text); }

 private:
  SentenceEmbedder(Mode mode, std::shared_ptr<const EmbeddingTable> table, std::uint64_t seed, std::size_t dim)
      : mode_(mode), table_(std::move(table)), seed_(seed), dim_(dim) {}

  std::vector<double> embed(std::string_view raw) const {
    const std::string norm = text::normalize(raw);
    if (norm.empty()) throw ContractError("sentence embedding requested for empty text");
    if (mode_ == Mode::kFileLookup) {
      if (const auto* row = table_->find(norm)) return *row;
      throw MissingEmbeddingError(norm);
    }
    auto v = gaussian_vector(derive_seed(seed_, norm), dim_, 1.0);
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    const double inv = 1.0 / std::sqrt(n2);
    for (double& x : v) x *= inv;
    return v;
  }

  Mode mode_;
  std::shared_ptr<const EmbeddingTable> table_;
  std::uint64_t seed_;
  std::size_t dim_;
};

}  // namespace depx::embedding
