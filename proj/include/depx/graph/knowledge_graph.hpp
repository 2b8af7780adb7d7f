#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "depx/embedding/providers.hpp"
#include "depx/errors.hpp"
#include "depx/log.hpp"
#include "depx/numerics/tensor.hpp"

namespace depx::graph {

// One row of the triplet interchange file.
struct Triplet {
  std::string head;
  std::string relation;
  std::string tail;
  std::string head_summary;
  std::string tail_summary;

  auto key() const { return std::tie(head, relation, tail); }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t pos; (pos = line.find('\t', start)) != std::string::npos; start = pos + 1)
    out.push_back(line.substr(start, pos - start));
  out.push_back(line.substr(start));
  return out;
}

}  // namespace detail

// Reads `head<TAB>relation<TAB>tail<TAB>head_summary<TAB>tail_summary` rows.
// Lines starting with '#' and blank lines are skipped; repeated
// (head, relation, tail) rows are kept once; self-loops are dropped.
inline std::vector<Triplet> parse_triplets(std::istream& in, const std::string& source = "<stream>") {
  std::vector<Triplet> out;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty() || line[0] == '#') continue;
    auto f = detail::split_tabs(line);
    if (f.size() != 5) {
      throw ParseError(source, lineno, "expected 5 tab-separated fields, found " + std::to_string(f.size()));
    }
    for (auto& x : f) {
      x = detail::trim(x);
      if (x.empty()) throw ParseError(source, lineno, "empty field");
    }
    Triplet t{f[0], f[1], f[2], f[3], f[4]};
    if (t.head == t.tail) {
      log::warn(source + ":" + std::to_string(lineno) + ": self-loop on \"" + t.head + "\" dropped");
      continue;
    }
    if (!seen.emplace(t.head, t.relation, t.tail).second) continue;
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<Triplet> ingest_triplets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open triplet file " + path);
  return parse_triplets(in, path);
}

inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ContractError("cosine: length mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw ContractError("cosine: zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

// Symptom anchors (one per BDI-II item in the bundled file).
struct SymptomLexicon {
  struct Entry {
    std::string name;
    std::string description;
    std::vector<double> embedding;
  };
  std::vector<Entry> entries;

  // One symptom per line: `name` or `name<TAB>description`. The description,
  // when present, is what gets embedded.
  static SymptomLexicon parse(std::istream& in, const embedding::SentenceEmbedder& embedder,
                              const std::string& source = "<stream>") {
    SymptomLexicon lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (detail::trim(line).empty() || line[0] == '#') continue;
      auto f = detail::split_tabs(line);
      if (f.size() > 2) throw ParseError(source, lineno, "expected `name` or `name<TAB>description`");
      Entry e{detail::trim(f[0]), f.size() == 2 ? detail::trim(f[1]) : std::string{}, {}};
      if (e.name.empty()) throw ParseError(source, lineno, "empty symptom name");
      e.embedding = embedder.embed_sentence(e.description.empty() ? e.name : e.description);
      for (double x : e.embedding) {
        if (!std::isfinite(x)) throw ParseError(source, lineno, "non-finite symptom embedding");
      }
      lex.entries.push_back(std::move(e));
    }
    return lex;
  }

  static SymptomLexicon load(const std::string& path, const embedding::SentenceEmbedder& embedder) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open symptom lexicon " + path);
    return parse(in, embedder, path);
  }

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
};

struct GraphNode {
  std::string entity;
  std::string summary;
  std::vector<double> feature;
};

struct GraphEdge {
  std::size_t head;
  std::string relation;
  std::size_t tail;
};

// Domain knowledge graph: nodes with summary features, directed labelled
// triplet edges, and the symmetrised binary adjacency used for message passing.
class KnowledgeGraph {
 public:
  static constexpr int kFormatVersion = 1;

  KnowledgeGraph() = default;
  KnowledgeGraph(std::vector<GraphNode> nodes, std::vector<GraphEdge> edges)
      : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    validate();
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  bool empty() const { return nodes_.empty(); }
  std::size_t feature_dim() const { return nodes_.empty() ? 0 : nodes_.front().feature.size(); }
  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }

  std::vector<std::pair<std::size_t, std::size_t>> edge_pairs() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(edges_.size());
    for (const auto& e : edges_) out.emplace_back(e.head, e.tail);
    return out;
  }

  // a[j][k] = 1 iff some edge joins j and k in either direction.
  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> a(nodes_.size(), std::vector<int>(nodes_.size(), 0));
    for (const auto& e : edges_) a[e.head][e.tail] = a[e.tail][e.head] = 1;
    return a;
  }

  // Node features stacked as [m x d].
  Tensor feature_matrix() const {
    std::vector<double> v;
    v.reserve(nodes_.size() * feature_dim());
    for (const auto& n : nodes_) v.insert(v.end(), n.feature.begin(), n.feature.end());
    return Tensor({nodes_.size(), feature_dim()}, std::move(v));
  }

  // Same graph with node i moved to position perm[i]; edges follow their endpoints.
  KnowledgeGraph relabeled(const std::vector<std::size_t>& perm) const {
    if (perm.size() != nodes_.size()) throw ContractError("relabel: permutation size mismatch");
    std::vector<GraphNode> nodes(nodes_.size());
    std::vector<bool> hit(nodes_.size(), false);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      if (perm[i] >= nodes_.size() || hit[perm[i]]) throw ContractError("relabel: not a permutation");
      hit[perm[i]] = true;
      nodes[perm[i]] = nodes_[i];
    }
    std::vector<GraphEdge> edges;
    for (const auto& e : edges_) edges.push_back({perm[e.head], e.relation, perm[e.tail]});
    return KnowledgeGraph(std::move(nodes), std::move(edges));
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = kFormatVersion;
    j["feature_dim"] = feature_dim();
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (const auto& n : nodes_) nodes.push_back({{"entity", n.entity}, {"summary", n.summary}, {"feature", n.feature}});
    auto& edges = j["edges"] = nlohmann::json::array();
    for (const auto& e : edges_) edges.push_back({{"head", e.head}, {"relation", e.relation}, {"tail", e.tail}});
    return j;
  }

  static KnowledgeGraph from_json(const nlohmann::json& j) {
    try {
      if (j.at("format").get<int>() != kFormatVersion) {
        throw ValidationError("unsupported graph format " + j.at("format").dump());
      }
      std::vector<GraphNode> nodes;
      for (const auto& n : j.at("nodes")) {
        nodes.push_back({n.at("entity").get<std::string>(), n.at("summary").get<std::string>(),
                         n.at("feature").get<std::vector<double>>()});
      }
      std::vector<GraphEdge> edges;
      for (const auto& e : j.at("edges")) {
        edges.push_back({e.at("head").get<std::size_t>(), e.at("relation").get<std::string>(), e.at("tail").get<std::size_t>()});
      }
      KnowledgeGraph g(std::move(nodes), std::move(edges));
      if (!g.empty() && j.contains("feature_dim") && j.at("feature_dim").get<std::size_t>() != g.feature_dim()) {
        throw ValidationError("graph feature_dim does not match node features");
      }
      return g;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("malformed graph JSON: ") + e.what());
    }
  }

  static KnowledgeGraph load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open graph file " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + ": " + e.what());
    }
    return from_json(j);
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write graph file " + path);
    out << to_json().dump(1) << '\n';
  }

 private:
  void validate() const {
    const std::size_t d = feature_dim();
    for (const auto& n : nodes_) {
      if (n.feature.size() != d) throw ValidationError("node \"" + n.entity + "\" has inconsistent feature length");
      for (double x : n.feature) {
        if (!std::isfinite(x)) throw ValidationError("node \"" + n.entity + "\" has a non-finite feature");
      }
    }
    std::set<std::tuple<std::size_t, std::string, std::size_t>> seen;
    for (const auto& e : edges_) {
      if (e.head >= nodes_.size() || e.tail >= nodes_.size()) throw ValidationError("edge endpoint out of range");
      if (e.head == e.tail) throw ValidationError("self-loop edge on node " + std::to_string(e.head));
      if (!seen.emplace(e.head, e.relation, e.tail).second) throw ValidationError("duplicate edge");
    }
  }

  std::vector<GraphNode> nodes_;
  std::vector<GraphEdge> edges_;
};

// Builds the graph from triplets, keeping entities whose summary embedding
// reaches `threshold` cosine similarity with at least one symptom anchor.
// Nodes are ordered by entity name and edges by (head, relation, tail), so the
// result does not depend on row order. An entity described by several
// summaries uses the lexicographically smallest.
inline KnowledgeGraph filter_by_symptoms(const std::vector<Triplet>& triplets, const SymptomLexicon& lexicon,
                                         const embedding::SentenceEmbedder& embedder, double threshold = 0.5) {
  if (lexicon.empty()) throw ConfigError("symptom lexicon is empty");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("cosine threshold must lie in [0, 1]");

  std::map<std::string, std::string> summary;
  auto note = [&](const std::string& entity, const std::string& s) {
    auto [it, fresh] = summary.emplace(entity, s);
    if (!fresh && s < it->second) it->second = s;
  };
  for (const auto& t : triplets) {
    note(t.head, t.head_summary);
    note(t.tail, t.tail_summary);
  }

  std::map<std::string, std::size_t> index;
  std::vector<GraphNode> nodes;
  for (const auto& [entity, text] : summary) {
    auto feature = embedder.embed_sentence(text);
    double best = -1.0;
    for (const auto& s : lexicon.entries) best = std::max(best, cosine(feature, s.embedding));
    if (best >= threshold) {
      index.emplace(entity, nodes.size());
      nodes.push_back({entity, text, std::move(feature)});
    } else {
      log::debug("entity \"" + entity + "\" dropped (max symptom cosine " + std::to_string(best) + ")");
    }
  }

  std::vector<std::tuple<std::size_t, std::string, std::size_t>> kept;
  for (const auto& t : triplets) {
    auto h = index.find(t.head), r = index.find(t.tail);
    if (h != index.end() && r != index.end()) kept.emplace_back(h->second, t.relation, r->second);
  }
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  std::vector<GraphEdge> edges;
  for (auto& [h, rel, t] : kept) edges.push_back({h, rel, t});
  return KnowledgeGraph(std::move(nodes), std::move(edges));
}

}  // namespace depx::graph
