#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "sgusql/query_graph.hpp"
#include "sgusql/schema.hpp"

namespace sgusql {

namespace sqlite {
class Database;
}

// ---------------------------------------------------------------------------
// String matching

// Lowercase, underscores as spaces.
std::string link_text(std::string_view s);
double trigram_jaccard(std::string_view a, std::string_view b);
double levenshtein_similarity(std::string_view a, std::string_view b);
// max(trigram Jaccard, 1 - normalised Levenshtein) on link_text forms.
double string_match_score(std::string_view anchor, std::string_view label);

// Query nodes worth linking: not a stopword, at least one letter.
bool is_content_token(const Token& t);

struct Candidate {
  std::size_t node = 0;  // schema node id
  double string_score = 0.0;
};

constexpr double kCandidateThreshold = 0.1;

std::vector<Candidate> generate_candidates(const Token& anchor, const SchemaGraph& sg,
                                           std::size_t k);

// ---------------------------------------------------------------------------
// Enclosing subgraph

enum class LinkRelation : std::uint8_t {
  forward_syntax,
  backward_syntax,
  none_syntax,
  has,
  primary_key,
  foreign_key,
  candidate_link,
  self_loop,
};
constexpr std::size_t kLinkRelations = 8;
std::string_view to_string(LinkRelation r);

struct SubgraphEdge {
  std::size_t source = 0;
  std::size_t target = 0;
  LinkRelation relation = LinkRelation::self_loop;
};

// Nodes 0..q-1 are the query tokens, q.. the schema part with the candidate
// first and its one-hop neighbours in ascending schema-node order.
struct EnclosingSubgraph {
  std::size_t query_size = 0;
  std::size_t anchor = 0;  // subgraph id == query node id
  std::size_t candidate = 0;  // subgraph id of s_k
  std::vector<std::size_t> schema_nodes;  // subgraph id - query_size -> schema node id
  std::vector<std::string> labels;        // per subgraph node: lemma or schema label
  std::vector<bool> is_schema;
  std::vector<SubgraphEdge> edges;        // materialised, without self loops
  std::size_t bridge_count() const;

  std::size_t size() const { return query_size + schema_nodes.size(); }
  std::optional<std::size_t> local_id(std::size_t schema_node) const;
  // Schema-part neighbours of a schema-part node (subgraph ids).
  std::vector<std::size_t> schema_neighbors(std::size_t local) const;
};

EnclosingSubgraph build_enclosing_subgraph(std::size_t anchor, std::size_t schema_node,
                                           const QueryGraph& qg, const SchemaGraph& sg);

// ---------------------------------------------------------------------------
// Model

struct LinkerConfig {
  std::size_t dim = 32;
  std::size_t layers = 2;
  std::size_t buckets = 4096;
  std::size_t k = 8;
  std::size_t epochs = 200;
  double lr = 0.05;
  // Per-step gradient norm cap.
  double clip_norm = 5.0;
  std::uint64_t seed = 42;
  bool query_side_update = false;
};

struct RgatLayer {
  std::array<Eigen::MatrixXd, kLinkRelations> w;  // dim x dim
  Eigen::VectorXd attention;                      // 2 dim
  Eigen::VectorXd bias;                           // dim
};

struct LinkerModel {
  std::size_t dim = 0;
  std::size_t buckets = 0;
  std::uint64_t seed = 0;
  bool query_side_update = false;
  Eigen::MatrixXd token_embedding;     // buckets x dim
  Eigen::MatrixXd label_embedding;     // buckets x dim
  Eigen::MatrixXd relation_embedding;  // relations x dim
  std::vector<RgatLayer> layers;
  Eigen::MatrixXd w_g, w_q, w_k;       // dim x dim

  std::size_t layer_count() const { return layers.size(); }
  std::size_t parameter_count() const;
  bool finite() const;

  static LinkerModel initialize(const LinkerConfig& cfg);
  static LinkerModel zeros(const LinkerConfig& cfg);
};

// Visits the dense parameters (everything but the embedding tables) of a
// model or gradient in file order.
template <class P, class F>
void visit_dense(P& p, F&& f) {
  f(p.relation_embedding);
  for (auto& l : p.layers) {
    for (auto& w : l.w) f(w);
    f(l.attention);
    f(l.bias);
  }
  f(p.w_g);
  f(p.w_q);
  f(p.w_k);
}

std::size_t embedding_bucket(std::string_view label, std::size_t buckets);

void save_model(const LinkerModel& m, const std::filesystem::path& path);
LinkerModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Forward pass and gradients

// Final-layer node embeddings, one row per subgraph node.
Eigen::MatrixXd rgat_encode(const EnclosingSubgraph& g, const LinkerModel& m);

struct CrossAggregation {
  Eigen::VectorXd global;        // h_g
  Eigen::VectorXd gates;         // alpha_j per schema-part node
  Eigen::MatrixXd updated;       // one row per schema-part node
};

// Global summary, gates and updates for schema-part nodes. `neighbors[j]` lists row indices into
// `candidates` adjacent to row j.
CrossAggregation cross_aggregate(const Eigen::MatrixXd& query,
                                 const Eigen::MatrixXd& candidates,
                                 const std::vector<std::vector<std::size_t>>& neighbors,
                                 const LinkerModel& m);

struct ScoreTrace {
  double logit = 0.0;
  double score = 0.5;
  Eigen::MatrixXd embeddings;
  CrossAggregation key_side;
  std::optional<CrossAggregation> query_side;
};

ScoreTrace score_subgraph(const EnclosingSubgraph& g, const LinkerModel& m);
double matching_score(const EnclosingSubgraph& g, const LinkerModel& m);

double contrastive_loss(double positive, const std::vector<double>& negatives);

// Gradient of a model, same layout. Embedding rows are sparse.
struct LinkerGradient {
  std::unordered_map<std::size_t, Eigen::VectorXd> token_rows, label_rows;
  Eigen::MatrixXd relation_embedding;
  std::vector<RgatLayer> layers;
  Eigen::MatrixXd w_g, w_q, w_k;

  explicit LinkerGradient(const LinkerModel& m);
  double norm() const;
  void apply(LinkerModel& m, double lr) const;
};

// Adds d(logit)/d(params) * upstream to `grad`.
void backprop_logit(const EnclosingSubgraph& g, const LinkerModel& m, double upstream,
                    LinkerGradient& grad);

// Loss of one anchor (gold subgraph first) and its gradient.
double anchor_loss(const std::vector<EnclosingSubgraph>& subgraphs, const LinkerModel& m,
                   LinkerGradient* grad = nullptr);

// ---------------------------------------------------------------------------
// Training

struct LinkExample {
  QueryGraph graph;
  std::size_t anchor = 0;
  std::size_t gold = 0;  // schema node id
};

// One dataset record: the mention is the surface text of the anchor
// (last token of a multi-word mention), gold is "table" or "table.column".
struct LinkRecord {
  std::string question;
  std::string db_id;
  std::string mention;
  std::string gold;
};

std::vector<LinkRecord> load_link_records(std::string_view json_document);
LinkExample make_link_example(const LinkRecord& r, const SchemaGraph& sg);

struct TrainReport {
  std::vector<double> epoch_loss;  // index 0 = initial model
  std::size_t best_epoch = 0;
  std::size_t trained_examples = 0;
  std::size_t skipped_examples = 0;
  double train_accuracy = 0.0;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

LinkerModel train_linker(const std::vector<LinkExample>& examples, const SchemaGraph& sg,
                         const LinkerConfig& cfg, TrainReport* report = nullptr,
                         const EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------
// Linking

enum class PredefinedRelation { exact_match, partial_match, value_match };
std::string_view to_string(PredefinedRelation r);

struct Assignment {
  std::size_t query_node = 0;
  std::size_t schema_node = 0;
  double score = 0.0;
};

struct RelationTriple {
  std::size_t query_node = 0;
  std::size_t schema_node = 0;
  PredefinedRelation relation = PredefinedRelation::exact_match;
  friend bool operator==(const RelationTriple&, const RelationTriple&) = default;
};

struct LinkingResult {
  std::vector<Assignment> assignments;
  std::vector<RelationTriple> predefined_relations;
  std::vector<std::string> warnings;
  bool used_model = false;

  std::optional<std::size_t> assigned(std::size_t query_node) const;
};

std::vector<RelationTriple> apply_predefined_relations(const QueryGraph& qg,
                                                       const SchemaGraph& sg,
                                                       sqlite::Database* db = nullptr,
                                                       std::vector<std::string>* warnings = nullptr);

LinkingResult link(const QueryGraph& qg, const SchemaGraph& sg, const LinkerModel* m,
                   std::size_t k = 8, sqlite::Database* db = nullptr);

}  // namespace sgusql
