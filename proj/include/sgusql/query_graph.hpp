#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgusql/text.hpp"

namespace sgusql {

// ---------------------------------------------------------------------------
// Grammar

struct Production {
  std::string lhs;
  std::vector<std::string> rhs;  // empty for an explicit epsilon production
  double weight = 0.0;           // log weight
};

// Context-free grammar over token classes. Nonterminals are capitalised,
// terminals are lowercase token-class names.
class QueryGrammar {
 public:
  QueryGrammar(std::string start, std::vector<Production> productions);

  // Text format: one `LHS -> RHS1 RHS2 ... [weight]` per line, `#` comments.
  // `ε` or `<epsilon>` as the sole RHS symbol marks an epsilon production.
  // The first production's LHS is the start symbol.
  static QueryGrammar parse(std::string_view text);
  static QueryGrammar load(const std::filesystem::path& path);
  static const QueryGrammar& default_grammar();
  static std::string_view default_grammar_text();

  const std::string& start() const { return start_; }
  const std::set<std::string>& nonterminals() const { return nonterminals_; }
  const std::set<std::string>& terminals() const { return terminals_; }
  const std::vector<Production>& productions() const { return productions_; }
  // Epsilon-free productions used by the chart parser.
  const std::vector<Production>& parse_productions() const { return parse_productions_; }
  bool is_nonterminal(std::string_view symbol) const;

 private:
  std::string start_;
  std::vector<Production> productions_;
  std::vector<Production> parse_productions_;
  std::set<std::string> nonterminals_;
  std::set<std::string> terminals_;
};

bool is_nonterminal_symbol(std::string_view symbol);

// ---------------------------------------------------------------------------
// Syntax tree

struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const { return end - start; }
  bool contains(std::size_t i) const { return i >= start && i < end; }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
  friend auto operator<=>(const TokenSpan&, const TokenSpan&) = default;
};

struct TreeNode {
  std::size_t id = 0;
  std::string symbol;
  bool terminal = false;
  TokenSpan span;
  std::vector<std::size_t> children;
  std::optional<std::size_t> parent;
};

struct SyntaxTree {
  std::vector<TreeNode> nodes;
  std::size_t root = 0;

  std::size_t size() const { return nodes.size(); }
  const TreeNode& node(std::size_t id) const { return nodes.at(id); }
  std::vector<std::string> preorder_symbols() const;
  std::vector<std::size_t> postorder() const;
  // Checks the tree invariants; throws std::logic_error on violation.
  void check(std::size_t token_count) const;
};

struct ParseInterpretation {
  SyntaxTree tree;
  double score = 0.0;
  bool fallback = false;
};

// Chart-parse the tokens under the grammar, returning up to `max_trees`
// interpretations ordered best first. Never fails: when no parse exists a
// flat fallback tree is returned.
std::vector<ParseInterpretation> parse(
    std::span<const Token> tokens,
    const QueryGrammar& grammar = QueryGrammar::default_grammar(),
    std::size_t max_trees = 8);

// Argmax by score; ties go to fewer nodes, then the lexicographically
// smallest preorder symbol sequence.
const ParseInterpretation& select_interpretation(
    std::span<const ParseInterpretation> candidates);

// Strict weak order used by select_interpretation and parse result ordering.
bool better_interpretation(const ParseInterpretation& a,
                           const ParseInterpretation& b);

// Head token of a node: leftmost nominal terminal, else leftmost terminal.
std::size_t head_token(const SyntaxTree& tree, std::size_t node);

// ---------------------------------------------------------------------------
// Coreference

struct CorefEntity {
  TokenSpan canonical;
  bool unresolved = false;
};

struct CorefMention {
  TokenSpan span;
  std::size_t entity = 0;
};

struct CorefMap {
  std::vector<CorefMention> mentions;
  std::vector<CorefEntity> entities;

  std::optional<std::size_t> entity_of(TokenSpan span) const;
};

CorefMap resolve_coreference(std::span<const Token> tokens,
                             const SyntaxTree& tree);

// ---------------------------------------------------------------------------
// Query graph

enum class QueryRelation { forward_syntax, backward_syntax, none_syntax };
std::string_view to_string(QueryRelation r);

struct QueryEdge {
  std::size_t source = 0;
  std::size_t target = 0;
  QueryRelation relation = QueryRelation::forward_syntax;
  friend bool operator==(const QueryEdge&, const QueryEdge&) = default;
};

struct QueryGraph {
  std::vector<Token> nodes;
  // Materialised forward/backward edges; none_syntax is implied by absence.
  std::vector<QueryEdge> edges;
  SyntaxTree tree;
  CorefMap coref;

  std::size_t size() const { return nodes.size(); }
  bool adjacent(std::size_t a, std::size_t b) const;
};

QueryGraph build_query_graph(std::vector<Token> tokens, SyntaxTree tree,
                             CorefMap coref);

// tokenize -> parse -> select_interpretation -> coref -> build_query_graph
struct QueryAnalysis {
  std::vector<ParseInterpretation> interpretations;
  std::size_t selected = 0;
  QueryGraph graph;
};

QueryAnalysis analyze_question(
    std::string_view question,
    const QueryGrammar& grammar = QueryGrammar::default_grammar());

}  // namespace sgusql
