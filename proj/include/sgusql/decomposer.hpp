#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sgusql/linker.hpp"
#include "sgusql/query_graph.hpp"
#include "sgusql/sql.hpp"

namespace sgusql {

enum class MetaOpKind {
  select,
  from_join,
  where,
  group_by,
  having,
  order_by,
  limit,
  aggregate,
  subquery,
  set_op,
};
std::string_view to_string(MetaOpKind k);
std::optional<MetaOpKind> meta_op_from_string(std::string_view s);
// Fragment grammar a component of this kind is checked against.
sql::FragmentKind fragment_kind(MetaOpKind k);

struct MetaOperation {
  MetaOpKind kind = MetaOpKind::select;
  std::vector<std::size_t> schema_hints;  // schema node ids
  std::vector<std::string> value_hints;   // literal surface strings
  bool negated = false;                   // NOT IN over a subquery
};

// `Nonterminal => op[,op]` lines, `#` comments.
class NodeMapperRules {
 public:
  static NodeMapperRules parse(std::string_view text);
  static NodeMapperRules load(const std::filesystem::path& path);
  static const NodeMapperRules& default_rules();
  static std::string_view default_rules_text();

  // Empty when the symbol has no rule.
  const std::vector<MetaOpKind>& ops_for(std::string_view symbol) const;
  const std::map<std::string, std::vector<MetaOpKind>, std::less<>>& rules() const {
    return rules_;
  }

 private:
  std::map<std::string, std::vector<MetaOpKind>, std::less<>> rules_;
};

struct AnnotatedTree {
  SyntaxTree tree;
  // Node id -> operations; the first one names the node's subtask.
  std::map<std::size_t, std::vector<MetaOperation>> ops;

  bool annotated(std::size_t node) const { return ops.count(node) != 0; }
};

AnnotatedTree map_nodes(const QueryGraph& qg, const LinkingResult& linking, const SchemaGraph& sg,
                        const NodeMapperRules& rules = NodeMapperRules::default_rules());

struct Subtask {
  std::size_t id = 0;                 // tree node id, or a virtual id past the tree
  std::optional<std::size_t> node;    // empty for virtual subtasks
  MetaOperation op;
  std::optional<std::size_t> parent;  // subtask id
  std::vector<std::size_t> children;  // subtask ids, in generation order
};

// Subtasks in generation order: children before parents, root last.
struct SubtaskPlan {
  std::vector<Subtask> subtasks;
  std::size_t root = 0;

  const Subtask& get(std::size_t id) const;
  const Subtask* find(std::size_t id) const;
  std::vector<std::size_t> order() const;
};

SubtaskPlan decompose(const AnnotatedTree& annotated);

// One subtask per clause component; parents follow placeholder references.
SubtaskPlan plan_from_components(const std::vector<sql::ClauseComponent>& components);

struct SqlComponent {
  std::size_t id = 0;
  MetaOpKind kind = MetaOpKind::select;
  std::string text;
};

// Throws AssemblyError naming a missing subtask, SyntaxError when the result
// does not parse.
std::string assemble(const std::vector<SqlComponent>& components, const SubtaskPlan& plan);

}  // namespace sgusql
