#include "sgusql/decomposer.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "sgusql/error.hpp"
#include "sgusql/text.hpp"

namespace sgusql {

namespace {

constexpr std::pair<MetaOpKind, std::string_view> kKindNames[] = {
    {MetaOpKind::select, "select"},     {MetaOpKind::from_join, "from_join"},
    {MetaOpKind::where, "where"},       {MetaOpKind::group_by, "group_by"},
    {MetaOpKind::having, "having"},     {MetaOpKind::order_by, "order_by"},
    {MetaOpKind::limit, "limit"},       {MetaOpKind::aggregate, "aggregate"},
    {MetaOpKind::subquery, "subquery"}, {MetaOpKind::set_op, "set_op"},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string_view to_string(MetaOpKind k) {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "select";
}

std::optional<MetaOpKind> meta_op_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames)
    if (name == s) return kind;
  return std::nullopt;
}

sql::FragmentKind fragment_kind(MetaOpKind k) {
  using sql::FragmentKind;
  switch (k) {
    case MetaOpKind::select:
    case MetaOpKind::subquery: return FragmentKind::statement;
    case MetaOpKind::from_join: return FragmentKind::from_join;
    case MetaOpKind::where: return FragmentKind::where;
    case MetaOpKind::group_by: return FragmentKind::group_by;
    case MetaOpKind::having: return FragmentKind::having;
    case MetaOpKind::order_by: return FragmentKind::order_by;
    case MetaOpKind::limit: return FragmentKind::limit;
    case MetaOpKind::aggregate: return FragmentKind::expression;
    case MetaOpKind::set_op: return FragmentKind::set_op;
  }
  return FragmentKind::statement;
}

// --- rules ----------------------------------------------------------------------

std::string_view NodeMapperRules::default_rules_text() {
  return R"(# grammar nonterminal => meta-operations; the root is always select
Entity => from_join
AggregateOp => aggregate
Superlative => order_by, limit
Grouping => group_by
Ordering => order_by
Condition => where
Negation => where
)";
}

NodeMapperRules NodeMapperRules::parse(std::string_view text) {
  NodeMapperRules r;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto arrow = line.find("=>");
    if (arrow == std::string::npos)
      throw ParseError("rule line " + std::to_string(number) + " lacks '=>'", number);
    const auto lhs = trim(std::string_view(line).substr(0, arrow));
    if (lhs.empty() || !is_nonterminal_symbol(lhs))
      throw ParseError("rule line " + std::to_string(number) + ": '" + lhs +
                           "' is not a nonterminal",
                       number);
    std::vector<MetaOpKind> ops;
    std::istringstream rhs(line.substr(arrow + 2));
    std::string item;
    while (std::getline(rhs, item, ',')) {
      item = trim(item);
      const auto k = meta_op_from_string(item);
      if (!k)
        throw ParseError("rule line " + std::to_string(number) + ": unknown meta-operation '" +
                             item + "'",
                         number);
      ops.push_back(*k);
    }
    if (ops.empty())
      throw ParseError("rule line " + std::to_string(number) + ": no meta-operation", number);
    if (r.rules_.count(lhs))
      throw ParseError("rule line " + std::to_string(number) + ": duplicate rule for " + lhs,
                       number);
    r.rules_.emplace(lhs, std::move(ops));
  }
  return r;
}

NodeMapperRules NodeMapperRules::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read rule file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const NodeMapperRules& NodeMapperRules::default_rules() {
  static const NodeMapperRules rules = parse(default_rules_text());
  return rules;
}

const std::vector<MetaOpKind>& NodeMapperRules::ops_for(std::string_view symbol) const {
  static const std::vector<MetaOpKind> none;
  auto it = rules_.find(symbol);
  return it == rules_.end() ? none : it->second;
}

// --- mapping --------------------------------------------------------------------

AnnotatedTree map_nodes(const QueryGraph& qg, const LinkingResult& linking, const SchemaGraph& sg,
                        const NodeMapperRules& rules) {
  AnnotatedTree out;
  out.tree = qg.tree;
  const auto& tree = out.tree;
  const std::span<const Token> tokens(qg.nodes);

  for (const auto& n : tree.nodes) {
    if (n.terminal) continue;
    std::vector<MetaOpKind> kinds = rules.ops_for(n.symbol);
    if (n.id == tree.root) kinds.insert(kinds.begin(), MetaOpKind::select);
    if (kinds.empty()) continue;

    std::vector<std::size_t> linked, tables;
    for (const auto& a : linking.assignments) {
      if (!n.span.contains(a.query_node)) continue;
      linked.push_back(a.schema_node);
      tables.push_back(sg.owning_table(a.schema_node));
    }
    auto dedup = [](std::vector<std::size_t>& v) {
      std::vector<std::size_t> seen;
      for (auto x : v)
        if (std::find(seen.begin(), seen.end(), x) == seen.end()) seen.push_back(x);
      v = std::move(seen);
    };
    dedup(linked);
    dedup(tables);
    std::vector<std::string> values;
    for (std::size_t i = n.span.start; i < n.span.end && i < tokens.size(); ++i) {
      const auto cls = token_classes(tokens, i);
      if (std::find(cls.begin(), cls.end(), "val") != cls.end() ||
          std::find(cls.begin(), cls.end(), "num") != cls.end())
        values.push_back(tokens[i].text);
    }

    std::vector<MetaOperation> ops;
    for (auto k : kinds) {
      MetaOperation op;
      op.kind = k;
      op.schema_hints = k == MetaOpKind::from_join ? tables : linked;
      op.value_hints = values;
      op.negated = n.symbol == "Negation";
      ops.push_back(std::move(op));
    }
    out.ops.emplace(n.id, std::move(ops));
  }
  return out;
}

// --- plans ----------------------------------------------------------------------

const Subtask* SubtaskPlan::find(std::size_t id) const {
  for (const auto& s : subtasks)
    if (s.id == id) return &s;
  return nullptr;
}

const Subtask& SubtaskPlan::get(std::size_t id) const {
  if (const auto* s = find(id)) return *s;
  throw AssemblyError("no subtask " + std::to_string(id) + " in plan");
}

std::vector<std::size_t> SubtaskPlan::order() const {
  std::vector<std::size_t> out;
  for (const auto& s : subtasks) out.push_back(s.id);
  return out;
}

SubtaskPlan decompose(const AnnotatedTree& annotated) {
  const auto& tree = annotated.tree;
  if (!annotated.annotated(tree.root)) throw ValidationError("tree root carries no meta-operation");
  SubtaskPlan plan;
  std::map<std::size_t, std::size_t> index;  // subtask id -> position
  std::size_t next_virtual = tree.size();

  auto annotated_parent = [&](std::size_t node) -> std::optional<std::size_t> {
    auto p = tree.node(node).parent;
    while (p && !annotated.annotated(*p)) p = tree.node(*p).parent;
    return p;
  };

  for (auto id : tree.postorder()) {
    auto it = annotated.ops.find(id);
    if (it == annotated.ops.end()) continue;
    const auto& op = it->second.front();
    if (op.negated) {
      Subtask sub;
      sub.id = next_virtual++;
      sub.op.kind = MetaOpKind::subquery;
      sub.op.schema_hints = op.schema_hints;
      sub.op.value_hints = op.value_hints;
      sub.parent = id;
      index[sub.id] = plan.subtasks.size();
      plan.subtasks.push_back(std::move(sub));
    }
    Subtask s;
    s.id = id;
    s.node = id;
    s.op = op;
    s.parent = annotated_parent(id);
    index[id] = plan.subtasks.size();
    plan.subtasks.push_back(std::move(s));
  }
  for (const auto& s : plan.subtasks)
    if (s.parent) plan.subtasks[index.at(*s.parent)].children.push_back(s.id);
  plan.root = tree.root;
  return plan;
}

SubtaskPlan plan_from_components(const std::vector<sql::ClauseComponent>& components) {
  if (components.empty()) throw ValidationError("no components to plan");
  SubtaskPlan plan;
  std::map<std::size_t, std::size_t> index;
  for (std::size_t i = 0; i < components.size(); ++i) {
    const auto& c = components[i];
    if (index.count(c.id)) throw ValidationError("duplicate component id " + std::to_string(c.id));
    Subtask s;
    s.id = c.id;
    const bool last = i + 1 == components.size();
    switch (c.kind) {
      case sql::FragmentKind::statement:
        s.op.kind = last ? MetaOpKind::select : MetaOpKind::subquery;
        break;
      case sql::FragmentKind::from_join: s.op.kind = MetaOpKind::from_join; break;
      case sql::FragmentKind::where: s.op.kind = MetaOpKind::where; break;
      case sql::FragmentKind::group_by: s.op.kind = MetaOpKind::group_by; break;
      case sql::FragmentKind::having: s.op.kind = MetaOpKind::having; break;
      case sql::FragmentKind::order_by: s.op.kind = MetaOpKind::order_by; break;
      case sql::FragmentKind::limit: s.op.kind = MetaOpKind::limit; break;
      case sql::FragmentKind::expression: s.op.kind = MetaOpKind::aggregate; break;
      case sql::FragmentKind::set_op: s.op.kind = MetaOpKind::set_op; break;
    }
    for (auto child : sql::placeholders_in(c.text)) {
      auto it = index.find(child);
      if (it == index.end())
        throw ValidationError("component " + std::to_string(c.id) +
                              " refers to a later or unknown component " + std::to_string(child));
      plan.subtasks[it->second].parent = c.id;
      s.children.push_back(child);
    }
    index[c.id] = plan.subtasks.size();
    plan.subtasks.push_back(std::move(s));
  }
  plan.root = components.back().id;
  return plan;
}

// --- assembly -------------------------------------------------------------------

std::string assemble(const std::vector<SqlComponent>& components, const SubtaskPlan& plan) {
  std::map<std::size_t, std::string> texts;
  for (const auto& c : components) texts[c.id] = c.text;
  for (const auto& s : plan.subtasks)
    if (!texts.count(s.id))
      throw AssemblyError("missing component for subtask " + std::to_string(s.id) + " (" +
                          std::string(to_string(s.op.kind)) + ")");
  for (const auto& [id, text] : texts)
    for (auto ref : sql::placeholders_in(text))
      if (!texts.count(ref))
        throw AssemblyError("component " + std::to_string(id) + " refers to missing subtask " +
                            std::to_string(ref));
  std::string out;
  try {
    out = sql::expand_placeholders(texts.at(plan.root), texts);
  } catch (const ValidationError& e) {
    throw AssemblyError(e.what());
  }
  out = sql::collapse_whitespace(out);
  const auto v = sql::validate_sql(out);
  if (v.diagnostic) throw sql::SyntaxError(*v.diagnostic);
  return out;
}

}  // namespace sgusql
