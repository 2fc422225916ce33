#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sgusql/error.hpp"

namespace sgusql::sql {

// ---------------------------------------------------------------------------
// Lexing

enum class TokenKind { keyword, identifier, string, number, symbol, end };

struct SqlToken {
  TokenKind kind = TokenKind::end;
  std::string text;  // keywords uppercased, strings unquoted
  std::size_t offset = 0;
};

struct Diagnostic {
  std::string message;
  std::size_t token = 0;   // 1-based index of the offending token
  std::size_t offset = 0;  // byte offset in the source text
  std::string to_string() const;
};

class SyntaxError : public ValidationError {
 public:
  explicit SyntaxError(Diagnostic d)
      : ValidationError("SQL syntax error: " + d.to_string()), diagnostic_(std::move(d)) {}
  const Diagnostic& diagnostic() const noexcept { return diagnostic_; }

 private:
  Diagnostic diagnostic_;
};

std::vector<SqlToken> lex(std::string_view text);

// ---------------------------------------------------------------------------
// AST

struct Query;
struct Expr;
using ExprPtr = std::shared_ptr<Expr>;
using QueryPtr = std::shared_ptr<Query>;

enum class ExprKind {
  column,     // qualifier.name
  star,       // [qualifier.]*
  number,
  string,
  null,
  function,   // name(args) / name(DISTINCT arg) / count(*)
  unary,      // NOT x, -x
  binary,     // comparison, arithmetic, AND, OR, LIKE
  between,
  in_list,
  in_query,
  exists,
  subquery,   // scalar subquery
  is_null,
  paren,
};

struct Expr {
  ExprKind kind = ExprKind::null;
  std::string qualifier;   // column / star
  std::string name;        // column name, function name, number text, string value
  std::string op;          // unary / binary operator, uppercase
  bool negated = false;    // NOT IN / NOT BETWEEN / NOT LIKE / IS NOT NULL / NOT EXISTS
  bool distinct = false;   // function(DISTINCT ...)
  std::vector<ExprPtr> args;  // operands, function arguments, IN list
  QueryPtr query;
};

struct SelectItem {
  ExprPtr expr;
  std::string alias;
};

struct TableRef {
  std::string table;   // empty for a derived table
  std::string alias;
  QueryPtr query;      // derived table
};

enum class JoinKind { comma, inner, left };

struct Join {
  JoinKind kind = JoinKind::inner;
  TableRef ref;
  ExprPtr on;
};

enum class SortDir { none, asc, desc };

struct OrderItem {
  ExprPtr expr;
  SortDir dir = SortDir::none;
};

struct Select {
  bool distinct = false;
  std::vector<SelectItem> items;
  std::optional<TableRef> from;
  std::vector<Join> joins;
  ExprPtr where;
  std::vector<ExprPtr> group_by;
  ExprPtr having;
  std::vector<OrderItem> order_by;
  std::optional<std::string> limit;
};

enum class SetOp { none, union_, union_all, intersect, except };
std::string_view to_string(SetOp op);

struct Query {
  Select select;
  SetOp set_op = SetOp::none;
  QueryPtr rhs;
};

// ---------------------------------------------------------------------------
// Parsing and validation

// Parses one statement of the supported subset; a trailing semicolon is
// allowed. Throws SyntaxError.
QueryPtr parse(std::string_view text);

struct Validation {
  QueryPtr query;
  std::optional<Diagnostic> diagnostic;
  bool ok() const { return query != nullptr; }
};
Validation validate_sql(std::string_view text);

// Clause-level fragment kinds a generated component may take.
enum class FragmentKind {
  statement,   // full query (select root, subquery)
  from_join,   // FROM ... [JOIN ...]
  where,       // WHERE cond
  group_by,    // GROUP BY ...
  having,      // HAVING cond
  order_by,    // ORDER BY ... [LIMIT n]
  limit,       // LIMIT n
  expression,  // select-list expression (aggregate)
  set_op,      // UNION|INTERSECT|EXCEPT <query>
};
std::string_view to_string(FragmentKind k);
std::optional<FragmentKind> fragment_kind_from_string(std::string_view s);

// Throws SyntaxError when `text` is not a fragment of the given kind.
void parse_fragment(FragmentKind kind, std::string_view text);
std::optional<Diagnostic> validate_fragment(FragmentKind kind, std::string_view text);

// ---------------------------------------------------------------------------
// Normalisation and rendering

QueryPtr clone(const Query& q);
ExprPtr clone(const Expr& e);

// Canonical form: table aliases T1..Tn per multi-source block in order of
// appearance, qualifiers dropped in single-source blocks, `<>` as `!=`.
QueryPtr normalize(const Query& q);

std::string render(const Query& q);
std::string render(const Expr& e);
std::string render_select_list(const Select& s);
std::string render_from(const Select& s);
std::string render_where(const Select& s);
std::string render_group_by(const Select& s);
std::string render_having(const Select& s);
std::string render_order_by(const Select& s);  // includes LIMIT when present
std::string render_limit(const Select& s);

// parse + normalize + render.
std::string normalize_sql(std::string_view text);

// Collapse runs of whitespace outside string literals, trim, drop one
// trailing semicolon.
std::string collapse_whitespace(std::string_view text);

// ---------------------------------------------------------------------------
// Placeholders

std::string placeholder(std::size_t id);
// Ids of `{sub:N}` markers in order of appearance.
std::vector<std::size_t> placeholders_in(std::string_view text);
// Recursively replaces markers; throws ValidationError naming a missing id.
std::string expand_placeholders(std::string_view text,
                                const std::map<std::size_t, std::string>& components);

// ---------------------------------------------------------------------------
// Clause split: every clause of every block becomes a component, every nested
// query a statement component. Components are listed children first; the
// root statement is last.

struct ClauseComponent {
  std::size_t id = 0;
  FragmentKind kind = FragmentKind::statement;
  std::string text;  // may contain placeholders of earlier components
};

std::vector<ClauseComponent> clause_split(const Query& normalized);

}  // namespace sgusql::sql
