#include "sgusql/sql.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

namespace sgusql::sql {

namespace {

const std::set<std::string>& keywords() {
  static const std::set<std::string> k = {
      "SELECT", "DISTINCT", "FROM",   "WHERE",  "GROUP",     "BY",     "HAVING",
      "ORDER",  "ASC",      "DESC",   "LIMIT",  "JOIN",      "INNER",  "LEFT",
      "OUTER",  "CROSS",    "ON",     "AS",     "AND",       "OR",     "NOT",
      "IN",     "LIKE",     "BETWEEN", "IS",    "NULL",      "EXISTS", "UNION",
      "ALL",    "INTERSECT", "EXCEPT", "CASE",  "WITH",      "INSERT", "UPDATE",
      "DELETE", "CREATE",   "DROP",   "VALUES", "OFFSET"};
  return k;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace

std::string Diagnostic::to_string() const {
  return message + " at token " + std::to_string(token) + " (byte " +
         std::to_string(offset) + ")";
}

std::string_view to_string(SetOp op) {
  switch (op) {
    case SetOp::none: return "";
    case SetOp::union_: return "UNION";
    case SetOp::union_all: return "UNION ALL";
    case SetOp::intersect: return "INTERSECT";
    case SetOp::except: return "EXCEPT";
  }
  return "";
}

std::vector<SqlToken> lex(std::string_view s) {
  std::vector<SqlToken> out;
  std::size_t i = 0;
  auto fail = [&](const std::string& msg, std::size_t at) {
    throw SyntaxError(Diagnostic{msg, out.size() + 1, at});
  };
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '-' && i + 1 < s.size() && s[i + 1] == '-') {
      while (i < s.size() && s[i] != '\n') ++i;
      continue;
    }
    const std::size_t start = i;
    if (ident_start(c)) {
      while (i < s.size() && ident_char(s[i])) ++i;
      auto word = s.substr(start, i - start);
      auto up = upper(word);
      if (keywords().count(up))
        out.push_back({TokenKind::keyword, up, start});
      else
        out.push_back({TokenKind::identifier, std::string(word), start});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      if (i < s.size() && s[i] == '.') {
        ++i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      }
      if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < s.size() && (s[j] == '+' || s[j] == '-')) ++j;
        if (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
          i = j;
          while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
        }
      }
      if (i < s.size() && ident_char(s[i])) fail("malformed number", start);
      out.push_back({TokenKind::number, std::string(s.substr(start, i - start)), start});
      continue;
    }
    if (c == '\'' || c == '"' || c == '`' || c == '[') {
      const char close = c == '[' ? ']' : c;
      std::string value;
      ++i;
      bool closed = false;
      while (i < s.size()) {
        if (s[i] == close) {
          if (close != ']' && i + 1 < s.size() && s[i + 1] == close) {
            value += close;
            i += 2;
            continue;
          }
          ++i;
          closed = true;
          break;
        }
        value += s[i++];
      }
      if (!closed) fail("unterminated quoted text", start);
      // Double quotes hold string literals in benchmark SQL.
      const bool literal = c == '\'' || c == '"';
      out.push_back({literal ? TokenKind::string : TokenKind::identifier, value, start});
      continue;
    }
    static const char* two[] = {"!=", "<>", "<=", ">=", "==", "||"};
    bool matched = false;
    for (const char* t : two) {
      if (s.substr(i, 2) == t) {
        out.push_back({TokenKind::symbol, t, start});
        i += 2;
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (std::string_view("(),.*;=<>+-/%").find(c) != std::string_view::npos) {
      out.push_back({TokenKind::symbol, std::string(1, c), start});
      ++i;
      continue;
    }
    fail(std::string("unexpected character '") + c + "'", start);
  }
  out.push_back({TokenKind::end, "", s.size()});
  return out;
}

// ---------------------------------------------------------------------------

namespace {

ExprPtr make(ExprKind k) {
  auto e = std::make_shared<Expr>();
  e->kind = k;
  return e;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : toks_(lex(text)) {}

  QueryPtr statement() {
    auto q = query();
    if (is_sym(";")) ++pos_;
    expect_end();
    return q;
  }

  void fragment(FragmentKind kind) {
    Select scratch;
    switch (kind) {
      case FragmentKind::statement: statement(); return;
      case FragmentKind::from_join:
        expect_kw("FROM");
        from_clause(scratch);
        break;
      case FragmentKind::where:
        expect_kw("WHERE");
        expr();
        break;
      case FragmentKind::group_by:
        expect_kw("GROUP");
        expect_kw("BY");
        expr_list();
        if (accept_kw("HAVING")) expr();
        break;
      case FragmentKind::having:
        expect_kw("HAVING");
        expr();
        break;
      case FragmentKind::order_by:
        expect_kw("ORDER");
        expect_kw("BY");
        order_list(scratch);
        if (accept_kw("LIMIT")) limit_value();
        break;
      case FragmentKind::limit:
        expect_kw("LIMIT");
        limit_value();
        break;
      case FragmentKind::expression:
        select_item();
        break;
      case FragmentKind::set_op:
        if (!set_operator()) error("expected UNION, INTERSECT or EXCEPT");
        query();
        break;
    }
    if (is_sym(";")) ++pos_;
    expect_end();
  }

 private:
  std::vector<SqlToken> toks_;
  std::size_t pos_ = 0;

  const SqlToken& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  [[noreturn]] void error(const std::string& msg) const {
    const auto& t = peek();
    std::string got = t.kind == TokenKind::end ? "end of input" : "'" + t.text + "'";
    throw SyntaxError(Diagnostic{msg + ", found " + got, pos_ + 1, t.offset});
  }
  bool is_kw(std::string_view k, std::size_t ahead = 0) const {
    return peek(ahead).kind == TokenKind::keyword && peek(ahead).text == k;
  }
  bool is_sym(std::string_view s, std::size_t ahead = 0) const {
    return peek(ahead).kind == TokenKind::symbol && peek(ahead).text == s;
  }
  bool accept_kw(std::string_view k) {
    if (!is_kw(k)) return false;
    ++pos_;
    return true;
  }
  bool accept_sym(std::string_view s) {
    if (!is_sym(s)) return false;
    ++pos_;
    return true;
  }
  void expect_kw(std::string_view k) {
    if (!accept_kw(k)) error("expected " + std::string(k));
  }
  void expect_sym(std::string_view s) {
    if (!accept_sym(s)) error("expected '" + std::string(s) + "'");
  }
  void expect_end() {
    if (peek().kind != TokenKind::end) error("unexpected trailing input");
  }
  std::string identifier(const char* what) {
    if (peek().kind != TokenKind::identifier) error(std::string("expected ") + what);
    return toks_[pos_++].text;
  }

  bool set_operator() {
    if (accept_kw("UNION")) {
      set_op_ = accept_kw("ALL") ? SetOp::union_all : SetOp::union_;
      return true;
    }
    if (accept_kw("INTERSECT")) {
      set_op_ = SetOp::intersect;
      return true;
    }
    if (accept_kw("EXCEPT")) {
      set_op_ = SetOp::except;
      return true;
    }
    return false;
  }
  SetOp set_op_ = SetOp::none;

  QueryPtr query() {
    auto q = std::make_shared<Query>();
    select_core(q->select);
    if (set_operator()) {
      q->set_op = set_op_;
      q->rhs = query();
    }
    return q;
  }

  void select_core(Select& s) {
    expect_kw("SELECT");
    s.distinct = accept_kw("DISTINCT");
    if (is_kw("ALL")) ++pos_;
    do s.items.push_back(select_item());
    while (accept_sym(","));
    if (accept_kw("FROM")) from_clause(s);
    if (accept_kw("WHERE")) s.where = expr();
    if (accept_kw("GROUP")) {
      expect_kw("BY");
      s.group_by = expr_list();
    }
    if (accept_kw("HAVING")) s.having = expr();
    if (accept_kw("ORDER")) {
      expect_kw("BY");
      order_list(s);
    }
    if (accept_kw("LIMIT")) s.limit = limit_value();
  }

  std::string limit_value() {
    if (peek().kind != TokenKind::number) error("expected a row count");
    return toks_[pos_++].text;
  }

  SelectItem select_item() {
    SelectItem item;
    if (is_sym("*")) {
      ++pos_;
      item.expr = make(ExprKind::star);
    } else {
      item.expr = expr();
    }
    if (accept_kw("AS"))
      item.alias = identifier("alias");
    else if (peek().kind == TokenKind::identifier)
      item.alias = toks_[pos_++].text;
    return item;
  }

  std::vector<ExprPtr> expr_list() {
    std::vector<ExprPtr> out;
    do out.push_back(expr());
    while (accept_sym(","));
    return out;
  }

  void order_list(Select& s) {
    do {
      OrderItem o;
      o.expr = expr();
      if (accept_kw("ASC"))
        o.dir = SortDir::asc;
      else if (accept_kw("DESC"))
        o.dir = SortDir::desc;
      s.order_by.push_back(std::move(o));
    } while (accept_sym(","));
  }

  TableRef table_ref() {
    TableRef r;
    if (accept_sym("(")) {
      if (!is_kw("SELECT")) error("expected SELECT");
      r.query = query();
      expect_sym(")");
    } else {
      r.table = identifier("table name");
    }
    if (accept_kw("AS"))
      r.alias = identifier("alias");
    else if (peek().kind == TokenKind::identifier)
      r.alias = toks_[pos_++].text;
    return r;
  }

  void from_clause(Select& s) {
    s.from = table_ref();
    for (;;) {
      Join j;
      if (accept_sym(",")) {
        j.kind = JoinKind::comma;
      } else if (accept_kw("CROSS")) {
        expect_kw("JOIN");
        j.kind = JoinKind::comma;
      } else if (accept_kw("LEFT")) {
        accept_kw("OUTER");
        expect_kw("JOIN");
        j.kind = JoinKind::left;
      } else if (accept_kw("INNER")) {
        expect_kw("JOIN");
      } else if (!accept_kw("JOIN")) {
        break;
      }
      j.ref = table_ref();
      if (accept_kw("ON")) j.on = expr();
      s.joins.push_back(std::move(j));
    }
  }

  // expression precedence: OR < AND < NOT < predicate < additive < multiplicative < unary
  ExprPtr expr() { return or_expr(); }

  ExprPtr binary(std::string op, ExprPtr l, ExprPtr r) {
    auto e = make(ExprKind::binary);
    e->op = std::move(op);
    e->args = {std::move(l), std::move(r)};
    return e;
  }

  ExprPtr or_expr() {
    auto l = and_expr();
    while (accept_kw("OR")) l = binary("OR", l, and_expr());
    return l;
  }
  ExprPtr and_expr() {
    auto l = not_expr();
    while (accept_kw("AND")) l = binary("AND", l, not_expr());
    return l;
  }
  ExprPtr not_expr() {
    if (is_kw("NOT") && is_kw("EXISTS", 1)) {
      ++pos_;
      auto e = primary();
      e->negated = true;
      return e;
    }
    if (accept_kw("NOT")) {
      auto e = make(ExprKind::unary);
      e->op = "NOT";
      e->args = {not_expr()};
      return e;
    }
    return predicate();
  }

  ExprPtr predicate() {
    auto l = additive();
    const auto& t = peek();
    if (t.kind == TokenKind::symbol &&
        (t.text == "=" || t.text == "==" || t.text == "!=" || t.text == "<>" ||
         t.text == "<" || t.text == ">" || t.text == "<=" || t.text == ">=")) {
      std::string op = t.text;
      ++pos_;
      return binary(std::move(op), l, additive());
    }
    bool negated = false;
    if (is_kw("NOT") && (is_kw("IN", 1) || is_kw("LIKE", 1) || is_kw("BETWEEN", 1))) {
      ++pos_;
      negated = true;
    }
    if (accept_kw("IN")) {
      expect_sym("(");
      ExprPtr e;
      if (is_kw("SELECT")) {
        e = make(ExprKind::in_query);
        e->query = query();
        e->args = {l};
      } else {
        e = make(ExprKind::in_list);
        e->args.push_back(l);
        for (auto& x : expr_list()) e->args.push_back(x);
      }
      expect_sym(")");
      e->negated = negated;
      return e;
    }
    if (accept_kw("LIKE")) {
      auto e = binary("LIKE", l, additive());
      e->negated = negated;
      return e;
    }
    if (accept_kw("BETWEEN")) {
      auto e = make(ExprKind::between);
      auto lo = additive();
      expect_kw("AND");
      e->args = {l, lo, additive()};
      e->negated = negated;
      return e;
    }
    if (negated) error("expected IN, LIKE or BETWEEN");
    if (accept_kw("IS")) {
      auto e = make(ExprKind::is_null);
      e->negated = accept_kw("NOT");
      expect_kw("NULL");
      e->args = {l};
      return e;
    }
    return l;
  }

  ExprPtr additive() {
    auto l = multiplicative();
    while (is_sym("+") || is_sym("-") || is_sym("||")) {
      std::string op = toks_[pos_++].text;
      l = binary(std::move(op), l, multiplicative());
    }
    return l;
  }
  ExprPtr multiplicative() {
    auto l = unary();
    while (is_sym("*") || is_sym("/") || is_sym("%")) {
      std::string op = toks_[pos_++].text;
      l = binary(std::move(op), l, unary());
    }
    return l;
  }
  ExprPtr unary() {
    if (accept_sym("-")) {
      auto e = make(ExprKind::unary);
      e->op = "-";
      e->args = {unary()};
      return e;
    }
    return primary();
  }

  ExprPtr primary() {
    const auto& t = peek();
    switch (t.kind) {
      case TokenKind::number: {
        auto e = make(ExprKind::number);
        e->name = t.text;
        ++pos_;
        return e;
      }
      case TokenKind::string: {
        auto e = make(ExprKind::string);
        e->name = t.text;
        ++pos_;
        return e;
      }
      case TokenKind::keyword:
        if (accept_kw("NULL")) return make(ExprKind::null);
        if (accept_kw("EXISTS")) {
          auto e = make(ExprKind::exists);
          expect_sym("(");
          if (!is_kw("SELECT")) error("expected SELECT");
          e->query = query();
          expect_sym(")");
          return e;
        }
        error("expected expression");
      case TokenKind::symbol:
        if (accept_sym("(")) {
          if (is_kw("SELECT")) {
            auto e = make(ExprKind::subquery);
            e->query = query();
            expect_sym(")");
            return e;
          }
          auto e = make(ExprKind::paren);
          e->args = {expr()};
          expect_sym(")");
          return e;
        }
        error("expected expression");
      case TokenKind::identifier: {
        std::string name = t.text;
        ++pos_;
        if (accept_sym("(")) {
          auto e = make(ExprKind::function);
          e->name = name;
          if (accept_sym("*")) {
            e->args = {make(ExprKind::star)};
          } else if (!is_sym(")")) {
            e->distinct = accept_kw("DISTINCT");
            e->args = expr_list();
          }
          expect_sym(")");
          return e;
        }
        if (accept_sym(".")) {
          if (accept_sym("*")) {
            auto e = make(ExprKind::star);
            e->qualifier = name;
            return e;
          }
          auto e = make(ExprKind::column);
          e->qualifier = name;
          e->name = identifier("column name");
          return e;
        }
        auto e = make(ExprKind::column);
        e->name = name;
        return e;
      }
      case TokenKind::end: error("expected expression");
    }
    error("expected expression");
  }
};

}  // namespace

QueryPtr parse(std::string_view text) { return Parser(text).statement(); }

Validation validate_sql(std::string_view text) {
  Validation v;
  try {
    v.query = parse(text);
  } catch (const SyntaxError& e) {
    v.diagnostic = e.diagnostic();
  }
  return v;
}

std::string_view to_string(FragmentKind k) {
  switch (k) {
    case FragmentKind::statement: return "statement";
    case FragmentKind::from_join: return "from_join";
    case FragmentKind::where: return "where";
    case FragmentKind::group_by: return "group_by";
    case FragmentKind::having: return "having";
    case FragmentKind::order_by: return "order_by";
    case FragmentKind::limit: return "limit";
    case FragmentKind::expression: return "expression";
    case FragmentKind::set_op: return "set_op";
  }
  return "statement";
}

std::optional<FragmentKind> fragment_kind_from_string(std::string_view s) {
  for (auto k : {FragmentKind::statement, FragmentKind::from_join, FragmentKind::where,
                 FragmentKind::group_by, FragmentKind::having, FragmentKind::order_by,
                 FragmentKind::limit, FragmentKind::expression, FragmentKind::set_op})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

void parse_fragment(FragmentKind kind, std::string_view text) {
  Parser(text).fragment(kind);
}

std::optional<Diagnostic> validate_fragment(FragmentKind kind, std::string_view text) {
  try {
    parse_fragment(kind, text);
  } catch (const SyntaxError& e) {
    return e.diagnostic();
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  char quote = 0;
  bool pending_space = false;
  for (char c : text) {
    if (quote) {
      out += c;
      if (c == quote) quote = 0;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    if (c == '\'' || c == '"') quote = c;
    out += c;
  }
  if (!out.empty() && out.back() == ';') {
    out.pop_back();
    while (!out.empty() && out.back() == ' ') out.pop_back();
  }
  return out;
}

std::string placeholder(std::size_t id) { return "{sub:" + std::to_string(id) + "}"; }

namespace {
const std::regex& placeholder_re() {
  static const std::regex re(R"(\{sub:(\d+)\})");
  return re;
}
}  // namespace

std::vector<std::size_t> placeholders_in(std::string_view text) {
  std::vector<std::size_t> ids;
  std::string s(text);
  for (std::sregex_iterator it(s.begin(), s.end(), placeholder_re()), end; it != end; ++it)
    ids.push_back(std::stoul((*it)[1].str()));
  return ids;
}

std::string expand_placeholders(std::string_view text,
                                const std::map<std::size_t, std::string>& components) {
  std::string out(text);
  for (std::size_t depth = 0;; ++depth) {
    std::smatch m;
    if (!std::regex_search(out, m, placeholder_re())) return out;
    if (depth > 10000) throw ValidationError("placeholder expansion does not terminate");
    const auto id = std::stoul(m[1].str());
    auto it = components.find(id);
    if (it == components.end())
      throw ValidationError("missing component for placeholder " + placeholder(id));
    out.replace(static_cast<std::size_t>(m.position(0)),
                static_cast<std::size_t>(m.length(0)), it->second);
  }
}

}  // namespace sgusql::sql
