#include <algorithm>
#include <cctype>
#include <functional>

#include "sgusql/schema.hpp"
#include "sgusql/sql.hpp"

namespace sgusql::sql {

// ---------------------------------------------------------------------------
// Deep copy

ExprPtr clone(const Expr& e) {
  auto c = std::make_shared<Expr>(e);
  for (auto& a : c->args)
    if (a) a = clone(*a);
  if (c->query) c->query = clone(*c->query);
  return c;
}

namespace {

TableRef clone_ref(const TableRef& r) {
  TableRef c = r;
  if (c.query) c.query = clone(*c.query);
  return c;
}

ExprPtr clone_opt(const ExprPtr& e) { return e ? clone(*e) : nullptr; }

}  // namespace

QueryPtr clone(const Query& q) {
  auto c = std::make_shared<Query>(q);
  auto& s = c->select;
  for (auto& i : s.items) i.expr = clone_opt(i.expr);
  if (s.from) s.from = clone_ref(*s.from);
  for (auto& j : s.joins) {
    j.ref = clone_ref(j.ref);
    j.on = clone_opt(j.on);
  }
  s.where = clone_opt(s.where);
  for (auto& g : s.group_by) g = clone_opt(g);
  s.having = clone_opt(s.having);
  for (auto& o : s.order_by) o.expr = clone_opt(o.expr);
  if (c->rhs) c->rhs = clone(*c->rhs);
  return c;
}

// ---------------------------------------------------------------------------
// Normalisation

namespace {

using Scope = std::vector<std::pair<std::string, std::string>>;  // lower(name) -> qualifier

template <class F>
void for_each_expr(Select& s, F&& f) {
  for (auto& i : s.items) f(i.expr);
  for (auto& j : s.joins)
    if (j.on) f(j.on);
  if (s.where) f(s.where);
  for (auto& g : s.group_by) f(g);
  if (s.having) f(s.having);
  for (auto& o : s.order_by) f(o.expr);
}

std::vector<TableRef*> sources(Select& s) {
  std::vector<TableRef*> out;
  if (s.from) out.push_back(&*s.from);
  for (auto& j : s.joins) out.push_back(&j.ref);
  return out;
}

std::vector<std::string> source_names(const TableRef& r) {
  std::vector<std::string> names;
  if (!r.alias.empty()) names.push_back(to_lower(r.alias));
  if (!r.table.empty()) names.push_back(to_lower(r.table));
  return names;
}

// Does any query nested in `e` use a qualifier from `names` that its own
// block does not define?
bool nested_uses(const Expr& e, const std::vector<std::string>& names, bool inside);

bool block_uses(const Query& q, std::vector<std::string> names) {
  for (const Query* b = &q; b; b = b->rhs.get()) {
    auto s = b->select;
    std::vector<std::string> own;
    for (auto* r : sources(s))
      for (auto& n : source_names(*r)) own.push_back(n);
    std::vector<std::string> free;
    for (auto& n : names)
      if (std::find(own.begin(), own.end(), n) == own.end()) free.push_back(n);
    if (free.empty()) continue;
    bool hit = false;
    for_each_expr(s, [&](ExprPtr& e) { hit = hit || nested_uses(*e, free, true); });
    for (auto* r : sources(s))
      if (r->query && block_uses(*r->query, free)) hit = true;
    if (hit) return true;
  }
  return false;
}

bool nested_uses(const Expr& e, const std::vector<std::string>& names, bool inside) {
  if (inside && (e.kind == ExprKind::column || e.kind == ExprKind::star) &&
      !e.qualifier.empty() &&
      std::find(names.begin(), names.end(), to_lower(e.qualifier)) != names.end())
    return true;
  for (const auto& a : e.args)
    if (a && nested_uses(*a, names, inside)) return true;
  if (e.query && block_uses(*e.query, names)) return true;
  return false;
}

bool correlated(const Select& s, const std::vector<std::string>& names) {
  auto copy = s;
  bool hit = false;
  for_each_expr(copy, [&](ExprPtr& e) {
    std::function<void(const Expr&)> visit = [&](const Expr& x) {
      for (const auto& a : x.args)
        if (a) visit(*a);
      if (x.query && block_uses(*x.query, names)) hit = true;
    };
    visit(*e);
  });
  return hit;
}

void normalize_query(Query& q, std::vector<Scope>& scopes);

void rewrite(Expr& e, std::vector<Scope>& scopes) {
  if (e.kind == ExprKind::binary && e.op == "<>") e.op = "!=";
  if (e.kind == ExprKind::binary && e.op == "==") e.op = "=";
  if ((e.kind == ExprKind::column || e.kind == ExprKind::star) && !e.qualifier.empty()) {
    const auto key = to_lower(e.qualifier);
    for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
      auto hit = std::find_if(it->begin(), it->end(),
                              [&](const auto& p) { return p.first == key; });
      if (hit != it->end()) {
        e.qualifier = hit->second;
        break;
      }
    }
  }
  for (auto& a : e.args)
    if (a) rewrite(*a, scopes);
  if (e.query) normalize_query(*e.query, scopes);
}

void normalize_select(Select& s, std::vector<Scope>& scopes) {
  auto srcs = sources(s);
  for (auto* r : srcs)
    if (r->query) normalize_query(*r->query, scopes);

  Scope scope;
  if (srcs.size() >= 2) {
    for (std::size_t i = 0; i < srcs.size(); ++i) {
      const std::string alias = "T" + std::to_string(i + 1);
      for (auto& n : source_names(*srcs[i])) scope.emplace_back(n, alias);
      srcs[i]->alias = alias;
    }
  } else if (srcs.size() == 1) {
    auto names = source_names(*srcs[0]);
    const bool keep = correlated(s, names) || srcs[0]->query;
    const std::string q = keep ? "T1" : "";
    for (auto& n : names) scope.emplace_back(n, q);
    srcs[0]->alias = q;
  }
  scopes.push_back(std::move(scope));
  for_each_expr(s, [&](ExprPtr& e) { rewrite(*e, scopes); });
  scopes.pop_back();
}

void normalize_query(Query& q, std::vector<Scope>& scopes) {
  normalize_select(q.select, scopes);
  if (q.rhs) normalize_query(*q.rhs, scopes);
}

}  // namespace

QueryPtr normalize(const Query& q) {
  auto c = clone(q);
  std::vector<Scope> scopes;
  normalize_query(*c, scopes);
  return c;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

using QueryHook = std::function<std::string(const Query&)>;

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

struct Renderer {
  QueryHook nested;  // renders a nested query; defaults to full rendering

  std::string query_text(const Query& q) const { return nested ? nested(q) : query(q); }

  std::string expr(const Expr& e) const {
    switch (e.kind) {
      case ExprKind::column:
        return e.qualifier.empty() ? e.name : e.qualifier + "." + e.name;
      case ExprKind::star: return e.qualifier.empty() ? "*" : e.qualifier + ".*";
      case ExprKind::number: return e.name;
      case ExprKind::string: {
        std::string out = "'";
        for (char c : e.name) out += c == '\'' ? std::string("''") : std::string(1, c);
        return out + "'";
      }
      case ExprKind::null: return "NULL";
      case ExprKind::function: {
        std::string out = upper(e.name) + "(";
        if (e.distinct) out += "DISTINCT ";
        for (std::size_t i = 0; i < e.args.size(); ++i)
          out += (i ? ", " : "") + expr(*e.args[i]);
        return out + ")";
      }
      case ExprKind::unary:
        return e.op == "NOT" ? "NOT " + expr(*e.args[0]) : e.op + expr(*e.args[0]);
      case ExprKind::binary:
        return expr(*e.args[0]) + " " + (e.negated ? "NOT " : "") + e.op + " " +
               expr(*e.args[1]);
      case ExprKind::between:
        return expr(*e.args[0]) + (e.negated ? " NOT" : "") + " BETWEEN " +
               expr(*e.args[1]) + " AND " + expr(*e.args[2]);
      case ExprKind::in_list: {
        std::string out = expr(*e.args[0]) + (e.negated ? " NOT IN (" : " IN (");
        for (std::size_t i = 1; i < e.args.size(); ++i)
          out += (i > 1 ? ", " : "") + expr(*e.args[i]);
        return out + ")";
      }
      case ExprKind::in_query:
        return expr(*e.args[0]) + (e.negated ? " NOT IN (" : " IN (") +
               query_text(*e.query) + ")";
      case ExprKind::exists:
        return std::string(e.negated ? "NOT " : "") + "EXISTS (" + query_text(*e.query) + ")";
      case ExprKind::subquery: return "(" + query_text(*e.query) + ")";
      case ExprKind::is_null:
        return expr(*e.args[0]) + (e.negated ? " IS NOT NULL" : " IS NULL");
      case ExprKind::paren: return "(" + expr(*e.args[0]) + ")";
    }
    return "";
  }

  std::string table_ref(const TableRef& r) const {
    std::string out = r.query ? "(" + query_text(*r.query) + ")" : r.table;
    if (!r.alias.empty()) out += " AS " + r.alias;
    return out;
  }

  std::string select_list(const Select& s) const {
    std::string out = s.distinct ? "DISTINCT " : "";
    for (std::size_t i = 0; i < s.items.size(); ++i) {
      out += (i ? ", " : "") + expr(*s.items[i].expr);
      if (!s.items[i].alias.empty()) out += " AS " + s.items[i].alias;
    }
    return out;
  }

  std::string from(const Select& s) const {
    if (!s.from) return "";
    std::string out = "FROM " + table_ref(*s.from);
    for (const auto& j : s.joins) {
      out += j.kind == JoinKind::left ? " LEFT JOIN " : " JOIN ";
      out += table_ref(j.ref);
      if (j.on) out += " ON " + expr(*j.on);
    }
    return out;
  }

  std::string where(const Select& s) const { return s.where ? "WHERE " + expr(*s.where) : ""; }

  std::string group_by(const Select& s) const {
    if (s.group_by.empty()) return "";
    std::string out = "GROUP BY ";
    for (std::size_t i = 0; i < s.group_by.size(); ++i)
      out += (i ? ", " : "") + expr(*s.group_by[i]);
    return out;
  }

  std::string having(const Select& s) const { return s.having ? "HAVING " + expr(*s.having) : ""; }

  std::string order_only(const Select& s) const {
    if (s.order_by.empty()) return "";
    std::string out = "ORDER BY ";
    for (std::size_t i = 0; i < s.order_by.size(); ++i) {
      out += (i ? ", " : "") + expr(*s.order_by[i].expr);
      if (s.order_by[i].dir == SortDir::asc) out += " ASC";
      if (s.order_by[i].dir == SortDir::desc) out += " DESC";
    }
    return out;
  }

  std::string limit(const Select& s) const { return s.limit ? "LIMIT " + *s.limit : ""; }

  std::string order_by(const Select& s) const {
    auto o = order_only(s);
    auto l = limit(s);
    if (o.empty()) return l;
    return l.empty() ? o : o + " " + l;
  }

  std::string select(const Select& s) const {
    std::string out = "SELECT " + select_list(s);
    for (auto part : {from(s), where(s), group_by(s), having(s), order_by(s)})
      if (!part.empty()) out += " " + part;
    return out;
  }

  std::string query(const Query& q) const {
    std::string out = select(q.select);
    if (q.rhs) out += " " + std::string(to_string(q.set_op)) + " " + query_text(*q.rhs);
    return out;
  }
};

}  // namespace

std::string render(const Query& q) { return Renderer{}.query(q); }
std::string render(const Expr& e) { return Renderer{}.expr(e); }
std::string render_select_list(const Select& s) { return Renderer{}.select_list(s); }
std::string render_from(const Select& s) { return Renderer{}.from(s); }
std::string render_where(const Select& s) { return Renderer{}.where(s); }
std::string render_group_by(const Select& s) { return Renderer{}.group_by(s); }
std::string render_having(const Select& s) { return Renderer{}.having(s); }
std::string render_order_by(const Select& s) { return Renderer{}.order_by(s); }
std::string render_limit(const Select& s) { return Renderer{}.limit(s); }

std::string normalize_sql(std::string_view text) { return render(*normalize(*parse(text))); }

// ---------------------------------------------------------------------------
// Clause split

namespace {

struct Splitter {
  std::vector<ClauseComponent> out;
  std::size_t next = 1;

  std::size_t push(FragmentKind kind, std::string text) {
    const auto id = next++;
    out.push_back({id, kind, std::move(text)});
    return id;
  }

  // Text of a statement whose clauses and nested queries are placeholders.
  std::string statement_text(const Query& q) {
    Renderer r;
    r.nested = [this](const Query& n) { return placeholder(push_statement(n)); };
    const auto& s = q.select;
    std::string text = "SELECT " + r.select_list(s);
    auto clause = [&](FragmentKind kind, const std::string& body) {
      if (!body.empty()) text += " " + placeholder(push(kind, body));
    };
    clause(FragmentKind::from_join, r.from(s));
    clause(FragmentKind::where, r.where(s));
    clause(FragmentKind::group_by, r.group_by(s));
    clause(FragmentKind::having, r.having(s));
    clause(FragmentKind::order_by, r.order_by(s));
    if (q.rhs)
      clause(FragmentKind::set_op,
             std::string(to_string(q.set_op)) + " " + statement_text(*q.rhs));
    return text;
  }

  std::size_t push_statement(const Query& q) {
    auto text = statement_text(q);
    return push(FragmentKind::statement, std::move(text));
  }
};

}  // namespace

std::vector<ClauseComponent> clause_split(const Query& normalized) {
  Splitter s;
  s.push_statement(normalized);
  return s.out;
}

}  // namespace sgusql::sql
