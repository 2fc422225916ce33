#include "sgusql/eval.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "sgusql/error.hpp"
#include "sgusql/sql.hpp"

namespace sgusql {

std::string_view to_string(ExecStatus s) {
  switch (s) {
    case ExecStatus::ok: return "ok";
    case ExecStatus::sql_error: return "sql_error";
    case ExecStatus::timeout: return "timeout";
  }
  return "ok";
}

std::string_view to_string(FailureCategory c) {
  switch (c) {
    case FailureCategory::schema_link: return "schema_link";
    case FailureCategory::join: return "join";
    case FailureCategory::group_by: return "group_by";
    case FailureCategory::nested: return "nested";
    case FailureCategory::condition_value: return "condition_value";
    case FailureCategory::other: return "other";
  }
  return "other";
}

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::medium: return "medium";
    case Difficulty::hard: return "hard";
    case Difficulty::extra: return "extra";
    case Difficulty::unknown: return "unknown";
  }
  return "unknown";
}

Difficulty difficulty_from_string(std::string_view s) {
  const auto l = to_lower(s);
  if (l == "easy") return Difficulty::easy;
  if (l == "medium") return Difficulty::medium;
  if (l == "hard") return Difficulty::hard;
  if (l == "extra" || l == "extra hard") return Difficulty::extra;
  if (l == "unknown") return Difficulty::unknown;
  throw ValidationError("unknown difficulty '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Execution

namespace {

bool top_level_order(const sql::Query& q) {
  const sql::Query* last = &q;
  while (last->rhs) last = last->rhs.get();
  return !last->select.order_by.empty() || !q.select.order_by.empty();
}

std::string cell_key(const sqlite::Value& v) {
  if (std::holds_alternative<sqlite::Null>(v)) return "N";
  if (const auto* i = std::get_if<std::int64_t>(&v)) return "I" + std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) {
    if (std::isfinite(*d) && std::floor(*d) == *d && std::fabs(*d) < 9.0e15)
      return "I" + std::to_string(static_cast<std::int64_t>(*d));
    char buf[40];
    std::snprintf(buf, sizeof buf, "R%.17g", *d);
    return buf;
  }
  return "T" + std::get<std::string>(v);
}

std::vector<std::string> row_keys(const std::vector<sqlite::Row>& rows) {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    std::string k;
    for (const auto& v : r) k += cell_key(v) + '\x1f';
    out.push_back(std::move(k));
  }
  return out;
}

}  // namespace

ExecutionOutcome execute_sql(const std::filesystem::path& db_path, std::string_view text,
                             double timeout_s) {
  ExecutionOutcome out;
  if (auto v = sql::validate_sql(text); v.ok()) out.ordered = top_level_order(*v.query);
  sqlite::Database db(db_path, sqlite::Database::Mode::read_only);
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const auto deadline = start + std::chrono::duration_cast<Clock::duration>(
                                    std::chrono::duration<double>(std::max(0.0, timeout_s)));
  bool timed_out = false;
  db.set_progress_handler(100, [&] {
    if (Clock::now() >= deadline) timed_out = true;
    return timed_out;
  });
  try {
    auto stmt = db.prepare(text);
    while (stmt.step()) out.rows.push_back(stmt.row());
    out.status = ExecStatus::ok;
  } catch (const sqlite::StepError& e) {
    out.rows.clear();
    out.status = (e.code == SQLITE_INTERRUPT || timed_out) ? ExecStatus::timeout : ExecStatus::sql_error;
    out.message = e.message;
  }
  out.time_s = std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

bool same_rows(const std::vector<sqlite::Row>& a, const std::vector<sqlite::Row>& b, bool ordered) {
  if (a.size() != b.size()) return false;
  auto ka = row_keys(a), kb = row_keys(b);
  if (!ordered) {
    std::sort(ka.begin(), ka.end());
    std::sort(kb.begin(), kb.end());
  }
  return ka == kb;
}

bool execution_match(std::string_view pred, std::string_view gold,
                     const std::filesystem::path& db, double timeout_s) {
  const auto g = execute_sql(db, gold, timeout_s);
  if (g.status != ExecStatus::ok)
    throw EvaluationError("gold SQL did not execute: " + g.message);
  if (!sql::validate_sql(pred).ok()) return false;
  const auto p = execute_sql(db, pred, timeout_s);
  return p.status == ExecStatus::ok && same_rows(p.rows, g.rows, g.ordered);
}

// ---------------------------------------------------------------------------
// Canonical clause sets

namespace {

using sql::Expr;
using sql::ExprKind;
using sql::Query;
using sql::Select;

struct Source {
  std::string name;   // alias or table, lowercase
  std::string table;  // lowercase; empty for derived tables
};
using Scope = std::vector<Source>;

struct Canon {
  const SchemaCatalog* catalog = nullptr;
  std::vector<Scope> scopes;

  bool table_has(std::string_view table, std::string_view column) const {
    if (!catalog) return false;
    for (const auto& t : catalog->tables) {
      if (to_lower(t.name) != table) continue;
      for (const auto& c : t.columns)
        if (to_lower(c.name) == column) return true;
    }
    return false;
  }

  std::string resolve(const Expr& e) const {
    const auto col = to_lower(e.name);
    const auto q = to_lower(e.qualifier);
    for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
      if (!q.empty()) {
        for (const auto& s : *it)
          if (s.name == q || s.table == q) return (s.table.empty() ? s.name : s.table) + "." + col;
        continue;
      }
      if (it->size() == 1) return ((*it)[0].table.empty() ? (*it)[0].name : (*it)[0].table) + "." + col;
      for (const auto& s : *it)
        if (!s.table.empty() && table_has(s.table, col)) return s.table + "." + col;
      if (!it->empty()) break;
    }
    return (q.empty() ? "?" : q) + "." + col;
  }

  static void flatten(const Expr& e, const std::string& op, std::vector<const Expr*>& out) {
    const Expr* x = &e;
    while (x->kind == ExprKind::paren) x = x->args[0].get();
    if (x->kind == ExprKind::binary && x->op == op && !x->negated) {
      flatten(*x->args[0], op, out);
      flatten(*x->args[1], op, out);
    } else {
      out.push_back(x);
    }
  }

  std::string expr(const Expr& e) {
    switch (e.kind) {
      case ExprKind::column: return resolve(e);
      case ExprKind::star: return e.qualifier.empty() ? "*" : to_lower(e.qualifier) + ".*";
      case ExprKind::number: return e.name;
      case ExprKind::string: return "'" + e.name + "'";
      case ExprKind::null: return "null";
      case ExprKind::function: {
        std::string out = to_lower(e.name) + "(" + (e.distinct ? "distinct " : "");
        for (std::size_t i = 0; i < e.args.size(); ++i) out += (i ? "," : "") + expr(*e.args[i]);
        return out + ")";
      }
      case ExprKind::unary: return to_lower(e.op) + " " + expr(*e.args[0]);
      case ExprKind::binary: {
        if ((e.op == "AND" || e.op == "OR") && !e.negated) {
          std::vector<const Expr*> parts;
          flatten(e, e.op, parts);
          std::vector<std::string> keys;
          for (auto* p : parts) keys.push_back(expr(*p));
          std::sort(keys.begin(), keys.end());
          std::string out = "(";
          for (std::size_t i = 0; i < keys.size(); ++i)
            out += (i ? " " + to_lower(e.op) + " " : "") + keys[i];
          return out + ")";
        }
        auto l = expr(*e.args[0]), r = expr(*e.args[1]);
        if ((e.op == "=" || e.op == "!=") && r < l) std::swap(l, r);
        return "(" + l + (e.negated ? " not " : " ") + to_lower(e.op) + " " + r + ")";
      }
      case ExprKind::between:
        return "(" + expr(*e.args[0]) + (e.negated ? " not" : "") + " between " +
               expr(*e.args[1]) + " and " + expr(*e.args[2]) + ")";
      case ExprKind::in_list: {
        std::string out = "(" + expr(*e.args[0]) + (e.negated ? " not in [" : " in [");
        for (std::size_t i = 1; i < e.args.size(); ++i) out += (i > 1 ? "," : "") + expr(*e.args[i]);
        return out + "])";
      }
      case ExprKind::in_query:
        return "(" + expr(*e.args[0]) + (e.negated ? " not in " : " in ") + "{" + query(*e.query) +
               "})";
      case ExprKind::exists:
        return std::string(e.negated ? "not " : "") + "exists {" + query(*e.query) + "}";
      case ExprKind::subquery: return "{" + query(*e.query) + "}";
      case ExprKind::is_null:
        return "(" + expr(*e.args[0]) + (e.negated ? " is not null)" : " is null)");
      case ExprKind::paren: return expr(*e.args[0]);
    }
    return "";
  }

  std::vector<std::string> conjuncts(const sql::ExprPtr& e) {
    std::vector<std::string> out;
    if (!e) return out;
    std::vector<const Expr*> parts;
    flatten(*e, "AND", parts);
    for (auto* p : parts) out.push_back(expr(*p));
    std::sort(out.begin(), out.end());
    return out;
  }

  Scope scope_of(const Select& s) {
    Scope sc;
    auto add = [&](const sql::TableRef& r) {
      Source src;
      src.table = to_lower(r.table);
      src.name = r.alias.empty() ? src.table : to_lower(r.alias);
      sc.push_back(src);
    };
    if (s.from) add(*s.from);
    for (const auto& j : s.joins) add(j.ref);
    return sc;
  }

  std::string table_key(const sql::TableRef& r) {
    return r.query ? "{" + query(*r.query) + "}" : to_lower(r.table);
  }

  std::string block(const Select& s) {
    std::vector<std::string> tables;
    if (s.from) tables.push_back(table_key(*s.from));
    for (const auto& j : s.joins) tables.push_back(table_key(j.ref));
    std::sort(tables.begin(), tables.end());

    scopes.push_back(scope_of(s));
    std::string out = "select";
    if (s.distinct) out += " distinct";
    out += "[";
    for (const auto& i : s.items) out += expr(*i.expr) + ";";
    out += "] from[";
    for (const auto& t : tables) out += t + ";";
    out += "] on[";
    std::vector<std::string> ons;
    for (const auto& j : s.joins) {
      if (!j.on) continue;
      for (auto& c : conjuncts(j.on))
        ons.push_back((j.kind == sql::JoinKind::left ? "left:" : "") + c);
    }
    std::sort(ons.begin(), ons.end());
    for (const auto& c : ons) out += c + ";";
    out += "] where[";
    for (const auto& c : conjuncts(s.where)) out += c + ";";
    out += "] group[";
    std::vector<std::string> groups;
    for (const auto& g : s.group_by) groups.push_back(expr(*g));
    std::sort(groups.begin(), groups.end());
    for (const auto& g : groups) out += g + ";";
    out += "] having[";
    for (const auto& c : conjuncts(s.having)) out += c + ";";
    out += "] order[";
    for (const auto& o : s.order_by)
      out += expr(*o.expr) + (o.dir == sql::SortDir::desc ? " desc;" : " asc;");
    out += "] limit[" + s.limit.value_or("") + "]";
    scopes.pop_back();
    return out;
  }

  std::string query(const Query& q) {
    std::string out = block(q.select);
    if (q.rhs) out += " " + to_lower(std::string(sql::to_string(q.set_op))) + " " + query(*q.rhs);
    return out;
  }
};

sql::QueryPtr parse_for_eval(std::string_view text, std::string_view side) {
  auto v = sql::validate_sql(text);
  if (!v.ok())
    throw EvaluationError(std::string(side) + " SQL does not parse: " + v.diagnostic->to_string());
  return sql::normalize(*v.query);
}

// Everything the error chain looks at, gathered across all blocks.
struct Features {
  std::set<std::string> tables;
  std::set<std::string> projection;
  std::set<std::string> joins;
  std::set<std::string> grouping;
  std::multiset<std::string> nesting;
  std::set<std::string> literal_conditions;
};

struct Collector {
  Canon canon;
  Features f;

  static bool has_literal(const Expr& e) {
    if (e.kind == ExprKind::number || e.kind == ExprKind::string) return true;
    for (const auto& a : e.args)
      if (a && has_literal(*a)) return true;
    return false;  // nested queries are their own blocks
  }

  void columns(const Expr& e, std::set<std::string>& out) {
    if (e.kind == ExprKind::column) out.insert(canon.resolve(e));
    for (const auto& a : e.args)
      if (a) columns(*a, out);
  }

  void nested_in(const Expr& e) {
    if (e.query) {
      switch (e.kind) {
        case ExprKind::in_query: f.nesting.insert(e.negated ? "not in" : "in"); break;
        case ExprKind::exists: f.nesting.insert(e.negated ? "not exists" : "exists"); break;
        default: f.nesting.insert("scalar"); break;
      }
      query(*e.query, false);
    }
    for (const auto& a : e.args)
      if (a) nested_in(*a);
  }

  void conditions(const sql::ExprPtr& e) {
    if (!e) return;
    std::vector<const Expr*> parts;
    Canon::flatten(*e, "AND", parts);
    for (auto* p : parts)
      if (has_literal(*p)) f.literal_conditions.insert(canon.expr(*p));
  }

  void block(const Select& s, bool outer) {
    auto visit_ref = [&](const sql::TableRef& r) {
      if (r.query) {
        f.nesting.insert("derived");
        query(*r.query, false);
      } else {
        f.tables.insert(to_lower(r.table));
      }
    };
    if (s.from) visit_ref(*s.from);
    for (const auto& j : s.joins) visit_ref(j.ref);

    canon.scopes.push_back(canon.scope_of(s));
    if (outer)
      for (const auto& i : s.items) columns(*i.expr, f.projection);
    for (const auto& j : s.joins)
      if (j.on)
        for (auto& c : canon.conjuncts(j.on)) f.joins.insert(c);
    for (const auto& g : s.group_by) f.grouping.insert("group:" + canon.expr(*g));
    for (auto& c : canon.conjuncts(s.having)) f.grouping.insert("having:" + c);
    conditions(s.where);
    conditions(s.having);
    for (const auto& i : s.items) nested_in(*i.expr);
    if (s.where) nested_in(*s.where);
    if (s.having) nested_in(*s.having);
    for (const auto& j : s.joins)
      if (j.on) nested_in(*j.on);
    canon.scopes.pop_back();
  }

  void query(const Query& q, bool outer) {
    block(q.select, outer);
    if (q.rhs) {
      f.nesting.insert(to_lower(std::string(sql::to_string(q.set_op))));
      query(*q.rhs, false);
    }
  }
};

Features features(const Query& q, const SchemaCatalog* catalog) {
  Collector c;
  c.canon.catalog = catalog;
  c.query(q, true);
  return c.f;
}

}  // namespace

bool exact_match(std::string_view pred, std::string_view gold, const SchemaCatalog* catalog) {
  const auto p = parse_for_eval(pred, "predicted");
  const auto g = parse_for_eval(gold, "gold");
  Canon cp{catalog, {}}, cg{catalog, {}};
  return cp.query(*p) == cg.query(*g);
}

FailureCategory classify_error(std::string_view pred, std::string_view gold,
                               const SchemaCatalog* catalog) {
  sql::QueryPtr p, g;
  try {
    p = parse_for_eval(pred, "predicted");
    g = parse_for_eval(gold, "gold");
  } catch (const EvaluationError&) {
    return FailureCategory::other;
  }
  const auto fp = features(*p, catalog), fg = features(*g, catalog);
  if (fp.tables != fg.tables || fp.projection != fg.projection) return FailureCategory::schema_link;
  if (!fp.joins.empty() && !fg.joins.empty() && fp.joins != fg.joins) return FailureCategory::join;
  if (fp.grouping != fg.grouping) return FailureCategory::group_by;
  if (fp.nesting != fg.nesting) return FailureCategory::nested;
  if (fp.literal_conditions != fg.literal_conditions) return FailureCategory::condition_value;
  return FailureCategory::other;
}

FailureCategory classify_error(std::string_view pred, std::string_view gold,
                               const std::filesystem::path& db) {
  const auto catalog = introspect_sqlite(db);
  return classify_error(pred, gold, &catalog);
}

// ---------------------------------------------------------------------------
// VES and reports

double ves_contribution(double time_gold_s, double time_pred_s) {
  double ratio = time_pred_s > 0 ? time_gold_s / time_pred_s : 100.0;
  if (!std::isfinite(ratio)) ratio = 100.0;
  return std::sqrt(std::clamp(ratio, 0.01, 100.0));
}

double ves(const std::vector<EvalRecord>& records) {
  if (records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : records) sum += r.ex ? r.ves : 0.0;
  return sum / static_cast<double>(records.size());
}

EvalReport EvalReport::summarize(std::vector<EvalRecord> records) {
  EvalReport rep;
  rep.records = std::move(records);
  for (auto c : kFailureCategories) rep.errors[c] = 0;
  std::map<Difficulty, std::vector<const EvalRecord*>> buckets;
  double em = 0, ex = 0;
  for (const auto& r : rep.records) {
    em += r.em;
    ex += r.ex;
    buckets[r.difficulty].push_back(&r);
    if (r.category) ++rep.errors[*r.category];
  }
  const auto n = static_cast<double>(rep.records.size());
  if (n > 0) {
    rep.em_acc = em / n;
    rep.exec_acc = ex / n;
  }
  rep.ves = sgusql::ves(rep.records);
  for (const auto& [d, list] : buckets) {
    BucketStats b;
    b.count = list.size();
    double bem = 0, bex = 0, bves = 0;
    for (const auto* r : list) {
      bem += r->em;
      bex += r->ex;
      bves += r->ex ? r->ves : 0.0;
    }
    b.em_acc = bem / static_cast<double>(b.count);
    b.exec_acc = bex / static_cast<double>(b.count);
    b.ves = bves / static_cast<double>(b.count);
    rep.by_difficulty[d] = b;
  }
  return rep;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json doc;
  doc["count"] = records.size();
  doc["em_acc"] = em_acc;
  doc["exec_acc"] = exec_acc;
  doc["ves"] = ves;
  auto& bd = doc["by_difficulty"] = nlohmann::json::object();
  for (const auto& [d, b] : by_difficulty)
    bd[std::string(to_string(d))] = {
        {"count", b.count}, {"em_acc", b.em_acc}, {"exec_acc", b.exec_acc}, {"ves", b.ves}};
  auto& errs = doc["errors"] = nlohmann::json::object();
  for (const auto& [c, n] : errors) errs[std::string(to_string(c))] = n;
  auto& recs = doc["records"] = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json j = {{"id", r.id},
                        {"db_id", r.db_id},
                        {"question", r.question},
                        {"predicted", r.predicted},
                        {"gold", r.gold},
                        {"difficulty", std::string(to_string(r.difficulty))},
                        {"em", r.em},
                        {"ex", r.ex},
                        {"ves", r.ves},
                        {"category", r.category ? nlohmann::json(std::string(to_string(*r.category)))
                                                : nlohmann::json()},
                        {"pred_status", r.pred_status},
                        {"time_gold_s", r.time_gold_s},
                        {"time_pred_s", r.time_pred_s}};
    if (r.error) j["error"] = *r.error;
    recs.push_back(std::move(j));
  }
  return doc;
}

std::string EvalReport::to_tsv() const {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  std::string out = "bucket\tcount\tem_acc\texec_acc\tves\n";
  for (const auto& [d, b] : by_difficulty)
    out += std::string(to_string(d)) + "\t" + std::to_string(b.count) + "\t" + num(b.em_acc) +
           "\t" + num(b.exec_acc) + "\t" + num(b.ves) + "\n";
  out += "overall\t" + std::to_string(records.size()) + "\t" + num(em_acc) + "\t" +
         num(exec_acc) + "\t" + num(ves) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Files

std::vector<Example> load_dataset(std::string_view json_document) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_document);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("dataset: ") + e.what(), e.byte);
  }
  if (!doc.is_array()) throw ValidationError("dataset must be an array");
  std::vector<Example> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& e = doc[i];
    try {
      Example ex;
      ex.question = e.at("question").get<std::string>();
      ex.query = e.at("query").get<std::string>();
      ex.db_id = e.at("db_id").get<std::string>();
      if (e.contains("difficulty") && !e["difficulty"].is_null())
        ex.difficulty = difficulty_from_string(e["difficulty"].get<std::string>());
      out.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& err) {
      throw ValidationError("dataset record " + std::to_string(i) + ": " + err.what());
    }
  }
  return out;
}

std::vector<Example> load_dataset_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read dataset " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_dataset(ss.str());
}

std::vector<Prediction> load_predictions(std::string_view jsonl) {
  std::vector<Prediction> out;
  std::set<std::size_t> seen;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      Prediction p;
      p.id = doc.at("id").get<std::size_t>();
      p.sql = doc.at("sql").get<std::string>();
      if (!seen.insert(p.id).second)
        throw ValidationError("predictions line " + std::to_string(number) + ": duplicate id " +
                              std::to_string(p.id));
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("predictions line " + std::to_string(number) + ": " + e.what(), number);
    }
  }
  return out;
}

std::string dump_predictions(const std::vector<Prediction>& preds) {
  std::string out;
  for (const auto& p : preds) out += nlohmann::json{{"id", p.id}, {"sql", p.sql}}.dump() + "\n";
  return out;
}

std::filesystem::path database_path(const std::filesystem::path& root, std::string_view db_id) {
  const std::string id(db_id);
  auto nested = root / id / (id + ".sqlite");
  if (std::filesystem::exists(nested)) return nested;
  return root / (id + ".sqlite");
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

double median_time(const std::filesystem::path& db, std::string_view sql, const EvalConfig& cfg) {
  std::vector<double> times;
  for (int i = 0; i < std::max(1, cfg.timing_runs); ++i)
    times.push_back(execute_sql(db, sql, cfg.timeout_s).time_s);
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

EvalRecord evaluate_one(const Example& ex, const Prediction& p, const std::filesystem::path& db_root,
                        const EvalConfig& cfg, const SchemaCatalog* catalog) {
  EvalRecord r;
  r.id = p.id;
  r.db_id = ex.db_id;
  r.question = ex.question;
  r.predicted = p.sql;
  r.gold = ex.query;
  r.difficulty = ex.difficulty;
  const bool pred_ok = sql::validate_sql(p.sql).ok();
  r.pred_status = pred_ok ? "ok" : "invalid";
  try {
    r.em = pred_ok && exact_match(p.sql, ex.query, catalog);
  } catch (const EvaluationError& e) {
    r.error = e.what();
  }
  const auto db = database_path(db_root, ex.db_id);
  if (!catalog) {
    r.error = "missing database " + db.string();
  } else if (!r.error) {
    const auto g = execute_sql(db, ex.query, cfg.timeout_s);
    if (g.status != ExecStatus::ok) {
      r.error = "gold SQL did not execute: " + g.message;
    } else if (pred_ok) {
      const auto pr = execute_sql(db, p.sql, cfg.timeout_s);
      r.pred_status = std::string(to_string(pr.status));
      r.ex = pr.status == ExecStatus::ok && same_rows(pr.rows, g.rows, g.ordered);
      if (r.ex) {
        r.time_gold_s = median_time(db, ex.query, cfg);
        r.time_pred_s = median_time(db, p.sql, cfg);
        r.ves = ves_contribution(r.time_gold_s, r.time_pred_s);
      }
    }
  }
  if (!r.ex) r.category = r.error ? FailureCategory::other : classify_error(p.sql, ex.query, catalog);
  return r;
}

}  // namespace

EvalReport evaluate(const std::vector<Example>& examples,
                    const std::vector<Prediction>& predictions,
                    const std::filesystem::path& db_root, const EvalConfig& cfg) {
  if (predictions.empty()) throw ValidationError("no predictions to evaluate");
  if (!(cfg.timeout_s > 0)) throw ConfigError("timeout must be positive");
  auto preds = predictions;
  std::sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const auto& p : preds)
    if (p.id >= examples.size())
      throw ValidationError("prediction id " + std::to_string(p.id) + " has no example");

  // Records sharing a database stay on one worker so their timings do not
  // contend with each other.
  std::map<std::string, std::vector<std::size_t>> by_db;
  for (std::size_t i = 0; i < preds.size(); ++i) by_db[examples[preds[i].id].db_id].push_back(i);
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups(by_db.begin(), by_db.end());

  std::vector<EvalRecord> records(preds.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t gi; (gi = next++) < groups.size();) {
      try {
        const auto& [db_id, idx] = groups[gi];
        std::optional<SchemaCatalog> catalog;
        const auto db = database_path(db_root, db_id);
        if (std::filesystem::is_regular_file(db)) catalog = introspect_sqlite(db);
        for (auto i : idx)
          records[i] = evaluate_one(examples[preds[i].id], preds[i], db_root, cfg,
                                    catalog ? &*catalog : nullptr);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto jobs = std::clamp<std::size_t>(cfg.jobs, 1, std::max<std::size_t>(1, groups.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return EvalReport::summarize(std::move(records));
}

}  // namespace sgusql
