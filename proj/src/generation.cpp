#include "sgusql/generation.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

#include "sgusql/text.hpp"

// After Eigen: resolv.h defines _res.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

namespace sgusql {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string one_line(std::string_view s) {
  std::string out(s);
  std::replace(out.begin(), out.end(), '\n', ' ');
  std::replace(out.begin(), out.end(), '\r', ' ');
  return out;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::size_t word_count(std::string_view s) {
  std::size_t n = 0;
  bool in = false;
  for (char c : s) {
    const bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!ws && !in) ++n;
    in = !ws;
  }
  return n;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

std::string_view sql_type(DataType t) {
  switch (t) {
    case DataType::text: return "TEXT";
    case DataType::number: return "NUMERIC";
    case DataType::time: return "DATETIME";
    case DataType::boolean: return "BOOLEAN";
    case DataType::other: return "TEXT";
  }
  return "TEXT";
}

std::string instruction_for(MetaOpKind k, bool negated) {
  switch (k) {
    case MetaOpKind::select: return "Write the complete SQL query that answers the question.";
    case MetaOpKind::subquery: return "Write the nested SELECT statement this subtask needs.";
    case MetaOpKind::from_join: return "Write the FROM clause, with any JOINs, for this subtask.";
    case MetaOpKind::where:
      return negated ? "Write the WHERE clause, excluding rows with NOT IN over the nested query."
                     : "Write the WHERE clause for this subtask.";
    case MetaOpKind::group_by: return "Write the GROUP BY clause for this subtask.";
    case MetaOpKind::having: return "Write the HAVING clause for this subtask.";
    case MetaOpKind::order_by: return "Write the ORDER BY clause, with LIMIT if needed.";
    case MetaOpKind::limit: return "Write the LIMIT clause for this subtask.";
    case MetaOpKind::aggregate: return "Write the aggregate expression for the select list.";
    case MetaOpKind::set_op:
      return "Write the set operation (UNION, INTERSECT or EXCEPT) followed by its query.";
  }
  return {};
}

std::map<std::size_t, std::string> text_map(const std::vector<SqlComponent>& comps) {
  std::map<std::size_t, std::string> out;
  for (const auto& c : comps) out[c.id] = c.text;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Contexts

PromptContext compose_context(std::size_t node, const SubtaskPlan& plan,
                              const LinkingResult& linking,
                              const std::vector<SqlComponent>& prior, std::string_view question,
                              const QueryGraph& qg, const SchemaGraph& sg) {
  const Subtask& s = plan.get(node);
  const auto texts = text_map(prior);
  for (auto c : s.children)
    if (!texts.count(c))
      throw OrderingError("subtask " + std::to_string(node) + " reached before child " +
                          std::to_string(c));

  auto summary = [&](std::size_t id) {
    ComponentSummary cs{id, plan.get(id).op.kind, std::nullopt};
    if (auto it = texts.find(id); it != texts.end()) cs.text = it->second;
    return cs;
  };

  PromptContext ctx;
  ctx.question = std::string(question);
  ctx.node = node;
  ctx.kind = s.op.kind;
  ctx.negated = s.op.negated;
  ctx.children = s.children;
  ctx.value_hints = s.op.value_hints;
  ctx.prior = prior;
  if (s.parent) {
    ctx.parent = summary(*s.parent);
    for (auto sib : plan.get(*s.parent).children)
      if (sib != node) ctx.siblings.push_back(summary(sib));
  }

  for (auto hint : s.op.schema_hints) {
    LinkedElement e;
    e.name = sg.qualified_name(hint);
    e.tags.emplace_back(to_string(sg.nodes()[hint].kind));
    const Assignment* hit = nullptr;
    for (const auto& a : linking.assignments)
      if (a.schema_node == hint) { hit = &a; break; }
    if (!hit)
      for (const auto& a : linking.assignments)
        if (sg.owning_table(a.schema_node) == hint) { hit = &a; break; }
    if (hit) {
      e.mention = qg.nodes.at(hit->query_node).text;
      e.score = hit->score;
      for (const auto& t : linking.predefined_relations)
        if (t.query_node == hit->query_node && t.schema_node == hit->schema_node) {
          std::string tag(to_string(t.relation));
          if (std::find(e.tags.begin(), e.tags.end(), tag) == e.tags.end()) e.tags.push_back(tag);
        }
    }
    ctx.linked.push_back(std::move(e));
  }

  const auto& cat = sg.catalog();
  std::set<std::size_t> tables;
  for (auto hint : s.op.schema_hints) tables.insert(sg.nodes()[sg.owning_table(hint)].table_index);
  if (tables.empty())
    for (const auto& a : linking.assignments)
      tables.insert(sg.nodes()[sg.owning_table(a.schema_node)].table_index);
  std::set<std::size_t> slice = tables;
  for (const auto& fk : cat.foreign_keys) {
    if (tables.count(fk.from.table)) slice.insert(fk.to.table);
    if (tables.count(fk.to.table)) slice.insert(fk.from.table);
  }
  if (slice.empty())
    for (std::size_t t = 0; t < cat.tables.size(); ++t) slice.insert(t);
  ctx.schema_slice = render_schema(cat, {slice.begin(), slice.end()});
  return ctx;
}

std::string render_schema(const SchemaCatalog& catalog, const std::vector<std::size_t>& tables) {
  std::ostringstream out;
  for (auto t : tables) {
    const auto& table = catalog.tables.at(t);
    std::vector<std::string> lines;
    for (const auto& c : table.columns)
      lines.push_back("  " + c.name + " " + std::string(sql_type(c.data_type)));
    std::vector<std::string> pk;
    for (const auto& id : catalog.primary_keys)
      if (id.table == t) pk.push_back(table.columns.at(id.column).name);
    if (!pk.empty()) {
      std::string line = "  PRIMARY KEY (";
      for (std::size_t i = 0; i < pk.size(); ++i) line += (i ? ", " : "") + pk[i];
      lines.push_back(line + ")");
    }
    for (const auto& fk : catalog.foreign_keys)
      if (fk.from.table == t)
        lines.push_back("  FOREIGN KEY (" + catalog.column(fk.from).name + ") REFERENCES " +
                        catalog.tables.at(fk.to.table).name + " (" + catalog.column(fk.to).name +
                        ")");
    out << "CREATE TABLE " << table.name << " (\n";
    for (std::size_t i = 0; i < lines.size(); ++i)
      out << lines[i] << (i + 1 < lines.size() ? ",\n" : "\n");
    out << ");\n";
  }
  return out.str();
}

std::string render_prompt(const PromptContext& ctx) {
  std::ostringstream out;
  out << "-- schema\n" << ctx.schema_slice;
  for (const auto& e : ctx.linked) {
    out << "-- linked: " << e.name << " (";
    for (std::size_t i = 0; i < e.tags.size(); ++i) out << (i ? ", " : "") << e.tags[i];
    out << ")";
    if (!e.mention.empty()) out << " <- \"" << one_line(e.mention) << "\" " << fixed4(e.score);
    out << "\n";
  }
  out << "/* Answer the following: " << one_line(ctx.question) << " */\n";
  out << prompt::question << one_line(ctx.question) << "\n";
  out << prompt::subtask << ctx.node << " " << to_string(ctx.kind) << "\n";
  auto summary = [&](std::string_view label, const ComponentSummary& s) {
    out << "-- " << label << ": " << s.id << " " << to_string(s.kind);
    if (s.text) out << ": " << *s.text;
    out << "\n";
  };
  if (ctx.parent) summary("parent", *ctx.parent);
  for (const auto& s : ctx.siblings) summary("sibling", s);
  if (!ctx.value_hints.empty()) {
    out << "-- values:";
    for (const auto& v : ctx.value_hints) out << " '" << one_line(v) << "'";
    out << "\n";
  }
  for (const auto& c : ctx.prior)
    out << prompt::component << c.id << " " << to_string(c.kind) << ": " << c.text << "\n";
  out << prompt::instruction << instruction_for(ctx.kind, ctx.negated) << "\n";
  out << "-- placeholders: write {sub:<id>} to reuse a prior component; it is replaced by that "
         "component's text.\n";
  out << "-- Reply with the SQL fragment only.\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Endpoints

GenerationResponse complete_with_retry(Endpoint& ep, const GenerationRequest& req,
                                       const RetryPolicy& policy) {
  auto backoff = policy.initial_backoff;
  const int attempts = std::max(1, policy.attempts);
  for (int i = 1;; ++i) {
    try {
      return ep.complete(req);
    } catch (const TransportError& e) {
      if (i >= attempts)
        throw EndpointError(ep.name() + " failed after " + std::to_string(attempts) +
                            " attempts: " + e.what());
    }
    if (policy.sleep)
      policy.sleep(backoff);
    else
      std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

GenerationResponse EchoEndpoint::complete(const GenerationRequest& req) {
  const auto start = Clock::now();
  GenerationResponse r;
  std::istringstream in(req.prompt);
  std::string line;
  while (std::getline(in, line))
    if (starts_with(line, prompt::instruction)) r.text = line.substr(prompt::instruction.size());
  if (r.text.empty()) r.text = "no instruction";
  r.prompt_tokens = word_count(req.prompt);
  r.completion_tokens = word_count(r.text);
  r.time_ms = elapsed_ms(start);
  return r;
}

CannedEndpoint::CannedEndpoint(std::vector<std::optional<std::string>> script)
    : script_(std::move(script)) {}

GenerationResponse CannedEndpoint::complete(const GenerationRequest& req) {
  std::lock_guard lock(mu_);
  if (next_ >= script_.size()) throw EndpointError("canned script exhausted");
  const auto& reply = script_[next_++];
  if (!reply) throw TransportError("scripted transport failure");
  GenerationResponse r;
  r.text = *reply;
  r.prompt_tokens = word_count(req.prompt);
  r.completion_tokens = word_count(r.text);
  return r;
}

std::size_t CannedEndpoint::calls() const {
  std::lock_guard lock(mu_);
  return next_;
}

// --- oracle ---------------------------------------------------------------------

OracleEndpoint::OracleEndpoint(std::map<std::string, std::string> gold_by_question)
    : gold_(std::move(gold_by_question)) {}

namespace {

bool is_aggregate_name(std::string_view name) {
  const auto n = to_lower(name);
  return n == "count" || n == "sum" || n == "avg" || n == "min" || n == "max";
}

const sql::Expr* first_aggregate(const sql::Expr& e) {
  if (e.kind == sql::ExprKind::function && is_aggregate_name(e.name)) return &e;
  for (const auto& a : e.args)
    if (a)
      if (const auto* hit = first_aggregate(*a)) return hit;
  return nullptr;
}

std::string neutral_fragment(MetaOpKind k, const sql::Query& gold) {
  switch (k) {
    case MetaOpKind::aggregate:
      for (const auto& item : gold.select.items)
        if (const auto* agg = first_aggregate(*item.expr)) return sql::render(*agg);
      return "count(*)";
    case MetaOpKind::limit:
      return "LIMIT " + gold.select.limit.value_or("1");
    case MetaOpKind::from_join: return sql::render_from(gold.select);
    case MetaOpKind::where: return "WHERE 1 = 1";
    case MetaOpKind::group_by: return "GROUP BY 1";
    case MetaOpKind::having: return "HAVING count(*) > 0";
    case MetaOpKind::order_by: return "ORDER BY 1";
    case MetaOpKind::set_op: return "UNION SELECT 1";
    case MetaOpKind::select:
    case MetaOpKind::subquery: return "SELECT 1";
  }
  return "SELECT 1";
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
  return s;
}

}  // namespace

GenerationResponse OracleEndpoint::complete(const GenerationRequest& req) {
  const auto start = Clock::now();
  std::string question;
  std::optional<MetaOpKind> kind;
  std::vector<std::pair<std::size_t, std::string>> prior;
  std::istringstream in(req.prompt);
  std::string line;
  while (std::getline(in, line)) {
    if (starts_with(line, prompt::question)) {
      question = line.substr(prompt::question.size());
    } else if (starts_with(line, prompt::subtask)) {
      std::istringstream ls(line.substr(prompt::subtask.size()));
      std::size_t id = 0;
      std::string k;
      ls >> id >> k;
      kind = meta_op_from_string(k);
    } else if (starts_with(line, prompt::component)) {
      const auto rest = line.substr(prompt::component.size());
      const auto colon = rest.find(": ");
      if (colon == std::string::npos) continue;
      std::istringstream ls(rest.substr(0, colon));
      std::size_t id = 0;
      ls >> id;
      prior.emplace_back(id, rest.substr(colon + 2));
    }
  }
  auto it = gold_.find(question);
  if (it == gold_.end()) throw EndpointError("oracle has no gold SQL for question: " + question);
  if (!kind) throw EndpointError("oracle prompt names no subtask kind");

  const auto gold = sql::normalize(*sql::parse(it->second));
  const auto comps = sql::clause_split(*gold);
  std::map<std::size_t, std::string> gold_text;
  for (const auto& c : comps) gold_text[c.id] = c.text;
  std::map<std::size_t, std::string> prior_text(prior.begin(), prior.end());
  const std::size_t root = comps.back().id;

  // Gold components whose expansion a prior component reproduces.
  std::map<std::size_t, std::size_t> match;
  std::set<std::size_t> taken;
  for (const auto& [pid, ptext] : prior) {
    std::string pexp;
    try {
      pexp = sql::collapse_whitespace(sql::expand_placeholders(ptext, prior_text));
    } catch (const ValidationError&) {
      continue;
    }
    for (const auto& c : comps) {
      if (c.id == root || match.count(c.id)) continue;
      if (sql::collapse_whitespace(sql::expand_placeholders(c.text, gold_text)) == pexp) {
        match[c.id] = pid;
        taken.insert(c.id);
        break;
      }
    }
  }
  std::function<std::string(std::size_t)> render = [&](std::size_t g) {
    std::string text = gold_text.at(g);
    for (auto child : sql::placeholders_in(gold_text.at(g))) {
      auto m = match.find(child);
      text = replace_all(text, sql::placeholder(child),
                         m != match.end() ? sql::placeholder(m->second) : render(child));
    }
    return text;
  };

  std::string answer;
  if (*kind == MetaOpKind::select) {
    answer = render(root);
  } else {
    const auto fk = fragment_kind(*kind);
    std::optional<std::size_t> pick, reuse;
    for (const auto& c : comps) {
      if (c.id == root || c.kind != fk) continue;
      if (!reuse) reuse = c.id;
      if (!taken.count(c.id)) {
        pick = c.id;
        break;
      }
    }
    if (!pick) pick = reuse;
    answer = pick ? render(*pick) : neutral_fragment(*kind, *gold);
  }

  GenerationResponse r;
  r.text = answer;
  r.prompt_tokens = word_count(req.prompt);
  r.completion_tokens = word_count(answer);
  r.time_ms = elapsed_ms(start);
  return r;
}

// --- http -----------------------------------------------------------------------

HttpEndpoint::HttpEndpoint(HttpEndpointConfig cfg) : cfg_(std::move(cfg)) {
  const auto& url = cfg_.base_url;
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || (url.substr(0, scheme) != "http" && url.substr(0, scheme) != "https"))
    throw ConfigError("endpoint.base_url must start with http:// or https://: " + url);
  const auto slash = url.find('/', scheme + 3);
  origin_ = url.substr(0, slash);
  path_ = slash == std::string::npos ? "" : url.substr(slash);
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  if (origin_.size() <= scheme + 3) throw ConfigError("endpoint.base_url has no host: " + url);
}

GenerationResponse HttpEndpoint::complete(const GenerationRequest& req) {
  const auto start = Clock::now();
  nlohmann::json body = {
      {"model", req.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}})},
      {"temperature", req.temperature},
      {"max_tokens", req.max_tokens},
  };
  if (!req.stop.empty()) body["stop"] = req.stop;

  httplib::Client client(origin_);
  client.set_connection_timeout(cfg_.timeout);
  client.set_read_timeout(cfg_.timeout);
  client.set_write_timeout(cfg_.timeout);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
  auto res = client.Post(path_ + "/chat/completions", headers, body.dump(), "application/json");
  if (!res) throw TransportError("request to " + origin_ + " failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw TransportError("endpoint returned HTTP " + std::to_string(res->status));
  if (res->status != 200)
    throw EndpointError("endpoint returned HTTP " + std::to_string(res->status) + ": " +
                        res->body.substr(0, 200));

  GenerationResponse r;
  try {
    const auto doc = nlohmann::json::parse(res->body);
    r.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    if (doc.contains("usage")) {
      r.prompt_tokens = doc["usage"].value("prompt_tokens", std::size_t{0});
      r.completion_tokens = doc["usage"].value("completion_tokens", std::size_t{0});
    }
  } catch (const nlohmann::json::exception& e) {
    throw EndpointError(std::string("malformed completion response: ") + e.what());
  }
  if (r.text.empty()) throw TransportError("endpoint returned an empty completion");
  r.time_ms = elapsed_ms(start);
  return r;
}

// ---------------------------------------------------------------------------
// Components

std::string sanitize_response(std::string_view text) {
  std::string body(text);
  if (const auto open = body.find("```"); open != std::string::npos) {
    auto start = open + 3;
    const auto close = body.find("```", start);
    std::string inner = body.substr(start, close == std::string::npos ? std::string::npos : close - start);
    // Language tag directly after the fence.
    std::size_t i = 0;
    while (i < inner.size() && std::isalpha(static_cast<unsigned char>(inner[i]))) ++i;
    if (i > 0 && to_lower(inner.substr(0, i)) == "sql" &&
        (i == inner.size() || std::isspace(static_cast<unsigned char>(inner[i]))))
      inner.erase(0, i);
    body = inner;
  }
  std::istringstream in(body);
  std::string line, kept;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first != std::string::npos && line.compare(first, 2, "--") == 0) continue;
    kept += line + "\n";
  }
  auto out = sql::collapse_whitespace(kept);
  while (!out.empty() && (out.back() == ';' || std::isspace(static_cast<unsigned char>(out.back()))))
    out.pop_back();
  return out;
}

std::optional<sql::Diagnostic> check_component(MetaOpKind kind, std::string_view text,
                                               const std::vector<SqlComponent>& prior) {
  if (text.empty()) return sql::Diagnostic{"empty component", 0, 0};
  std::string expanded;
  try {
    expanded = sql::expand_placeholders(text, text_map(prior));
  } catch (const ValidationError& e) {
    return sql::Diagnostic{e.what(), 0, 0};
  }
  return sql::validate_fragment(fragment_kind(kind), expanded);
}

SqlComponent generate_component(Endpoint& ep, const PromptContext& ctx,
                                const GenerationSettings& settings,
                                std::vector<Attempt>* attempts) {
  GenerationRequest req;
  req.model = settings.model;
  req.temperature = settings.temperature;
  req.max_tokens = settings.max_tokens;
  req.prompt = render_prompt(ctx);
  if (req.temperature < 0) throw ConfigError("temperature must be >= 0");

  std::vector<sql::Diagnostic> diagnostics;
  for (int round = 0; round < 2; ++round) {
    if (round == 1)
      req.prompt += std::string(prompt::rejected) + diagnostics.back().to_string() +
                    "\n-- Reply with the corrected SQL fragment only.\n";
    const auto resp = complete_with_retry(ep, req, settings.retry);
    const auto text = sanitize_response(resp.text);
    auto diag = check_component(ctx.kind, text, ctx.prior);
    if (attempts) attempts->push_back({req.prompt, resp.text, diag, resp.time_ms});
    if (!diag) return {ctx.node, ctx.kind, text};
    diagnostics.push_back(*diag);
  }
  throw ComponentError("subtask " + std::to_string(ctx.node) + " (" +
                           std::string(to_string(ctx.kind)) + ") produced invalid SQL twice: " +
                           diagnostics[0].to_string() + "; " + diagnostics[1].to_string(),
                       diagnostics);
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

nlohmann::json diagnostic_json(const std::optional<sql::Diagnostic>& d) {
  if (!d) return nullptr;
  return {{"message", d->message}, {"token", d->token}, {"offset", d->offset}};
}

}  // namespace

PipelineResult run_pipeline(std::string_view question, const SchemaGraph& sg, Endpoint& ep,
                            const PipelineOptions& options) {
  const auto start = Clock::now();
  nlohmann::json trace;
  trace["question"] = std::string(question);
  trace["db_id"] = sg.catalog().db_id;
  trace["endpoint"] = ep.name();
  std::string stage;

  auto fail = [&](ErrorCategory cat, const std::string& what) -> PipelineError {
    trace["failed_stage"] = stage;
    trace["error"] = what;
    trace["time_total_ms"] = elapsed_ms(start);
    return PipelineError(cat, stage, what, trace);
  };

  try {
    stage = "analyze";
    if (question.find_first_not_of(" \t\r\n") == std::string_view::npos)
      throw ValidationError("question is empty");
    const auto analysis = options.grammar ? analyze_question(question, *options.grammar)
                                          : analyze_question(question);
    const auto& qg = analysis.graph;
    {
      auto& a = trace["analysis"];
      a["tokens"] = nlohmann::json::array();
      for (const auto& t : qg.nodes) a["tokens"].push_back(t.text);
      a["interpretations"] = analysis.interpretations.size();
      a["selected"] = analysis.selected;
      a["fallback"] = analysis.interpretations.at(analysis.selected).fallback;
      a["tree"] = nlohmann::json::array();
      for (const auto& n : qg.tree.nodes)
        a["tree"].push_back({{"id", n.id},
                             {"symbol", n.symbol},
                             {"span", {n.span.start, n.span.end}},
                             {"parent", n.parent ? nlohmann::json(*n.parent) : nlohmann::json()}});
      a["coref"] = nlohmann::json::array();
      for (const auto& m : qg.coref.mentions)
        a["coref"].push_back({{"span", {m.span.start, m.span.end}}, {"entity", m.entity}});
      a["edges"] = qg.edges.size();
    }

    stage = "link";
    const auto linking = link(qg, sg, options.model, options.k, options.db);
    {
      auto& l = trace["linking"];
      l["used_model"] = linking.used_model;
      l["assignments"] = nlohmann::json::array();
      for (const auto& a : linking.assignments)
        l["assignments"].push_back({{"token", a.query_node},
                                    {"mention", qg.nodes.at(a.query_node).text},
                                    {"schema", sg.qualified_name(a.schema_node)},
                                    {"score", a.score}});
      l["relations"] = nlohmann::json::array();
      for (const auto& t : linking.predefined_relations)
        l["relations"].push_back({{"token", t.query_node},
                                  {"schema", sg.qualified_name(t.schema_node)},
                                  {"relation", std::string(to_string(t.relation))}});
      l["warnings"] = linking.warnings;
    }

    stage = "map_nodes";
    const auto annotated = map_nodes(qg, linking, sg,
                                     options.rules ? *options.rules : NodeMapperRules::default_rules());

    stage = "decompose";
    const auto plan = decompose(annotated);
    trace["plan"] = nlohmann::json::array();
    for (const auto& s : plan.subtasks) {
      nlohmann::json hints = nlohmann::json::array();
      for (auto h : s.op.schema_hints) hints.push_back(sg.qualified_name(h));
      trace["plan"].push_back(
          {{"id", s.id},
           {"kind", std::string(to_string(s.op.kind))},
           {"node", s.node ? nlohmann::json(*s.node) : nlohmann::json()},
           {"symbol", s.node ? nlohmann::json(qg.tree.node(*s.node).symbol) : nlohmann::json()},
           {"parent", s.parent ? nlohmann::json(*s.parent) : nlohmann::json()},
           {"children", s.children},
           {"negated", s.op.negated},
           {"schema_hints", hints},
           {"value_hints", s.op.value_hints}});
    }

    stage = "generate";
    std::vector<SqlComponent> components;
    trace["subtasks"] = nlohmann::json::array();
    for (const auto& s : plan.subtasks) {
      const auto ctx = compose_context(s.id, plan, linking, components, question, qg, sg);
      std::vector<Attempt> attempts;
      nlohmann::json record = {{"id", s.id}, {"kind", std::string(to_string(s.op.kind))}};
      auto record_attempts = [&] {
        record["attempts"] = nlohmann::json::array();
        for (const auto& a : attempts)
          record["attempts"].push_back({{"prompt", a.prompt},
                                        {"response", a.response},
                                        {"diagnostic", diagnostic_json(a.diagnostic)},
                                        {"time_ms", a.time_ms}});
      };
      try {
        components.push_back(generate_component(ep, ctx, options.generation, &attempts));
      } catch (...) {
        record_attempts();
        trace["subtasks"].push_back(record);
        throw;
      }
      record_attempts();
      record["component"] = components.back().text;
      trace["subtasks"].push_back(record);
    }

    stage = "assemble";
    PipelineResult result;
    result.sql = assemble(components, plan);
    trace["sql"] = result.sql;
    trace["time_total_ms"] = elapsed_ms(start);
    result.trace = std::move(trace);
    return result;
  } catch (const PipelineError&) {
    throw;
  } catch (const Error& e) {
    throw fail(e.category(), e.what());
  } catch (const std::exception& e) {
    throw fail(ErrorCategory::pipeline, e.what());
  }
}

nlohmann::json mask_timing(nlohmann::json doc) {
  if (doc.is_object()) {
    for (auto& [key, value] : doc.items()) {
      if (starts_with(key, "time_") || key == "ves")
        value = 0;
      else
        value = mask_timing(std::move(value));
    }
  } else if (doc.is_array()) {
    for (auto& v : doc) v = mask_timing(std::move(v));
  }
  return doc;
}

}  // namespace sgusql
