#include "sgusql/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "sgusql/decomposer.hpp"
#include "sgusql/error.hpp"
#include "sgusql/eval.hpp"
#include "sgusql/generation.hpp"
#include "sgusql/linker.hpp"
#include "sgusql/query_graph.hpp"

namespace sgusql::cli {

namespace {

using nlohmann::json;

template <class T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(std::string(key) + ": not a number: '" + std::string(value) + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  const auto v = to_lower(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(std::string(key) + ": not a boolean: '" + std::string(value) + "'");
}

std::string read_text(const std::filesystem::path& path, std::string_view what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + std::string(what) + " " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

std::size_t effective_jobs(const RunConfig& cfg) {
  if (cfg.jobs > 0) return cfg.jobs;
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::set(std::string_view key, std::string_view v) {
  const std::string value(v);
  if (key == "paths.catalog") paths.catalog = value;
  else if (key == "paths.db_root") paths.db_root = value;
  else if (key == "paths.grammar") paths.grammar = value;
  else if (key == "paths.rules") paths.rules = value;
  else if (key == "paths.model") paths.model = value;
  else if (key == "endpoint.mode") endpoint.mode = value;
  else if (key == "endpoint.base_url") endpoint.base_url = value;
  else if (key == "endpoint.model") endpoint.model = value;
  else if (key == "endpoint.temperature") endpoint.temperature = parse_number<double>(key, v);
  else if (key == "endpoint.max_tokens") endpoint.max_tokens = parse_number<int>(key, v);
  else if (key == "endpoint.max_in_flight") endpoint.max_in_flight = parse_number<std::size_t>(key, v);
  else if (key == "endpoint.attempts") endpoint.attempts = parse_number<int>(key, v);
  else if (key == "endpoint.backoff_ms") endpoint.backoff_ms = parse_number<int>(key, v);
  else if (key == "endpoint.timeout_s") endpoint.timeout_s = parse_number<int>(key, v);
  else if (key == "endpoint.gold") endpoint.gold = value;
  else if (key == "endpoint.script") endpoint.script = value;
  else if (key == "linker.dim") linker.dim = parse_number<std::size_t>(key, v);
  else if (key == "linker.k") linker.k = parse_number<std::size_t>(key, v);
  else if (key == "linker.epochs") linker.epochs = parse_number<std::size_t>(key, v);
  else if (key == "linker.lr") linker.lr = parse_number<double>(key, v);
  else if (key == "linker.seed") linker.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "eval.timeout_s") eval.timeout_s = parse_number<double>(key, v);
  else if (key == "eval.timing_runs") eval.timing_runs = parse_number<int>(key, v);
  else if (key == "eval.format") eval.format = value;
  else if (key == "jobs" || key == "run.jobs") jobs = parse_number<std::size_t>(key, v);
  else if (key == "verbose" || key == "run.verbose") verbose = parse_bool(key, v);
  else throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

void RunConfig::check() const {
  if (linker.k < 1) throw ConfigError("linker.k must be >= 1");
  if (linker.dim < 2) throw ConfigError("linker.dim must be >= 2");
  if (!(linker.lr > 0)) throw ConfigError("linker.lr must be > 0");
  if (!(eval.timeout_s > 0)) throw ConfigError("eval.timeout_s must be > 0");
  if (eval.timing_runs < 1) throw ConfigError("eval.timing_runs must be >= 1");
  if (eval.format != "text" && eval.format != "json" && eval.format != "tsv")
    throw ConfigError("format must be text, json or tsv, not '" + eval.format + "'");
  if (endpoint.mode != "http" && endpoint.mode != "mock:echo" && endpoint.mode != "mock:oracle" &&
      endpoint.mode != "mock:canned")
    throw ConfigError("endpoint.mode must be http or mock:echo|oracle|canned, not '" +
                      endpoint.mode + "'");
  if (endpoint.temperature < 0) throw ConfigError("endpoint.temperature must be >= 0");
  if (endpoint.max_tokens < 1) throw ConfigError("endpoint.max_tokens must be >= 1");
  if (endpoint.max_in_flight < 1) throw ConfigError("endpoint.max_in_flight must be >= 1");
  if (endpoint.attempts < 1) throw ConfigError("endpoint.attempts must be >= 1");
  if (endpoint.backoff_ms < 0) throw ConfigError("endpoint.backoff_ms must be >= 0");
  if (endpoint.timeout_s < 1) throw ConfigError("endpoint.timeout_s must be >= 1");
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::vector<CLI::ConfigItem> items;
  try {
    std::istringstream in{std::string(text)};
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    if (item.inputs.size() != 1)
      throw ConfigError("config: " + item.fullname() + " needs exactly one value");
    base.set(item.fullname(), item.inputs.front());
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  return parse_config(read_text(path, "config"), std::move(base));
}

SchemaCatalog resolve_catalog(const RunConfig& cfg, std::string_view db_id) {
  if (!cfg.paths.catalog.empty()) {
    for (auto& c : load_spider_catalog_file(cfg.paths.catalog))
      if (c.db_id == db_id) return c;
    throw ValidationError("unknown db_id '" + std::string(db_id) + "' in " + cfg.paths.catalog);
  }
  const auto path = database_path(cfg.paths.db_root, db_id);
  if (!std::filesystem::is_regular_file(path))
    throw ValidationError("unknown db_id '" + std::string(db_id) + "': no database under " +
                          cfg.paths.db_root);
  auto catalog = introspect_sqlite(path);
  catalog.db_id = std::string(db_id);
  return catalog;
}

// ---------------------------------------------------------------------------
// Shared plumbing

namespace {

// Caps the number of concurrent requests reaching the wrapped endpoint.
class InFlightLimit : public Endpoint {
 public:
  InFlightLimit(std::unique_ptr<Endpoint> inner, std::size_t cap)
      : inner_(std::move(inner)), cap_(cap) {}
  GenerationResponse complete(const GenerationRequest& req) override {
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return active_ < cap_; });
      ++active_;
    }
    struct Release {
      InFlightLimit* self;
      ~Release() {
        {
          std::lock_guard lock(self->mu_);
          --self->active_;
        }
        self->cv_.notify_one();
      }
    } release{this};
    return inner_->complete(req);
  }
  std::string name() const override { return inner_->name(); }

 private:
  std::unique_ptr<Endpoint> inner_;
  std::size_t cap_;
  std::size_t active_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
};

std::map<std::string, std::string> gold_by_question(const std::vector<Example>& examples) {
  std::map<std::string, std::string> out;
  for (const auto& e : examples) out.emplace(e.question, e.query);
  return out;
}

std::unique_ptr<Endpoint> make_endpoint(const RunConfig& cfg,
                                        const std::vector<Example>* dataset) {
  std::unique_ptr<Endpoint> ep;
  const auto& mode = cfg.endpoint.mode;
  if (mode == "mock:echo") {
    ep = std::make_unique<EchoEndpoint>();
  } else if (mode == "mock:oracle") {
    if (!cfg.endpoint.gold.empty())
      ep = std::make_unique<OracleEndpoint>(gold_by_question(load_dataset_file(cfg.endpoint.gold)));
    else if (dataset)
      ep = std::make_unique<OracleEndpoint>(gold_by_question(*dataset));
    else
      throw ConfigError("mock:oracle needs endpoint.gold for a single question");
  } else if (mode == "mock:canned") {
    if (cfg.endpoint.script.empty()) throw ConfigError("mock:canned needs endpoint.script");
    std::vector<std::optional<std::string>> script;
    try {
      for (const auto& v : json::parse(read_text(cfg.endpoint.script, "canned script")))
        script.push_back(v.is_null() ? std::nullopt : std::optional(v.get<std::string>()));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("canned script: ") + e.what());
    }
    ep = std::make_unique<CannedEndpoint>(std::move(script));
  } else {
    HttpEndpointConfig hc;
    hc.base_url = cfg.endpoint.base_url;
    if (const char* key = std::getenv("SGU_SQL_API_KEY")) hc.api_key = key;
    hc.timeout = std::chrono::seconds(cfg.endpoint.timeout_s);
    ep = std::make_unique<HttpEndpoint>(hc);
  }
  return std::make_unique<InFlightLimit>(std::move(ep), cfg.endpoint.max_in_flight);
}

struct Resources {
  std::optional<LinkerModel> model;
  std::optional<NodeMapperRules> rules;
  std::optional<QueryGrammar> grammar;
};

Resources load_resources(const RunConfig& cfg, bool use_model) {
  Resources r;
  if (use_model && !cfg.paths.model.empty()) r.model = load_model(cfg.paths.model);
  if (!cfg.paths.rules.empty()) r.rules = NodeMapperRules::load(cfg.paths.rules);
  if (!cfg.paths.grammar.empty()) r.grammar = QueryGrammar::load(cfg.paths.grammar);
  return r;
}

std::optional<sqlite::Database> open_probe_db(const RunConfig& cfg, std::string_view db_id) {
  const auto path = database_path(cfg.paths.db_root, db_id);
  if (!std::filesystem::is_regular_file(path)) return std::nullopt;
  return sqlite::Database(path, sqlite::Database::Mode::read_only);
}

PipelineOptions pipeline_options(const RunConfig& cfg, const Resources& res) {
  PipelineOptions o;
  o.k = cfg.linker.k;
  o.model = res.model ? &*res.model : nullptr;
  o.rules = res.rules ? &*res.rules : nullptr;
  o.grammar = res.grammar ? &*res.grammar : nullptr;
  o.generation.model = cfg.endpoint.model;
  o.generation.temperature = cfg.endpoint.temperature;
  o.generation.max_tokens = cfg.endpoint.max_tokens;
  o.generation.retry.attempts = cfg.endpoint.attempts;
  o.generation.retry.initial_backoff = std::chrono::milliseconds(cfg.endpoint.backoff_ms);
  return o;
}

std::string fixed(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string span_text(const QueryGraph& qg, TokenSpan s) {
  std::string out;
  for (auto i = s.start; i < s.end && i < qg.nodes.size(); ++i)
    out += (i > s.start ? " " : "") + qg.nodes[i].text;
  return out;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_parse(const RunConfig& cfg, const std::string& question, std::ostream& out) {
  if (question.find_first_not_of(" \t\r\n") == std::string::npos)
    throw ValidationError("question is empty");
  const auto res = load_resources(cfg, false);
  const auto analysis =
      res.grammar ? analyze_question(question, *res.grammar) : analyze_question(question);
  const auto& qg = analysis.graph;
  const auto& chosen = analysis.interpretations.at(analysis.selected);

  if (cfg.eval.format == "json") {
    json doc;
    doc["question"] = question;
    doc["tokens"] = json::array();
    for (const auto& t : qg.nodes) doc["tokens"].push_back({{"text", t.text}, {"lemma", t.lemma}});
    doc["interpretations"] = analysis.interpretations.size();
    doc["selected"] = analysis.selected;
    doc["score"] = chosen.score;
    doc["fallback"] = chosen.fallback;
    doc["root"] = qg.tree.root;
    doc["tree"] = json::array();
    for (const auto& n : qg.tree.nodes)
      doc["tree"].push_back({{"id", n.id},
                             {"symbol", n.symbol},
                             {"terminal", n.terminal},
                             {"span", {n.span.start, n.span.end}},
                             {"parent", n.parent ? json(*n.parent) : json()},
                             {"children", n.children}});
    doc["edges"] = json::array();
    for (const auto& e : qg.edges)
      doc["edges"].push_back(
          {{"source", e.source}, {"target", e.target}, {"relation", std::string(to_string(e.relation))}});
    doc["coref"] = json::array();
    for (const auto& m : qg.coref.mentions) {
      const auto& ent = qg.coref.entities.at(m.entity);
      doc["coref"].push_back({{"span", {m.span.start, m.span.end}},
                              {"entity", m.entity},
                              {"canonical", {ent.canonical.start, ent.canonical.end}},
                              {"unresolved", ent.unresolved}});
    }
    out << doc.dump(2) << "\n";
    return ok;
  }

  out << "tokens:";
  for (std::size_t i = 0; i < qg.nodes.size(); ++i) out << " " << i << ":" << qg.nodes[i].text;
  out << "\n";
  out << "tree (interpretation " << analysis.selected + 1 << " of " << analysis.interpretations.size()
      << ", score " << fixed(chosen.score) << (chosen.fallback ? ", fallback" : "") << "):\n";
  std::function<void(std::size_t, int)> print = [&](std::size_t id, int depth) {
    const auto& n = qg.tree.node(id);
    out << std::string(2 * (depth + 1), ' ') << n.symbol << " [" << n.span.start << ","
        << n.span.end << ")";
    if (n.terminal) out << " \"" << span_text(qg, n.span) << "\"";
    out << "\n";
    for (auto c : n.children) print(c, depth + 1);
  };
  print(qg.tree.root, 0);
  std::size_t fwd = 0, bwd = 0;
  for (const auto& e : qg.edges) (e.relation == QueryRelation::forward_syntax ? fwd : bwd)++;
  out << "edges: " << qg.edges.size() << " (forward " << fwd << ", backward " << bwd << ")\n";
  std::size_t links = 0;
  for (const auto& m : qg.coref.mentions) {
    const auto& ent = qg.coref.entities.at(m.entity);
    if (!ent.unresolved && ent.canonical == m.span) continue;
    ++links;
    out << "coref: \"" << span_text(qg, m.span) << "\" -> "
        << (ent.unresolved ? std::string("unresolved") : "\"" + span_text(qg, ent.canonical) + "\"")
        << "\n";
  }
  if (links == 0) out << "coref: none\n";
  return ok;
}

int cmd_link(const RunConfig& cfg, const std::string& question, const std::string& db_id,
             bool no_model, std::ostream& out) {
  if (question.find_first_not_of(" \t\r\n") == std::string::npos)
    throw ValidationError("question is empty");
  if (db_id.empty()) throw ValidationError("link needs --db");
  const auto sg = build_schema_graph(resolve_catalog(cfg, db_id));
  const auto res = load_resources(cfg, !no_model);
  auto probe = open_probe_db(cfg, db_id);
  const auto analysis =
      res.grammar ? analyze_question(question, *res.grammar) : analyze_question(question);
  const auto& qg = analysis.graph;
  const auto result = link(qg, sg, res.model ? &*res.model : nullptr, cfg.linker.k,
                           probe ? &*probe : nullptr);

  const std::string scorer =
      result.used_model ? "model" : (no_model ? "string similarity (--no-model)"
                                              : "string similarity (no model configured)");
  if (cfg.eval.format == "json") {
    json doc;
    doc["question"] = question;
    doc["db_id"] = db_id;
    doc["scorer"] = result.used_model ? "model" : "fallback";
    doc["assignments"] = json::array();
    for (const auto& a : result.assignments)
      doc["assignments"].push_back({{"token", a.query_node},
                                    {"mention", qg.nodes.at(a.query_node).text},
                                    {"schema", sg.qualified_name(a.schema_node)},
                                    {"score", a.score}});
    doc["relations"] = json::array();
    for (const auto& t : result.predefined_relations)
      doc["relations"].push_back({{"token", t.query_node},
                                  {"mention", qg.nodes.at(t.query_node).text},
                                  {"schema", sg.qualified_name(t.schema_node)},
                                  {"relation", std::string(to_string(t.relation))}});
    doc["warnings"] = result.warnings;
    out << doc.dump(2) << "\n";
    return ok;
  }
  out << "db: " << db_id << "\nscorer: " << scorer << "\n";
  out << "token\tmention\tschema\tscore\n";
  for (const auto& a : result.assignments)
    out << a.query_node << "\t" << qg.nodes.at(a.query_node).text << "\t"
        << sg.qualified_name(a.schema_node) << "\t" << fixed(a.score) << "\n";
  if (!result.predefined_relations.empty()) out << "relations:\n";
  for (const auto& t : result.predefined_relations)
    out << "  " << qg.nodes.at(t.query_node).text << " -> " << sg.qualified_name(t.schema_node)
        << " (" << to_string(t.relation) << ")\n";
  for (const auto& w : result.warnings) out << "warning: " << w << "\n";
  return ok;
}

int cmd_train(const RunConfig& cfg, const std::string& dataset, const std::string& output,
              std::ostream& out, std::ostream& err) {
  if (output.empty()) throw ValidationError("train needs --out");
  const auto parent = std::filesystem::path(output).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    throw IoError("output directory does not exist: " + parent.string());
  const auto records = load_link_records(read_text(dataset, "dataset"));
  if (records.empty()) throw ValidationError("training dataset is empty");
  for (const auto& r : records)
    if (r.db_id != records.front().db_id)
      throw ValidationError("training dataset mixes databases ('" + records.front().db_id +
                            "' and '" + r.db_id + "'); train one database at a time");
  const auto sg = build_schema_graph(resolve_catalog(cfg, records.front().db_id));
  std::vector<LinkExample> examples;
  for (const auto& r : records) examples.push_back(make_link_example(r, sg));

  LinkerConfig lc;
  lc.dim = cfg.linker.dim;
  lc.k = cfg.linker.k;
  lc.epochs = cfg.linker.epochs;
  lc.lr = cfg.linker.lr;
  lc.seed = cfg.linker.seed;
  TrainReport report;
  const bool text = cfg.eval.format != "json";
  const auto model = train_linker(examples, sg, lc, &report, [&](std::size_t epoch, double loss) {
    if (text) out << "epoch " << epoch << " loss " << fixed(loss, 6) << "\n";
    if (cfg.verbose) err << "[train] epoch " << epoch << " loss " << fixed(loss, 6) << "\n";
  });
  save_model(model, output);
  if (text) {
    out << "best epoch " << report.best_epoch << ", train accuracy "
        << fixed(report.train_accuracy) << ", " << report.trained_examples << " examples ("
        << report.skipped_examples << " skipped)\nmodel written to " << output << "\n";
  } else {
    json doc = {{"db_id", records.front().db_id},
                {"epoch_loss", report.epoch_loss},
                {"best_epoch", report.best_epoch},
                {"train_accuracy", report.train_accuracy},
                {"trained_examples", report.trained_examples},
                {"skipped_examples", report.skipped_examples},
                {"seed", cfg.linker.seed},
                {"model", output}};
    out << doc.dump(2) << "\n";
  }
  return ok;
}

int cmd_generate_one(const RunConfig& cfg, const std::string& question, const std::string& db_id,
                     const std::string& trace_path, std::ostream& out) {
  if (db_id.empty()) throw ValidationError("generate needs --db with a question");
  const auto sg = build_schema_graph(resolve_catalog(cfg, db_id));
  const auto res = load_resources(cfg, true);
  auto ep = make_endpoint(cfg, nullptr);
  auto probe = open_probe_db(cfg, db_id);
  auto opts = pipeline_options(cfg, res);
  opts.db = probe ? &*probe : nullptr;
  try {
    const auto result = run_pipeline(question, sg, *ep, opts);
    if (!trace_path.empty()) write_text(trace_path, result.trace.dump(2) + "\n");
    if (cfg.eval.format == "json")
      out << json{{"question", question}, {"db_id", db_id}, {"sql", result.sql}}.dump(2) << "\n";
    else
      out << result.sql << "\n";
    return ok;
  } catch (const PipelineError& e) {
    if (!trace_path.empty()) write_text(trace_path, e.trace().dump(2) + "\n");
    throw;
  }
}

int cmd_generate_batch(const RunConfig& cfg, const std::string& dataset_path,
                       const std::string& out_path, const std::string& trace_path,
                       std::ostream& out, std::ostream& err) {
  const auto examples = load_dataset_file(dataset_path);
  if (examples.empty()) throw ValidationError("dataset is empty");
  const auto res = load_resources(cfg, true);
  auto ep = make_endpoint(cfg, &examples);
  const auto opts = pipeline_options(cfg, res);

  std::map<std::string, SchemaGraph> graphs;
  for (const auto& e : examples)
    if (!graphs.count(e.db_id)) graphs.emplace(e.db_id, build_schema_graph(resolve_catalog(cfg, e.db_id)));

  struct Outcome {
    std::string sql;
    json trace;
    std::optional<std::string> error;
  };
  std::vector<Outcome> outcomes(examples.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < examples.size();) {
      const auto& e = examples[i];
      auto& o = outcomes[i];
      try {
        auto probe = open_probe_db(cfg, e.db_id);
        auto local = opts;
        local.db = probe ? &*probe : nullptr;
        auto result = run_pipeline(e.question, graphs.at(e.db_id), *ep, local);
        o.sql = std::move(result.sql);
        o.trace = std::move(result.trace);
      } catch (const PipelineError& pe) {
        o.trace = pe.trace();
        o.error = pe.what();
      } catch (const std::exception& ex) {
        o.trace = {{"question", e.question}, {"db_id", e.db_id}, {"error", ex.what()}};
        o.error = ex.what();
      }
      if (cfg.verbose) {
        std::lock_guard lock(log_mu);
        err << "[generate] " << i << " " << (o.error ? "failed: " + *o.error : "ok") << "\n";
      }
    }
  };
  const auto jobs = std::min(effective_jobs(cfg), examples.size());
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<Prediction> preds;
  std::string traces;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    preds.push_back({i, outcomes[i].sql});
    json line = {{"id", i}, {"ok", !outcomes[i].error}, {"trace", outcomes[i].trace}};
    traces += line.dump() + "\n";
    failed += outcomes[i].error.has_value();
  }
  if (out_path.empty())
    out << dump_predictions(preds);
  else
    write_text(out_path, dump_predictions(preds));
  if (!trace_path.empty()) write_text(trace_path, traces);
  err << "generated " << examples.size() - failed << "/" << examples.size() << " queries\n";
  if (failed == examples.size())
    throw PipelineError(ErrorCategory::pipeline, "generate",
                        "every question failed; first error: " + *outcomes.front().error,
                        outcomes.front().trace);
  return ok;
}

int cmd_eval(const RunConfig& cfg, const std::string& dataset_path, const std::string& preds_path,
             const std::string& out_path, std::ostream& out, std::ostream& err) {
  const auto examples = load_dataset_file(dataset_path);
  const auto preds = load_predictions(read_text(preds_path, "predictions"));
  if (preds.empty()) throw ValidationError("predictions file is empty");
  EvalConfig ec;
  ec.timeout_s = cfg.eval.timeout_s;
  ec.timing_runs = cfg.eval.timing_runs;
  ec.jobs = effective_jobs(cfg);
  const auto report = evaluate(examples, preds, cfg.paths.db_root, ec);

  std::string text;
  if (cfg.eval.format == "json") {
    text = report.to_json().dump(2) + "\n";
  } else if (cfg.eval.format == "tsv") {
    text = report.to_tsv();
  } else {
    text = report.to_tsv() + "errors:";
    for (const auto& [c, n] : report.errors) text += " " + std::string(to_string(c)) + "=" + std::to_string(n);
    text += "\n";
    for (const auto& r : report.records)
      if (r.error) text += "record " + std::to_string(r.id) + ": " + *r.error + "\n";
  }
  if (out_path.empty())
    out << text;
  else
    write_text(out_path, text);

  std::size_t failed = 0;
  for (const auto& r : report.records) failed += r.error.has_value();
  if (cfg.verbose) err << "[eval] " << report.records.size() << " records, " << failed << " errors\n";
  if (failed == report.records.size())
    throw EvaluationError("no record could be evaluated; first error: " +
                          *report.records.front().error);
  return ok;
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::io: return io;
    case ErrorCategory::validation: return validation;
    case ErrorCategory::pipeline: return pipeline;
  }
  return pipeline;
}

}  // namespace

// ---------------------------------------------------------------------------
// Entry point

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structure-guided text-to-SQL", "sgu-sql"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path, format;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  bool verbose = false;
  std::vector<std::string> overrides;
  std::string db_root, catalog, model_path, mode;
  app.add_option("--config", config_path, "TOML-style run configuration");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--format", format, "text, json or tsv");
  app.add_option("--jobs", jobs, "worker threads (default: logical cores)");
  app.add_flag("--verbose", verbose, "progress on stderr");
  app.add_option("--set", overrides, "override a configuration key: section.key=value");
  app.add_option("--db-root", db_root, "directory of <db_id>.sqlite files");
  app.add_option("--catalog", catalog, "Spider tables.json");
  app.add_option("--model", model_path, "linker model file");
  app.add_option("--mode", mode, "endpoint mode: http, mock:echo, mock:oracle, mock:canned");

  std::string question, db_id, trace_path, out_path, dataset_path, preds_path;
  bool no_model = false;
  std::optional<std::size_t> epochs, k, dim;
  std::optional<double> lr, timeout;

  auto* parse = app.add_subcommand("parse", "print the query graph and syntax tree");
  parse->add_option("question", question)->required();

  auto* link_cmd = app.add_subcommand("link", "print schema linking for a question");
  link_cmd->add_option("question", question)->required();
  link_cmd->add_option("--db", db_id, "database id")->required();
  link_cmd->add_flag("--no-model", no_model, "use the string-similarity scorer");
  link_cmd->add_option("--k", k, "candidates per token");

  auto* train = app.add_subcommand("train", "train the schema linker");
  train->add_option("dataset", dataset_path)->required();
  train->add_option("--out", out_path, "model file to write")->required();
  train->add_option("--epochs", epochs);
  train->add_option("--lr", lr);
  train->add_option("--dim", dim);
  train->add_option("--k", k);

  auto* generate = app.add_subcommand("generate", "translate a question, or a dataset, into SQL");
  generate->add_option("question", question);
  generate->add_option("--db", db_id, "database id for a single question");
  generate->add_option("--dataset", dataset_path, "dataset file for batch generation");
  generate->add_option("--out", out_path, "predictions file (batch)");
  generate->add_option("--trace", trace_path, "trace file");
  generate->add_option("--k", k);

  auto* eval_cmd = app.add_subcommand("eval", "score predictions against a dataset");
  eval_cmd->add_option("dataset", dataset_path)->required();
  eval_cmd->add_option("predictions", preds_path)->required();
  eval_cmd->add_option("--out", out_path, "report file");
  eval_cmd->add_option("--timeout", timeout, "per-query timeout in seconds");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  if (!argv_rev.empty()) argv_rev.pop_back();  // program name
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : validation;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path, cfg);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
      cfg.set(o.substr(0, eq), o.substr(eq + 1));
    }
    if (seed) cfg.linker.seed = *seed;
    if (!format.empty()) cfg.eval.format = format;
    if (jobs) cfg.jobs = *jobs;
    if (verbose) cfg.verbose = true;
    if (!db_root.empty()) cfg.paths.db_root = db_root;
    if (!catalog.empty()) cfg.paths.catalog = catalog;
    if (!model_path.empty()) cfg.paths.model = model_path;
    if (!mode.empty()) cfg.endpoint.mode = mode;
    if (epochs) cfg.linker.epochs = *epochs;
    if (lr) cfg.linker.lr = *lr;
    if (dim) cfg.linker.dim = *dim;
    if (k) cfg.linker.k = *k;
    if (timeout) cfg.eval.timeout_s = *timeout;
    cfg.check();

    if (*parse) return cmd_parse(cfg, question, out);
    if (*link_cmd) return cmd_link(cfg, question, db_id, no_model, out);
    if (*train) return cmd_train(cfg, dataset_path, out_path, out, err);
    if (*generate) {
      if (!dataset_path.empty()) {
        if (!question.empty()) throw ValidationError("give either a question or --dataset, not both");
        return cmd_generate_batch(cfg, dataset_path, out_path, trace_path, out, err);
      }
      if (question.find_first_not_of(" \t\r\n") == std::string::npos)
        throw ValidationError("question is empty");
      return cmd_generate_one(cfg, question, db_id, trace_path, out);
    }
    return cmd_eval(cfg, dataset_path, preds_path, out_path, out, err);
  } catch (const PipelineError& e) {
    err << "error [stage " << e.stage() << "]: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return pipeline;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace sgusql::cli
