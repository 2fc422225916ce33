// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "sgusql/cli.hpp"
#include "sgusql/decomposer.hpp"
#include "sgusql/error.hpp"
#include "sgusql/eval.hpp"
#include "sgusql/generation.hpp"
#include "sgusql/linker.hpp"
#include "sgusql/sql.hpp"
#include "support/fixtures.hpp"

using namespace sgusql;
namespace fixtures = sgusql::fixtures;
using nlohmann::json;

namespace {

constexpr double kGradStep = 1e-4;
constexpr double kGradRelTol = 1e-3;
constexpr double kGradSeconds = 10.0;
constexpr double kLogNTol = 1e-9;
constexpr int kRandomLossVectors = 1000;
constexpr double kLossRatio = 0.5;
constexpr double kTrainAccuracy = 0.9;
constexpr std::uint64_t kTrainSeed = 42;
constexpr double kTrainSeconds = 60.0;
constexpr int kRandomCatalogs = 50;
constexpr int kRoundTripFixtures = 5;
constexpr std::size_t kCorpusSize = 30;
constexpr std::size_t kSuiteSize = 20;
constexpr double kEndToEndSeconds = 30.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string num(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

const std::filesystem::path& db_root() {
  static fixtures::ScratchDir dir("acceptance");
  static bool built = [] {
    for (const auto& entry : std::filesystem::directory_iterator(fixtures::data_dir() / "db")) {
      if (entry.path().extension() != ".sql") continue;
      fixtures::create_db(dir.path() / (entry.path().stem().string() + ".sqlite"),
                          fixtures::read_file(entry.path()));
    }
    return true;
  }();
  (void)built;
  return dir.path();
}

json load_json(const std::filesystem::path& p) { return json::parse(fixtures::read_file(p)); }

// 1 ---------------------------------------------------------------------------

Outcome gradient_check() {
  const auto start = Clock::now();
  const auto sg = build_schema_graph(
      load_spider_catalog_file(fixtures::data_dir() / "concert_singer_tables.json").at(0));
  const auto qg = analyze_question("Show singer names by age").graph;
  if (qg.size() != 5) return {false, "fixture has " + std::to_string(qg.size()) + " query nodes"};
  std::size_t anchor = 0;
  while (anchor < qg.size() && qg.nodes[anchor].text != "singer") ++anchor;
  const auto cands = generate_candidates(qg.nodes[anchor], sg, 4);
  if (cands.size() != 4) return {false, "fixture has " + std::to_string(cands.size()) + " candidates"};
  std::vector<EnclosingSubgraph> gs;
  for (const auto& c : cands) gs.push_back(build_enclosing_subgraph(anchor, c.node, qg, sg));

  LinkerConfig cfg;
  cfg.dim = 8;
  cfg.buckets = 64;
  auto m = LinkerModel::initialize(cfg);
  LinkerGradient grad(m);
  anchor_loss(gs, m, &grad);

  double worst = 0.0;
  std::size_t checked = 0;
  auto check = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + kGradStep;
    const double up = anchor_loss(gs, m);
    param = keep - kGradStep;
    const double down = anchor_loss(gs, m);
    param = keep;
    const double numeric = (up - down) / (2 * kGradStep);
    worst = std::max(worst, std::abs(analytic - numeric) /
                                std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
    ++checked;
  };
  auto check_all = [&](auto& p, const auto& g) {
    for (Eigen::Index j = 0; j < p.size(); ++j) check(p.data()[j], g.data()[j]);
  };
  check_all(m.relation_embedding, grad.relation_embedding);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    for (std::size_t r = 0; r < kLinkRelations; ++r) check_all(m.layers[l].w[r], grad.layers[l].w[r]);
    check_all(m.layers[l].attention, grad.layers[l].attention);
    check_all(m.layers[l].bias, grad.layers[l].bias);
  }
  check_all(m.w_g, grad.w_g);
  check_all(m.w_q, grad.w_q);
  check_all(m.w_k, grad.w_k);
  for (const auto& [row, g] : grad.token_rows)
    for (Eigen::Index j = 0; j < g.size(); ++j)
      check(m.token_embedding(static_cast<Eigen::Index>(row), j), g(j));
  for (const auto& [row, g] : grad.label_rows)
    for (Eigen::Index j = 0; j < g.size(); ++j)
      check(m.label_embedding(static_cast<Eigen::Index>(row), j), g(j));

  const double secs = since(start);
  return {worst < kGradRelTol && secs < kGradSeconds,
          std::to_string(checked) + " params, max rel err " + num(worst) + ", " + num(secs) + " s"};
}

// 2 ---------------------------------------------------------------------------

Outcome loss_identities() {
  double worst = 0.0;
  for (std::size_t n : {2u, 5u, 10u}) {
    const std::vector<double> negs(n - 1, 0.37);
    worst = std::max(worst, std::abs(contrastive_loss(0.37, negs) - std::log(double(n))));
  }
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(1e-6, 1 - 1e-6);
  std::uniform_int_distribution<int> len(1, 12);
  double min_loss = INFINITY;
  for (int i = 0; i < kRandomLossVectors; ++i) {
    std::vector<double> negs(static_cast<std::size_t>(len(rng)));
    for (auto& s : negs) s = u(rng);
    min_loss = std::min(min_loss, contrastive_loss(u(rng), negs));
  }
  return {worst <= kLogNTol && min_loss >= 0.0,
          "max |loss - ln n| " + num(worst) + ", min random loss " + num(min_loss)};
}

// 3 ---------------------------------------------------------------------------

Outcome training_sanity() {
  const auto start = Clock::now();
  const auto sg = build_schema_graph(
      load_spider_catalog_file(fixtures::data_dir() / "linking" / "tables.json").at(0));
  const auto records =
      load_link_records(fixtures::read_file(fixtures::data_dir() / "linking" / "train.json"));
  std::vector<LinkExample> ex;
  for (const auto& r : records) ex.push_back(make_link_example(r, sg));
  LinkerConfig cfg;
  cfg.seed = kTrainSeed;
  TrainReport rep;
  train_linker(ex, sg, cfg, &rep);
  const double ratio = rep.epoch_loss.back() / rep.epoch_loss.front();
  const double secs = since(start);
  return {ratio <= kLossRatio && rep.train_accuracy >= kTrainAccuracy && secs < kTrainSeconds,
          std::to_string(sg.catalog().tables.size()) + " tables, " + std::to_string(ex.size()) +
              " anchors, loss " + num(rep.epoch_loss.front()) + " -> " +
              num(rep.epoch_loss.back()) + " (ratio " + num(ratio) + "), accuracy " +
              num(rep.train_accuracy) + ", " + num(secs) + " s"};
}

// 4 ---------------------------------------------------------------------------

Outcome schema_arithmetic() {
  std::mt19937_64 rng(7);
  int matched = 0;
  for (int i = 0; i < kRandomCatalogs; ++i) {
    const auto cat = fixtures::random_catalog(rng, "r" + std::to_string(i));
    const auto g = build_schema_graph(cat);
    std::size_t columns = 0;
    for (const auto& t : cat.tables) columns += t.columns.size();
    std::size_t has = 0, pk = 0, fk = 0;
    for (const auto& e : g.edges()) {
      has += e.relation == SchemaRelation::has;
      pk += e.relation == SchemaRelation::primary_key;
      fk += e.relation == SchemaRelation::foreign_key;
    }
    matched += g.size() == cat.tables.size() + columns && has == columns &&
               pk == cat.primary_keys.size() && fk == cat.foreign_keys.size() &&
               g.edges().size() == columns + cat.primary_keys.size() + cat.foreign_keys.size();
  }
  int round_trips = 0;
  fixtures::ScratchDir dir("acceptance_rt");
  std::mt19937_64 rng2(11);
  for (int i = 0; i < kRoundTripFixtures; ++i) {
    const auto cat = fixtures::random_catalog(rng2, "rt" + std::to_string(i));
    const auto path = dir.path() / (cat.db_id + ".sqlite");
    fixtures::create_db(path, fixtures::emit_ddl(cat));
    const auto back = introspect_sqlite(path);
    bool same = back.db_id == cat.db_id && back.tables.size() == cat.tables.size() &&
                back.primary_keys == cat.primary_keys && back.foreign_keys == cat.foreign_keys;
    for (std::size_t t = 0; same && t < cat.tables.size(); ++t) {
      same = iequals(back.tables[t].name, cat.tables[t].name) &&
             back.tables[t].columns.size() == cat.tables[t].columns.size();
      for (std::size_t c = 0; same && c < cat.tables[t].columns.size(); ++c)
        same = iequals(back.tables[t].columns[c].name, cat.tables[t].columns[c].name) &&
               back.tables[t].columns[c].data_type == cat.tables[t].columns[c].data_type;
    }
    round_trips += same;
  }
  return {matched == kRandomCatalogs && round_trips == kRoundTripFixtures,
          std::to_string(matched) + "/" + std::to_string(kRandomCatalogs) + " catalogs, " +
              std::to_string(round_trips) + "/" + std::to_string(kRoundTripFixtures) +
              " introspection round trips"};
}

// 5 ---------------------------------------------------------------------------

Outcome round_trip() {
  std::size_t exact = 0, total = 0;
  for (const auto& e : load_json(fixtures::data_dir() / "gold_corpus.json")) {
    ++total;
    try {
      const auto q = e.at("query").get<std::string>();
      const auto parts = sql::clause_split(*sql::normalize(*sql::parse(q)));
      const auto plan = plan_from_components(parts);
      std::vector<SqlComponent> comps;
      for (const auto& p : parts) comps.push_back({p.id, plan.get(p.id).op.kind, p.text});
      exact += assemble(comps, plan) == sql::normalize_sql(q);
    } catch (const std::exception&) {
    }
  }
  return {total == kCorpusSize && exact == kCorpusSize,
          std::to_string(exact) + "/" + std::to_string(total) + " byte-identical"};
}

// 6 ---------------------------------------------------------------------------

Outcome metric_oracle() {
  std::size_t agree = 0, total = 0;
  std::string first_miss;
  for (const auto& p : load_json(fixtures::data_dir() / "eval" / "suite.json")) {
    ++total;
    const auto path = database_path(db_root(), p["db_id"].get<std::string>());
    const auto cat = introspect_sqlite(path);
    const auto gold = p["gold"].get<std::string>(), pred = p["pred"].get<std::string>();
    const bool em = sql::validate_sql(pred).ok() && exact_match(pred, gold, &cat);
    const bool ex = execution_match(pred, gold, path);
    json category = nullptr;
    if (!ex) category = std::string(to_string(classify_error(pred, gold, &cat)));
    const bool ok = em == p["em"].get<bool>() && ex == p["ex"].get<bool>() &&
                    category == p["category"];
    agree += ok;
    if (!ok && first_miss.empty()) first_miss = ", first miss: pair " + p["id"].dump();
  }
  std::vector<EvalRecord> right(4), wrong(4);
  for (auto& r : right) {
    r.ex = true;
    r.ves = ves_contribution(0.25, 0.25);
  }
  for (auto& r : wrong) r.ves = ves_contribution(0.25, 0.5);
  const bool identities = ves_contribution(0.25, 0.25) == 1.0 && ves(right) == 1.0 &&
                          ves(wrong) == 0.0;
  return {total == kSuiteSize && agree == kSuiteSize && identities,
          std::to_string(agree) + "/" + std::to_string(total) + " pairs agree, VES identities " +
              (identities ? "hold" : "fail") + first_miss};
}

// 7 and 9 -------------------------------------------------------------------

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "sgu-sql");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string toy() { return (fixtures::data_dir() / "toy" / "dev.json").string(); }

json generate_and_eval(const std::string& mode, const std::filesystem::path& dir,
                       std::string* trace = nullptr) {
  const auto preds = (dir / (mode.substr(5) + ".jsonl")).string();
  const auto trace_path = (dir / (mode.substr(5) + "_trace.jsonl")).string();
  cli_run({"--db-root", db_root().string(), "--mode", mode, "--seed", "42", "--jobs", "4",
           "generate", "--dataset", toy(), "--out", preds, "--trace", trace_path});
  if (trace) *trace = fixtures::read_file(trace_path);
  const auto r = cli_run({"--db-root", db_root().string(), "--format", "json", "--seed", "42",
                          "--jobs", "4", "eval", toy(), preds});
  if (r.code != 0) throw std::runtime_error("eval exited " + std::to_string(r.code) + ": " + r.err);
  return json::parse(r.out);
}

Outcome end_to_end() {
  const auto start = Clock::now();
  fixtures::ScratchDir dir("acceptance_e2e");
  const auto oracle = generate_and_eval("mock:oracle", dir.path());
  const auto echo = generate_and_eval("mock:echo", dir.path());
  std::size_t categorized = 0, failures = 0;
  for (const auto& r : echo["records"]) {
    failures += !r["ex"].get<bool>();
    categorized += !r["ex"].get<bool>() && r["category"].is_string();
  }
  const double secs = since(start);
  const bool pass = oracle["count"] == 10 && oracle["exec_acc"] == 1.0 &&
                    oracle["em_acc"] == 1.0 && echo["exec_acc"] == 0.0 && failures == 10 &&
                    categorized == failures && secs < kEndToEndSeconds;
  return {pass, "oracle exec " + oracle["exec_acc"].dump() + " em " + oracle["em_acc"].dump() +
                    "; echo exec " + echo["exec_acc"].dump() + ", " + std::to_string(categorized) +
                    "/" + std::to_string(failures) + " failures categorized; " + num(secs) + " s"};
}

std::string masked_lines(const std::string& jsonl) {
  std::istringstream in(jsonl);
  std::string line, out;
  while (std::getline(in, line))
    if (!line.empty()) out += mask_timing(json::parse(line)).dump() + "\n";
  return out;
}

Outcome determinism() {
  fixtures::ScratchDir a("acceptance_det_a"), b("acceptance_det_b");
  std::string ta, tb;
  const auto ra = mask_timing(generate_and_eval("mock:oracle", a.path(), &ta)).dump();
  const auto rb = mask_timing(generate_and_eval("mock:oracle", b.path(), &tb)).dump();
  const bool traces = !ta.empty() && masked_lines(ta) == masked_lines(tb);
  const bool reports = ra == rb;
  return {traces && reports, std::string("traces ") + (traces ? "identical" : "differ") +
                                 ", reports " + (reports ? "identical" : "differ")};
}

// 8 ---------------------------------------------------------------------------

Outcome worked_cases() {
  std::size_t ok = 0, total = 0;
  std::string detail;
  for (const auto& c : load_json(fixtures::data_dir() / "eval" / "cases.json")) {
    ++total;
    const auto path = database_path(db_root(), c["db_id"].get<std::string>());
    const auto gold = c["gold"].get<std::string>(), wrong = c["wrong"].get<std::string>();
    const bool gold_ex = execution_match(gold, gold, path);
    const bool wrong_ex = execution_match(wrong, gold, path);
    const auto category = std::string(to_string(classify_error(wrong, gold, path)));
    ok += gold_ex && !wrong_ex && category == c["category"].get<std::string>();
    detail += (detail.empty() ? "" : ", ") + std::string("case ") + c["case"].dump() + " " + category;
  }
  return {total == 3 && ok == 3, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient check", gradient_check},
      {"contrastive-loss identities", loss_identities},
      {"linker training sanity", training_sanity},
      {"schema-graph arithmetic", schema_arithmetic},
      {"decompose/assemble round trip", round_trip},
      {"metric oracle", metric_oracle},
      {"end to end with mocks", end_to_end},
      {"worked-case regressions", worked_cases},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
