#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <fstream>
#include <random>
#include <set>

#include "sgusql/error.hpp"
#include "sgusql/linker.hpp"
#include "sgusql/sqlite.hpp"
#include "support/fixtures.hpp"

using namespace sgusql;
namespace fixtures = sgusql::fixtures;

namespace {

SchemaGraph concert_singer() {
  return build_schema_graph(
      load_spider_catalog_file(fixtures::data_dir() / "concert_singer_tables.json").at(0));
}

SchemaGraph toy_music() {
  return build_schema_graph(
      load_spider_catalog_file(fixtures::data_dir() / "linking" / "tables.json").at(0));
}

SchemaCatalog shop_catalog() {
  SchemaCatalog c;
  c.db_id = "shop";
  c.tables = {{"Customers", {{"customer_id", DataType::number}, {"name", DataType::text}}},
              {"Orders", {{"order_id", DataType::number}, {"customer_id", DataType::number}}},
              {"OrderDetails", {{"order_id", DataType::number}, {"product", DataType::text}}}};
  c.primary_keys = {{0, 0}, {1, 0}};
  c.foreign_keys = {{{1, 1}, {0, 0}}, {{2, 0}, {1, 0}}};
  return c;
}

Token word(const std::string& w) {
  Token t;
  t.text = w;
  t.lemma = lemmatize(w);
  return t;
}

std::size_t token_index(const QueryGraph& qg, const std::string& text) {
  for (std::size_t i = 0; i < qg.size(); ++i)
    if (qg.nodes[i].text == text) return i;
  throw std::runtime_error("token not found: " + text);
}

LinkerConfig small_config(std::size_t dim = 8) {
  LinkerConfig cfg;
  cfg.dim = dim;
  cfg.buckets = 64;
  return cfg;
}

}  // namespace

TEST(StringMatch, ScoresMatchHandValues) {
  EXPECT_DOUBLE_EQ(string_match_score("singer", "singer"), 1.0);
  EXPECT_NEAR(string_match_score("purchase", "Orders"), 0.25, 1e-12);
  EXPECT_NEAR(string_match_score("purchase", "OrderDetails"), 2.0 / 12.0, 1e-12);
  EXPECT_NEAR(string_match_score("purchase", "Customers"), 1.0 / 9.0, 1e-12);
  EXPECT_NEAR(string_match_score("singer", "Singer_ID"), 6.0 / 9.0, 1e-12);
  EXPECT_NEAR(trigram_jaccard("abc", "abd"), 1.0 / 5.0, 1e-12);
  EXPECT_DOUBLE_EQ(levenshtein_similarity("", ""), 1.0);
}

TEST(Candidates, SingersPickSingerFirst) {
  const auto sg = concert_singer();
  const auto c = generate_candidates(word("singers"), sg, 8);
  ASSERT_EQ(c.size(), 8u);
  EXPECT_EQ(sg.qualified_name(c[0].node), "singer");
  for (std::size_t i = 1; i < c.size(); ++i) EXPECT_LE(c[i].string_score, c[i - 1].string_score);
}

TEST(Candidates, StopwordsAndWeakMatchesAreEmpty) {
  const auto sg = concert_singer();
  EXPECT_TRUE(generate_candidates(word("the"), sg, 8).empty());
  EXPECT_TRUE(generate_candidates(word("?"), sg, 8).empty());
  EXPECT_THROW(generate_candidates(word("singer"), sg, 0), ConfigError);
}

TEST(Candidates, PurchaseRanksOrdersBeforeCustomers) {
  const auto sg = build_schema_graph(shop_catalog());
  const auto c = generate_candidates(word("purchases"), sg, 8);
  auto rank = [&](const std::string& name) {
    for (std::size_t i = 0; i < c.size(); ++i)
      if (sg.qualified_name(c[i].node) == name) return i;
    return c.size();
  };
  EXPECT_LT(rank("Orders"), rank("Customers"));
  EXPECT_LT(rank("OrderDetails"), rank("Customers"));
}

TEST(Candidates, TiesFollowSchemaOrder) {
  const auto sg = build_schema_graph(shop_catalog());
  const auto c = generate_candidates(word("orders"), sg, 9);
  for (std::size_t i = 1; i < c.size(); ++i)
    if (c[i].string_score == c[i - 1].string_score) EXPECT_LT(c[i - 1].node, c[i].node);
  EXPECT_EQ(generate_candidates(word("orders"), sg, 50).size(), sg.size());
}

TEST(Subgraph, ColumnWithOnlyHasEdge) {
  const auto sg = concert_singer();
  const auto qg = analyze_question("What is the average age?").graph;
  const auto age = *sg.find("singer.Age");
  const auto g = build_enclosing_subgraph(token_index(qg, "age"), age, qg, sg);
  ASSERT_EQ(g.schema_nodes.size(), 2u);
  EXPECT_EQ(g.schema_nodes[0], age);
  EXPECT_EQ(g.schema_nodes[1], *sg.find("singer"));
  EXPECT_EQ(g.bridge_count(), 1u);
  EXPECT_EQ(g.size(), qg.size() + 2);
}

TEST(Subgraph, TableWithThreeColumns) {
  SchemaCatalog c;
  c.db_id = "t";
  c.tables = {{"t", {{"a", DataType::number}, {"b", DataType::text}, {"c", DataType::text}}}};
  const auto sg = build_schema_graph(c);
  const auto qg = analyze_question("show t").graph;
  const auto g = build_enclosing_subgraph(1, 0, qg, sg);
  EXPECT_EQ(g.schema_nodes.size(), 4u);
}

TEST(Subgraph, NodeCountMatchesOneHop) {
  const auto sg = concert_singer();
  const auto qg = analyze_question("Show the name and country of all singers").graph;
  for (std::size_t s = 0; s < sg.size(); ++s) {
    const auto g = build_enclosing_subgraph(0, s, qg, sg);
    std::set<std::size_t> hop;
    for (const auto& e : sg.edges()) {
      if (e.source == s) hop.insert(e.target);
      if (e.target == s) hop.insert(e.source);
    }
    hop.erase(s);
    EXPECT_EQ(g.size(), qg.size() + hop.size() + 1);
    EXPECT_EQ(g.bridge_count(), 1u);
    std::size_t none = 0;
    for (const auto& e : g.edges) none += e.relation == LinkRelation::none_syntax;
    std::size_t apart = 0;
    for (std::size_t i = 0; i < qg.size(); ++i)
      for (std::size_t j = 0; j < qg.size(); ++j) apart += i != j && !qg.adjacent(i, j);
    EXPECT_EQ(none, apart);
  }
}

TEST(Rgat, ZeroModelGivesZeroEmbeddingsAndHalfScore) {
  const auto sg = concert_singer();
  const auto qg = analyze_question("How many singers are there?").graph;
  const auto m = LinkerModel::zeros(small_config());
  const auto g = build_enclosing_subgraph(token_index(qg, "singers"), 1, qg, sg);
  EXPECT_TRUE(rgat_encode(g, m).isZero(0));
  EXPECT_DOUBLE_EQ(matching_score(g, m), 0.5);
}

TEST(Rgat, SingleNodeIsActivatedSelfTransform) {
  auto m = LinkerModel::initialize(small_config(4));
  m.layers.resize(1);
  EnclosingSubgraph g;
  g.labels = {"x"};
  g.is_schema = {true};
  g.schema_nodes = {0};
  const auto& l = m.layers[0];
  const Eigen::VectorXd h0 = m.label_embedding.row(static_cast<Eigen::Index>(embedding_bucket("x", m.buckets))).transpose();
  const Eigen::VectorXd pre = l.w[static_cast<std::size_t>(LinkRelation::self_loop)] * h0 +
                              m.relation_embedding.row(static_cast<Eigen::Index>(LinkRelation::self_loop)).transpose() +
                              l.bias;
  const auto out = rgat_encode(g, m);
  for (Eigen::Index i = 0; i < 4; ++i)
    EXPECT_NEAR(out(0, i), pre(i) > 0 ? pre(i) : 0.01 * pre(i), 1e-12);
}

TEST(Rgat, PermutationEquivariance) {
  const auto sg = concert_singer();
  const auto qg = analyze_question("Show the name and country of all singers").graph;
  const auto m = LinkerModel::initialize(small_config());
  const auto g = build_enclosing_subgraph(token_index(qg, "singers"), 1, qg, sg);
  const auto base = rgat_encode(g, m);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::size_t> perm(g.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    EnclosingSubgraph p = g;
    for (std::size_t i = 0; i < g.size(); ++i) {
      p.labels[perm[i]] = g.labels[i];
      p.is_schema[perm[i]] = g.is_schema[i];
    }
    for (auto& e : p.edges) {
      e.source = perm[e.source];
      e.target = perm[e.target];
    }
    const auto out = rgat_encode(p, m);
    for (std::size_t i = 0; i < g.size(); ++i)
      EXPECT_LT((out.row(static_cast<Eigen::Index>(perm[i])) - base.row(static_cast<Eigen::Index>(i))).norm(), 1e-12);
  }
}

TEST(CrossAggregate, GlobalMeanAndNeutralGate) {
  auto m = LinkerModel::zeros(small_config(2));
  Eigen::MatrixXd q(2, 2), c(1, 2);
  q << 1, 0, 0, 1;
  c << 3, -2;
  auto r = cross_aggregate(q, c, {{}}, m);
  EXPECT_DOUBLE_EQ(r.global(0), 0.5);
  EXPECT_DOUBLE_EQ(r.global(1), 0.5);
  EXPECT_DOUBLE_EQ(r.gates(0), 0.5);
}

TEST(CrossAggregate, IsolatedCandidateWithIdentityMaps) {
  auto m = LinkerModel::initialize(small_config(2));
  m.w_k = m.w_q = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd q(2, 2), c(1, 2);
  q << 1, 0, 0, 1;
  c << 3, -2;
  const auto r = cross_aggregate(q, c, {{}}, m);
  const double a = 1.0 / (1.0 + std::exp(-(r.global.transpose() * m.w_g * c.row(0).transpose())(0)));
  EXPECT_NEAR(r.gates(0), a, 1e-15);
  EXPECT_NEAR(r.updated(0, 0), a * 3 + (1 - a) * 0.5, 1e-12);
  EXPECT_NEAR(r.updated(0, 1), a * -2 + (1 - a) * 0.5, 1e-12);
}

TEST(CrossAggregate, NeighboursUseTheirOwnGate) {
  auto m = LinkerModel::initialize(small_config(2));
  m.w_k = m.w_q = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd q(1, 2), c(2, 2);
  q << 1, 2;
  c << 1, 0, 0, 1;
  const auto r = cross_aggregate(q, c, {{1}, {0}}, m);
  const Eigen::RowVector2d expect = r.gates(1) * c.row(1) + r.gates(0) * c.row(0) + (1 - r.gates(0)) * q.row(0);
  EXPECT_LT((r.updated.row(0) - expect).norm(), 1e-12);
}

TEST(Score, InUnitIntervalAndDeterministic) {
  const auto sg = concert_singer();
  const auto qg = analyze_question("List the names of singers older than 30").graph;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto cfg = small_config();
    cfg.seed = seed;
    const auto m = LinkerModel::initialize(cfg);
    for (std::size_t s = 0; s < sg.size(); s += 3) {
      const auto g = build_enclosing_subgraph(token_index(qg, "singers"), s, qg, sg);
      const auto t = score_subgraph(g, m);
      EXPECT_GT(t.score, 0.0);
      EXPECT_LT(t.score, 1.0);
      EXPECT_EQ(t.score, matching_score(g, m));
      // Doubling the logit moves the score further from one half on the same side.
      const double doubled = 1.0 / (1.0 + std::exp(-2 * t.logit));
      EXPECT_GE(std::abs(doubled - 0.5), std::abs(t.score - 0.5));
      EXPECT_EQ(doubled > 0.5, t.score > 0.5);
    }
  }
}

TEST(Score, QuerySideUpdateIsTracedButNotScored) {
  const auto sg = concert_singer();
  const auto qg = analyze_question("How many singers are there?").graph;
  auto cfg = small_config();
  const auto off = LinkerModel::initialize(cfg);
  cfg.query_side_update = true;
  const auto on = LinkerModel::initialize(cfg);
  const auto g = build_enclosing_subgraph(token_index(qg, "singers"), 1, qg, sg);
  const auto a = score_subgraph(g, off), b = score_subgraph(g, on);
  EXPECT_FALSE(a.query_side.has_value());
  ASSERT_TRUE(b.query_side.has_value());
  EXPECT_EQ(b.query_side->updated.rows(), static_cast<Eigen::Index>(qg.size()));
  EXPECT_EQ(a.score, b.score);
}

TEST(ContrastiveLoss, UniformScoresGiveLogN) {
  for (std::size_t n : {2u, 5u, 10u}) {
    const std::vector<double> negs(n - 1, 0.37);
    EXPECT_NEAR(contrastive_loss(0.37, negs), std::log(static_cast<double>(n)), 1e-9);
  }
  EXPECT_NEAR(contrastive_loss(0.2, {0.2, 0.2, 0.2, 0.2}), 1.6094379124341003, 1e-12);
}

TEST(ContrastiveLoss, NonNegativeAndDomainChecked) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1e-6, 1 - 1e-6);
  std::uniform_int_distribution<int> len(1, 12);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> negs(static_cast<std::size_t>(len(rng)));
    for (auto& s : negs) s = u(rng);
    EXPECT_GE(contrastive_loss(u(rng), negs), 0.0);
  }
  EXPECT_LT(contrastive_loss(1 - 1e-12, {1e-12}), 1e-11);
  EXPECT_THROW(contrastive_loss(0.0, {0.5}), DomainError);
  EXPECT_THROW(contrastive_loss(0.5, {1.0}), DomainError);
}

TEST(Gradient, MatchesCentralDifferences) {
  const auto start = std::chrono::steady_clock::now();
  const auto sg = concert_singer();
  const auto qg = analyze_question("Show singer names by age").graph;
  ASSERT_EQ(qg.size(), 5u);
  const auto anchor = token_index(qg, "singer");
  const auto cands = generate_candidates(qg.nodes[anchor], sg, 4);
  ASSERT_EQ(cands.size(), 4u);
  std::vector<EnclosingSubgraph> gs;
  for (const auto& c : cands) gs.push_back(build_enclosing_subgraph(anchor, c.node, qg, sg));

  auto cfg = small_config();
  auto m = LinkerModel::initialize(cfg);
  LinkerGradient grad(m);
  anchor_loss(gs, m, &grad);

  const double h = 1e-4;
  double worst = 0.0;
  std::size_t checked = 0;
  auto check = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double up = anchor_loss(gs, m);
    param = keep - h;
    const double down = anchor_loss(gs, m);
    param = keep;
    const double numeric = (up - down) / (2 * h);
    const double rel = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, rel);
    ++checked;
  };

  // Dense parameters, in file order, paired with their gradient slots.
  std::vector<Eigen::MatrixXd*> params;
  std::vector<Eigen::VectorXd*> vparams;
  std::vector<const Eigen::MatrixXd*> grads;
  std::vector<const Eigen::VectorXd*> vgrads;
  params.push_back(&m.relation_embedding);
  grads.push_back(&grad.relation_embedding);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    for (std::size_t r = 0; r < kLinkRelations; ++r) {
      params.push_back(&m.layers[l].w[r]);
      grads.push_back(&grad.layers[l].w[r]);
    }
    vparams.push_back(&m.layers[l].attention);
    vgrads.push_back(&grad.layers[l].attention);
    vparams.push_back(&m.layers[l].bias);
    vgrads.push_back(&grad.layers[l].bias);
  }
  for (auto [p, g] : {std::pair{&m.w_g, &grad.w_g}, std::pair{&m.w_q, &grad.w_q},
                      std::pair{&m.w_k, &grad.w_k}}) {
    params.push_back(p);
    grads.push_back(g);
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    for (Eigen::Index j = 0; j < params[i]->size(); ++j)
      check(params[i]->data()[j], grads[i]->data()[j]);
  for (std::size_t i = 0; i < vparams.size(); ++i)
    for (Eigen::Index j = 0; j < vparams[i]->size(); ++j)
      check(vparams[i]->data()[j], vgrads[i]->data()[j]);

  // Embedding rows: every touched bucket plus one untouched.
  for (const auto& [row, g] : grad.token_rows)
    for (Eigen::Index j = 0; j < g.size(); ++j)
      check(m.token_embedding(static_cast<Eigen::Index>(row), j), g(j));
  for (const auto& [row, g] : grad.label_rows)
    for (Eigen::Index j = 0; j < g.size(); ++j)
      check(m.label_embedding(static_cast<Eigen::Index>(row), j), g(j));
  std::size_t untouched = 0;
  while (grad.token_rows.count(untouched)) ++untouched;
  check(m.token_embedding(static_cast<Eigen::Index>(untouched), 0), 0.0);

  EXPECT_GT(checked, 1000u);
  EXPECT_LT(worst, 1e-3);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 10.0);
}

TEST(ModelFile, RoundTripAndRejects) {
  fixtures::ScratchDir dir("model");
  auto cfg = small_config();
  cfg.seed = 9;
  const auto m = LinkerModel::initialize(cfg);
  const auto path = dir.path() / "m.bin";
  save_model(m, path);
  const auto back = load_model(path);
  EXPECT_EQ(back.dim, m.dim);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.parameter_count(), m.parameter_count());
  EXPECT_LT((back.w_k - m.w_k).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_LT((back.token_embedding - m.token_embedding).cwiseAbs().maxCoeff(), 1e-7);
  save_model(back, dir.path() / "again.bin");
  EXPECT_EQ(fixtures::read_file(path), fixtures::read_file(dir.path() / "again.bin"));

  std::string bytes = fixtures::read_file(path);
  {
    std::ofstream(dir.path() / "bad.bin", std::ios::binary) << "XGUL" << bytes.substr(4);
    EXPECT_THROW(load_model(dir.path() / "bad.bin"), ValidationError);
  }
  {
    std::string v = bytes;
    v[4] = 7;
    std::ofstream(dir.path() / "ver.bin", std::ios::binary) << v;
    EXPECT_THROW(load_model(dir.path() / "ver.bin"), ValidationError);
  }
  {
    std::ofstream(dir.path() / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    EXPECT_THROW(load_model(dir.path() / "short.bin"), ValidationError);
  }
  EXPECT_THROW(load_model(dir.path() / "missing.bin"), IoError);
}

TEST(ModelFile, InitialisationIsSeeded) {
  auto cfg = small_config();
  const auto a = LinkerModel::initialize(cfg), b = LinkerModel::initialize(cfg);
  EXPECT_TRUE(a.w_q == b.w_q);
  cfg.seed = 43;
  EXPECT_FALSE(LinkerModel::initialize(cfg).w_q == a.w_q);
  EXPECT_LE(a.token_embedding.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_TRUE(a.finite());
  cfg.dim = 1;
  EXPECT_THROW(LinkerModel::initialize(cfg), ConfigError);
}

TEST(Training, ZeroEpochsReturnsInitialModel) {
  const auto sg = toy_music();
  const auto records =
      load_link_records(fixtures::read_file(fixtures::data_dir() / "linking" / "train.json"));
  std::vector<LinkExample> ex;
  for (const auto& r : records) ex.push_back(make_link_example(r, sg));
  auto cfg = small_config();
  cfg.epochs = 0;
  TrainReport rep;
  const auto m = train_linker(ex, sg, cfg, &rep);
  const auto init = LinkerModel::initialize(cfg);
  EXPECT_TRUE(m.token_embedding == init.token_embedding);
  EXPECT_TRUE(m.w_k == init.w_k);
  EXPECT_EQ(rep.epoch_loss.size(), 1u);
  EXPECT_EQ(rep.best_epoch, 0u);
}

TEST(Training, EmptyTrainableSetFails) {
  const auto sg = toy_music();
  LinkExample ex;
  ex.graph = analyze_question("How many singers are there?").graph;
  ex.anchor = token_index(ex.graph, "How");
  ex.gold = 0;
  EXPECT_THROW(train_linker({ex}, sg, small_config()), TrainingError);
}

TEST(Training, FixtureLearnsAndHalvesLoss) {
  const auto start = std::chrono::steady_clock::now();
  const auto sg = toy_music();
  ASSERT_EQ(sg.catalog().tables.size(), 3u);
  const auto records =
      load_link_records(fixtures::read_file(fixtures::data_dir() / "linking" / "train.json"));
  ASSERT_EQ(records.size(), 20u);
  std::vector<LinkExample> ex;
  for (const auto& r : records) ex.push_back(make_link_example(r, sg));
  TrainReport rep;
  const auto m = train_linker(ex, sg, LinkerConfig{}, &rep);
  EXPECT_EQ(rep.trained_examples, 20u);
  EXPECT_EQ(rep.skipped_examples, 0u);
  ASSERT_EQ(rep.epoch_loss.size(), 201u);
  EXPECT_LE(rep.epoch_loss.back(), 0.5 * rep.epoch_loss.front());
  EXPECT_LE(rep.epoch_loss[rep.best_epoch], rep.epoch_loss.front());
  EXPECT_GE(rep.train_accuracy, 0.9);
  std::size_t hits = 0;
  for (const auto& e : ex) hits += link(e.graph, sg, &m).assigned(e.anchor) == e.gold;
  EXPECT_GE(hits, 18u);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 60.0);
}

TEST(Dataset, RecordsAreValidated) {
  const auto sg = toy_music();
  EXPECT_THROW(load_link_records("{}"), ValidationError);
  EXPECT_THROW(load_link_records("[{\"question\": 1}]"), ValidationError);
  EXPECT_THROW(load_link_records("[oops"), ParseError);
  EXPECT_THROW(make_link_example({"How many singers?", "music_toy", "venues", "venue"}, sg),
               ValidationError);
  EXPECT_THROW(make_link_example({"How many singers?", "music_toy", "singers", "nope"}, sg),
               ValidationError);
  const auto ex = make_link_example({"Show the singer name", "music_toy", "singer name", "singer.name"}, sg);
  EXPECT_EQ(ex.anchor, 3u);
}

TEST(Link, FallbackAssignsSingersToSinger) {
  const auto sg = concert_singer();
  const auto qg = analyze_question("How many singers are there?").graph;
  const auto r = link(qg, sg, nullptr);
  EXPECT_FALSE(r.used_model);
  const auto a = r.assigned(token_index(qg, "singers"));
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(sg.qualified_name(*a), "singer");
  for (const auto& x : r.assignments) {
    EXPECT_GT(x.score, 0.0);
    EXPECT_LT(x.score, 1.0);
  }
  std::set<std::size_t> seen;
  for (const auto& x : r.assignments) EXPECT_TRUE(seen.insert(x.query_node).second);
}

TEST(Link, NoContentWordsNoAssignments) {
  const auto sg = concert_singer();
  EXPECT_TRUE(link(analyze_question("what is the").graph, sg, nullptr).assignments.empty());
}

TEST(Link, ZeroModelKeepsCandidateOrder) {
  const auto sg = concert_singer();
  const auto qg = analyze_question("List the names of singers older than 30").graph;
  const auto m = LinkerModel::zeros(small_config());
  const auto r = link(qg, sg, &m);
  EXPECT_TRUE(r.used_model);
  for (const auto& a : r.assignments) {
    EXPECT_EQ(a.schema_node, generate_candidates(qg.nodes[a.query_node], sg, 8).front().node);
    EXPECT_DOUBLE_EQ(a.score, 0.5);
  }
}

TEST(Predefined, ExactAndPartialMatches) {
  const auto sg = concert_singer();
  const auto qg = analyze_question("Show the singer name").graph;
  const auto rel = apply_predefined_relations(qg, sg);
  auto has = [&](std::size_t q, const std::string& node, PredefinedRelation r) {
    return std::find(rel.begin(), rel.end(), RelationTriple{q, *sg.find(node), r}) != rel.end();
  };
  const auto singer = token_index(qg, "singer"), name = token_index(qg, "name");
  EXPECT_TRUE(has(singer, "singer", PredefinedRelation::exact_match));
  EXPECT_TRUE(has(name, "singer.Name", PredefinedRelation::exact_match));
  EXPECT_TRUE(has(name, "stadium.Name", PredefinedRelation::partial_match));
  EXPECT_TRUE(has(singer, "singer.Singer_ID", PredefinedRelation::partial_match));
  EXPECT_TRUE(has(name, "singer.Song_Name", PredefinedRelation::partial_match));
  for (const auto& t : rel) EXPECT_NE(t.relation, PredefinedRelation::value_match);
}

TEST(Predefined, ValueMatchProbesTheDatabase) {
  fixtures::ScratchDir dir("value");
  const auto path = dir.path() / "geo.sqlite";
  fixtures::create_db(path,
                      "CREATE TABLE country(id INTEGER PRIMARY KEY, name TEXT, code TEXT);"
                      "INSERT INTO country VALUES (1, 'Germany', 'DE'), (2, 'France', 'FR');");
  const auto sg = build_schema_graph(introspect_sqlite(path));
  sqlite::Database db(path, sqlite::Database::Mode::read_only);
  const auto qg = analyze_question("Which cities are in France?").graph;
  const auto rel = apply_predefined_relations(qg, sg, &db);
  const RelationTriple want{token_index(qg, "France"), *sg.find("country.name"),
                            PredefinedRelation::value_match};
  EXPECT_NE(std::find(rel.begin(), rel.end(), want), rel.end());
  std::size_t values = 0;
  for (const auto& t : rel) values += t.relation == PredefinedRelation::value_match;
  EXPECT_EQ(values, 1u);
  for (const auto& t : apply_predefined_relations(analyze_question("Which cities are in Spain?").graph, sg, &db))
    EXPECT_NE(t.relation, PredefinedRelation::value_match);
}

TEST(Predefined, ProbeFailureIsAWarning) {
  fixtures::ScratchDir dir("probe");
  const auto path = dir.path() / "geo.sqlite";
  fixtures::create_db(path, "CREATE TABLE country(name TEXT);");
  const auto sg = build_schema_graph(introspect_sqlite(path));
  fixtures::create_db(path, "CREATE TABLE other(x TEXT);");
  sqlite::Database db(path, sqlite::Database::Mode::read_only);
  std::vector<std::string> warnings;
  const auto rel = apply_predefined_relations(analyze_question("Show France").graph, sg, &db, &warnings);
  EXPECT_FALSE(warnings.empty());
  for (const auto& t : rel) EXPECT_NE(t.relation, PredefinedRelation::value_match);
}
