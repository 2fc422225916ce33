#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "sgusql/error.hpp"
#include "sgusql/query_graph.hpp"

using namespace sgusql;

namespace {

std::vector<std::string> texts(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

bool has_child_symbol(const SyntaxTree& t, std::size_t n, const std::string& sym) {
  for (auto c : t.node(n).children)
    if (t.node(c).symbol == sym) return true;
  return false;
}

// Chain of `n` nonterminals above a single terminal.
ParseInterpretation chain(std::size_t n, double score, const std::string& sym = "A") {
  ParseInterpretation p;
  p.score = score;
  for (std::size_t i = 0; i < n; ++i) {
    TreeNode node;
    node.id = i;
    node.symbol = i + 1 == n ? "noun" : sym;
    node.terminal = i + 1 == n;
    node.span = {0, 1};
    if (i + 1 < n) node.children = {i + 1};
    if (i > 0) node.parent = i - 1;
    p.tree.nodes.push_back(node);
  }
  return p;
}

// Random binary-ish bracketing over n tokens.
SyntaxTree random_tree(std::mt19937_64& rng, std::size_t n) {
  SyntaxTree t;
  std::function<std::size_t(std::size_t, std::size_t, std::optional<std::size_t>)> build =
      [&](std::size_t lo, std::size_t hi, std::optional<std::size_t> parent) {
        const std::size_t id = t.nodes.size();
        t.nodes.push_back({});
        t.nodes[id].id = id;
        t.nodes[id].span = {lo, hi};
        t.nodes[id].parent = parent;
        if (hi - lo == 1 && std::uniform_int_distribution<int>(0, 2)(rng) > 0) {
          t.nodes[id].symbol = "noun";
          t.nodes[id].terminal = true;
          return id;
        }
        t.nodes[id].symbol = "X";
        if (hi - lo == 1) {
          const auto c = build(lo, hi, id);
          t.nodes[id].children.push_back(c);
          return id;
        }
        std::size_t cut = std::uniform_int_distribution<std::size_t>(lo + 1, hi - 1)(rng);
        std::vector<std::pair<std::size_t, std::size_t>> parts{{lo, cut}, {cut, hi}};
        if (cut + 1 < hi && std::uniform_int_distribution<int>(0, 1)(rng)) {
          const std::size_t cut2 = std::uniform_int_distribution<std::size_t>(cut + 1, hi - 1)(rng);
          parts = {{lo, cut}, {cut, cut2}, {cut2, hi}};
        }
        for (auto [a, b] : parts) {
          const auto c = build(a, b, id);
          t.nodes[id].children.push_back(c);
        }
        return id;
      };
  t.root = build(0, n, std::nullopt);
  return t;
}

void expect_paired(const QueryGraph& g) {
  std::set<std::tuple<std::size_t, std::size_t, QueryRelation>> all;
  for (const auto& e : g.edges) all.emplace(e.source, e.target, e.relation);
  for (const auto& e : g.edges) {
    ASSERT_NE(e.relation, QueryRelation::none_syntax);
    const auto mirror = e.relation == QueryRelation::forward_syntax
                            ? QueryRelation::backward_syntax
                            : QueryRelation::forward_syntax;
    EXPECT_TRUE(all.count({e.target, e.source, mirror}))
        << e.source << "->" << e.target;
  }
}

}  // namespace

TEST(Tokenize, ShowTables) {
  const auto t = tokenize("Show tables");
  EXPECT_EQ(texts(t), (std::vector<std::string>{"Show", "tables"}));
  EXPECT_EQ(t[0].lemma, "show");
  EXPECT_EQ(t[1].lemma, "table");
}

TEST(Tokenize, PossessiveSplit) {
  const auto t = tokenize("last quarter's sales");
  EXPECT_EQ(texts(t), (std::vector<std::string>{"last", "quarter", "'s", "sales"}));
  EXPECT_EQ(t[3].lemma, "sale");
}

TEST(Tokenize, BlankQuestionRejected) {
  EXPECT_THROW(tokenize(""), ValidationError);
  EXPECT_THROW(tokenize(" \t\n"), ValidationError);
}

TEST(Tokenize, LemmaRules) {
  EXPECT_EQ(lemmatize("countries"), "country");
  EXPECT_EQ(lemmatize("classes"), "class");
  EXPECT_EQ(lemmatize("status"), "status");
  EXPECT_EQ(lemmatize("named"), "name");
  EXPECT_EQ(lemmatize("exceed"), "exceed");
  EXPECT_EQ(lemmatize("running"), "run");
}

TEST(Tokenize, RandomAsciiRoundTrip) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> ch(32, 126), len(1, 60), ws(0, 9);
  for (int i = 0; i < 100; ++i) {
    std::string q;
    const int n = len(rng);
    for (int k = 0; k < n; ++k) {
      const int w = ws(rng);
      q += w == 0 ? ' ' : w == 1 ? '\t' : static_cast<char>(ch(rng));
    }
    q += 'x';
    const auto tokens = tokenize(q);
    EXPECT_EQ(detokenize(tokens), q);
    for (std::size_t k = 0; k < tokens.size(); ++k) {
      EXPECT_EQ(tokens[k].position, k);
      EXPECT_EQ(q.substr(tokens[k].offset, tokens[k].text.size()), tokens[k].text);
    }
  }
}

TEST(Grammar, TextFormat) {
  const auto g = QueryGrammar::parse(
      "# comment\nS -> A noun [-0.5]\nA -> det\nA -> ε\n");
  EXPECT_EQ(g.start(), "S");
  EXPECT_EQ(g.nonterminals(), (std::set<std::string>{"A", "S"}));
  EXPECT_EQ(g.terminals(), (std::set<std::string>{"det", "noun"}));
  ASSERT_EQ(g.productions().size(), 3u);
  EXPECT_DOUBLE_EQ(g.productions()[0].weight, -0.5);
  EXPECT_TRUE(g.productions()[2].rhs.empty());
  auto toks = tokenize("singers");
  const auto p = parse(toks, g);
  EXPECT_FALSE(p[0].fallback);
  EXPECT_DOUBLE_EQ(p[0].score, -0.5);
}

TEST(Grammar, RejectsUndefinedSymbolsAndUnitCycles) {
  EXPECT_THROW(QueryGrammar::parse("S -> B noun\n"), ConfigError);
  EXPECT_THROW(QueryGrammar::parse("S -> A\nA -> S\nA -> noun\n"), ConfigError);
  EXPECT_THROW(QueryGrammar::parse("s -> noun\n"), ConfigError);
}

TEST(Parse, CountSingers) {
  const auto toks = tokenize("count singers");
  const auto ps = parse(toks);
  ASSERT_FALSE(ps.empty());
  const auto& best = select_interpretation(ps);
  EXPECT_FALSE(best.fallback);
  const auto& tree = best.tree;
  bool found = false;
  for (const auto& n : tree.nodes) {
    if (n.symbol != "AggregateOp") continue;
    EXPECT_TRUE(has_child_symbol(tree, n.id, "count"));
    for (const auto& m : tree.nodes)
      if (m.symbol == "Entity" && m.span == TokenSpan{1, 2}) {
        auto p = m.parent;
        while (p && *p != n.id) p = tree.node(*p).parent;
        found = found || p.has_value();
      }
  }
  EXPECT_TRUE(found);
}

TEST(Parse, AttachmentAmbiguity) {
  const auto toks = tokenize("singers from France with awards");
  const auto ps = parse(toks);
  ASSERT_GE(ps.size(), 2u);
  std::set<std::vector<std::string>> shapes;
  for (const auto& p : ps) {
    EXPECT_FALSE(p.fallback);
    p.tree.check(toks.size());
    shapes.insert(p.tree.preorder_symbols());
  }
  EXPECT_EQ(shapes.size(), ps.size());
  for (std::size_t i = 1; i < ps.size(); ++i) EXPECT_GE(ps[i - 1].score, ps[i].score);
}

TEST(Parse, GibberishFallsBack) {
  const auto toks = tokenize("zzz qqq");
  const auto ps = parse(toks);
  ASSERT_EQ(ps.size(), 1u);
  EXPECT_TRUE(ps[0].fallback);
  const auto& root = ps[0].tree.node(ps[0].tree.root);
  EXPECT_EQ(root.children.size(), toks.size());
  ps[0].tree.check(toks.size());
}

TEST(Parse, EveryTreeCoversTheQuestion) {
  const char* questions[] = {
      "How many singers are there?",
      "What is the name of the singer who is the oldest?",
      "List the names of stadiums with capacity greater than 5000.",
      "Show the average age of singers from France.",
      "Find the total number of customers whose purchases exceed 100 and list their names.",
      "Which countries do not speak English?",
      "Show the name of each stadium and the number of concerts per stadium.",
      "List singers ordered by age in descending order."};
  for (const char* q : questions) {
    const auto toks = tokenize(q);
    const auto ps = parse(toks);
    ASSERT_FALSE(ps.empty()) << q;
    EXPECT_FALSE(ps[0].fallback) << q;
    for (const auto& p : ps) {
      EXPECT_TRUE(std::isfinite(p.score));
      EXPECT_NO_THROW(p.tree.check(toks.size())) << q;
    }
  }
}

TEST(SelectInterpretation, ArgmaxByScore) {
  std::vector<ParseInterpretation> c{chain(3, 0.2), chain(3, 0.9)};
  EXPECT_EQ(&select_interpretation(c), &c[1]);
}

TEST(SelectInterpretation, FewerNodesWinsTies) {
  std::vector<ParseInterpretation> c{chain(7, 0.5), chain(5, 0.5)};
  EXPECT_EQ(select_interpretation(c).tree.size(), 5u);
}

TEST(SelectInterpretation, LexicographicLastResort) {
  std::vector<ParseInterpretation> c{chain(4, 0.0, "B"), chain(4, 0.0, "A")};
  EXPECT_EQ(select_interpretation(c).tree.node(0).symbol, "A");
}

TEST(SelectInterpretation, PermutationInvariant) {
  std::mt19937_64 rng(5);
  std::vector<ParseInterpretation> base;
  const char* syms[] = {"A", "B", "C"};
  for (int i = 0; i < 9; ++i)
    base.push_back(chain(2 + i % 4, (i % 3) * 0.5, syms[(i / 3) % 3]));
  const auto expected = select_interpretation(base).tree.preorder_symbols();
  const auto expected_score = select_interpretation(base).score;
  for (int r = 0; r < 50; ++r) {
    std::shuffle(base.begin(), base.end(), rng);
    const auto& got = select_interpretation(base);
    EXPECT_EQ(got.tree.preorder_symbols(), expected);
    EXPECT_EQ(got.score, expected_score);
  }
}

TEST(Coreference, PossessivePronoun) {
  const auto a = analyze_question("singers and their songs");
  const auto& coref = a.graph.coref;
  const auto singers = coref.entity_of({0, 1});
  const auto their = coref.entity_of({2, 3});
  ASSERT_TRUE(singers && their);
  EXPECT_EQ(*singers, *their);
  EXPECT_FALSE(coref.entities[*their].unresolved);
  // extra paired edge between the two heads
  EXPECT_TRUE(a.graph.adjacent(0, 2));
}

TEST(Coreference, AcrossSentences) {
  const auto a = analyze_question("Show concerts. List them.");
  const auto& coref = a.graph.coref;
  const auto concerts = coref.entity_of({1, 2});
  const auto them = coref.entity_of({4, 5});
  ASSERT_TRUE(concerts && them);
  EXPECT_EQ(*concerts, *them);
  EXPECT_EQ(coref.entities[*them].canonical, (TokenSpan{1, 2}));
}

TEST(Coreference, NoPronounsIsIdentity) {
  const auto a = analyze_question("Show singers from stadiums with awards");
  const auto& coref = a.graph.coref;
  ASSERT_EQ(coref.mentions.size(), 3u);
  EXPECT_EQ(coref.entities.size(), 3u);
  for (std::size_t i = 0; i < coref.mentions.size(); ++i) {
    EXPECT_EQ(coref.mentions[i].entity, i);
    EXPECT_EQ(coref.entities[i].canonical, coref.mentions[i].span);
  }
}

TEST(Coreference, DefiniteRepeatAndUnresolved) {
  const auto a = analyze_question("Show singers. Count the singers.");
  const auto& coref = a.graph.coref;
  EXPECT_EQ(coref.entity_of({1, 2}), coref.entity_of({5, 6}));

  const auto b = analyze_question("List them");
  const auto them = b.graph.coref.entity_of({1, 2});
  ASSERT_TRUE(them);
  EXPECT_TRUE(b.graph.coref.entities[*them].unresolved);
}

TEST(QueryGraphEdges, TwoTokenTree) {
  SyntaxTree t;
  t.nodes = {{0, "NP", false, {0, 2}, {1, 2}, std::nullopt},
             {1, "det", true, {0, 1}, {}, 0},
             {2, "noun", true, {1, 2}, {}, 0}};
  const auto g = build_query_graph(tokenize("the singers"), t, {});
  ASSERT_EQ(g.edges.size(), 2u);
  EXPECT_EQ(std::count_if(g.edges.begin(), g.edges.end(),
                          [](const QueryEdge& e) {
                            return e.relation == QueryRelation::forward_syntax;
                          }),
            1);
  // head of NP is the noun, so the relation points noun -> det
  EXPECT_EQ(g.edges[0], (QueryEdge{0, 1, QueryRelation::backward_syntax}));
  EXPECT_EQ(g.edges[1], (QueryEdge{1, 0, QueryRelation::forward_syntax}));
}

TEST(QueryGraphEdges, PairingOnRandomTrees) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + i % 12;
    auto tree = random_tree(rng, n);
    tree.check(n);
    std::string q;
    for (std::size_t k = 0; k < n; ++k) q += "w ";
    const auto g = build_query_graph(tokenize(q), tree, {});
    expect_paired(g);
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_EQ(g.nodes[k].position, k);
  }
}

TEST(QueryGraphEdges, PairingOnParsedQuestions) {
  for (const char* q : {"singers and their songs", "How many singers are there?",
                        "Show concerts. List them.", "zzz qqq"}) {
    const auto a = analyze_question(q);
    expect_paired(a.graph);
  }
}
