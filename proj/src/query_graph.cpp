#include "sgusql/query_graph.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "sgusql/error.hpp"
#include "sgusql/schema.hpp"

namespace sgusql {

bool is_nonterminal_symbol(std::string_view symbol) {
  return !symbol.empty() && std::isupper(static_cast<unsigned char>(symbol[0]));
}

// --- grammar ----------------------------------------------------------------

namespace {

bool is_epsilon(std::string_view s) { return s == "ε" || s == "<epsilon>"; }

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string word;
  while (in >> word) out.push_back(word);
  return out;
}

}  // namespace

QueryGrammar::QueryGrammar(std::string start, std::vector<Production> productions)
    : start_(std::move(start)), productions_(std::move(productions)) {
  for (const auto& p : productions_) {
    if (!is_nonterminal_symbol(p.lhs))
      throw ConfigError("grammar: left-hand side '" + p.lhs +
                        "' is not a nonterminal");
    nonterminals_.insert(p.lhs);
  }
  if (!nonterminals_.count(start_))
    throw ConfigError("grammar: start symbol '" + start_ + "' has no production");
  for (const auto& p : productions_) {
    for (const auto& s : p.rhs) {
      if (is_nonterminal_symbol(s)) {
        if (!nonterminals_.count(s))
          throw ConfigError("grammar: symbol '" + s + "' in '" + p.lhs +
                            "' has no production");
      } else {
        terminals_.insert(s);
      }
    }
  }

  // Epsilon elimination: nullable symbols become optional in every RHS.
  std::set<std::string> nullable;
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& p : productions_) {
      if (nullable.count(p.lhs)) continue;
      if (std::all_of(p.rhs.begin(), p.rhs.end(),
                      [&](const std::string& s) { return nullable.count(s) > 0; })) {
        nullable.insert(p.lhs);
        changed = true;
      }
    }
  }
  std::set<std::pair<std::string, std::vector<std::string>>> seen;
  for (const auto& p : productions_) {
    std::vector<std::size_t> optional;
    for (std::size_t i = 0; i < p.rhs.size(); ++i)
      if (nullable.count(p.rhs[i])) optional.push_back(i);
    const std::size_t variants = std::size_t{1} << optional.size();
    for (std::size_t mask = 0; mask < variants; ++mask) {
      std::vector<std::string> rhs;
      for (std::size_t i = 0, o = 0; i < p.rhs.size(); ++i) {
        if (o < optional.size() && optional[o] == i) {
          const bool drop = (mask >> o) & 1U;
          ++o;
          if (drop) continue;
        }
        rhs.push_back(p.rhs[i]);
      }
      if (rhs.empty()) continue;
      if (rhs.size() == 1 && rhs[0] == p.lhs) continue;
      if (seen.emplace(p.lhs, rhs).second)
        parse_productions_.push_back(Production{p.lhs, rhs, p.weight});
    }
  }

  // Unit-production cycles would make the chart recursion diverge.
  std::map<std::string, std::set<std::string>> units;
  for (const auto& p : parse_productions_)
    if (p.rhs.size() == 1 && is_nonterminal_symbol(p.rhs[0]))
      units[p.lhs].insert(p.rhs[0]);
  std::map<std::string, int> state;
  std::function<void(const std::string&)> visit = [&](const std::string& s) {
    state[s] = 1;
    for (const auto& t : units[s]) {
      if (state[t] == 1)
        throw ConfigError("grammar: unit-production cycle through '" + t + "'");
      if (state[t] == 0) visit(t);
    }
    state[s] = 2;
  };
  for (const auto& nt : nonterminals_)
    if (state[nt] == 0) visit(nt);
}

bool QueryGrammar::is_nonterminal(std::string_view symbol) const {
  return nonterminals_.count(std::string(symbol)) > 0;
}

QueryGrammar QueryGrammar::parse(std::string_view text) {
  std::vector<Production> prods;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto words = split_ws(line);
    if (words.empty()) continue;
    const std::string where = "grammar line " + std::to_string(lineno);
    if (words.size() < 3 || words[1] != "->")
      throw ConfigError(where + ": expected 'LHS -> RHS'");
    Production p;
    p.lhs = words[0];
    std::vector<std::string> rhs(words.begin() + 2, words.end());
    if (!rhs.empty() && rhs.back().front() == '[') {
      const auto& w = rhs.back();
      if (w.back() != ']') throw ConfigError(where + ": malformed weight");
      try {
        p.weight = std::stod(w.substr(1, w.size() - 2));
      } catch (const std::exception&) {
        throw ConfigError(where + ": malformed weight");
      }
      rhs.pop_back();
    }
    if (rhs.size() == 1 && is_epsilon(rhs[0])) {
      rhs.clear();
    } else if (rhs.empty()) {
      throw ConfigError(where + ": empty right-hand side");
    } else if (std::any_of(rhs.begin(), rhs.end(),
                           [](const std::string& s) { return is_epsilon(s); })) {
      throw ConfigError(where + ": epsilon must stand alone");
    }
    p.rhs = std::move(rhs);
    prods.push_back(std::move(p));
  }
  if (prods.empty()) throw ConfigError("grammar has no productions");
  std::string start = prods.front().lhs;
  return QueryGrammar(std::move(start), std::move(prods));
}

QueryGrammar QueryGrammar::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read grammar " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const QueryGrammar& QueryGrammar::default_grammar() {
  static const QueryGrammar g = parse(default_grammar_text());
  return g;
}

// --- syntax tree ------------------------------------------------------------

std::vector<std::string> SyntaxTree::preorder_symbols() const {
  std::vector<std::string> out;
  if (nodes.empty()) return out;
  std::vector<std::size_t> stack{root};
  while (!stack.empty()) {
    const auto id = stack.back();
    stack.pop_back();
    out.push_back(nodes[id].symbol);
    const auto& ch = nodes[id].children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

std::vector<std::size_t> SyntaxTree::postorder() const {
  std::vector<std::size_t> out;
  if (nodes.empty()) return out;
  std::function<void(std::size_t)> walk = [&](std::size_t id) {
    for (auto c : nodes[id].children) walk(c);
    out.push_back(id);
  };
  walk(root);
  return out;
}

void SyntaxTree::check(std::size_t token_count) const {
  auto fail = [](const std::string& what) { throw std::logic_error("syntax tree: " + what); };
  if (nodes.empty()) fail("empty");
  if (nodes.at(root).parent) fail("root has a parent");
  std::vector<int> seen(nodes.size(), 0);
  std::function<void(std::size_t)> walk = [&](std::size_t id) {
    if (seen[id]++) fail("cycle or shared node");
    const auto& n = nodes[id];
    if (n.id != id) fail("id mismatch");
    if (n.terminal) {
      if (!n.children.empty()) fail("terminal with children");
      if (n.span.size() != 1) fail("terminal span width != 1");
      return;
    }
    if (n.children.empty()) fail("nonterminal without children");
    std::size_t cursor = n.span.start;
    for (auto c : n.children) {
      if (nodes.at(c).parent != id) fail("parent link mismatch");
      if (nodes[c].span.start != cursor) fail("children not contiguous");
      cursor = nodes[c].span.end;
      walk(c);
    }
    if (cursor != n.span.end) fail("span is not the union of child spans");
  };
  walk(root);
  if (std::count(seen.begin(), seen.end(), 0) != 0) fail("unreachable nodes");
  if (nodes[root].span != TokenSpan{0, token_count}) fail("root does not cover all tokens");
}

// --- chart parser -----------------------------------------------------------

namespace {

struct Deriv {
  std::string symbol;
  bool terminal = false;
  TokenSpan span;
  std::vector<std::shared_ptr<const Deriv>> children;
  double score = 0.0;
  std::size_t nodes = 1;
  std::vector<std::string> preorder;
};
using DerivPtr = std::shared_ptr<const Deriv>;

struct Partial {
  std::vector<DerivPtr> children;
  double score = 0.0;
  std::size_t nodes = 0;
  std::vector<std::string> preorder;
};

template <typename T>
bool ranks_before(const T& a, const T& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.nodes != b.nodes) return a.nodes < b.nodes;
  return a.preorder < b.preorder;
}

class ChartParser {
 public:
  ChartParser(std::span<const Token> tokens, const QueryGrammar& grammar,
              std::size_t beam)
      : grammar_(grammar), n_(tokens.size()), beam_(beam) {
    classes_.reserve(n_);
    for (std::size_t i = 0; i < n_; ++i) classes_.push_back(token_classes(tokens, i));
    for (std::size_t p = 0; p < grammar.parse_productions().size(); ++p)
      by_lhs_[grammar.parse_productions()[p].lhs].push_back(p);
  }

  const std::vector<DerivPtr>& cell(const std::string& symbol, std::size_t i,
                                    std::size_t j) {
    auto key = std::make_tuple(symbol, i, j);
    if (auto it = cells_.find(key); it != cells_.end()) {
      if (it->second.computing)
        throw std::logic_error("chart parser: cyclic derivation of " + symbol);
      return it->second.items;
    }
    auto& entry = cells_[key];
    entry.computing = true;
    std::vector<DerivPtr> items;
    if (!is_nonterminal_symbol(symbol)) {
      if (j == i + 1 && std::find(classes_[i].begin(), classes_[i].end(),
                                  symbol) != classes_[i].end()) {
        auto d = std::make_shared<Deriv>();
        d->symbol = symbol;
        d->terminal = true;
        d->span = {i, j};
        d->preorder = {symbol};
        items.push_back(std::move(d));
      }
    } else if (auto it = by_lhs_.find(symbol); it != by_lhs_.end()) {
      for (auto p : it->second) {
        const auto& prod = grammar_.parse_productions()[p];
        if (prod.rhs.size() > j - i) continue;
        for (const auto& part : sequence(p, 0, i, j)) {
          auto d = std::make_shared<Deriv>();
          d->symbol = symbol;
          d->span = {i, j};
          d->children = part.children;
          d->score = part.score + prod.weight;
          d->nodes = part.nodes + 1;
          d->preorder.reserve(part.preorder.size() + 1);
          d->preorder.push_back(symbol);
          d->preorder.insert(d->preorder.end(), part.preorder.begin(),
                             part.preorder.end());
          items.push_back(std::move(d));
        }
      }
      prune(items, [](const DerivPtr& a, const DerivPtr& b) { return ranks_before(*a, *b); });
    }
    auto& slot = cells_[key];
    slot.items = std::move(items);
    slot.computing = false;
    return slot.items;
  }

 private:
  struct Cell {
    std::vector<DerivPtr> items;
    bool computing = false;
  };

  template <typename T, typename Less>
  void prune(std::vector<T>& items, Less less) {
    std::stable_sort(items.begin(), items.end(), less);
    if (items.size() > beam_) items.resize(beam_);
  }

  const std::vector<Partial>& sequence(std::size_t p, std::size_t k,
                                       std::size_t i, std::size_t j) {
    auto key = std::make_tuple(p, k, i, j);
    if (auto it = seqs_.find(key); it != seqs_.end()) return it->second;
    const auto& rhs = grammar_.parse_productions()[p].rhs;
    std::vector<Partial> out;
    const std::size_t remaining = rhs.size() - k;
    if (remaining == 1) {
      for (const auto& d : cell(rhs[k], i, j))
        out.push_back(Partial{{d}, d->score, d->nodes, d->preorder});
    } else {
      for (std::size_t m = i + 1; m + (remaining - 1) <= j; ++m) {
        const auto& left = cell(rhs[k], i, m);
        if (left.empty()) continue;
        const auto& right = sequence(p, k + 1, m, j);
        for (const auto& l : left) {
          for (const auto& r : right) {
            Partial part;
            part.children.reserve(r.children.size() + 1);
            part.children.push_back(l);
            part.children.insert(part.children.end(), r.children.begin(),
                                 r.children.end());
            part.score = l->score + r.score;
            part.nodes = l->nodes + r.nodes;
            part.preorder = l->preorder;
            part.preorder.insert(part.preorder.end(), r.preorder.begin(),
                                 r.preorder.end());
            out.push_back(std::move(part));
          }
        }
      }
    }
    prune(out, [](const Partial& a, const Partial& b) { return ranks_before(a, b); });
    return seqs_[key] = std::move(out);
  }

  const QueryGrammar& grammar_;
  std::size_t n_;
  std::size_t beam_;
  std::vector<std::vector<std::string>> classes_;
  std::map<std::string, std::vector<std::size_t>> by_lhs_;
  std::map<std::tuple<std::string, std::size_t, std::size_t>, Cell> cells_;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>,
           std::vector<Partial>>
      seqs_;
};

SyntaxTree to_tree(const Deriv& root) {
  SyntaxTree tree;
  std::function<std::size_t(const Deriv&, std::optional<std::size_t>)> add =
      [&](const Deriv& d, std::optional<std::size_t> parent) {
        const std::size_t id = tree.nodes.size();
        tree.nodes.push_back(TreeNode{id, d.symbol, d.terminal, d.span, {}, parent});
        for (const auto& c : d.children) {
          const auto cid = add(*c, id);
          tree.nodes[id].children.push_back(cid);
        }
        return id;
      };
  add(root, std::nullopt);
  return tree;
}

}  // namespace

bool better_interpretation(const ParseInterpretation& a,
                           const ParseInterpretation& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tree.size() != b.tree.size()) return a.tree.size() < b.tree.size();
  return a.tree.preorder_symbols() < b.tree.preorder_symbols();
}

std::vector<ParseInterpretation> parse(std::span<const Token> tokens,
                                       const QueryGrammar& grammar,
                                       std::size_t max_trees) {
  if (tokens.empty()) throw ValidationError("cannot parse an empty token list");
  ChartParser chart(tokens, grammar, std::max<std::size_t>(max_trees, 1));
  std::vector<ParseInterpretation> out;
  for (const auto& d : chart.cell(grammar.start(), 0, tokens.size()))
    out.push_back(ParseInterpretation{to_tree(*d), d->score, false});

  if (out.empty()) {
    ParseInterpretation flat;
    flat.fallback = true;
    flat.tree.nodes.push_back(
        TreeNode{0, grammar.start(), false, {0, tokens.size()}, {}, std::nullopt});
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto classes = token_classes(tokens, i);
      flat.tree.nodes.push_back(
          TreeNode{i + 1, classes.front(), true, {i, i + 1}, {}, 0});
      flat.tree.nodes[0].children.push_back(i + 1);
    }
    out.push_back(std::move(flat));
  }
  std::stable_sort(out.begin(), out.end(), better_interpretation);
  return out;
}

const ParseInterpretation& select_interpretation(
    std::span<const ParseInterpretation> candidates) {
  if (candidates.empty())
    throw ValidationError("select_interpretation: no candidates");
  return *std::min_element(candidates.begin(), candidates.end(),
                           better_interpretation);
}

std::size_t head_token(const SyntaxTree& tree, std::size_t node) {
  const auto& n = tree.node(node);
  if (n.terminal) return n.span.start;
  std::optional<std::size_t> first_terminal;
  std::optional<std::size_t> nominal;
  std::function<void(std::size_t)> walk = [&](std::size_t id) {
    if (nominal) return;
    const auto& x = tree.node(id);
    if (x.terminal) {
      if (!first_terminal) first_terminal = x.span.start;
      if (x.symbol == "noun" || x.symbol == "val") nominal = x.span.start;
      return;
    }
    for (auto c : x.children) walk(c);
  };
  walk(node);
  if (nominal) return *nominal;
  return first_terminal.value_or(n.span.start);
}

// --- coreference ------------------------------------------------------------

std::optional<std::size_t> CorefMap::entity_of(TokenSpan span) const {
  for (const auto& m : mentions)
    if (m.span == span) return m.entity;
  return std::nullopt;
}

CorefMap resolve_coreference(std::span<const Token> tokens,
                             const SyntaxTree& tree) {
  // Terminal symbol per token from the selected tree.
  std::vector<std::string> symbol(tokens.size());
  for (const auto& n : tree.nodes)
    if (n.terminal && n.span.start < tokens.size()) symbol[n.span.start] = n.symbol;

  auto nominal = [&](std::size_t i) {
    return (symbol[i] == "noun" || symbol[i] == "val") &&
           !is_stopword(tokens[i].lemma) && !is_pronoun(tokens[i].lemma);
  };

  CorefMap map;
  struct Seen {
    std::string lemma;
    std::size_t entity;
  };
  std::vector<Seen> history;  // mentions in order of appearance

  for (std::size_t i = 0; i < tokens.size();) {
    const auto& lemma = tokens[i].lemma;
    const bool demonstrative = lemma == "these" || lemma == "those";
    const bool determiner_use = demonstrative && i + 1 < tokens.size() && nominal(i + 1);
    if (is_pronoun(lemma) && !determiner_use) {
      const TokenSpan span{i, i + 1};
      if (history.empty()) {
        map.entities.push_back(CorefEntity{span, true});
        map.mentions.push_back(CorefMention{span, map.entities.size() - 1});
      } else {
        map.mentions.push_back(CorefMention{span, history.back().entity});
      }
      ++i;
      continue;
    }
    if (!nominal(i)) {
      ++i;
      continue;
    }
    // A mention is a maximal run of nominal tokens; its head is the last.
    std::size_t j = i;
    while (j < tokens.size() && nominal(j)) ++j;
    const TokenSpan span{i, j};
    const auto& head = tokens[j - 1].lemma;
    const bool definite = i > 0 && to_lower(tokens[i - 1].text) == "the";
    std::optional<std::size_t> entity;
    if (definite) {
      for (auto it = history.rbegin(); it != history.rend(); ++it)
        if (it->lemma == head) {
          entity = it->entity;
          break;
        }
    }
    if (!entity) {
      map.entities.push_back(CorefEntity{span, false});
      entity = map.entities.size() - 1;
    }
    map.mentions.push_back(CorefMention{span, *entity});
    history.push_back(Seen{head, *entity});
    i = j;
  }
  return map;
}

// --- query graph ------------------------------------------------------------

std::string_view to_string(QueryRelation r) {
  switch (r) {
    case QueryRelation::forward_syntax: return "forward_syntax";
    case QueryRelation::backward_syntax: return "backward_syntax";
    case QueryRelation::none_syntax: return "none_syntax";
  }
  return "none_syntax";
}

bool QueryGraph::adjacent(std::size_t a, std::size_t b) const {
  return std::any_of(edges.begin(), edges.end(), [&](const QueryEdge& e) {
    return e.source == a && e.target == b;
  });
}

QueryGraph build_query_graph(std::vector<Token> tokens, SyntaxTree tree,
                             CorefMap coref) {
  // One syntactic relation per token pair, oriented by the first tree
  // relation that reaches it.
  std::vector<std::pair<std::size_t, std::size_t>> forward;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  auto link = [&](std::size_t a, std::size_t b) {
    if (a == b || !seen.emplace(std::min(a, b), std::max(a, b)).second) return;
    forward.emplace_back(a, b);
  };
  for (const auto& n : tree.nodes) {
    if (n.terminal) continue;
    const auto hp = head_token(tree, n.id);
    for (std::size_t c = 0; c < n.children.size(); ++c) {
      link(hp, head_token(tree, n.children[c]));
      if (c + 1 < n.children.size())
        link(head_token(tree, n.children[c]), head_token(tree, n.children[c + 1]));
    }
  }
  for (const auto& m : coref.mentions) {
    const auto& canonical = coref.entities[m.entity].canonical;
    if (canonical != m.span) link(canonical.end - 1, m.span.end - 1);
  }

  QueryGraph g;
  for (const auto& [a, b] : forward) {
    g.edges.push_back({a, b, QueryRelation::forward_syntax});
    g.edges.push_back({b, a, QueryRelation::backward_syntax});
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const QueryEdge& x, const QueryEdge& y) {
    return std::tie(x.source, x.target, x.relation) <
           std::tie(y.source, y.target, y.relation);
  });
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i].position = i;
  g.nodes = std::move(tokens);
  g.tree = std::move(tree);
  g.coref = std::move(coref);
  return g;
}

QueryAnalysis analyze_question(std::string_view question,
                               const QueryGrammar& grammar) {
  QueryAnalysis a;
  auto tokens = tokenize(question);
  a.interpretations = parse(tokens, grammar);
  const auto& best = select_interpretation(a.interpretations);
  a.selected = static_cast<std::size_t>(&best - a.interpretations.data());
  auto coref = resolve_coreference(tokens, best.tree);
  a.graph = build_query_graph(std::move(tokens), best.tree, std::move(coref));
  return a;
}

}  // namespace sgusql
