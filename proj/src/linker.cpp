#include "sgusql/linker.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include "json.hpp"
#include "sgusql/error.hpp"
#include "sgusql/sqlite.hpp"

namespace sgusql {

// --- string matching ---------------------------------------------------------

std::string link_text(std::string_view s) {
  std::string out = to_lower(s);
  std::replace(out.begin(), out.end(), '_', ' ');
  return out;
}

double trigram_jaccard(std::string_view a, std::string_view b) {
  auto grams = [](std::string_view s) {
    const std::string padded = "#" + std::string(s) + "#";
    std::set<std::string> out;
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) out.insert(padded.substr(i, 3));
    return out;
  };
  const auto ga = grams(a), gb = grams(b);
  if (ga.empty() && gb.empty()) return a == b ? 1.0 : 0.0;
  std::size_t common = 0;
  for (const auto& g : ga) common += gb.count(g);
  return static_cast<double>(common) / static_cast<double>(ga.size() + gb.size() - common);
}

double levenshtein_similarity(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] != b[j - 1] ? 1u : 0u)});
      diag = up;
    }
  }
  return 1.0 - static_cast<double>(row[b.size()]) / static_cast<double>(longest);
}

double string_match_score(std::string_view anchor, std::string_view label) {
  const auto a = link_text(anchor), b = link_text(label);
  return std::max(trigram_jaccard(a, b), levenshtein_similarity(a, b));
}

bool is_content_token(const Token& t) {
  if (is_stopword(t.lemma)) return false;
  return std::any_of(t.text.begin(), t.text.end(),
                     [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; });
}

std::vector<Candidate> generate_candidates(const Token& anchor, const SchemaGraph& sg,
                                           std::size_t k) {
  if (k == 0) throw ConfigError("candidate count k must be at least 1");
  if (!is_content_token(anchor)) return {};
  std::vector<Candidate> all;
  for (std::size_t n = 0; n < sg.size(); ++n)
    all.push_back({n, string_match_score(anchor.lemma, sg.nodes()[n].label)});
  std::stable_sort(all.begin(), all.end(), [](const Candidate& x, const Candidate& y) {
    return x.string_score > y.string_score;
  });
  if (all.empty() || all.front().string_score < kCandidateThreshold) return {};
  if (all.size() > k) all.resize(k);
  return all;
}

// --- enclosing subgraph -------------------------------------------------------

std::string_view to_string(LinkRelation r) {
  switch (r) {
    case LinkRelation::forward_syntax: return "forward_syntax";
    case LinkRelation::backward_syntax: return "backward_syntax";
    case LinkRelation::none_syntax: return "none_syntax";
    case LinkRelation::has: return "has";
    case LinkRelation::primary_key: return "primary_key";
    case LinkRelation::foreign_key: return "foreign_key";
    case LinkRelation::candidate_link: return "candidate_link";
    case LinkRelation::self_loop: return "self_loop";
  }
  return "self_loop";
}

std::size_t EnclosingSubgraph::bridge_count() const {
  std::size_t n = 0;
  for (const auto& e : edges)
    if (e.relation == LinkRelation::candidate_link && e.source < e.target) ++n;
  return n;
}

std::optional<std::size_t> EnclosingSubgraph::local_id(std::size_t schema_node) const {
  for (std::size_t i = 0; i < schema_nodes.size(); ++i)
    if (schema_nodes[i] == schema_node) return query_size + i;
  return std::nullopt;
}

std::vector<std::size_t> EnclosingSubgraph::schema_neighbors(std::size_t local) const {
  std::set<std::size_t> out;
  for (const auto& e : edges) {
    if (e.source != local || e.target == local) continue;
    if (e.target >= query_size) out.insert(e.target);
  }
  return {out.begin(), out.end()};
}

EnclosingSubgraph build_enclosing_subgraph(std::size_t anchor, std::size_t schema_node,
                                           const QueryGraph& qg, const SchemaGraph& sg) {
  if (anchor >= qg.size()) throw ValidationError("anchor is not a query node");
  if (schema_node >= sg.size()) throw ValidationError("candidate is not a schema node");
  EnclosingSubgraph g;
  g.query_size = qg.size();
  g.anchor = anchor;
  for (const auto& t : qg.nodes) {
    g.labels.push_back(t.lemma);
    g.is_schema.push_back(false);
  }
  g.schema_nodes.push_back(schema_node);
  for (auto n : sg.neighbors(schema_node))
    if (n != schema_node) g.schema_nodes.push_back(n);
  g.candidate = g.query_size;
  for (auto n : g.schema_nodes) {
    g.labels.push_back(link_text(sg.nodes()[n].label));
    g.is_schema.push_back(true);
  }

  const std::size_t q = qg.size();
  std::vector<std::vector<bool>> linked(q, std::vector<bool>(q, false));
  for (const auto& e : qg.edges) {
    g.edges.push_back({e.source, e.target,
                       e.relation == QueryRelation::forward_syntax ? LinkRelation::forward_syntax
                                                                   : LinkRelation::backward_syntax});
    linked[e.source][e.target] = linked[e.target][e.source] = true;
  }
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < q; ++j)
      if (i != j && !linked[i][j]) g.edges.push_back({i, j, LinkRelation::none_syntax});

  for (const auto& e : sg.edges()) {
    auto s = g.local_id(e.source), t = g.local_id(e.target);
    if (!s || !t) continue;
    LinkRelation r = e.relation == SchemaRelation::has           ? LinkRelation::has
                     : e.relation == SchemaRelation::primary_key ? LinkRelation::primary_key
                                                                 : LinkRelation::foreign_key;
    g.edges.push_back({*s, *t, r});
    g.edges.push_back({*t, *s, r});
  }
  g.edges.push_back({anchor, g.candidate, LinkRelation::candidate_link});
  g.edges.push_back({g.candidate, anchor, LinkRelation::candidate_link});
  return g;
}

// --- model --------------------------------------------------------------------

std::size_t embedding_bucket(std::string_view label, std::size_t buckets) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return static_cast<std::size_t>(h % buckets);
}

namespace {

void check_config(const LinkerConfig& cfg) {
  if (cfg.dim < 2) throw ConfigError("linker dim must be at least 2");
  if (cfg.layers < 1) throw ConfigError("linker needs at least one layer");
  if (cfg.buckets < 1) throw ConfigError("linker needs at least one embedding bucket");
  if (cfg.k < 1) throw ConfigError("candidate count k must be at least 1");
  if (!(cfg.lr > 0) || !std::isfinite(cfg.lr)) throw ConfigError("learning rate must be positive");
  if (!(cfg.clip_norm > 0)) throw ConfigError("gradient clip norm must be positive");
}

LinkerModel shaped(const LinkerConfig& cfg) {
  check_config(cfg);
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  LinkerModel m;
  m.dim = cfg.dim;
  m.buckets = cfg.buckets;
  m.seed = cfg.seed;
  m.query_side_update = cfg.query_side_update;
  m.token_embedding = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cfg.buckets), d);
  m.label_embedding = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cfg.buckets), d);
  m.relation_embedding = Eigen::MatrixXd::Zero(kLinkRelations, d);
  m.layers.resize(cfg.layers);
  for (auto& l : m.layers) {
    for (auto& w : l.w) w = Eigen::MatrixXd::Zero(d, d);
    l.attention = Eigen::VectorXd::Zero(2 * d);
    l.bias = Eigen::VectorXd::Zero(d);
  }
  m.w_g = m.w_q = m.w_k = Eigen::MatrixXd::Zero(d, d);
  return m;
}

template <class F>
void visit_all(LinkerModel& m, F&& f) {
  f(m.token_embedding);
  f(m.label_embedding);
  visit_dense(m, f);
}

template <class F>
void visit_all(const LinkerModel& m, F&& f) {
  f(m.token_embedding);
  f(m.label_embedding);
  visit_dense(m, f);
}

}  // namespace

LinkerModel LinkerModel::zeros(const LinkerConfig& cfg) { return shaped(cfg); }

LinkerModel LinkerModel::initialize(const LinkerConfig& cfg) {
  auto m = shaped(cfg);
  std::mt19937_64 rng(cfg.seed);
  // 53 random bits -> [0,1), identical on every platform.
  auto uniform = [&] {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return -0.1 + 0.2 * u;
  };
  visit_all(m, [&](auto& mat) {
    for (Eigen::Index i = 0; i < mat.rows(); ++i)
      for (Eigen::Index j = 0; j < mat.cols(); ++j) mat(i, j) = uniform();
  });
  return m;
}

std::size_t LinkerModel::parameter_count() const {
  std::size_t n = 0;
  visit_all(*this, [&](const auto& mat) { n += static_cast<std::size_t>(mat.size()); });
  return n;
}

bool LinkerModel::finite() const {
  bool ok = true;
  visit_all(*this, [&](const auto& mat) { ok = ok && mat.allFinite(); });
  return ok;
}

namespace {

constexpr char kMagic[4] = {'S', 'G', 'U', 'L'};
constexpr std::uint16_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T> || std::is_same_v<T, float>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T take(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw ValidationError("model file is truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

void save_model(const LinkerModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write model file " + path.string());
  out.write(kMagic, 4);
  put<std::uint16_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.layers.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.buckets));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(kLinkRelations));
  put<std::uint64_t>(out, m.seed);
  put<std::uint8_t>(out, m.query_side_update ? 1 : 0);
  visit_all(m, [&](const auto& mat) {
    for (Eigen::Index i = 0; i < mat.rows(); ++i)
      for (Eigen::Index j = 0; j < mat.cols(); ++j) put<float>(out, static_cast<float>(mat(i, j)));
  });
  if (!out) throw IoError("failed writing model file " + path.string());
}

LinkerModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw ValidationError("not a linker model file: " + path.string());
  const auto version = take<std::uint16_t>(in);
  if (version != kVersion)
    throw ValidationError("unsupported model file version " + std::to_string(version));
  LinkerConfig cfg;
  cfg.dim = take<std::uint32_t>(in);
  cfg.layers = take<std::uint32_t>(in);
  cfg.buckets = take<std::uint32_t>(in);
  if (take<std::uint32_t>(in) != kLinkRelations)
    throw ValidationError("model file relation count mismatch");
  cfg.seed = take<std::uint64_t>(in);
  cfg.query_side_update = take<std::uint8_t>(in) != 0;
  if (cfg.dim > 4096 || cfg.layers > 64 || cfg.buckets > (1u << 24))
    throw ValidationError("model file dimensions out of range");
  auto m = shaped(cfg);
  visit_all(m, [&](auto& mat) {
    for (Eigen::Index i = 0; i < mat.rows(); ++i)
      for (Eigen::Index j = 0; j < mat.cols(); ++j) mat(i, j) = take<float>(in);
  });
  if (in.peek() != std::char_traits<char>::eof())
    throw ValidationError("model file has trailing bytes");
  return m;
}

// --- linking ------------------------------------------------------------------

std::string_view to_string(PredefinedRelation r) {
  switch (r) {
    case PredefinedRelation::exact_match: return "exact_match";
    case PredefinedRelation::partial_match: return "partial_match";
    case PredefinedRelation::value_match: return "value_match";
  }
  return "exact_match";
}

std::optional<std::size_t> LinkingResult::assigned(std::size_t query_node) const {
  for (const auto& a : assignments)
    if (a.query_node == query_node) return a.schema_node;
  return std::nullopt;
}

namespace {

bool contiguous_in(const std::vector<std::string>& needle, const std::vector<std::string>& hay) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

std::vector<RelationTriple> apply_predefined_relations(const QueryGraph& qg,
                                                       const SchemaGraph& sg,
                                                       sqlite::Database* db,
                                                       std::vector<std::string>* warnings) {
  std::set<std::tuple<std::size_t, std::size_t, int>> found;
  const auto& toks = qg.nodes;
  std::vector<std::vector<std::string>> labels;
  for (const auto& n : sg.nodes()) labels.push_back(label_lemmas(n.label));

  struct Gram {
    std::size_t first, last;
    std::vector<std::string> lemmas;
    std::string surface;
  };
  std::vector<Gram> grams;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (!is_content_token(toks[i])) continue;
    Gram g{i, i, {}, {}};
    for (std::size_t j = i; j < toks.size() && j < i + 3; ++j) {
      const bool wordy = std::any_of(toks[j].text.begin(), toks[j].text.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0;
      });
      if (!wordy) break;
      g.last = j;
      g.lemmas.push_back(toks[j].lemma);
      g.surface += (j > i ? " " : "") + toks[j].text;
      if (is_content_token(toks[j])) grams.push_back(g);
    }
  }

  for (const auto& g : grams) {
    for (std::size_t n = 0; n < sg.size(); ++n) {
      const auto& lab = labels[n];
      if (lab.empty()) continue;
      if (g.lemmas == lab)
        found.emplace(g.last, n, static_cast<int>(PredefinedRelation::exact_match));
      else if (contiguous_in(g.lemmas, lab) || contiguous_in(lab, g.lemmas))
        found.emplace(g.last, n, static_cast<int>(PredefinedRelation::partial_match));
    }
  }

  if (db) {
    const auto& cat = sg.catalog();
    for (std::size_t t = 0; t < cat.tables.size(); ++t) {
      for (std::size_t c = 0; c < cat.tables[t].columns.size(); ++c) {
        if (cat.tables[t].columns[c].data_type != DataType::text) continue;
        const auto col = sqlite::quote_identifier(cat.tables[t].columns[c].name);
        const auto sql = "SELECT 1 FROM (SELECT " + col + " AS v FROM " +
                         sqlite::quote_identifier(cat.tables[t].name) +
                         " LIMIT 100) WHERE v LIKE ?1 ESCAPE '\\' LIMIT 1";
        try {
          for (const auto& g : grams) {
            std::string pattern;
            for (char ch : g.surface) {
              if (ch == '%' || ch == '_' || ch == '\\') pattern += '\\';
              pattern += ch;
            }
            auto probe = db->prepare(sql);
            probe.bind_text(1, pattern);
            if (probe.step())
              found.emplace(g.last, sg.column_node({t, c}),
                            static_cast<int>(PredefinedRelation::value_match));
          }
        } catch (const sqlite::StepError& e) {
          if (warnings)
            warnings->push_back("value probe skipped for " + cat.tables[t].name + "." +
                                cat.tables[t].columns[c].name + ": " + e.message);
        } catch (const Error& e) {
          if (warnings)
            warnings->push_back("value probe skipped for " + cat.tables[t].name + "." +
                                cat.tables[t].columns[c].name + ": " + e.what());
        }
      }
    }
  }

  std::vector<RelationTriple> out;
  for (const auto& [q, n, r] : found)
    out.push_back({q, n, static_cast<PredefinedRelation>(r)});
  return out;
}

LinkingResult link(const QueryGraph& qg, const SchemaGraph& sg, const LinkerModel* m,
                   std::size_t k, sqlite::Database* db) {
  LinkingResult result;
  result.used_model = m != nullptr;
  for (std::size_t i = 0; i < qg.size(); ++i) {
    const auto cands = generate_candidates(qg.nodes[i], sg, k);
    if (cands.empty()) continue;
    Assignment best{i, cands.front().node, 0.0};
    if (m) {
      double top = -1.0;
      for (const auto& c : cands) {
        const double s = matching_score(build_enclosing_subgraph(i, c.node, qg, sg), *m);
        if (s > top) {
          top = s;
          best.schema_node = c.node;
        }
      }
      best.score = top;
    } else {
      best.score = std::clamp(cands.front().string_score, 1e-6, 1.0 - 1e-6);
    }
    result.assignments.push_back(best);
  }
  result.predefined_relations = apply_predefined_relations(qg, sg, db, &result.warnings);
  return result;
}

// --- datasets -----------------------------------------------------------------

std::vector<LinkRecord> load_link_records(std::string_view json_document) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_document);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("linking dataset is not valid JSON", e.byte > 0 ? e.byte - 1 : 0);
  }
  if (!doc.is_array()) throw ValidationError("linking dataset must be a JSON array");
  std::vector<LinkRecord> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& r = doc[i];
    auto field = [&](const char* key) {
      if (!r.is_object() || !r.contains(key) || !r[key].is_string())
        throw ValidationError("linking record " + std::to_string(i) + " lacks string field '" +
                              key + "'");
      return r[key].get<std::string>();
    };
    out.push_back({field("question"), field("db_id"), field("mention"), field("gold")});
  }
  return out;
}

LinkExample make_link_example(const LinkRecord& r, const SchemaGraph& sg) {
  LinkExample ex;
  ex.graph = analyze_question(r.question).graph;
  const auto mention = tokenize(r.mention);
  const auto& toks = ex.graph.nodes;
  bool found = false;
  for (std::size_t i = 0; !found && i + mention.size() <= toks.size(); ++i) {
    bool same = true;
    for (std::size_t j = 0; same && j < mention.size(); ++j)
      same = to_lower(toks[i + j].text) == to_lower(mention[j].text);
    if (same) {
      ex.anchor = i + mention.size() - 1;
      found = true;
    }
  }
  if (!found)
    throw ValidationError("mention '" + r.mention + "' not found in question: " + r.question);
  const auto gold = sg.find(r.gold);
  if (!gold) throw ValidationError("unknown schema element '" + r.gold + "' in " + r.db_id);
  ex.gold = *gold;
  return ex;
}

}  // namespace sgusql
