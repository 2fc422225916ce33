#include <gtest/gtest.h>

#include <map>

#include "json.hpp"
#include "sgusql/sql.hpp"
#include "support/fixtures.hpp"

using namespace sgusql;
namespace fixtures = sgusql::fixtures;

namespace {

std::vector<std::string> corpus() {
  auto doc = nlohmann::json::parse(fixtures::read_file(fixtures::data_dir() / "gold_corpus.json"));
  std::vector<std::string> out;
  for (const auto& e : doc) out.push_back(e.at("query").get<std::string>());
  return out;
}

}  // namespace

TEST(ValidateSql, AcceptsMinimalSelect) {
  EXPECT_TRUE(sql::validate_sql("SELECT 1").ok());
  EXPECT_TRUE(sql::validate_sql("select 1;").ok());
}

TEST(ValidateSql, DiagnosticCarriesTokenPosition) {
  const auto v = sql::validate_sql("SELECT FROM");
  ASSERT_FALSE(v.ok());
  EXPECT_EQ(v.diagnostic->token, 2u);
  EXPECT_EQ(v.diagnostic->offset, 7u);
}

TEST(ValidateSql, RejectsOutsideSubset) {
  for (const char* bad : {"DELETE FROM singer", "SELECT a FROM t WHERE",
                          "SELECT CASE WHEN a THEN 1 END FROM t",
                          "WITH x AS (SELECT 1) SELECT * FROM x", "SELECT a FROM t LIMIT",
                          "SELECT 'open", "SELECT a FROM t; SELECT b FROM t",
                          "SELECT a b c FROM t", "here is your SQL"}) {
    const auto v = sql::validate_sql(bad);
    EXPECT_FALSE(v.ok()) << bad;
    if (!v.ok()) EXPECT_GE(v.diagnostic->token, 1u);
  }
}

TEST(ValidateSql, AcceptsSubsetFeatures) {
  for (const char* ok :
       {"SELECT DISTINCT a FROM t", "SELECT a FROM t LEFT JOIN u ON t.x = u.y",
        "SELECT a FROM t WHERE NOT a = 1 OR b IN (1, 2) AND c LIKE 'x%'",
        "SELECT a FROM t WHERE a BETWEEN 1 AND 3", "SELECT a FROM t WHERE b IS NOT NULL",
        "SELECT a FROM t WHERE EXISTS (SELECT 1 FROM u WHERE u.id = t.id)",
        "SELECT count(*), sum(a) FROM t GROUP BY b HAVING count(*) > 1 ORDER BY b ASC, a DESC LIMIT 3",
        "SELECT a FROM t UNION ALL SELECT a FROM u", "SELECT x.a FROM (SELECT a FROM t) AS x",
        "SELECT a FROM t, u WHERE t.id = u.id", "SELECT -a * (b + 2) / 3 FROM t",
        "SELECT `weird name` FROM [my table]"})
    EXPECT_TRUE(sql::validate_sql(ok).ok()) << ok;
}

TEST(ValidateSql, CorpusAccepted) {
  const auto qs = corpus();
  ASSERT_EQ(qs.size(), 30u);
  for (const auto& q : qs) {
    const auto v = sql::validate_sql(q);
    EXPECT_TRUE(v.ok()) << q << "\n" << (v.diagnostic ? v.diagnostic->to_string() : "");
  }
}

TEST(Normalize, MultiSourceAliases) {
  EXPECT_EQ(sql::normalize_sql("SELECT count(*) FROM Likes JOIN Highschooler ON Likes.student_id = "
                               "Highschooler.ID WHERE Highschooler.name = 'Kyle'"),
            "SELECT COUNT(*) FROM Likes AS T1 JOIN Highschooler AS T2 ON T1.student_id = T2.ID "
            "WHERE T2.name = 'Kyle'");
  EXPECT_EQ(sql::normalize_sql("select a.x from t as a join u as b on a.id = b.id"),
            "SELECT T1.x FROM t AS T1 JOIN u AS T2 ON T1.id = T2.id");
}

TEST(Normalize, SingleSourceDropsQualifiers) {
  EXPECT_EQ(sql::normalize_sql(
                "SELECT SUM(c.Population) FROM country c WHERE c.Code NOT IN (SELECT "
                "cl.CountryCode FROM countrylanguage cl WHERE cl.Language = 'English' AND "
                "cl.IsOfficial = 'T');"),
            "SELECT SUM(Population) FROM country WHERE Code NOT IN (SELECT CountryCode FROM "
            "countrylanguage WHERE Language = 'English' AND IsOfficial = 'T')");
}

TEST(Normalize, CorrelatedBlockKeepsAlias) {
  EXPECT_EQ(sql::normalize_sql("SELECT s.name FROM singer s WHERE EXISTS (SELECT 1 FROM "
                               "singer_in_concert x WHERE x.singer_id = s.singer_id)"),
            "SELECT T1.name FROM singer AS T1 WHERE EXISTS (SELECT 1 FROM singer_in_concert "
            "WHERE singer_id = T1.singer_id)");
}

TEST(Normalize, LiteralsAndOperators) {
  EXPECT_EQ(sql::normalize_sql("select name from t where a <> \"it's\" and b == 2"),
            "SELECT name FROM t WHERE a != 'it''s' AND b = 2");
  EXPECT_EQ(sql::normalize_sql("SELECT a FROM t, u"), "SELECT a FROM t AS T1 JOIN u AS T2");
  EXPECT_EQ(sql::normalize_sql("SELECT a FROM t ORDER BY a asc"), "SELECT a FROM t ORDER BY a ASC");
}

TEST(Normalize, IdempotentAndReparseable) {
  for (const auto& q : corpus()) {
    const auto once = sql::normalize_sql(q);
    EXPECT_EQ(sql::normalize_sql(once), once) << q;
    EXPECT_EQ(sql::collapse_whitespace(once), once);
  }
}

TEST(Placeholders, ExpandRecursively) {
  std::map<std::size_t, std::string> parts{{1, "SELECT b FROM u {sub:2}"}, {2, "WHERE c = 1"}};
  EXPECT_EQ(sql::expand_placeholders("SELECT a FROM t WHERE a IN ({sub:1})", parts),
            "SELECT a FROM t WHERE a IN (SELECT b FROM u WHERE c = 1)");
  EXPECT_EQ(sql::placeholders_in("x {sub:3} y {sub:12}"), (std::vector<std::size_t>{3, 12}));
  EXPECT_THROW(sql::expand_placeholders("{sub:9}", parts), ValidationError);
}

TEST(Placeholders, CollapseWhitespace) {
  EXPECT_EQ(sql::collapse_whitespace("  SELECT  a\n FROM t WHERE b = 'x  y' ;  "),
            "SELECT a FROM t WHERE b = 'x  y'");
}

TEST(ClauseSplit, RoundTripOnCorpus) {
  std::size_t exact = 0;
  for (const auto& q : corpus()) {
    const auto norm = sql::normalize(*sql::parse(q));
    const auto gold = sql::render(*norm);
    const auto parts = sql::clause_split(*norm);
    ASSERT_FALSE(parts.empty());
    EXPECT_EQ(parts.back().kind, sql::FragmentKind::statement);
    std::map<std::size_t, std::string> by_id;
    for (const auto& p : parts) {
      for (auto id : sql::placeholders_in(p.text)) EXPECT_TRUE(by_id.count(id)) << p.text;
      by_id[p.id] = p.text;
    }
    for (const auto& p : parts) {
      const auto expanded = sql::expand_placeholders(p.text, by_id);
      EXPECT_FALSE(sql::validate_fragment(p.kind, expanded).has_value())
          << sql::to_string(p.kind) << ": " << expanded;
    }
    const auto assembled = sql::collapse_whitespace(sql::expand_placeholders(parts.back().text, by_id));
    EXPECT_EQ(assembled, gold);
    exact += assembled == gold;
  }
  EXPECT_EQ(exact, 30u);
}

TEST(ClauseSplit, NestedQueryBecomesStatement) {
  const auto norm = sql::normalize(*sql::parse(
      "SELECT name FROM stadium WHERE stadium_id NOT IN (SELECT stadium_id FROM concert)"));
  const auto parts = sql::clause_split(*norm);
  ASSERT_EQ(parts.size(), 5u);
  EXPECT_EQ(parts[0].text, "FROM stadium");
  EXPECT_EQ(parts[1].text, "FROM concert");
  EXPECT_EQ(parts[2].kind, sql::FragmentKind::statement);
  EXPECT_EQ(parts[2].text, "SELECT stadium_id {sub:2}");
  EXPECT_EQ(parts[3].text, "WHERE stadium_id NOT IN ({sub:3})");
  EXPECT_EQ(parts[4].text, "SELECT name {sub:1} {sub:4}");
}

TEST(Fragments, KindsAreChecked) {
  using sql::FragmentKind;
  EXPECT_FALSE(sql::validate_fragment(FragmentKind::where, "WHERE a = 1"));
  EXPECT_TRUE(sql::validate_fragment(FragmentKind::where, "a = 1"));
  EXPECT_FALSE(sql::validate_fragment(FragmentKind::order_by, "ORDER BY count(*) DESC LIMIT 1"));
  EXPECT_FALSE(sql::validate_fragment(FragmentKind::expression, "count(*)"));
  EXPECT_FALSE(sql::validate_fragment(FragmentKind::from_join, "FROM a AS T1 JOIN b AS T2 ON T1.x = T2.y"));
  EXPECT_FALSE(sql::validate_fragment(FragmentKind::set_op, "UNION SELECT a FROM t"));
  EXPECT_TRUE(sql::validate_fragment(FragmentKind::limit, "LIMIT x"));
  EXPECT_TRUE(sql::validate_fragment(FragmentKind::group_by, "ORDER BY a"));
  EXPECT_EQ(sql::fragment_kind_from_string("order_by"), FragmentKind::order_by);
}
