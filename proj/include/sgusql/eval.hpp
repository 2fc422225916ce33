#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sgusql/schema.hpp"
#include "sgusql/sqlite.hpp"

namespace sgusql {

enum class ExecStatus { ok, sql_error, timeout };
std::string_view to_string(ExecStatus s);

struct ExecutionOutcome {
  ExecStatus status = ExecStatus::ok;
  std::vector<sqlite::Row> rows;  // empty unless ok
  bool ordered = false;           // top-level ORDER BY
  double time_s = 0.0;
  std::string message;
};

// Read-only connection, interrupted after `timeout_s`. Throws IoError when
// the database file cannot be opened.
ExecutionOutcome execute_sql(const std::filesystem::path& db, std::string_view sql,
                             double timeout_s = 30.0);

// Integer-valued reals compare equal to integers; text compares exactly.
// Multiset comparison unless `ordered`.
bool same_rows(const std::vector<sqlite::Row>& a, const std::vector<sqlite::Row>& b, bool ordered);

// Clause-set comparison after normalisation. The catalog, when given,
// resolves unqualified columns in multi-table blocks. Throws EvaluationError
// when either side does not parse.
bool exact_match(std::string_view pred, std::string_view gold,
                 const SchemaCatalog* catalog = nullptr);

// Order-sensitive when the gold has a top-level ORDER BY. Throws
// EvaluationError when the gold does not execute.
bool execution_match(std::string_view pred, std::string_view gold,
                     const std::filesystem::path& db, double timeout_s = 30.0);

enum class FailureCategory { schema_link, join, group_by, nested, condition_value, other };
std::string_view to_string(FailureCategory c);
inline constexpr FailureCategory kFailureCategories[] = {
    FailureCategory::schema_link, FailureCategory::join,           FailureCategory::group_by,
    FailureCategory::nested,      FailureCategory::condition_value, FailureCategory::other};

FailureCategory classify_error(std::string_view pred, std::string_view gold,
                               const SchemaCatalog* catalog = nullptr);
FailureCategory classify_error(std::string_view pred, std::string_view gold,
                               const std::filesystem::path& db);

enum class Difficulty { easy, medium, hard, extra, unknown };
std::string_view to_string(Difficulty d);
Difficulty difficulty_from_string(std::string_view s);  // throws ValidationError

struct EvalRecord {
  std::size_t id = 0;
  std::string db_id;
  std::string question;
  std::string predicted;
  std::string gold;
  Difficulty difficulty = Difficulty::unknown;
  bool em = false;
  bool ex = false;
  double ves = 0.0;
  std::optional<FailureCategory> category;
  std::string pred_status;            // ok, invalid, sql_error, timeout
  std::optional<std::string> error;   // evaluation error for this record
  double time_gold_s = 0.0;
  double time_pred_s = 0.0;
};

// Mean over records of 1[ex] * sqrt(clamp(t_gold / t_pred, 1/100, 100)).
double ves_contribution(double time_gold_s, double time_pred_s);
double ves(const std::vector<EvalRecord>& records);

struct BucketStats {
  std::size_t count = 0;
  double em_acc = 0.0;
  double exec_acc = 0.0;
  double ves = 0.0;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  double em_acc = 0.0;
  double exec_acc = 0.0;
  double ves = 0.0;
  std::map<Difficulty, BucketStats> by_difficulty;
  std::map<FailureCategory, std::size_t> errors;

  // Aggregates recomputed from the records.
  static EvalReport summarize(std::vector<EvalRecord> records);
  nlohmann::json to_json() const;
  std::string to_tsv() const;
};

struct Example {
  std::string question;
  std::string query;
  std::string db_id;
  Difficulty difficulty = Difficulty::unknown;
};
std::vector<Example> load_dataset(std::string_view json_document);
std::vector<Example> load_dataset_file(const std::filesystem::path& path);

struct Prediction {
  std::size_t id = 0;  // index into the dataset
  std::string sql;
};
// One {id, sql} document per line.
std::vector<Prediction> load_predictions(std::string_view jsonl);
std::string dump_predictions(const std::vector<Prediction>& preds);

struct EvalConfig {
  double timeout_s = 30.0;
  int timing_runs = 3;
  std::size_t jobs = 1;
};

// <root>/<db_id>/<db_id>.sqlite, else <root>/<db_id>.sqlite.
std::filesystem::path database_path(const std::filesystem::path& root, std::string_view db_id);

// Throws ValidationError for an empty prediction set or an unknown id.
EvalReport evaluate(const std::vector<Example>& examples,
                    const std::vector<Prediction>& predictions,
                    const std::filesystem::path& db_root, const EvalConfig& cfg = {});

}  // namespace sgusql
