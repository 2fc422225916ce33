#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

struct sqlite3;
struct sqlite3_stmt;

namespace sgusql::sqlite {

struct Null {
  friend bool operator==(const Null&, const Null&) = default;
};
using Value = std::variant<Null, std::int64_t, double, std::string>;
using Row = std::vector<Value>;

class Statement;

// Owning connection handle.
class Database {
 public:
  enum class Mode { read_only, read_write_create };

  Database(const std::filesystem::path& path, Mode mode);
  ~Database();
  Database(const Database&) = delete;
  Database& operator=(const Database&) = delete;
  Database(Database&& other) noexcept;
  Database& operator=(Database&& other) noexcept;

  void exec(std::string_view sql);
  Statement prepare(std::string_view sql);
  // Installs a callback polled every `period` VM instructions; returning true
  // interrupts the running statement.
  void set_progress_handler(int period, std::function<bool()> handler);
  void clear_progress_handler();
  std::string last_error() const;
  sqlite3* handle() const { return db_; }

 private:
  sqlite3* db_ = nullptr;
  std::function<bool()> progress_;
};

class Statement {
 public:
  Statement(sqlite3* db, sqlite3_stmt* stmt) : db_(db), stmt_(stmt) {}
  ~Statement();
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;
  Statement(Statement&& other) noexcept;
  Statement& operator=(Statement&&) = delete;

  void bind_text(int index, std::string_view text);
  // Returns false when the statement is done. Throws sqlite::StepError.
  bool step();
  int column_count() const;
  Value column(int index) const;
  std::string column_text(int index) const;
  Row row() const;

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_;
};

struct StepError {
  int code;
  std::string message;
};

// Quote an identifier for interpolation into SQL text.
std::string quote_identifier(std::string_view name);

}  // namespace sgusql::sqlite
