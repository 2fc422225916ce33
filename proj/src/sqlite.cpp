#include "sgusql/sqlite.hpp"

#include <sqlite3.h>

#include <utility>

#include "sgusql/error.hpp"

namespace sgusql::sqlite {

Database::Database(const std::filesystem::path& path, Mode mode) {
  std::error_code ec;
  if (mode == Mode::read_only && !std::filesystem::is_regular_file(path, ec)) {
    throw IoError("cannot open database " + path.string() +
                  ": no such file");
  }
  const int flags = mode == Mode::read_only
                        ? SQLITE_OPEN_READONLY
                        : SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE;
  const int rc =
      sqlite3_open_v2(path.string().c_str(), &db_, flags | SQLITE_OPEN_NOMUTEX,
                      nullptr);
  if (rc != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : sqlite3_errstr(rc);
    sqlite3_close(db_);
    db_ = nullptr;
    throw IoError("cannot open database " + path.string() + ": " + msg);
  }
}

Database::~Database() {
  if (db_) sqlite3_close(db_);
}

Database::Database(Database&& other) noexcept
    : db_(std::exchange(other.db_, nullptr)),
      progress_(std::move(other.progress_)) {
  if (db_ && progress_) set_progress_handler(1000, progress_);
}

Database& Database::operator=(Database&& other) noexcept {
  if (this != &other) {
    if (db_) sqlite3_close(db_);
    db_ = std::exchange(other.db_, nullptr);
    progress_ = std::move(other.progress_);
    if (db_ && progress_) set_progress_handler(1000, progress_);
  }
  return *this;
}

void Database::exec(std::string_view sql) {
  char* err = nullptr;
  const std::string text(sql);
  if (sqlite3_exec(db_, text.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw StepError{sqlite3_errcode(db_), msg};
  }
}

Statement Database::prepare(std::string_view sql) {
  sqlite3_stmt* stmt = nullptr;
  const int rc = sqlite3_prepare_v2(db_, sql.data(),
                                    static_cast<int>(sql.size()), &stmt,
                                    nullptr);
  if (rc != SQLITE_OK) {
    throw StepError{rc, sqlite3_errmsg(db_)};
  }
  if (!stmt) throw StepError{SQLITE_MISUSE, "empty statement"};
  return Statement(db_, stmt);
}

namespace {
int progress_trampoline(void* data) {
  auto* fn = static_cast<std::function<bool()>*>(data);
  return (*fn)() ? 1 : 0;
}
}  // namespace

void Database::set_progress_handler(int period, std::function<bool()> handler) {
  progress_ = std::move(handler);
  sqlite3_progress_handler(db_, period, &progress_trampoline, &progress_);
}

void Database::clear_progress_handler() {
  sqlite3_progress_handler(db_, 0, nullptr, nullptr);
  progress_ = nullptr;
}

std::string Database::last_error() const { return sqlite3_errmsg(db_); }

Statement::~Statement() {
  if (stmt_) sqlite3_finalize(stmt_);
}

Statement::Statement(Statement&& other) noexcept
    : db_(other.db_), stmt_(std::exchange(other.stmt_, nullptr)) {}

void Statement::bind_text(int index, std::string_view text) {
  sqlite3_bind_text(stmt_, index, text.data(), static_cast<int>(text.size()),
                    SQLITE_TRANSIENT);
}

bool Statement::step() {
  const int rc = sqlite3_step(stmt_);
  if (rc == SQLITE_ROW) return true;
  if (rc == SQLITE_DONE) return false;
  throw StepError{rc, sqlite3_errmsg(db_)};
}

int Statement::column_count() const { return sqlite3_column_count(stmt_); }

Value Statement::column(int index) const {
  switch (sqlite3_column_type(stmt_, index)) {
    case SQLITE_INTEGER:
      return static_cast<std::int64_t>(sqlite3_column_int64(stmt_, index));
    case SQLITE_FLOAT:
      return sqlite3_column_double(stmt_, index);
    case SQLITE_NULL:
      return Null{};
    default: {
      const auto* p = sqlite3_column_blob(stmt_, index);
      const int n = sqlite3_column_bytes(stmt_, index);
      return std::string(static_cast<const char*>(p ? p : ""),
                         static_cast<std::size_t>(n));
    }
  }
}

std::string Statement::column_text(int index) const {
  const auto* p = sqlite3_column_text(stmt_, index);
  return p ? reinterpret_cast<const char*>(p) : "";
}

Row Statement::row() const {
  Row r;
  const int n = column_count();
  r.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) r.push_back(column(i));
  return r;
}

std::string quote_identifier(std::string_view name) {
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace sgusql::sqlite
