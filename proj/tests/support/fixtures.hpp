#pragma once

// Test-only helpers: random catalogs, a DDL emitter, and scratch databases.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "sgusql/schema.hpp"
#include "sgusql/sqlite.hpp"

namespace sgusql::fixtures {

inline std::filesystem::path data_dir() { return SGUSQL_TEST_DATA; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sgusql_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void create_db(const std::filesystem::path& path, const std::string& sql) {
  std::filesystem::remove(path);
  sqlite::Database db(path, sqlite::Database::Mode::read_write_create);
  db.exec(sql);
}

inline std::string declared_type(DataType t) {
  switch (t) {
    case DataType::text: return "TEXT";
    case DataType::number: return "INTEGER";
    case DataType::time: return "DATETIME";
    case DataType::boolean: return "BOOLEAN";
    case DataType::other: return "BLOB";
  }
  return "BLOB";
}

inline std::string emit_ddl(const SchemaCatalog& cat) {
  std::ostringstream out;
  for (std::size_t t = 0; t < cat.tables.size(); ++t) {
    const auto& table = cat.tables[t];
    out << "CREATE TABLE " << sqlite::quote_identifier(table.name) << " (";
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      if (c) out << ", ";
      out << sqlite::quote_identifier(table.columns[c].name) << " "
          << declared_type(table.columns[c].data_type);
    }
    std::vector<std::string> pk;
    for (auto id : cat.primary_keys)
      if (id.table == t) pk.push_back(sqlite::quote_identifier(cat.column(id).name));
    if (!pk.empty()) {
      out << ", PRIMARY KEY (";
      for (std::size_t i = 0; i < pk.size(); ++i) out << (i ? ", " : "") << pk[i];
      out << ")";
    }
    for (const auto& fk : cat.foreign_keys) {
      if (fk.from.table != t) continue;
      out << ", FOREIGN KEY (" << sqlite::quote_identifier(cat.column(fk.from).name)
          << ") REFERENCES " << sqlite::quote_identifier(cat.tables[fk.to.table].name)
          << " (" << sqlite::quote_identifier(cat.column(fk.to).name) << ")";
    }
    out << ");\n";
  }
  return out.str();
}

// Random catalog satisfying every SchemaCatalog invariant. Primary keys are
// listed in (table, column) order and at most one foreign key leaves each
// column, so the DDL round trip is order-preserving.
inline SchemaCatalog random_catalog(std::mt19937_64& rng, const std::string& db_id) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  SchemaCatalog cat;
  cat.db_id = db_id;
  const std::size_t tables = pick(1, 6);
  for (std::size_t t = 0; t < tables; ++t) {
    TableDef def;
    def.name = "t" + std::to_string(t) + "_" + std::to_string(pick(0, 999));
    const std::size_t cols = pick(1, 7);
    for (std::size_t c = 0; c < cols; ++c)
      def.columns.push_back(ColumnDef{"c" + std::to_string(c),
                                      static_cast<DataType>(pick(0, 4))});
    cat.tables.push_back(std::move(def));
  }
  for (std::size_t t = 0; t < tables; ++t) {
    const std::size_t cols = cat.tables[t].columns.size();
    const std::size_t nkeys = pick(0, std::min<std::size_t>(2, cols));
    for (std::size_t c = 0; c < nkeys; ++c) cat.primary_keys.push_back(ColumnId{t, c});
  }
  for (std::size_t t = 0; t < tables; ++t) {
    for (std::size_t c = 0; c < cat.tables[t].columns.size(); ++c) {
      if (pick(0, 3) != 0) continue;
      ColumnId from{t, c};
      ColumnId to{pick(0, tables - 1), 0};
      to.column = pick(0, cat.tables[to.table].columns.size() - 1);
      if (to == from) continue;
      cat.foreign_keys.push_back(ForeignKey{from, to});
    }
  }
  return cat;
}

}  // namespace sgusql::fixtures
