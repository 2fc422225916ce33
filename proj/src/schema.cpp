#include "sgusql/schema.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "sgusql/error.hpp"
#include "sgusql/sqlite.hpp"

namespace sgusql {

using nlohmann::json;

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view to_string(DataType t) {
  switch (t) {
    case DataType::text: return "text";
    case DataType::number: return "number";
    case DataType::time: return "time";
    case DataType::boolean: return "boolean";
    case DataType::other: return "other";
  }
  return "other";
}

DataType data_type_from_spider(std::string_view name) {
  const std::string n = to_lower(name);
  if (n == "text") return DataType::text;
  if (n == "number") return DataType::number;
  if (n == "time") return DataType::time;
  if (n == "boolean") return DataType::boolean;
  return DataType::other;
}

DataType data_type_from_declared(std::string_view declared) {
  std::string d = declared.empty() ? std::string() : to_lower(declared);
  auto has = [&](std::string_view needle) {
    return d.find(needle) != std::string::npos;
  };
  if (has("int")) return DataType::number;
  if (has("char") || has("clob") || has("text")) return DataType::text;
  if (has("date") || has("time")) return DataType::time;
  if (has("bool")) return DataType::boolean;
  // REAL/FLOAT/DOUBLE/NUMERIC and friends fall outside the listed rules.
  if (has("real") || has("floa") || has("doub") || has("numeric") ||
      has("decimal"))
    return DataType::number;
  return DataType::other;
}

std::size_t SchemaCatalog::column_count() const {
  std::size_t n = 0;
  for (const auto& t : tables) n += t.columns.size();
  return n;
}

std::optional<std::size_t> SchemaCatalog::find_table(
    std::string_view name) const {
  for (std::size_t i = 0; i < tables.size(); ++i)
    if (iequals(tables[i].name, name)) return i;
  return std::nullopt;
}

std::optional<ColumnId> SchemaCatalog::find_column(
    std::string_view table, std::string_view column) const {
  auto t = find_table(table);
  if (!t) return std::nullopt;
  const auto& cols = tables[*t].columns;
  for (std::size_t c = 0; c < cols.size(); ++c)
    if (iequals(cols[c].name, column)) return ColumnId{*t, c};
  return std::nullopt;
}

const ColumnDef& SchemaCatalog::column(ColumnId id) const {
  return tables.at(id.table).columns.at(id.column);
}

namespace {

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isspace(static_cast<unsigned char>(c));
  });
}

}  // namespace

void SchemaCatalog::validate() const {
  const std::string where = "catalog '" + db_id + "': ";
  std::set<std::string> names;
  for (const auto& t : tables) {
    if (blank(t.name)) throw IntegrityError(where + "empty table name");
    if (!names.insert(to_lower(t.name)).second)
      throw IntegrityError(where + "duplicate table '" + t.name + "'");
    std::set<std::string> cols;
    for (const auto& c : t.columns) {
      if (blank(c.name))
        throw IntegrityError(where + "empty column name in table '" + t.name +
                             "'");
      if (!cols.insert(to_lower(c.name)).second)
        throw IntegrityError(where + "duplicate column '" + c.name +
                             "' in table '" + t.name + "'");
    }
  }
  auto check = [&](ColumnId id) {
    if (id.table >= tables.size() ||
        id.column >= tables[id.table].columns.size())
      throw IntegrityError(where + "key references missing column (" +
                           std::to_string(id.table) + ", " +
                           std::to_string(id.column) + ")");
  };
  for (auto pk : primary_keys) check(pk);
  for (const auto& fk : foreign_keys) {
    check(fk.from);
    check(fk.to);
    if (fk.from == fk.to)
      throw IntegrityError(where + "foreign key references its own column");
  }
}

// --- Spider catalog ---------------------------------------------------------

namespace {

[[noreturn]] void shape_error(const std::string& what) {
  throw ParseError("malformed catalog: " + what, 0);
}

const json& member(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) shape_error(std::string("missing field '") + key + "'");
  return *it;
}

SchemaCatalog catalog_from_entry(const json& entry) {
  if (!entry.is_object()) shape_error("entry is not an object");
  SchemaCatalog cat;
  const auto& db_id = member(entry, "db_id");
  if (!db_id.is_string()) shape_error("db_id is not a string");
  cat.db_id = db_id.get<std::string>();

  const auto& table_names = member(entry, "table_names_original");
  const auto& columns = member(entry, "column_names_original");
  const auto& types = member(entry, "column_types");
  if (!table_names.is_array() || !columns.is_array() || !types.is_array())
    shape_error("table/column arrays expected in '" + cat.db_id + "'");

  for (const auto& t : table_names) {
    if (!t.is_string()) shape_error("table name is not a string");
    cat.tables.push_back(TableDef{t.get<std::string>(), {}});
  }

  // Spider column index -> ColumnId; index 0 is the `*` pseudo-column.
  std::vector<std::optional<ColumnId>> index_map;
  index_map.reserve(columns.size());
  for (std::size_t i = 0; i < columns.size(); ++i) {
    const auto& c = columns[i];
    if (!c.is_array() || c.size() != 2 || !c[0].is_number_integer() ||
        !c[1].is_string())
      shape_error("column entry " + std::to_string(i) + " of '" + cat.db_id +
                  "' is not [int, string]");
    const auto table = c[0].get<long long>();
    if (table < 0) {
      index_map.emplace_back(std::nullopt);
      continue;
    }
    if (static_cast<std::size_t>(table) >= cat.tables.size())
      throw IntegrityError("catalog '" + cat.db_id + "': column " +
                           std::to_string(i) + " references table index " +
                           std::to_string(table));
    auto& tdef = cat.tables[static_cast<std::size_t>(table)];
    DataType dt = DataType::other;
    if (i < types.size() && types[i].is_string())
      dt = data_type_from_spider(types[i].get<std::string>());
    index_map.emplace_back(
        ColumnId{static_cast<std::size_t>(table), tdef.columns.size()});
    tdef.columns.push_back(ColumnDef{c[1].get<std::string>(), dt});
  }

  auto resolve = [&](const json& v) -> ColumnId {
    if (!v.is_number_integer())
      shape_error("key index in '" + cat.db_id + "' is not an integer");
    const auto idx = v.get<long long>();
    if (idx < 0 || static_cast<std::size_t>(idx) >= index_map.size() ||
        !index_map[static_cast<std::size_t>(idx)])
      throw IntegrityError("catalog '" + cat.db_id +
                           "': dangling key index " + std::to_string(idx));
    return *index_map[static_cast<std::size_t>(idx)];
  };

  if (auto it = entry.find("primary_keys"); it != entry.end()) {
    if (!it->is_array()) shape_error("primary_keys is not an array");
    for (const auto& pk : *it) {
      // Some Spider-derived catalogs list composite keys as nested arrays.
      if (pk.is_array()) {
        for (const auto& p : pk) cat.primary_keys.push_back(resolve(p));
      } else {
        cat.primary_keys.push_back(resolve(pk));
      }
    }
  }
  if (auto it = entry.find("foreign_keys"); it != entry.end()) {
    if (!it->is_array()) shape_error("foreign_keys is not an array");
    for (const auto& fk : *it) {
      if (!fk.is_array() || fk.size() != 2)
        shape_error("foreign key entry is not a pair");
      cat.foreign_keys.push_back(ForeignKey{resolve(fk[0]), resolve(fk[1])});
    }
  }
  cat.validate();
  return cat;
}

}  // namespace

std::vector<SchemaCatalog> load_spider_catalog(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed catalog: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
  }
  if (!doc.is_array()) shape_error("top-level value is not an array");
  std::vector<SchemaCatalog> out;
  out.reserve(doc.size());
  for (const auto& entry : doc) out.push_back(catalog_from_entry(entry));
  return out;
}

std::vector<SchemaCatalog> load_spider_catalog_file(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read catalog " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_spider_catalog(ss.str());
}

// --- SQLite introspection ---------------------------------------------------

SchemaCatalog introspect_sqlite(const std::filesystem::path& db_path) {
  sqlite::Database db(db_path, sqlite::Database::Mode::read_only);
  SchemaCatalog cat;
  cat.db_id = db_path.stem().string();

  struct PendingFk {
    std::size_t table;
    std::string from_column;
    std::string to_table;
    std::string to_column;
  };
  std::vector<PendingFk> pending;
  // (table, pk ordinal, column index) so composite keys keep declared order.
  std::vector<std::tuple<std::size_t, int, std::size_t>> pks;

  try {
    auto tables = db.prepare(
        "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT "
        "LIKE 'sqlite_%' ORDER BY rowid");
    std::vector<std::string> names;
    while (tables.step()) names.push_back(tables.column_text(0));

    for (const auto& name : names) {
      const std::size_t t = cat.tables.size();
      TableDef def{name, {}};
      auto info = db.prepare("PRAGMA table_info(" +
                             sqlite::quote_identifier(name) + ")");
      while (info.step()) {
        const std::size_t c = def.columns.size();
        def.columns.push_back(ColumnDef{
            info.column_text(1), data_type_from_declared(info.column_text(2))});
        const auto pk_ordinal = info.column(5);
        const auto* pk = std::get_if<std::int64_t>(&pk_ordinal);
        if (pk && *pk > 0) pks.emplace_back(t, static_cast<int>(*pk), c);
      }
      cat.tables.push_back(std::move(def));

      auto fks = db.prepare("PRAGMA foreign_key_list(" +
                            sqlite::quote_identifier(name) + ")");
      std::vector<std::tuple<std::int64_t, std::int64_t, PendingFk>> rows;
      while (fks.step()) {
        const auto row = fks.row();
        rows.emplace_back(std::get<std::int64_t>(row[0]),
                          std::get<std::int64_t>(row[1]),
                          PendingFk{t, fks.column_text(3), fks.column_text(2),
                                    fks.column_text(4)});
      }
      // PRAGMA lists constraints in reverse declaration order.
      std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
        return std::get<1>(a) < std::get<1>(b);
      });
      for (auto& r : rows) pending.push_back(std::move(std::get<2>(r)));
    }
  } catch (const sqlite::StepError& e) {
    throw IoError("cannot introspect " + db_path.string() + ": " + e.message);
  }

  if (cat.tables.empty())
    throw EmptySchemaError("database " + db_path.string() +
                           " has no user tables");

  std::sort(pks.begin(), pks.end());
  for (const auto& [t, ord, c] : pks) cat.primary_keys.push_back(ColumnId{t, c});

  for (const auto& fk : pending) {
    auto from = cat.find_column(cat.tables[fk.table].name, fk.from_column);
    std::optional<ColumnId> to;
    if (fk.to_column.empty()) {
      // REFERENCES t with no column list targets t's primary key.
      if (auto tt = cat.find_table(fk.to_table)) {
        for (auto pk : cat.primary_keys)
          if (pk.table == *tt) {
            to = pk;
            break;
          }
      }
    } else {
      to = cat.find_column(fk.to_table, fk.to_column);
    }
    if (!from || !to)
      throw IntegrityError("catalog '" + cat.db_id +
                           "': foreign key references unknown column " +
                           fk.to_table + "." + fk.to_column);
    cat.foreign_keys.push_back(ForeignKey{*from, *to});
  }
  cat.validate();
  return cat;
}

// --- Schema graph -----------------------------------------------------------

std::string_view to_string(SchemaNodeKind k) {
  return k == SchemaNodeKind::table ? "table" : "column";
}

std::string_view to_string(SchemaRelation r) {
  switch (r) {
    case SchemaRelation::has: return "has";
    case SchemaRelation::primary_key: return "primary_key";
    case SchemaRelation::foreign_key: return "foreign_key";
  }
  return "has";
}

SchemaGraph::SchemaGraph(SchemaCatalog catalog, std::vector<SchemaNode> nodes,
                         std::vector<SchemaEdge> edges)
    : catalog_(std::move(catalog)),
      nodes_(std::move(nodes)),
      edges_(std::move(edges)) {
  std::size_t offset = catalog_.tables.size();
  for (const auto& t : catalog_.tables) {
    table_offsets_.push_back(offset);
    offset += t.columns.size();
  }
  adjacency_.resize(nodes_.size());
  for (const auto& e : edges_) {
    adjacency_[e.source].push_back(e.target);
    adjacency_[e.target].push_back(e.source);
  }
  for (auto& adj : adjacency_) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
}

std::size_t SchemaGraph::table_node(std::size_t table_index) const {
  return table_index;
}

std::size_t SchemaGraph::column_node(ColumnId id) const {
  return table_offsets_.at(id.table) + id.column;
}

std::vector<std::size_t> SchemaGraph::neighbors(std::size_t node) const {
  return adjacency_.at(node);
}

std::string SchemaGraph::qualified_name(std::size_t node) const {
  const auto& n = nodes_.at(node);
  if (n.kind == SchemaNodeKind::table) return n.label;
  return catalog_.tables[n.table_index].name + "." + n.label;
}

std::optional<std::size_t> SchemaGraph::find(std::string_view qualified) const {
  const auto dot = qualified.find('.');
  if (dot == std::string_view::npos) {
    auto t = catalog_.find_table(qualified);
    if (!t) return std::nullopt;
    return table_node(*t);
  }
  auto c = catalog_.find_column(qualified.substr(0, dot),
                                qualified.substr(dot + 1));
  if (!c) return std::nullopt;
  return column_node(*c);
}

std::size_t SchemaGraph::owning_table(std::size_t node) const {
  const auto& n = nodes_.at(node);
  return n.owner ? *n.owner : node;
}

SchemaGraph build_schema_graph(const SchemaCatalog& catalog) {
  catalog.validate();
  std::vector<SchemaNode> nodes;
  nodes.reserve(catalog.tables.size() + catalog.column_count());
  for (std::size_t t = 0; t < catalog.tables.size(); ++t)
    nodes.push_back(SchemaNode{SchemaNodeKind::table, catalog.tables[t].name,
                               std::nullopt, t, std::nullopt});
  std::vector<std::size_t> offsets;
  for (std::size_t t = 0; t < catalog.tables.size(); ++t) {
    offsets.push_back(nodes.size());
    for (std::size_t c = 0; c < catalog.tables[t].columns.size(); ++c)
      nodes.push_back(SchemaNode{SchemaNodeKind::column,
                                 catalog.tables[t].columns[c].name, t, t, c});
  }
  auto col = [&](ColumnId id) { return offsets[id.table] + id.column; };

  std::vector<SchemaEdge> has, pk, fk;
  for (std::size_t t = 0; t < catalog.tables.size(); ++t)
    for (std::size_t c = 0; c < catalog.tables[t].columns.size(); ++c)
      has.push_back({t, offsets[t] + c, SchemaRelation::has});
  for (auto id : catalog.primary_keys)
    pk.push_back({col(id), id.table, SchemaRelation::primary_key});
  for (const auto& f : catalog.foreign_keys)
    fk.push_back({col(f.from), col(f.to), SchemaRelation::foreign_key});

  auto by_endpoints = [](const SchemaEdge& a, const SchemaEdge& b) {
    return std::tie(a.source, a.target) < std::tie(b.source, b.target);
  };
  std::vector<SchemaEdge> edges;
  for (auto* group : {&has, &pk, &fk}) {
    std::sort(group->begin(), group->end(), by_endpoints);
    group->erase(std::unique(group->begin(), group->end()), group->end());
    edges.insert(edges.end(), group->begin(), group->end());
  }
  return SchemaGraph(catalog, std::move(nodes), std::move(edges));
}

}  // namespace sgusql
