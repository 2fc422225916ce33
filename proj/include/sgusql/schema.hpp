#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sgusql {

enum class DataType { text, number, time, boolean, other };

std::string_view to_string(DataType t);
DataType data_type_from_spider(std::string_view name);
// Affinity rules for declared SQLite column types.
DataType data_type_from_declared(std::string_view declared);

struct ColumnDef {
  std::string name;
  DataType data_type = DataType::other;
};

struct TableDef {
  std::string name;
  std::vector<ColumnDef> columns;
};

// (table index, column index within that table)
struct ColumnId {
  std::size_t table = 0;
  std::size_t column = 0;
  friend bool operator==(const ColumnId&, const ColumnId&) = default;
  friend auto operator<=>(const ColumnId&, const ColumnId&) = default;
};

struct ForeignKey {
  ColumnId from;
  ColumnId to;
  friend bool operator==(const ForeignKey&, const ForeignKey&) = default;
};

struct SchemaCatalog {
  std::string db_id;
  std::vector<TableDef> tables;
  std::vector<ColumnId> primary_keys;
  std::vector<ForeignKey> foreign_keys;

  std::size_t column_count() const;
  std::optional<std::size_t> find_table(std::string_view name) const;
  std::optional<ColumnId> find_column(std::string_view table,
                                      std::string_view column) const;
  const ColumnDef& column(ColumnId id) const;
  // Throws IntegrityError naming the db_id when an invariant is broken.
  void validate() const;
};

// Parse a Spider `tables.json` document.
std::vector<SchemaCatalog> load_spider_catalog(std::string_view document);
std::vector<SchemaCatalog> load_spider_catalog_file(
    const std::filesystem::path& path);

SchemaCatalog introspect_sqlite(const std::filesystem::path& db_path);

enum class SchemaNodeKind { table, column };
enum class SchemaRelation { has, primary_key, foreign_key };

std::string_view to_string(SchemaNodeKind k);
std::string_view to_string(SchemaRelation r);

struct SchemaNode {
  SchemaNodeKind kind = SchemaNodeKind::table;
  std::string label;
  // Index of the owning table node (columns only).
  std::optional<std::size_t> owner;
  // Position in the catalog.
  std::size_t table_index = 0;
  std::optional<std::size_t> column_index;
};

struct SchemaEdge {
  std::size_t source = 0;
  std::size_t target = 0;
  SchemaRelation relation = SchemaRelation::has;
  friend bool operator==(const SchemaEdge&, const SchemaEdge&) = default;
};

class SchemaGraph {
 public:
  SchemaGraph() = default;
  SchemaGraph(SchemaCatalog catalog, std::vector<SchemaNode> nodes,
              std::vector<SchemaEdge> edges);

  const SchemaCatalog& catalog() const { return catalog_; }
  const std::vector<SchemaNode>& nodes() const { return nodes_; }
  const std::vector<SchemaEdge>& edges() const { return edges_; }
  std::size_t size() const { return nodes_.size(); }

  std::size_t table_node(std::size_t table_index) const;
  std::size_t column_node(ColumnId id) const;
  // Undirected one-hop neighbourhood, ascending node order.
  std::vector<std::size_t> neighbors(std::size_t node) const;
  // "table" for table nodes, "table.column" for column nodes.
  std::string qualified_name(std::size_t node) const;
  std::optional<std::size_t> find(std::string_view qualified) const;
  std::size_t owning_table(std::size_t node) const;

 private:
  SchemaCatalog catalog_;
  std::vector<SchemaNode> nodes_;
  std::vector<SchemaEdge> edges_;
  std::vector<std::size_t> table_offsets_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

SchemaGraph build_schema_graph(const SchemaCatalog& catalog);

// Case-insensitive ASCII comparison used for every identifier.
bool iequals(std::string_view a, std::string_view b);
std::string to_lower(std::string_view s);

}  // namespace sgusql
