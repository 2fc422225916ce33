#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sgusql/schema.hpp"

namespace sgusql::cli {

enum ExitCode : int { ok = 0, io = 1, validation = 2, pipeline = 3 };

struct RunConfig {
  struct Paths {
    std::string catalog;  // Spider tables.json; databases are introspected when empty
    std::string db_root = ".";
    std::string grammar;
    std::string rules;
    std::string model;
  } paths;
  struct Endpoint {
    std::string mode = "http";  // http, mock:echo, mock:oracle, mock:canned
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-4";
    double temperature = 0.0;
    int max_tokens = 512;
    std::size_t max_in_flight = 4;
    int attempts = 3;
    int backoff_ms = 250;
    int timeout_s = 60;
    std::string gold;    // mock:oracle gold dataset for single questions
    std::string script;  // mock:canned JSON array of replies (null = transport failure)
  } endpoint;
  struct Linker {
    std::size_t dim = 32;
    std::size_t k = 8;
    std::size_t epochs = 200;
    double lr = 0.05;
    std::uint64_t seed = 42;
  } linker;
  struct Eval {
    double timeout_s = 30.0;
    int timing_runs = 3;
    std::string format = "text";  // text, json, tsv
  } eval;
  std::size_t jobs = 0;  // 0 = logical cores
  bool verbose = false;

  // Throws ConfigError for unknown keys or out-of-range values.
  void set(std::string_view key, std::string_view value);
  void check() const;
};

// TOML-style document: `[section]` headers and `key = value` lines.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

// Spider catalog entry when paths.catalog is set, else introspection of the
// database under db_root. Throws ValidationError for an unknown db_id.
SchemaCatalog resolve_catalog(const RunConfig& cfg, std::string_view db_id);

// Full command line, argv[0] included. Never throws; errors are reported on
// `err` and mapped to the exit code contract.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sgusql::cli
