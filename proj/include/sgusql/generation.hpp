#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sgusql/decomposer.hpp"
#include "sgusql/error.hpp"
#include "sgusql/linker.hpp"
#include "sgusql/query_graph.hpp"
#include "sgusql/schema.hpp"
#include "sgusql/sql.hpp"

namespace sgusql {

// Raised when the endpoint stays unreachable after all attempts, or refuses
// a request outright.
class EndpointError : public Error {
 public:
  explicit EndpointError(const std::string& what) : Error(ErrorCategory::pipeline, what) {}
};

// A single failed round trip; retried by complete_with_retry.
class TransportError : public EndpointError {
 public:
  using EndpointError::EndpointError;
};

// The endpoint kept producing text that is not a valid fragment.
class ComponentError : public Error {
 public:
  ComponentError(const std::string& what, std::vector<sql::Diagnostic> diagnostics)
      : Error(ErrorCategory::pipeline, what), diagnostics_(std::move(diagnostics)) {}
  const std::vector<sql::Diagnostic>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<sql::Diagnostic> diagnostics_;
};

// A subtask was reached before one of its children had a component.
class OrderingError : public Error {
 public:
  explicit OrderingError(const std::string& what) : Error(ErrorCategory::pipeline, what) {}
};

// Any failure inside run_pipeline, tagged with the stage and the partial trace.
class PipelineError : public Error {
 public:
  PipelineError(ErrorCategory cat, std::string stage, const std::string& what,
                nlohmann::json trace)
      : Error(cat, stage + ": " + what), stage_(std::move(stage)), trace_(std::move(trace)) {}
  const std::string& stage() const noexcept { return stage_; }
  const nlohmann::json& trace() const noexcept { return trace_; }

 private:
  std::string stage_;
  nlohmann::json trace_;
};

// ---------------------------------------------------------------------------
// Contexts and prompts

struct ComponentSummary {
  std::size_t id = 0;
  MetaOpKind kind = MetaOpKind::select;
  std::optional<std::string> text;
};

struct LinkedElement {
  std::string name;                  // table or table.column
  std::string mention;               // question token text
  std::vector<std::string> tags;     // node kind, then predefined relations
  double score = 0.0;
};

struct PromptContext {
  std::string question;
  std::size_t node = 0;
  MetaOpKind kind = MetaOpKind::select;
  bool negated = false;
  std::optional<ComponentSummary> parent;
  std::vector<ComponentSummary> siblings;
  std::vector<std::size_t> children;
  std::vector<LinkedElement> linked;
  std::vector<std::string> value_hints;
  std::string schema_slice;            // CREATE TABLE stanzas
  std::vector<SqlComponent> prior;     // generation order
};

// Throws OrderingError when a child of the subtask has no component yet.
PromptContext compose_context(std::size_t node, const SubtaskPlan& plan,
                              const LinkingResult& linking,
                              const std::vector<SqlComponent>& prior, std::string_view question,
                              const QueryGraph& qg, const SchemaGraph& sg);

// Tables as CREATE TABLE stanzas with their keys, in catalog order.
std::string render_schema(const SchemaCatalog& catalog, const std::vector<std::size_t>& tables);

std::string render_prompt(const PromptContext& ctx);

// Prompt line prefixes shared by the renderer and the oracle mock.
namespace prompt {
inline constexpr std::string_view question = "-- question: ";
inline constexpr std::string_view subtask = "-- subtask: ";
inline constexpr std::string_view component = "-- component ";
inline constexpr std::string_view instruction = "-- instruction: ";
inline constexpr std::string_view rejected = "-- rejected: ";
}  // namespace prompt

// ---------------------------------------------------------------------------
// Endpoints

struct GenerationRequest {
  std::string model = "gpt-4";
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 512;
  std::vector<std::string> stop;
};

struct GenerationResponse {
  std::string text;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  double time_ms = 0.0;
};

class Endpoint {
 public:
  virtual ~Endpoint() = default;
  // One round trip. Throws TransportError for retryable failures.
  virtual GenerationResponse complete(const GenerationRequest& req) = 0;
  virtual std::string name() const = 0;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

// Exponential backoff over TransportError; throws EndpointError after the
// last attempt.
GenerationResponse complete_with_retry(Endpoint& ep, const GenerationRequest& req,
                                       const RetryPolicy& policy = {});

// Returns the prompt's instruction line.
class EchoEndpoint : public Endpoint {
 public:
  GenerationResponse complete(const GenerationRequest& req) override;
  std::string name() const override { return "mock:echo"; }
};

// Scripted replies served in order; nullopt simulates a transport failure.
class CannedEndpoint : public Endpoint {
 public:
  explicit CannedEndpoint(std::vector<std::optional<std::string>> script);
  GenerationResponse complete(const GenerationRequest& req) override;
  std::string name() const override { return "mock:canned"; }
  std::size_t calls() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::optional<std::string>> script_;
  std::size_t next_ = 0;
};

// Answers from gold SQL keyed by question: each subtask receives the gold
// clause of its kind, with prior components referenced by placeholder.
class OracleEndpoint : public Endpoint {
 public:
  explicit OracleEndpoint(std::map<std::string, std::string> gold_by_question);
  GenerationResponse complete(const GenerationRequest& req) override;
  std::string name() const override { return "mock:oracle"; }

 private:
  std::map<std::string, std::string> gold_;
};

struct HttpEndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;  // sent as a bearer token when non-empty
  std::chrono::seconds timeout{60};
};

// Chat-completion client. Safe to share across threads.
class HttpEndpoint : public Endpoint {
 public:
  explicit HttpEndpoint(HttpEndpointConfig cfg);
  GenerationResponse complete(const GenerationRequest& req) override;
  std::string name() const override { return "http:" + cfg_.base_url; }

 private:
  HttpEndpointConfig cfg_;
  std::string origin_, path_;
};

// ---------------------------------------------------------------------------
// Components and the pipeline

// Drops markdown fences, SQL comment lines, surrounding whitespace and
// trailing semicolons.
std::string sanitize_response(std::string_view text);

// Expands placeholders from `prior` and checks the fragment grammar for
// `kind`; nullopt when valid.
std::optional<sql::Diagnostic> check_component(MetaOpKind kind, std::string_view text,
                                               const std::vector<SqlComponent>& prior);

struct Attempt {
  std::string prompt;
  std::string response;
  std::optional<sql::Diagnostic> diagnostic;
  double time_ms = 0.0;
};

struct GenerationSettings {
  std::string model = "gpt-4";
  double temperature = 0.0;
  int max_tokens = 512;
  RetryPolicy retry;
};

// One retry with the diagnostic appended; throws ComponentError carrying
// both diagnostics when the second reply is invalid too.
SqlComponent generate_component(Endpoint& ep, const PromptContext& ctx,
                                const GenerationSettings& settings = {},
                                std::vector<Attempt>* attempts = nullptr);

struct PipelineOptions {
  std::size_t k = 8;
  const LinkerModel* model = nullptr;
  sqlite::Database* db = nullptr;  // value probes
  const NodeMapperRules* rules = nullptr;
  const QueryGrammar* grammar = nullptr;
  GenerationSettings generation;
};

struct PipelineResult {
  std::string sql;
  nlohmann::json trace;
};

// Throws PipelineError naming the failing stage.
PipelineResult run_pipeline(std::string_view question, const SchemaGraph& sg, Endpoint& ep,
                            const PipelineOptions& options = {});

// Zeroes every field whose key starts with "time_" and every "ves" field.
nlohmann::json mask_timing(nlohmann::json doc);

}  // namespace sgusql
