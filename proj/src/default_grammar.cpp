#include "sgusql/query_graph.hpp"

namespace sgusql {

// Question patterns for SQL-oriented requests. Terminals are the token
// classes assigned by token_classes().
std::string_view QueryGrammar::default_grammar_text() {
  return R"(# start symbol is the LHS of the first production
Query -> Request
Query -> Request End
Query -> Request End Query
Query -> Request conj Query
End -> punct
End -> punct End

Request -> Command Target
Request -> Command pron Target
Request -> Question
Request -> Target

Command -> cmd

Question -> wh aux Target
Question -> wh aux Target VP
Question -> wh Target VP
Question -> wh Target aux VP
Question -> wh VP
Question -> aux Target VP

Target -> NP
Target -> NP conj Target

# noun phrases
NP -> Entity
NP -> det NP
NP -> pron NP
NP -> AggregateOp
NP -> Superlative
NP -> Value
NP -> NP PP
NP -> NP Condition
NP -> NP RelClause
NP -> NP Negation
NP -> NP Grouping
NP -> NP Ordering
NP -> NP poss NP
NP -> NP conj NP
NP -> NP VP

Entity -> noun
Entity -> noun Entity
Entity -> verb Entity

Value -> val
Value -> num
Value -> punct Value punct

PP -> prep NP

# filters
Condition -> prep Value
Condition -> Comparison
Condition -> prep NP Comparison
Condition -> verb Value
Condition -> aux Value
Condition -> prep verb Value
Comparison -> cmp than Value
Comparison -> cmp Value
Comparison -> aux cmp than Value
Comparison -> cmp than NP
Comparison -> cmp prep Value
Comparison -> cmp NP

RelClause -> rel VP
RelClause -> rel NP VP
RelClause -> rel Condition
RelClause -> rel aux Comparison
RelClause -> rel aux NP
RelClause -> rel NP Comparison

VP -> verb
VP -> verb NP
VP -> verb PP
VP -> verb NP PP
VP -> verb Condition
VP -> aux NP
VP -> aux VP
VP -> aux Condition
VP -> aux PP
VP -> Negation
VP -> VP PP
VP -> VP Grouping
VP -> VP Ordering

Negation -> aux neg VP
Negation -> aux neg NP
Negation -> neg VP
Negation -> neg NP

# aggregation
AggregateOp -> count NP
AggregateOp -> count prep NP
AggregateOp -> det count prep NP
AggregateOp -> wh count NP
AggregateOp -> wh count NP VP
AggregateOp -> wh count NP aux VP
AggregateOp -> agg NP
AggregateOp -> agg prep NP
AggregateOp -> det agg NP
AggregateOp -> det agg prep NP

Superlative -> sup
Superlative -> det sup
Superlative -> sup NP
Superlative -> det sup NP
Superlative -> sup AggregateOp
Superlative -> det sup AggregateOp

Grouping -> per NP
Grouping -> prep per NP

Ordering -> order prep NP
Ordering -> order prep NP order
Ordering -> order prep NP prep order order
Ordering -> aux order prep NP
Ordering -> prep order order
Ordering -> prep order order prep NP
Ordering -> order
)";
}

}  // namespace sgusql
