#include "sgusql/text.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

#include "sgusql/error.hpp"
#include "sgusql/schema.hpp"

namespace sgusql {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || u >= 0x80;
}

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

bool is_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

// Splits one whitespace-free chunk into token texts whose concatenation is
// exactly the chunk.
std::vector<std::string_view> split_chunk(std::string_view chunk) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  const std::size_t n = chunk.size();
  while (i < n) {
    if (!is_word_char(chunk[i])) {
      out.push_back(chunk.substr(i, 1));
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n) {
      if (is_word_char(chunk[j])) {
        ++j;
      } else if ((chunk[j] == '-' || chunk[j] == '.') && j + 1 < n &&
                 j > i && is_word_char(chunk[j + 1])) {
        // Hyphenated words and decimal numbers stay whole.
        if (chunk[j] == '.' && !(is_digit(chunk[j - 1]) && is_digit(chunk[j + 1])))
          break;
        ++j;
      } else {
        break;
      }
    }
    const auto rest = chunk.substr(j);
    auto boundary = [&](std::size_t k) {
      return k >= n || !is_word_char(chunk[k]);
    };
    const bool apostrophe = !rest.empty() && (rest[0] == '\'');
    if (apostrophe && j - i >= 2 && (chunk[j - 1] == 'n' || chunk[j - 1] == 'N') &&
        rest.size() >= 2 && (rest[1] == 't' || rest[1] == 'T') && boundary(j + 2)) {
      out.push_back(chunk.substr(i, j - 1 - i));
      out.push_back(chunk.substr(j - 1, 3));
      i = j + 2;
      continue;
    }
    out.push_back(chunk.substr(i, j - i));
    if (apostrophe && rest.size() >= 2 && (rest[1] == 's' || rest[1] == 'S') &&
        boundary(j + 2)) {
      out.push_back(chunk.substr(j, 2));
      i = j + 2;
      continue;
    }
    if (apostrophe && (chunk[j - 1] == 's' || chunk[j - 1] == 'S') &&
        boundary(j + 1)) {
      out.push_back(chunk.substr(j, 1));
      i = j + 1;
      continue;
    }
    i = j;
  }
  return out;
}

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",     "an",    "the",   "of",    "in",    "on",     "at",    "to",
      "for",   "from",  "with",  "by",    "and",   "or",     "but",   "not",
      "no",    "is",    "are",   "was",   "were",  "be",     "been",  "do",
      "does",  "did",   "has",   "have",  "had",   "what",   "which", "who",
      "whom",  "whose", "where", "when",  "how",   "that",   "this",  "these",
      "those", "it",    "its",   "they",  "them",  "their",  "there", "me",
      "show",  "list",  "find",  "give",  "return", "many",  "each",  "all",
      "any",   "than",  "as",    "?",     "n't",   "'s",     "'",     "please",
      "tell",  "display", "get", "also",  "only",  "both",   "every", "per",
      "into",  "about", "between", "if",  "then",  "can",    "will",  "would",
      "should", "us",   "we",    "you",   "i",     "he",     "she",   "his",
      "her",   "him",   "our",   "your",  "my"};
  return words;
}

using ClassTable = std::unordered_map<std::string, std::vector<std::string>>;

const ClassTable& lexicon() {
  static const ClassTable table = [] {
    ClassTable t;
    auto add = [&](std::string cls, std::initializer_list<const char*> words) {
      for (const char* w : words) t[w].push_back(cls);
    };
    add("cmd", {"show", "list", "find", "give", "return", "display", "get",
                "tell", "print", "retrieve", "provide", "output", "report",
                "identify"});
    add("wh", {"what", "which", "who", "whom", "whose", "when", "where", "how"});
    add("count", {"count", "number", "many"});
    add("agg", {"sum", "total", "average", "avg", "mean", "maximum", "minimum",
                "max", "min"});
    add("sup", {"highest", "most", "largest", "biggest", "greatest", "lowest",
                "least", "fewest", "smallest", "oldest", "youngest", "newest",
                "latest", "earliest", "longest", "shortest", "best", "worst",
                "top", "busiest", "cheapest", "heaviest", "lightest",
                "tallest", "shortest"});
    add("cmp", {"more", "less", "greater", "fewer", "larger", "smaller",
                "higher", "lower", "bigger", "older", "younger", "longer",
                "shorter", "above", "below", "over", "under", "exceed", "exceeds",
                "exceeding", "exceeded",
                "after", "before", "heavier", "lighter", "taller"});
    add("than", {"than"});
    add("neg", {"not", "no", "never", "without", "n't", "none"});
    add("aux", {"is", "are", "was", "were", "be", "been", "do", "does", "did",
                "has", "have", "had", "can", "will"});
    add("det", {"the", "a", "an", "all", "any", "some"});
    add("pron", {"it", "they", "them", "their", "its", "these", "those", "he",
                 "she", "him", "his", "her", "theirs", "me", "us"});
    add("rel", {"that", "who", "which", "whose", "where", "whom"});
    add("prep", {"of", "from", "in", "with", "by", "for", "at", "on", "to",
                 "into", "between", "about", "as", "among", "within",
                 "during", "across", "through", "per"});
    add("per", {"per", "each", "every"});
    add("conj", {"and", "or", "but", "both", "either"});
    add("order", {"order", "ordered", "sort", "sorted", "ascending",
                  "descending", "alphabetical", "alphabetically", "rank",
                  "ranked", "arrange", "arranged", "decreasing", "increasing"});
    add("verb", {"live", "lives", "speak", "speaks", "sing", "sings", "play",
                 "plays", "own", "owns", "work", "works", "hold", "holds",
                 "host", "hosts", "like", "likes", "named", "called",
                 "located", "released", "born", "belong", "belongs", "contain",
                 "contains", "include", "includes", "participate", "perform",
                 "performed", "attend", "attended", "enrolled", "took", "take",
                 "takes", "made", "make", "makes", "wrote", "write", "writes",
                 "happen", "happened", "use", "uses", "used", "go", "goes",
                 "come", "comes", "departing", "arriving", "arrive", "depart",
                 "served", "serve", "serves", "visited", "visit", "liked"});
    return t;
  }();
  return table;
}

}  // namespace

std::vector<Token> tokenize(std::string_view question) {
  const bool blank = std::all_of(question.begin(), question.end(), is_space);
  if (blank) throw ValidationError("question is empty");

  std::vector<Token> tokens;
  std::size_t i = 0;
  const std::size_t n = question.size();
  std::string leading;
  while (i < n && is_space(question[i])) leading += question[i++];

  while (i < n) {
    std::size_t j = i;
    while (j < n && !is_space(question[j])) ++j;
    std::size_t offset = i;
    for (auto piece : split_chunk(question.substr(i, j - i))) {
      Token t;
      t.text = std::string(piece);
      t.lemma = lemmatize(piece);
      t.position = tokens.size();
      t.offset = offset;
      offset += piece.size();
      tokens.push_back(std::move(t));
    }
    std::size_t k = j;
    while (k < n && is_space(question[k])) ++k;
    tokens.back().space_after = std::string(question.substr(j, k - j));
    i = k;
  }
  tokens.front().space_before = std::move(leading);
  return tokens;
}

std::string detokenize(std::span<const Token> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    out += t.space_before;
    out += t.text;
    out += t.space_after;
  }
  return out;
}

std::string lemmatize(std::string_view word) {
  std::string w = to_lower(word);
  if (w == "n't") return "not";
  if (w.size() <= 3) return w;
  if (std::any_of(w.begin(), w.end(), is_digit)) return w;
  if (!std::all_of(w.begin(), w.end(), [](char c) {
        return std::isalpha(static_cast<unsigned char>(c)) || c == '-';
      }))
    return w;

  auto has_vowel = [](std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](char c) { return is_vowel(c) || c == 'y'; });
  };
  auto undouble = [](std::string s) {
    const std::size_t n = s.size();
    if (n >= 3 && s[n - 1] == s[n - 2] && !is_vowel(s[n - 1]) &&
        s[n - 1] != 'l' && s[n - 1] != 's' && s[n - 1] != 'z')
      s.pop_back();
    return s;
  };

  if (ends_with(w, "ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(w, "sses")) return w.substr(0, w.size() - 2);
  if (ends_with(w, "ches") || ends_with(w, "shes") || ends_with(w, "xes") ||
      ends_with(w, "zes"))
    return w.substr(0, w.size() - 2);
  if (ends_with(w, "ss") || ends_with(w, "us") || ends_with(w, "is")) return w;
  if (ends_with(w, "s")) return w.substr(0, w.size() - 1);

  if (ends_with(w, "ied") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(w, "ing") && w.size() >= 6) {
    auto stem = w.substr(0, w.size() - 3);
    if (has_vowel(stem)) return undouble(stem);
  }
  if (ends_with(w, "ed") && !ends_with(w, "eed") && w.size() >= 5) {
    auto stem = w.substr(0, w.size() - 2);
    if (has_vowel(stem)) {
      const std::size_t n = stem.size();
      if (n >= 3 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]))
        return undouble(stem);
      // named -> name, based -> base, released -> release
      if ((n <= 4 && n >= 3 && !is_vowel(stem[n - 1]) && is_vowel(stem[n - 2]) &&
           !is_vowel(stem[n - 3])) ||
          (n >= 2 && stem[n - 1] == 's' && is_vowel(stem[n - 2])) ||
          stem[n - 1] == 'v' || stem[n - 1] == 'z' || stem[n - 1] == 'c')
        return stem + "e";
      return stem;
    }
  }
  return w;
}

std::vector<std::string> token_classes(std::span<const Token> tokens,
                                       std::size_t index) {
  const Token& tok = tokens[index];
  const std::string lower = to_lower(tok.text);
  std::vector<std::string> classes;
  auto add = [&](const std::string& c) {
    if (std::find(classes.begin(), classes.end(), c) == classes.end())
      classes.push_back(c);
  };

  if (lower == "'s") {
    add("poss");
    return classes;
  }
  if (lower == "'" && index > 0) {
    // A lone apostrophe glued to a preceding plural is possessive unless it
    // closes an open quote.
    std::size_t quotes = 0;
    for (std::size_t k = 0; k < index; ++k) quotes += tokens[k].text == "'";
    const auto& prev = tokens[index - 1];
    const bool glued = prev.space_after.empty() &&
                       prev.offset + prev.text.size() == tok.offset;
    if (quotes % 2 == 0 && glued && !prev.text.empty() &&
        (prev.text.back() == 's' || prev.text.back() == 'S')) {
      add("poss");
      return classes;
    }
  }
  if (!tok.text.empty() && !is_word_char(tok.text[0])) {
    add("punct");
    return classes;
  }
  if (std::all_of(tok.text.begin(), tok.text.end(),
                  [](char c) { return is_digit(c) || c == '.' || c == '-'; }) &&
      std::any_of(tok.text.begin(), tok.text.end(), is_digit)) {
    add("num");
    return classes;
  }

  const auto& lex = lexicon();
  // Lowercase letter strings with no vowel are not words of any class.
  const bool unpronounceable =
      lower.size() >= 2 && !lex.count(lower) && lower == tok.text &&
      std::all_of(lower.begin(), lower.end(),
                  [](char c) { return c >= 'a' && c <= 'z'; }) &&
      std::none_of(lower.begin(), lower.end(),
                   [](char c) { return is_vowel(c) || c == 'y'; });
  if (unpronounceable) {
    add("unk");
    return classes;
  }
  bool function_word = false;
  for (const auto* key : {&lower, &tok.lemma}) {
    if (auto it = lex.find(*key); it != lex.end()) {
      for (const auto& c : it->second) {
        add(c);
        if (c != "verb" && c != "order" && c != "count" && c != "agg" &&
            c != "sup" && c != "cmp")
          function_word = true;
      }
    }
  }
  // Words between quotes, and capitalised words inside a sentence, are
  // literal values.
  const bool quoted = index > 0 && index + 1 < tokens.size() &&
                      (tokens[index - 1].text == "'" || tokens[index - 1].text == "\"") &&
                      (tokens[index + 1].text == "'" || tokens[index + 1].text == "\"");
  bool sentence_initial = index == 0;
  if (index > 0) {
    const auto& prev = tokens[index - 1].text;
    sentence_initial = prev == "." || prev == "?" || prev == "!" || prev == ";";
  }
  const bool capitalised =
      std::isupper(static_cast<unsigned char>(tok.text[0])) != 0;
  if (quoted || (capitalised && !sentence_initial && !function_word)) add("val");
  if (!function_word) {
    // Open-class words: nouns by default. Number words like "number" keep
    // their noun reading too.
    const bool closed_only =
        std::all_of(classes.begin(), classes.end(), [](const std::string& c) {
          return c == "agg" || c == "sup" || c == "cmp" || c == "order" ||
                 c == "count";
        }) && !classes.empty();
    if (!closed_only || tok.lemma == "number" || tok.lemma == "total" ||
        tok.lemma == "order" || tok.lemma == "rank")
      add("noun");
    if (lower.size() > 4 && (ends_with(lower, "ing") || ends_with(lower, "ed")) &&
        std::find(classes.begin(), classes.end(), "verb") == classes.end() &&
        std::find(classes.begin(), classes.end(), "order") == classes.end())
      add("verb");
  }
  if (classes.empty()) add("noun");
  return classes;
}

bool is_stopword(std::string_view lemma) {
  return stopwords().count(std::string(lemma)) > 0;
}

bool is_pronoun(std::string_view lemma) {
  static const std::unordered_set<std::string> p = {
      "it", "they", "them", "their", "its", "these", "those", "theirs"};
  return p.count(std::string(lemma)) > 0;
}

std::vector<std::string> label_lemmas(std::string_view label) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(lemmatize(cur));
    cur.clear();
  };
  for (char c : label) {
    if (c == '_' || c == ' ' || c == '-') {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

}  // namespace sgusql
