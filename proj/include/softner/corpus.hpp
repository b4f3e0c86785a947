#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "softner/common.hpp"

namespace softner::corpus {

struct Incident {
  std::string id;
  std::string title;
  std::string description_html;
  std::string created_at;  // ISO-8601 UTC, kept verbatim
  std::string owning_team;
  bool resolved = false;
};

enum class TokenKind { Word, Url, Number, Punct, Other };

struct Token {
  std::string text;
  std::size_t char_start = 0;  // half-open offsets into the source sentence
  std::size_t char_end = 0;
  TokenKind kind = TokenKind::Word;
};

/// A table kept from the HTML (at most 2 columns). Every row is padded to
/// headers.size() cells.
struct ExtractedTable {
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> rows;
  /// Sentence index (into CleanDoc::sentences) of each data row's
  /// linearized text; SIZE_MAX for rows whose text was empty.
  std::vector<std::size_t> row_sentences;
};

struct CleanDoc {
  std::string incident_id;
  std::vector<std::string> sentences;
  std::vector<ExtractedTable> tables;
};

/// Loads a JSONL corpus: one incident per line with fields exactly
/// id, title, description, createdAt, owningTeam, resolved.
/// Throws Error on IO failure, malformed lines (with line number) and
/// duplicate ids.
std::vector<Incident> load_corpus(const std::string& path);

Incident incident_from_json_line(const std::string& line);
std::string incident_to_json_line(const Incident& inc);

/// Strips HTML. Tables with more than 2 columns vanish entirely; tables
/// with up to 2 columns are captured structurally and their rows
/// linearized into the sentence stream. Block tags (p, br, div, li, tr,
/// table, ul, ol, headings) become line breaks; all other markup is
/// removed with its text kept. Malformed HTML is parsed leniently.
CleanDoc strip_html(const std::string& description_html);

CleanDoc clean_incident(const Incident& inc);

/// Newline-only segmentation; trims, collapses internal whitespace runs,
/// drops empty results.
std::vector<std::string> segment_sentences(const std::string& text);

/// URL- and camel-case-aware tokenizer. URLs stay single tokens; camel
/// words split at lower-to-upper boundaries, with uppercase runs kept
/// whole except their last letter before a lowercase letter
/// ("SourceIPAddress" -> Source, IP, Address). Dotted digit runs such as
/// "127.0.0.1" stay single tokens; all other punctuation tokens are
/// single characters.
std::vector<Token> tokenize(const std::string& sentence);

std::vector<std::string> token_texts(const std::vector<Token>& toks);

}  // namespace softner::corpus
