#include "softner/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

namespace softner::corpus {

namespace {

bool is_ascii_alpha(unsigned char c) { return (c | 32) >= 'a' && (c | 32) <= 'z'; }
bool is_ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_ascii_upper(unsigned char c) { return c >= 'A' && c <= 'Z'; }
bool is_ascii_lower(unsigned char c) { return c >= 'a' && c <= 'z'; }
bool is_space_char(unsigned char c) { return std::isspace(c) != 0; }
// Bytes >= 0x80 (UTF-8 continuations and starts) are treated as word
// characters so non-ASCII words stay whole.
bool is_word_char(unsigned char c) { return is_ascii_alpha(c) || is_ascii_digit(c) || c >= 0x80; }

std::string to_lower_ascii(std::string s) {
  for (char& c : s)
    if (is_ascii_upper(static_cast<unsigned char>(c))) c = static_cast<char>(c + 32);
  return s;
}

std::string normalize_ws(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (is_space_char(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out += ' ';
      pending_space = false;
      out += static_cast<char>(c);
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> segment_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string line = nl == std::string::npos ? text.substr(start)
                                               : text.substr(start, nl - start);
    std::string norm = normalize_ws(line);
    if (!norm.empty()) out.push_back(std::move(norm));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

namespace {

// Splits a word run at camel-case boundaries. A boundary sits before an
// uppercase letter that follows a lowercase one, and before the last letter
// of an uppercase run when a lowercase letter follows it.
std::vector<std::pair<std::size_t, std::size_t>> camel_pieces(const std::string& s,
                                                              std::size_t b, std::size_t e) {
  std::vector<std::pair<std::size_t, std::size_t>> pieces;
  std::size_t start = b;
  for (std::size_t p = b + 1; p < e; ++p) {
    unsigned char prev = s[p - 1], cur = s[p];
    bool boundary = false;
    if (is_ascii_lower(prev) && is_ascii_upper(cur)) boundary = true;
    if (is_ascii_upper(prev) && is_ascii_upper(cur) && p + 1 < e &&
        is_ascii_lower(static_cast<unsigned char>(s[p + 1])))
      boundary = true;
    if (boundary) {
      pieces.emplace_back(start, p);
      start = p;
    }
  }
  pieces.emplace_back(start, e);
  return pieces;
}

TokenKind classify_run(const std::string& s, std::size_t b, std::size_t e) {
  bool all_alpha = true, all_digit = true;
  for (std::size_t i = b; i < e; ++i) {
    unsigned char c = s[i];
    bool alpha = is_ascii_alpha(c) || c >= 0x80;
    if (!alpha) all_alpha = false;
    if (!is_ascii_digit(c) && c != '.') all_digit = false;
  }
  if (all_alpha) return TokenKind::Word;
  if (all_digit) return TokenKind::Number;
  return TokenKind::Other;
}

bool url_starts_at(const std::string& s, std::size_t i, std::size_t& scheme_end) {
  // scheme "://"
  if (is_ascii_alpha(s[i])) {
    std::size_t k = i;
    while (k < s.size() &&
           (is_ascii_alpha(s[k]) || is_ascii_digit(s[k]) || s[k] == '+' || s[k] == '-' ||
            s[k] == '.'))
      ++k;
    if (k + 2 < s.size() && s[k] == ':' && s[k + 1] == '/' && s[k + 2] == '/') {
      scheme_end = k + 3;
      return true;
    }
  }
  // bare "www."
  if (i + 4 < s.size() && (s[i] | 32) == 'w' && (s[i + 1] | 32) == 'w' && (s[i + 2] | 32) == 'w' &&
      s[i + 3] == '.' && !is_space_char(static_cast<unsigned char>(s[i + 4]))) {
    scheme_end = i + 4;
    return true;
  }
  return false;
}

}  // namespace

std::vector<Token> tokenize(const std::string& s) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    unsigned char c = s[i];
    if (is_space_char(c)) {
      ++i;
      continue;
    }
    std::size_t scheme_end = 0;
    if (url_starts_at(s, i, scheme_end)) {
      std::size_t j = scheme_end;
      while (j < n && !is_space_char(static_cast<unsigned char>(s[j]))) ++j;
      out.push_back({s.substr(i, j - i), i, j, TokenKind::Url});
      i = j;
      continue;
    }
    if (is_ascii_digit(c)) {
      // Dotted digit runs ("127.0.0.1", "3.14") stay whole.
      std::size_t j = i;
      while (j < n && is_ascii_digit(static_cast<unsigned char>(s[j]))) ++j;
      bool dotted = false;
      while (j + 1 < n && s[j] == '.' && is_ascii_digit(static_cast<unsigned char>(s[j + 1]))) {
        dotted = true;
        ++j;
        while (j < n && is_ascii_digit(static_cast<unsigned char>(s[j]))) ++j;
      }
      if (!dotted && j < n && is_word_char(static_cast<unsigned char>(s[j]))) {
        // Mixed run like "2aa3abc0" or "1d": fall through to word handling.
      } else {
        out.push_back({s.substr(i, j - i), i, j, TokenKind::Number});
        i = j;
        continue;
      }
    }
    if (is_word_char(c)) {
      std::size_t j = i;
      while (j < n && is_word_char(static_cast<unsigned char>(s[j]))) ++j;
      for (auto [b, e] : camel_pieces(s, i, j))
        out.push_back({s.substr(b, e - b), b, e, classify_run(s, b, e)});
      i = j;
      continue;
    }
    out.push_back({s.substr(i, 1), i, i + 1, TokenKind::Punct});
    ++i;
  }
  return out;
}

std::vector<std::string> token_texts(const std::vector<Token>& toks) {
  std::vector<std::string> out;
  out.reserve(toks.size());
  for (const Token& t : toks) out.push_back(t.text);
  return out;
}

// ---------------------------------------------------------------------------
// HTML stripping
// ---------------------------------------------------------------------------

namespace {

const std::unordered_set<std::string>& block_tags() {
  static const std::unordered_set<std::string> tags = {
      "p",  "br", "div", "li",    "tr",    "table", "ul", "ol",    "h1",      "h2", "h3",
      "h4", "h5", "h6",  "pre",   "hr",    "thead", "tbody", "tfoot", "section", "article"};
  return tags;
}

struct TagInfo {
  std::string name;  // lower-cased
  bool closing = false;
  std::size_t end = 0;  // position just past '>'
};

bool parse_tag(const std::string& s, std::size_t i, TagInfo& tag) {
  // i points at '<'. Returns false when this '<' is literal text.
  std::size_t n = s.size();
  if (i + 1 >= n) return false;
  unsigned char c1 = s[i + 1];
  if (c1 == '!' || c1 == '?') {
    // comment / doctype / processing instruction
    if (s.compare(i, 4, "<!--") == 0) {
      std::size_t e = s.find("-->", i + 4);
      tag.end = e == std::string::npos ? n : e + 3;
    } else {
      std::size_t e = s.find('>', i + 1);
      tag.end = e == std::string::npos ? n : e + 1;
    }
    tag.name.clear();
    tag.closing = false;
    return true;
  }
  std::size_t j = i + 1;
  bool closing = false;
  if (c1 == '/') {
    closing = true;
    ++j;
  }
  if (j >= n || !is_ascii_alpha(static_cast<unsigned char>(s[j]))) return false;
  std::size_t name_start = j;
  while (j < n && (is_ascii_alpha(static_cast<unsigned char>(s[j])) ||
                   is_ascii_digit(static_cast<unsigned char>(s[j]))))
    ++j;
  tag.name = to_lower_ascii(s.substr(name_start, j - name_start));
  tag.closing = closing;
  std::size_t e = s.find('>', j);
  tag.end = e == std::string::npos ? n : e + 1;  // unclosed tag: swallow the rest
  return true;
}

// Decodes the entity at position i ('&'); returns decoded char (or 0 to keep
// the literal '&') and advances *next past the entity.
char decode_entity(const std::string& s, std::size_t i, std::size_t* next) {
  std::size_t semi = s.find(';', i + 1);
  if (semi == std::string::npos || semi - i > 9) return 0;
  std::string body = s.substr(i + 1, semi - i - 1);
  *next = semi + 1;
  if (body == "amp") return '&';
  if (body == "lt") return '<';
  if (body == "gt") return '>';
  if (body == "quot") return '"';
  if (body == "apos" || body == "#39") return '\'';
  if (body == "nbsp") return ' ';
  if (body.size() > 1 && body[0] == '#') {
    long code = 0;
    try {
      code = body[1] == 'x' || body[1] == 'X' ? std::stol(body.substr(2), nullptr, 16)
                                              : std::stol(body.substr(1));
    } catch (...) {
      return 0;
    }
    if (code >= 32 && code < 127) return static_cast<char>(code);
    return ' ';
  }
  return 0;
}

struct TableBuild {
  std::vector<std::vector<std::string>> rows;
  std::vector<bool> row_has_th;
  bool in_row = false;
  bool in_cell = false;

  void open_row() {
    close_row();
    rows.emplace_back();
    row_has_th.push_back(false);
    in_row = true;
  }
  void close_row() {
    in_cell = false;
    in_row = false;
  }
  void open_cell(bool th) {
    if (!in_row) open_row();
    rows.back().emplace_back();
    if (th) row_has_th.back() = true;
    in_cell = true;
  }
  void close_cell() { in_cell = false; }
  void text(char c) {
    if (in_cell && !rows.empty() && !rows.back().empty())
      rows.back().back() += c == '\n' ? ' ' : c;
  }
};

}  // namespace

CleanDoc strip_html(const std::string& html) {
  CleanDoc doc;
  std::vector<std::string> lines;
  std::string cur;
  auto flush_line = [&] {
    lines.push_back(cur);
    cur.clear();
  };
  auto emit_text = [&](char c) {
    if (c == '\n')
      flush_line();
    else
      cur += c;
  };

  // (table index, data row index, line index) fixed up after segmentation.
  std::vector<std::array<std::size_t, 3>> pending_rows;

  int table_depth = 0;
  TableBuild tb;

  auto finalize_table = [&] {
    std::vector<std::vector<std::string>> rows;
    std::vector<bool> has_th;
    for (std::size_t r = 0; r < tb.rows.size(); ++r) {
      std::vector<std::string> cells;
      for (const std::string& c : tb.rows[r]) cells.push_back(normalize_ws(c));
      bool any = std::any_of(cells.begin(), cells.end(),
                             [](const std::string& c) { return !c.empty(); });
      if (cells.empty() || !any) continue;
      rows.push_back(std::move(cells));
      has_th.push_back(tb.row_has_th[r]);
    }
    tb = TableBuild{};
    if (rows.empty()) return;
    std::size_t ncols = 0;
    for (const auto& r : rows) ncols = std::max(ncols, r.size());
    if (ncols == 0) return;
    if (ncols > 2) return;  // pruned: neither text nor structure survives

    std::size_t header_idx = 0;
    for (std::size_t r = 0; r < rows.size(); ++r)
      if (has_th[r]) {
        header_idx = r;
        break;
      }

    ExtractedTable table;
    table.headers = rows[header_idx];
    table.headers.resize(ncols);
    std::size_t table_idx = doc.tables.size();
    flush_line();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::string line;
      for (const std::string& c : rows[r]) {
        if (!line.empty()) line += ' ';
        line += c;
      }
      if (r != header_idx) {
        std::vector<std::string> padded = rows[r];
        padded.resize(ncols);
        pending_rows.push_back({table_idx, table.rows.size(), lines.size()});
        table.rows.push_back(std::move(padded));
      }
      lines.push_back(line);
    }
    table.row_sentences.assign(table.rows.size(), static_cast<std::size_t>(-1));
    doc.tables.push_back(std::move(table));
  };

  std::size_t i = 0;
  const std::size_t n = html.size();
  while (i < n) {
    char c = html[i];
    if (c == '<') {
      TagInfo tag;
      if (parse_tag(html, i, tag)) {
        i = tag.end;
        if (tag.name.empty()) continue;  // comment or doctype
        if (!tag.closing && (tag.name == "script" || tag.name == "style")) {
          // skip raw content up to the matching close tag
          std::string close = "</" + tag.name;
          std::size_t pos = i;
          std::size_t found = std::string::npos;
          while (pos < n) {
            found = html.find('<', pos);
            if (found == std::string::npos) break;
            if (found + close.size() <= n &&
                to_lower_ascii(html.substr(found, close.size())) == close)
              break;
            pos = found + 1;
            found = std::string::npos;
          }
          if (found == std::string::npos) {
            i = n;
          } else {
            std::size_t gt = html.find('>', found);
            i = gt == std::string::npos ? n : gt + 1;
          }
          continue;
        }
        if (tag.name == "table") {
          if (!tag.closing) {
            if (table_depth == 0) {
              flush_line();
              tb = TableBuild{};
            }
            ++table_depth;
          } else if (table_depth > 0) {
            --table_depth;
            if (table_depth == 0) finalize_table();
          }
          continue;
        }
        if (table_depth > 0) {
          if (table_depth == 1) {
            if (tag.name == "tr") {
              if (tag.closing)
                tb.close_row();
              else
                tb.open_row();
            } else if (tag.name == "th" || tag.name == "td") {
              if (tag.closing)
                tb.close_cell();
              else
                tb.open_cell(tag.name == "th");
            } else if (block_tags().count(tag.name)) {
              tb.text(' ');
            }
          }
          continue;
        }
        if (block_tags().count(tag.name)) flush_line();
        continue;
      }
      // literal '<'
    }
    std::size_t next = i + 1;
    char decoded = c;
    if (c == '&') {
      char d = decode_entity(html, i, &next);
      if (d != 0)
        decoded = d;
      else
        next = i + 1;
    }
    if (table_depth > 0)
      tb.text(decoded);
    else
      emit_text(decoded);
    i = next;
  }
  if (table_depth > 0)
    finalize_table();  // unclosed table: lenient auto-close
  flush_line();

  // Lines -> sentences, tracking which sentence each line became.
  std::vector<std::size_t> line_to_sentence(lines.size(), static_cast<std::size_t>(-1));
  for (std::size_t li = 0; li < lines.size(); ++li) {
    std::string norm = normalize_ws(lines[li]);
    if (norm.empty()) continue;
    line_to_sentence[li] = doc.sentences.size();
    doc.sentences.push_back(std::move(norm));
  }
  for (const auto& [table_idx, row_idx, line_idx] : pending_rows)
    doc.tables[table_idx].row_sentences[row_idx] = line_to_sentence[line_idx];
  return doc;
}

CleanDoc clean_incident(const Incident& inc) {
  CleanDoc doc = strip_html(inc.description_html);
  doc.incident_id = inc.id;
  return doc;
}

// ---------------------------------------------------------------------------
// JSONL corpus IO
// ---------------------------------------------------------------------------

Incident incident_from_json_line(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  Incident inc;
  inc.id = j.at("id").get<std::string>();
  inc.title = j.at("title").get<std::string>();
  inc.description_html = j.at("description").get<std::string>();
  inc.created_at = j.at("createdAt").get<std::string>();
  inc.owning_team = j.at("owningTeam").get<std::string>();
  inc.resolved = j.at("resolved").get<bool>();
  if (inc.id.empty()) throw Error("incident id must be non-empty");
  return inc;
}

std::string incident_to_json_line(const Incident& inc) {
  nlohmann::json j;
  j["id"] = inc.id;
  j["title"] = inc.title;
  j["description"] = inc.description_html;
  j["createdAt"] = inc.created_at;
  j["owningTeam"] = inc.owning_team;
  j["resolved"] = inc.resolved;
  return j.dump();
}

std::vector<Incident> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file: " + path);
  std::vector<Incident> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Incident inc;
    try {
      inc = incident_from_json_line(line);
    } catch (const std::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": malformed incident record: " +
                  e.what());
    }
    if (!seen.insert(inc.id).second)
      throw Error(path + ":" + std::to_string(line_no) + ": duplicate incident id \"" + inc.id +
                  "\"");
    out.push_back(std::move(inc));
  }
  return out;
}

}  // namespace softner::corpus
