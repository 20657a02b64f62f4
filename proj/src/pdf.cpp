#include "medrag/pdf.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <variant>

#include <zlib.h>

#include "medrag/error.hpp"
#include "medrag/utf8.hpp"

namespace fs = std::filesystem;

namespace medrag {

namespace {

[[noreturn]] void fail(const std::string& message) {
  throw Error(ErrorCode::ExtractionFailed, "pdf: " + message, Stage::ingest);
}

// ---------------------------------------------------------------------------
// Object model

struct Name {
  std::string value;
};
struct Ref {
  int num = 0;
  int gen = 0;
};
struct Keyword {
  std::string value;
};
struct Value;
using Array = std::vector<Value>;
using Dict = std::map<std::string, Value, std::less<>>;

struct Value {
  std::variant<std::monostate, bool, double, Name, std::string, Ref, Keyword,
               std::shared_ptr<Array>, std::shared_ptr<Dict>>
      v;

  [[nodiscard]] const double* number() const { return std::get_if<double>(&v); }
  [[nodiscard]] const Name* name() const { return std::get_if<Name>(&v); }
  [[nodiscard]] const std::string* string() const { return std::get_if<std::string>(&v); }
  [[nodiscard]] const Ref* ref() const { return std::get_if<Ref>(&v); }
  [[nodiscard]] const Keyword* keyword() const { return std::get_if<Keyword>(&v); }
  [[nodiscard]] const Array* array() const {
    auto* p = std::get_if<std::shared_ptr<Array>>(&v);
    return p ? p->get() : nullptr;
  }
  [[nodiscard]] const Dict* dict() const {
    auto* p = std::get_if<std::shared_ptr<Dict>>(&v);
    return p ? p->get() : nullptr;
  }
};

bool is_white(char c) {
  return c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '\f' || c == '\0';
}
bool is_delim(char c) {
  return c == '(' || c == ')' || c == '<' || c == '>' || c == '[' || c == ']' || c == '{' ||
         c == '}' || c == '/' || c == '%';
}

// Tokenizer + recursive parser over a byte range. Used for both object
// bodies and content streams (where bare keywords are operators).
class Lexer {
 public:
  explicit Lexer(std::string_view data, std::size_t pos = 0) : data_(data), pos_(pos) {}

  [[nodiscard]] std::size_t pos() const { return pos_; }
  [[nodiscard]] bool at_end() {
    skip_space();
    return pos_ >= data_.size();
  }

  void skip_space() {
    while (pos_ < data_.size()) {
      if (is_white(data_[pos_])) {
        ++pos_;
      } else if (data_[pos_] == '%') {
        while (pos_ < data_.size() && data_[pos_] != '\n' && data_[pos_] != '\r') ++pos_;
      } else {
        break;
      }
    }
  }

  // Returns nullopt at end of input. Array/dict closers come back as Keyword.
  std::optional<Value> next() {
    skip_space();
    if (pos_ >= data_.size()) return std::nullopt;
    const char c = data_[pos_];
    if (c == '/') return Value{Name{read_regular(++pos_)}};
    if (c == '(') return Value{read_literal()};
    if (c == '<') {
      if (peek(1) == '<') {
        pos_ += 2;
        return read_dict();
      }
      return Value{read_hex()};
    }
    if (c == '[') {
      ++pos_;
      return read_array();
    }
    if (c == ']' || c == '>' || c == ')' || c == '{' || c == '}') {
      if (c == '>' && peek(1) == '>') {
        pos_ += 2;
        return Value{Keyword{">>"}};
      }
      ++pos_;
      return Value{Keyword{std::string(1, c)}};
    }
    std::string word = read_regular(pos_);
    if (word.empty()) {
      ++pos_;
      return Value{Keyword{std::string(1, c)}};
    }
    if (word == "true") return Value{true};
    if (word == "false") return Value{false};
    if (word == "null") return Value{};
    if (looks_numeric(word)) {
      const double number = std::strtod(word.c_str(), nullptr);
      // "N G R" is an indirect reference.
      const auto save = pos_;
      if (is_integer(word)) {
        skip_space();
        std::string gen = read_regular(pos_);
        if (is_integer(gen)) {
          skip_space();
          if (peek(0) == 'R' && (pos_ + 1 >= data_.size() || is_white(peek(1)) ||
                                 is_delim(peek(1)))) {
            ++pos_;
            return Value{Ref{static_cast<int>(number), std::stoi(gen)}};
          }
        }
        pos_ = save;
      }
      return Value{number};
    }
    return Value{Keyword{std::move(word)}};
  }

  // Raw bytes up to (not including) `marker`; used to skip inline images.
  void skip_past(std::string_view marker) {
    const auto hit = data_.find(marker, pos_);
    pos_ = hit == std::string_view::npos ? data_.size() : hit + marker.size();
  }

 private:
  [[nodiscard]] char peek(std::size_t ahead) const {
    return pos_ + ahead < data_.size() ? data_[pos_ + ahead] : '\0';
  }

  static bool looks_numeric(const std::string& w) {
    bool digit = false;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const char c = w[i];
      if (std::isdigit(static_cast<unsigned char>(c))) {
        digit = true;
      } else if (!(c == '.' || ((c == '-' || c == '+') && i == 0))) {
        return false;
      }
    }
    return digit;
  }
  static bool is_integer(const std::string& w) {
    return !w.empty() &&
           std::all_of(w.begin(), w.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
  }

  std::string read_regular(std::size_t& pos) {
    const auto start = pos;
    while (pos < data_.size() && !is_white(data_[pos]) && !is_delim(data_[pos])) ++pos;
    std::string out(data_.substr(start, pos - start));
    // #xx escapes in names
    std::string decoded;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i] == '#' && i + 2 < out.size() &&
          std::isxdigit(static_cast<unsigned char>(out[i + 1])) &&
          std::isxdigit(static_cast<unsigned char>(out[i + 2]))) {
        decoded.push_back(static_cast<char>(std::stoi(out.substr(i + 1, 2), nullptr, 16)));
        i += 2;
      } else {
        decoded.push_back(out[i]);
      }
    }
    return decoded;
  }

  std::string read_literal() {
    ++pos_;
    std::string out;
    int depth = 1;
    while (pos_ < data_.size()) {
      char c = data_[pos_++];
      if (c == '\\') {
        if (pos_ >= data_.size()) break;
        c = data_[pos_++];
        switch (c) {
          case 'n': out.push_back('\n'); break;
          case 'r': out.push_back('\r'); break;
          case 't': out.push_back('\t'); break;
          case 'b': out.push_back('\b'); break;
          case 'f': out.push_back('\f'); break;
          case '\r':
            if (peek(0) == '\n') ++pos_;
            break;
          case '\n': break;
          default:
            if (c >= '0' && c <= '7') {
              int v = c - '0';
              for (int k = 0; k < 2 && peek(0) >= '0' && peek(0) <= '7'; ++k) {
                v = v * 8 + (data_[pos_++] - '0');
              }
              out.push_back(static_cast<char>(v & 0xFF));
            } else {
              out.push_back(c);
            }
        }
        continue;
      }
      if (c == '(') ++depth;
      if (c == ')' && --depth == 0) break;
      out.push_back(c);
    }
    return out;
  }

  std::string read_hex() {
    ++pos_;
    std::string digits;
    while (pos_ < data_.size() && data_[pos_] != '>') {
      if (std::isxdigit(static_cast<unsigned char>(data_[pos_]))) digits.push_back(data_[pos_]);
      ++pos_;
    }
    ++pos_;
    if (digits.size() % 2) digits.push_back('0');
    std::string out;
    for (std::size_t i = 0; i < digits.size(); i += 2) {
      out.push_back(static_cast<char>(std::stoi(digits.substr(i, 2), nullptr, 16)));
    }
    return out;
  }

  Value read_array() {
    auto arr = std::make_shared<Array>();
    while (auto v = next()) {
      if (const auto* k = v->keyword(); k && k->value == "]") break;
      arr->push_back(std::move(*v));
    }
    return Value{arr};
  }

  Value read_dict() {
    auto dict = std::make_shared<Dict>();
    while (auto key = next()) {
      if (const auto* k = key->keyword(); k && k->value == ">>") break;
      const auto* name = key->name();
      auto value = next();
      if (!value) break;
      if (name) (*dict)[name->value] = std::move(*value);
    }
    return Value{dict};
  }

  std::string_view data_;
  std::size_t pos_;
};

// ---------------------------------------------------------------------------
// Document structure

std::string inflate(std::string_view data) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) fail("zlib init failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  std::string out;
  std::array<char, 16384> buf{};
  int rc = Z_OK;
  while (rc == Z_OK) {
    zs.next_out = reinterpret_cast<Bytef*>(buf.data());
    zs.avail_out = buf.size();
    rc = inflate(&zs, Z_NO_FLUSH);
    out.append(buf.data(), buf.size() - zs.avail_out);
    if (rc == Z_BUF_ERROR && zs.avail_in == 0) break;  // truncated but usable
  }
  inflateEnd(&zs);
  if (rc != Z_STREAM_END && rc != Z_BUF_ERROR && rc != Z_OK) fail("corrupt Flate stream");
  return out;
}

std::string ascii85_decode(std::string_view data) {
  std::string out;
  std::uint32_t group = 0;
  int n = 0;
  const auto flush = [&](int count) {
    for (int i = 0; i < count - 1; ++i) out.push_back(static_cast<char>((group >> (24 - 8 * i)) & 0xFF));
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    const char c = data[i];
    if (c == '~') break;
    if (is_white(c)) continue;
    if (c == 'z' && n == 0) {
      out.append(4, '\0');
      continue;
    }
    if (c < '!' || c > 'u') fail("bad ASCII85 character");
    group = group * 85 + static_cast<std::uint32_t>(c - '!');
    if (++n == 5) {
      flush(5);
      group = 0;
      n = 0;
    }
  }
  if (n == 1) fail("truncated ASCII85 group");
  if (n > 0) {
    for (int i = n; i < 5; ++i) group = group * 85 + 84;
    flush(n);
  }
  return out;
}

std::string hex_decode(std::string_view data) {
  std::string out;
  int hi = -1;
  for (char c : data) {
    if (c == '>') break;
    if (!std::isxdigit(static_cast<unsigned char>(c))) continue;
    const int v = std::isdigit(static_cast<unsigned char>(c)) ? c - '0' : (std::tolower(c) - 'a' + 10);
    if (hi < 0) {
      hi = v;
    } else {
      out.push_back(static_cast<char>(hi * 16 + v));
      hi = -1;
    }
  }
  if (hi >= 0) out.push_back(static_cast<char>(hi * 16));
  return out;
}

struct Object {
  Value value;
  std::optional<std::string> stream;  // raw (still encoded)
};

class PdfFile {
 public:
  explicit PdfFile(std::string_view bytes) : bytes_(bytes) {
    if (!bytes.starts_with("%PDF-")) fail("missing %PDF- header");
    scan_objects();
    expand_object_streams();
  }

  const Object* object(const Ref& ref) const {
    auto it = objects_.find(ref.num);
    return it == objects_.end() ? nullptr : &it->second;
  }

  const Value& resolve(const Value& v, int depth = 0) const {
    if (const auto* r = v.ref(); r && depth < 32) {
      if (const auto* obj = object(*r)) return resolve(obj->value, depth + 1);
      return null_;
    }
    return v;
  }

  const Dict* dict(const Value& v) const { return resolve(v).dict(); }

  std::optional<std::string> decoded_stream(const Object& obj) const {
    if (!obj.stream) return std::nullopt;
    const Dict* d = obj.value.dict();
    std::vector<std::string> filters;
    if (d) {
      if (auto it = d->find("Filter"); it != d->end()) {
        const Value& f = resolve(it->second);
        if (const auto* n = f.name()) filters.push_back(n->value);
        if (const auto* a = f.array()) {
          for (const auto& e : *a) {
            if (const auto* n = resolve(e).name()) filters.push_back(n->value);
          }
        }
      }
    }
    std::string data = *obj.stream;
    for (const auto& f : filters) {
      if (f == "FlateDecode" || f == "Fl") {
        data = inflate(data);
      } else if (f == "ASCII85Decode" || f == "A85") {
        data = ascii85_decode(data);
      } else if (f == "ASCIIHexDecode" || f == "AHx") {
        data = hex_decode(data);
      } else {
        return std::nullopt;  // unsupported filter (images, LZW, ...)
      }
    }
    return data;
  }

  const Dict* catalog() const {
    if (trailer_root_) {
      if (const Dict* d = dict(Value{*trailer_root_})) return d;
    }
    for (const auto& [num, obj] : objects_) {
      if (const Dict* d = obj.value.dict(); d && type_of(*d) == "Catalog") return d;
    }
    return nullptr;
  }

  std::string type_of(const Dict& d) const {
    auto it = d.find("Type");
    if (it == d.end()) return {};
    const auto* n = resolve(it->second).name();
    return n ? n->value : std::string{};
  }

  std::vector<const Dict*> pages() const {
    std::vector<const Dict*> out;
    const Dict* cat = catalog();
    if (!cat) return out;
    auto it = cat->find("Pages");
    if (it == cat->end()) return out;
    std::set<const Dict*> seen;
    collect_pages(dict(it->second), out, seen);
    return out;
  }

 private:
  void collect_pages(const Dict* node, std::vector<const Dict*>& out,
                     std::set<const Dict*>& seen) const {
    if (!node || !seen.insert(node).second) return;
    auto kids = node->find("Kids");
    if (kids == node->end()) {
      out.push_back(node);
      return;
    }
    if (const Array* arr = resolve(kids->second).array()) {
      for (const auto& kid : *arr) collect_pages(dict(kid), out, seen);
    }
  }

  void scan_objects() {
    std::size_t pos = 0;
    while ((pos = bytes_.find("obj", pos)) != std::string_view::npos) {
      const std::size_t obj_kw = pos;
      pos += 3;
      if (pos < bytes_.size() && !is_white(bytes_[pos]) && !is_delim(bytes_[pos])) continue;
      // Walk back over "N G ".
      std::size_t p = obj_kw;
      auto back_int = [&](std::size_t& q) -> std::optional<int> {
        while (q > 0 && is_white(bytes_[q - 1])) --q;
        const std::size_t end = q;
        while (q > 0 && std::isdigit(static_cast<unsigned char>(bytes_[q - 1]))) --q;
        if (q == end || end - q > 10) return std::nullopt;
        return std::stoi(std::string(bytes_.substr(q, end - q)));
      };
      auto gen = back_int(p);
      if (!gen) continue;
      auto num = back_int(p);
      if (!num) continue;

      Lexer lex(bytes_, pos);
      auto value = lex.next();
      if (!value) break;
      Object obj{std::move(*value), std::nullopt};
      lex.skip_space();
      std::size_t after = lex.pos();
      if (bytes_.substr(after, 6) == "stream") {
        after += 6;
        if (after < bytes_.size() && bytes_[after] == '\r') ++after;
        if (after < bytes_.size() && bytes_[after] == '\n') ++after;
        std::optional<std::size_t> length;
        if (const Dict* d = obj.value.dict()) {
          if (auto it = d->find("Length"); it != d->end()) {
            if (const auto* n = it->second.number()) length = static_cast<std::size_t>(*n);
          }
        }
        std::size_t end;
        if (length && after + *length <= bytes_.size() &&
            bytes_.substr(after + *length).find("endstream") < 4) {
          end = after + *length;
        } else {
          end = bytes_.find("endstream", after);
          if (end == std::string_view::npos) fail("unterminated stream");
          while (end > after && (bytes_[end - 1] == '\n' || bytes_[end - 1] == '\r')) --end;
        }
        obj.stream = std::string(bytes_.substr(after, end - after));
        pos = end;
      } else {
        pos = after;
      }
      objects_[*num] = std::move(obj);
    }

    std::size_t t = bytes_.rfind("trailer");
    if (t != std::string_view::npos) {
      Lexer lex(bytes_, t + 7);
      if (auto v = lex.next(); v && v->dict()) {
        if (auto it = v->dict()->find("Root"); it != v->dict()->end() && it->second.ref()) {
          trailer_root_ = *it->second.ref();
        }
      }
    }
    if (!trailer_root_) {
      for (const auto& [num, obj] : objects_) {
        const Dict* d = obj.value.dict();
        if (!d || type_of(*d) != "XRef") continue;
        if (auto it = d->find("Root"); it != d->end() && it->second.ref()) {
          trailer_root_ = *it->second.ref();
        }
      }
    }
  }

  void expand_object_streams() {
    std::vector<std::pair<int, Object>> extracted;
    for (const auto& [num, obj] : objects_) {
      const Dict* d = obj.value.dict();
      if (!d || type_of(*d) != "ObjStm") continue;
      auto data = decoded_stream(obj);
      if (!data) continue;
      const auto n_it = d->find("N");
      const auto f_it = d->find("First");
      if (n_it == d->end() || f_it == d->end() || !n_it->second.number() ||
          !f_it->second.number()) {
        continue;
      }
      const auto count = static_cast<int>(*n_it->second.number());
      const auto first = static_cast<std::size_t>(*f_it->second.number());
      Lexer header(*data);
      std::vector<std::pair<int, std::size_t>> entries;
      for (int i = 0; i < count; ++i) {
        auto a = header.next();
        auto b = header.next();
        if (!a || !b || !a->number() || !b->number()) break;
        entries.emplace_back(static_cast<int>(*a->number()),
                             static_cast<std::size_t>(*b->number()));
      }
      auto holder = std::make_shared<std::string>(std::move(*data));
      owned_.push_back(holder);
      for (const auto& [obj_num, offset] : entries) {
        Lexer lex(*holder, first + offset);
        if (auto v = lex.next()) extracted.emplace_back(obj_num, Object{std::move(*v), std::nullopt});
      }
    }
    for (auto& [num, obj] : extracted) objects_.try_emplace(num, std::move(obj));
  }

  std::string_view bytes_;
  std::map<int, Object> objects_;
  std::optional<Ref> trailer_root_;
  std::vector<std::shared_ptr<std::string>> owned_;
  Value null_;
};

// ---------------------------------------------------------------------------
// Text extraction

void append_pdf_string(std::string& out, const std::string& bytes) {
  if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0xFE &&
      static_cast<unsigned char>(bytes[1]) == 0xFF) {
    std::u32string u;
    for (std::size_t i = 2; i + 1 < bytes.size(); i += 2) {
      char32_t unit = (static_cast<unsigned char>(bytes[i]) << 8) |
                      static_cast<unsigned char>(bytes[i + 1]);
      if (unit >= 0xD800 && unit <= 0xDBFF && i + 3 < bytes.size()) {
        const char32_t low = (static_cast<unsigned char>(bytes[i + 2]) << 8) |
                             static_cast<unsigned char>(bytes[i + 3]);
        unit = 0x10000 + ((unit - 0xD800) << 10) + (low - 0xDC00);
        i += 2;
      }
      if (unit >= 0xD800 && unit <= 0xDFFF) unit = 0xFFFD;
      u.push_back(unit);
    }
    out += utf8::encode(u);
    return;
  }
  // WinAnsi differs from Latin-1 in 0x80-0x9F; map the common punctuation.
  static const std::map<unsigned char, char32_t> kWinAnsi{
      {0x91, U'‘'}, {0x92, U'’'}, {0x93, U'“'}, {0x94, U'”'},
      {0x95, U'•'}, {0x96, U'–'}, {0x97, U'—'}, {0x85, U'…'}};
  std::u32string u;
  for (unsigned char c : bytes) {
    if (auto it = kWinAnsi.find(c); it != kWinAnsi.end()) {
      u.push_back(it->second);
    } else if (c >= 0x20 || c == '\n' || c == '\t') {
      u.push_back(c);
    }
  }
  out += utf8::encode(u);
}

class PageTextBuilder {
 public:
  void begin_text() {
    line_y_ = cur_y_ = 0;
    moved_ = true;
  }
  void move(double ty) {
    line_y_ += ty;
    cur_y_ = line_y_;
    moved_ = true;
  }
  void set_y(double y) {
    line_y_ = cur_y_ = y;
    moved_ = true;
  }
  void next_line() {
    line_y_ -= leading_ > 0 ? leading_ : 1.0;
    cur_y_ = line_y_;
    moved_ = true;
  }
  void set_leading(double l) { leading_ = l; }
  void word_gap() {
    if (!text_.empty() && !std::isspace(static_cast<unsigned char>(text_.back()))) text_ += ' ';
  }

  void show(const std::string& bytes) {
    if (moved_ && !text_.empty()) {
      if (has_y_ && std::abs(cur_y_ - last_y_) > 0.5) {
        while (!text_.empty() && text_.back() == ' ') text_.pop_back();
        if (text_.back() != '\n') text_ += '\n';
      } else {
        word_gap();
      }
    }
    moved_ = false;
    append_pdf_string(text_, bytes);
    last_y_ = cur_y_;
    has_y_ = true;
  }

  std::string finish() {
    while (!text_.empty() && std::isspace(static_cast<unsigned char>(text_.back()))) text_.pop_back();
    return std::move(text_);
  }

 private:
  std::string text_;
  double line_y_ = 0;
  double cur_y_ = 0;
  double last_y_ = 0;
  double leading_ = 0;
  bool has_y_ = false;
  bool moved_ = false;
};

std::string page_text(std::string_view content) {
  PageTextBuilder page;
  std::vector<Value> operands;
  Lexer lex(content);
  while (auto token = lex.next()) {
    const Keyword* op = token->keyword();
    if (!op) {
      operands.push_back(std::move(*token));
      continue;
    }
    const std::string& name = op->value;
    auto num = [&](std::size_t from_end) -> double {
      if (operands.size() < from_end) return 0;
      const auto* n = operands[operands.size() - from_end].number();
      return n ? *n : 0;
    };
    auto str = [&](std::size_t from_end) -> const std::string* {
      if (operands.size() < from_end) return nullptr;
      return operands[operands.size() - from_end].string();
    };

    if (name == "BT") {
      page.begin_text();
    } else if (name == "Td") {
      page.move(num(1));
    } else if (name == "TD") {
      page.set_leading(-num(1));
      page.move(num(1));
    } else if (name == "Tm") {
      page.set_y(num(1));
    } else if (name == "TL") {
      page.set_leading(num(1));
    } else if (name == "T*") {
      page.next_line();
    } else if (name == "Tj") {
      if (const auto* s = str(1)) page.show(*s);
    } else if (name == "'") {
      page.next_line();
      if (const auto* s = str(1)) page.show(*s);
    } else if (name == "\"") {
      page.next_line();
      if (const auto* s = str(1)) page.show(*s);
    } else if (name == "TJ") {
      if (!operands.empty()) {
        if (const Array* arr = operands.back().array()) {
          for (const auto& e : *arr) {
            if (const auto* s = e.string()) {
              page.show(*s);
            } else if (const auto* n = e.number(); n && *n < -250) {
              page.word_gap();
            }
          }
        }
      }
    } else if (name == "ID") {
      lex.skip_past("EI");
    }
    operands.clear();
  }
  return page.finish();
}

std::string make_temp_path() {
  std::random_device rd;
  std::mt19937_64 rng(rd());
  return (fs::temp_directory_path() / ("medrag-pdf-" + std::to_string(rng()) + ".pdf")).string();
}

}  // namespace

PdfExtractor basic_pdf_extractor() {
  return [](std::span<const std::uint8_t> raw) {
    const std::string_view bytes(reinterpret_cast<const char*>(raw.data()), raw.size());
    const PdfFile pdf(bytes);
    const auto pages = pdf.pages();
    if (pages.empty()) fail("no pages found");

    std::vector<std::string> texts;
    for (const Dict* page : pages) {
      std::string content;
      if (auto it = page->find("Contents"); it != page->end()) {
        std::vector<Value> parts;
        const Value& c = pdf.resolve(it->second);
        if (const Array* arr = c.array()) {
          parts = *arr;
        } else {
          parts.push_back(it->second);
        }
        for (const auto& part : parts) {
          const Ref* ref = part.ref();
          if (!ref) continue;
          const Object* obj = pdf.object(*ref);
          if (!obj) continue;
          if (auto data = pdf.decoded_stream(*obj)) {
            content += *data;
            content += '\n';
          }
        }
      }
      texts.push_back(page_text(content));
    }
    return texts;
  };
}

PdfExtractor command_pdf_extractor(std::string command) {
  return [command = std::move(command)](std::span<const std::uint8_t> raw) {
    const std::string tmp = make_temp_path();
    {
      std::ofstream out(tmp, std::ios::binary);
      out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
      if (!out) fail("cannot write temporary file");
    }
    std::string cmd = command;
    const std::string quoted = "'" + tmp + "'";
    if (auto at = cmd.find("{input}"); at != std::string::npos) {
      cmd.replace(at, 7, quoted);
    } else {
      cmd += " " + quoted;
    }

    std::string output;
    int status = -1;
    if (FILE* pipe = ::popen(cmd.c_str(), "r")) {
      std::array<char, 4096> buf{};
      std::size_t n;
      while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) output.append(buf.data(), n);
      status = ::pclose(pipe);
    }
    std::error_code ec;
    fs::remove(tmp, ec);
    if (status != 0) fail("extractor command failed: " + command);

    std::vector<std::string> pages;
    std::size_t start = 0;
    while (true) {
      const auto ff = output.find('\f', start);
      pages.push_back(output.substr(start, ff == std::string::npos ? ff : ff - start));
      if (ff == std::string::npos) break;
      start = ff + 1;
    }
    // pdftotext terminates the last page with a form feed too.
    if (pages.size() > 1 && pages.back().find_first_not_of(" \n\r\t") == std::string::npos) {
      pages.pop_back();
    }
    for (auto& p : pages) {
      while (!p.empty() && std::isspace(static_cast<unsigned char>(p.back()))) p.pop_back();
    }
    return pages;
  };
}

}  // namespace medrag
