#pragma once

// Text operator format. Statements end with ';', '#' starts a comment, whitespace is free.
//
//   dims batch, len;
//   table lens = [2 1 3];            # or `= input;` when bound by the caller
//   tensor A (batch, len) storage [3, lens(batch)] pad [1, 64] float;
//   tensor O (batch, len) storage [size(lens), lens(batch)] float;
//   op O loops [batch: size(lens), len: lens(batch)] = 2 * A[batch, len];
//   op C loops [i: 4, j: 4, k: rowlen(i) reduce] = sum: A[i, k] * B[k, j];
//
// Extents are an integer, `size(table)` (the table's length), or `table(dim)`.
// An op named differently from its output is written `op name -> tensor loops ...`.

#include <cctype>
#include <charconv>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ragc/core_ir.hpp"

namespace ragc {

namespace detail {

struct Token {
  enum Kind { Ident, Int, Float, Punct, End } kind = End;
  std::string text;
  int line = 1, col = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip();
      Token t;
      t.line = line_;
      t.col = col_;
      if (pos_ >= src_.size()) {
        t.kind = Token::End;
        out.push_back(t);
        return out;
      }
      char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        t.kind = Token::Ident;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
          t.text += take();
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '.' && pos_ + 1 < src_.size() &&
                  std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        t.kind = Token::Int;
        while (pos_ < src_.size()) {
          char d = src_[pos_];
          if (std::isdigit(static_cast<unsigned char>(d))) {
            t.text += take();
          } else if (d == '.' || d == 'e' || d == 'E') {
            t.kind = Token::Float;
            t.text += take();
            if ((d == 'e' || d == 'E') && pos_ < src_.size() &&
                (src_[pos_] == '-' || src_[pos_] == '+'))
              t.text += take();
          } else {
            break;
          }
        }
      } else if (c == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '>') {
        t.kind = Token::Punct;
        t.text = "->";
        take();
        take();
      } else {
        t.kind = Token::Punct;
        t.text = std::string(1, take());
      }
      out.push_back(t);
    }
  }

 private:
  char take() {
    char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }
  void skip() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        take();
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') take();
      } else {
        break;
      }
    }
  }

  std::string_view src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
};

class Parser {
 public:
  Parser(std::string_view src, const std::map<std::string, LengthTable>& bound)
      : toks_(Lexer(src).run()), bound_(bound) {}

  Program program() {
    Program p;
    while (peek().kind != Token::End) statement(p);
    return p;
  }

  Expr expression_only() {
    Expr e = expr();
    if (peek().kind != Token::End) error("trailing input");
    return e;
  }

 private:
  const Token& peek(size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  Token next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }

  [[noreturn]] void error(const std::string& msg) const {
    const Token& t = peek();
    fail(ErrorKind::ParseError, std::to_string(t.line) + ":" + std::to_string(t.col) + ": " + msg +
                                    (t.kind == Token::End ? " at end of input" : " near '" + t.text + "'"));
  }

  bool accept(std::string_view p) {
    if (peek().kind == Token::Punct && peek().text == p) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(std::string_view p) {
    if (!accept(p)) error("expected '" + std::string(p) + "'");
  }
  bool accept_kw(std::string_view kw) {
    if (peek().kind == Token::Ident && peek().text == kw) {
      ++pos_;
      return true;
    }
    return false;
  }
  std::string ident() {
    if (peek().kind != Token::Ident) error("expected identifier");
    return next().text;
  }
  int64_t integer() {
    bool negative = accept("-");
    if (peek().kind != Token::Int) error("expected integer");
    std::string s = next().text;
    int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc()) error("integer out of range");
    return negative ? -v : v;
  }

  // Wraps validation failures with the statement position.
  template <class F>
  void at_statement(const Token& start, F&& f) {
    try {
      f();
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ParseError) throw;
      throw Error(e.kind(), std::to_string(start.line) + ":" + std::to_string(start.col) + ": " +
                                std::string(e.what()).substr(error_name(e.kind()).size() + 2));
    }
  }

  void statement(Program& p) {
    Token start = peek();
    std::string kw = ident();
    if (kw == "dims") {
      do {
        std::string name = ident();
        at_statement(start, [&] { p.add_dim(name); });
      } while (accept(","));
    } else if (kw == "table") {
      std::string name = ident();
      expect("=");
      if (accept_kw("input")) {
        auto it = bound_.find(name);
        if (it == bound_.end()) {
          pos_--;
          error("table '" + name + "' declared as input but not supplied");
        }
        LengthTable t = it->second;
        t.name = name;
        at_statement(start, [&] { p.add_table(std::move(t)); });
      } else {
        expect("[");
        LengthTable t{name, {}};
        while (!accept("]")) {
          t.values.push_back(integer());
          accept(",");
        }
        at_statement(start, [&] { p.add_table(std::move(t)); });
      }
    } else if (kw == "tensor") {
      std::string name = ident();
      expect("(");
      std::vector<std::string> dims;
      if (!accept(")")) {
        do dims.push_back(ident());
        while (accept(","));
        expect(")");
      }
      if (!accept_kw("storage")) error("expected 'storage'");
      expect("[");
      std::vector<Extent> storage;
      if (!accept("]")) {
        do storage.push_back(extent(p));
        while (accept(","));
        expect("]");
      }
      std::vector<int64_t> pad;
      if (accept_kw("pad")) {
        expect("[");
        do pad.push_back(integer());
        while (accept(","));
        expect("]");
      }
      ElemKind elem = ElemKind::Float64;
      if (accept_kw("int")) elem = ElemKind::Int64;
      else accept_kw("float");
      at_statement(start, [&] { declare_tensor(p, name, dims, storage, elem, pad); });
    } else if (kw == "op") {
      OperatorDef op;
      op.name = ident();
      op.output = op.name;
      if (accept("->")) op.output = ident();
      if (!accept_kw("loops")) error("expected 'loops'");
      expect("[");
      if (!accept("]")) {
        do {
          LoopSpec l;
          l.dim = ident();
          expect(":");
          l.extent = extent(p);
          l.reduction = accept_kw("reduce");
          op.loops.push_back(l);
        } while (accept(","));
        expect("]");
      }
      expect("=");
      if (peek(1).kind == Token::Punct && peek(1).text == ":" &&
          (peek().text == "sum" || peek().text == "max")) {
        op.combine = next().text == "sum" ? Combiner::Sum : Combiner::Max;
        expect(":");
      }
      op.body = expr();
      at_statement(start, [&] { declare_operator(p, std::move(op)); });
    } else {
      pos_--;
      error("unknown statement '" + kw + "'");
    }
    expect(";");
  }

  Extent extent(const Program& p) {
    if (peek().kind == Token::Int) return Extent::fixed(integer());
    std::string name = ident();
    expect("(");
    std::string arg = ident();
    expect(")");
    if (name == "size") {
      auto it = p.tables.find(arg);
      if (it == p.tables.end()) fail(ErrorKind::MissingTable, arg);
      return Extent::fixed(static_cast<int64_t>(it->second.values.size()));
    }
    return Extent::on(arg, name);
  }

  Expr expr() {
    Expr e = term();
    for (;;) {
      if (accept("+")) e = ex::add(e, term());
      else if (accept("-")) e = ex::sub(e, term());
      else return e;
    }
  }
  Expr term() {
    Expr e = unary();
    for (;;) {
      if (accept("*")) e = ex::mul(e, unary());
      else if (accept("/")) e = ex::div(e, unary());
      else return e;
    }
  }
  Expr unary() {
    if (accept("-")) return ex::neg(unary());
    return primary();
  }
  Expr primary() {
    const Token& t = peek();
    if (t.kind == Token::Int) return ex::cst(integer());
    if (t.kind == Token::Float) {
      std::string s = next().text;
      std::istringstream is(s);
      is.imbue(std::locale::classic());
      double v = 0;
      is >> v;
      return ex::cstf(v);
    }
    if (accept("(")) {
      Expr e = expr();
      expect(")");
      return e;
    }
    std::string name = ident();
    if (accept("[")) {
      std::vector<Expr> idx;
      if (!accept("]")) {
        do idx.push_back(expr());
        while (accept(","));
        expect("]");
      }
      return ex::read(name, std::move(idx));
    }
    if (accept("(")) {
      std::vector<Expr> args;
      do args.push_back(expr());
      while (accept(","));
      expect(")");
      if (name == "exp" && args.size() == 1) return ex::exp(args[0]);
      if (name == "max" && args.size() == 2) return ex::max(args[0], args[1]);
      if (name == "min" && args.size() == 2) return ex::min(args[0], args[1]);
      error("unknown function '" + name + "'");
    }
    return ex::var(name);
  }

  std::vector<Token> toks_;
  size_t pos_ = 0;
  const std::map<std::string, LengthTable>& bound_;
};

inline std::string extent_text(const Extent& e) {
  return e.varying ? e.table + "(" + e.dep + ")" : std::to_string(e.size);
}

}  // namespace detail

/// Parses a program. Tables declared `= input` are taken from `bound`.
inline Program parse_program(std::string_view text,
                             const std::map<std::string, LengthTable>& bound = {}) {
  return detail::Parser(text, bound).program();
}

inline Expr parse_expr(std::string_view text) {
  static const std::map<std::string, LengthTable> none;
  return detail::Parser(text, none).expression_only();
}

inline std::string print_program(const Program& p) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  if (!p.dims.empty()) {
    os << "dims ";
    for (size_t k = 0; k < p.dims.size(); ++k) os << (k ? ", " : "") << p.dims[k].label;
    os << ";\n";
  }
  for (const auto& [name, t] : p.tables) {
    os << "table " << name << " = [";
    for (size_t k = 0; k < t.values.size(); ++k) os << (k ? " " : "") << t.values[k];
    os << "];\n";
  }
  for (const auto& t : p.tensors) {
    os << "tensor " << t.name << " (";
    for (size_t k = 0; k < t.dims.size(); ++k) os << (k ? ", " : "") << t.dims[k];
    os << ") storage [";
    for (size_t k = 0; k < t.storage.size(); ++k)
      os << (k ? ", " : "") << detail::extent_text(t.storage[k]);
    os << "]";
    if (std::any_of(t.pad.begin(), t.pad.end(), [](int64_t m) { return m != 1; })) {
      os << " pad [";
      for (size_t k = 0; k < t.pad.size(); ++k) os << (k ? ", " : "") << t.pad[k];
      os << "]";
    }
    os << " " << elem_name(t.elem) << ";\n";
  }
  for (const auto& op : p.ops) {
    os << "op " << op.name;
    if (op.output != op.name) os << " -> " << op.output;
    os << " loops [";
    for (size_t k = 0; k < op.loops.size(); ++k) {
      const auto& l = op.loops[k];
      os << (k ? ", " : "") << l.dim << ": " << detail::extent_text(l.extent)
         << (l.reduction ? " reduce" : "");
    }
    os << "] = ";
    if (op.combine != Combiner::Assign) os << combiner_name(op.combine) << ": ";
    os << to_string(op.body) << ";\n";
  }
  return os.str();
}

}  // namespace ragc
