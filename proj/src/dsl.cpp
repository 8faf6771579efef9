#include "cape/dsl.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <sstream>

namespace cape::dsl {

const std::string& agent_of(const Statement& stmt)
{
    return std::visit([](const auto& s) -> const std::string& { return s.agent; }, stmt);
}

std::string_view op_name(const Statement& stmt)
{
    struct Names
    {
        std::string_view operator()(const SelectPath&) const { return "select_path"; }
        std::string_view operator()(const ModifyTranslation&) const { return "modify_translation"; }
        std::string_view operator()(const ModifyRotation&) const { return "modify_rotation"; }
        std::string_view operator()(const Wait&) const { return "wait"; }
        std::string_view operator()(const InsertWaypoint&) const { return "insert_waypoint"; }
    };
    return std::visit(Names{}, stmt);
}

std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::Syntax:
        return "Syntax";
    case ErrorKind::UnknownOperation:
        return "UnknownOperation";
    case ErrorKind::ArityMismatch:
        return "ArityMismatch";
    case ErrorKind::BadArgument:
        return "BadArgument";
    }
    return "Syntax";
}

std::vector<Statement> EditProgram::statements() const
{
    std::vector<Statement> out;
    for (const auto& line : lines)
        if (line.ok())
            out.push_back(line.statement());
    return out;
}

std::vector<ParseError> EditProgram::errors() const
{
    std::vector<ParseError> out;
    for (const auto& line : lines)
        if (!line.ok())
            out.push_back(line.error());
    return out;
}

namespace {

enum class Tok
{
    Ident,
    Number,
    String,
    LParen,
    RParen,
    Comma,
    Semicolon,
};

struct Token
{
    Tok kind;
    std::string text;  // source text
    std::string value; // unquoted string value
    std::size_t col;   // 1-based
    std::size_t end;   // one past
};

struct LexFailure
{
    std::size_t col;
    std::string token;
    std::string message;
};

struct Lexed
{
    std::vector<Token> tokens; ///< tokens before the failure, if any
    std::optional<LexFailure> failure;
};

bool ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }
bool digit(char c) { return c >= '0' && c <= '9'; }

Lexed lex(std::string_view line)
{
    Lexed result;
    std::vector<Token>& out = result.tokens;
    auto failed = [&](LexFailure f) {
        result.failure = std::move(f);
        return std::move(result);
    };
    std::size_t i = 0;
    while (i < line.size()) {
        const char c = line[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
            ++i;
            continue;
        }
        if (c == '#')
            break;
        const std::size_t start = i;
        if (ident_start(c)) {
            while (i < line.size() && ident_char(line[i]))
                ++i;
            out.push_back({Tok::Ident, std::string(line.substr(start, i - start)), {}, start + 1, i + 1});
            continue;
        }
        if (digit(c) || c == '.' || c == '+' || c == '-') {
            std::size_t j = i;
            if (line[j] == '+' || line[j] == '-')
                ++j;
            std::size_t digits = 0;
            while (j < line.size() && digit(line[j])) {
                ++j;
                ++digits;
            }
            if (j < line.size() && line[j] == '.') {
                ++j;
                while (j < line.size() && digit(line[j])) {
                    ++j;
                    ++digits;
                }
            }
            if (digits == 0) {
                const std::size_t stop = std::max(j, i + 1);
                return failed(LexFailure{start + 1, std::string(line.substr(start, stop - start)), "malformed number"});
            }
            if (j < line.size() && (line[j] == 'e' || line[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < line.size() && (line[k] == '+' || line[k] == '-'))
                    ++k;
                std::size_t exp_digits = 0;
                while (k < line.size() && digit(line[k])) {
                    ++k;
                    ++exp_digits;
                }
                if (exp_digits == 0)
                    return failed(LexFailure{start + 1, std::string(line.substr(start, k - start)), "malformed exponent"});
                j = k;
            }
            if (j < line.size() && ident_char(line[j])) {
                std::size_t k = j;
                while (k < line.size() && ident_char(line[k]))
                    ++k;
                return failed(LexFailure{start + 1, std::string(line.substr(start, k - start)), "malformed number"});
            }
            i = j;
            out.push_back({Tok::Number, std::string(line.substr(start, i - start)), {}, start + 1, i + 1});
            continue;
        }
        if (c == '"' || c == '\'') {
            std::string value;
            ++i;
            bool closed = false;
            while (i < line.size()) {
                if (line[i] == '\\' && i + 1 < line.size()) {
                    value.push_back(line[i + 1]);
                    i += 2;
                    continue;
                }
                if (line[i] == c) {
                    closed = true;
                    ++i;
                    break;
                }
                value.push_back(line[i]);
                ++i;
            }
            if (!closed)
                return failed(LexFailure{start + 1, std::string(line.substr(start)), "unterminated string"});
            out.push_back({Tok::String, std::string(line.substr(start, i - start)), value, start + 1, i + 1});
            continue;
        }
        Tok kind;
        switch (c) {
        case '(':
            kind = Tok::LParen;
            break;
        case ')':
            kind = Tok::RParen;
            break;
        case ',':
            kind = Tok::Comma;
            break;
        case ';':
            kind = Tok::Semicolon;
            break;
        default:
            return failed(LexFailure{start + 1, std::string(1, c), "unexpected character"});
        }
        ++i;
        out.push_back({kind, std::string(1, c), {}, start + 1, i + 1});
    }
    return result;
}

struct Signature
{
    std::string_view name;
    std::size_t min_args;
    std::size_t max_args;
};

constexpr std::array<Signature, 5> kOps{{
    {"select_path", 2, 2},
    {"modify_translation", 4, 4},
    {"modify_rotation", 3, 3},
    {"wait", 3, 3},
    {"insert_waypoint", 4, 5},
}};

class LineParser
{
  public:
    LineParser(std::size_t line_no, std::vector<Token> tokens) : line_(line_no), tokens_(std::move(tokens)) {}

    ProgramLine run()
    {
        const Span span{line_, tokens_.front().col, tokens_.back().end};
        try {
            return ProgramLine{parse_call(), span};
        } catch (const ParseError& e) {
            return ProgramLine{e, span};
        }
    }

  private:
    [[noreturn]] void fail(ErrorKind kind, const Token& tok, std::string message) const
    {
        throw ParseError{line_, tok.col, kind, std::move(message), tok.text};
    }

    [[noreturn]] void fail_at_end(std::string message) const
    {
        const Token& last = tokens_.back();
        throw ParseError{line_, last.end, ErrorKind::Syntax, std::move(message), ""};
    }

    Statement parse_call()
    {
        const Token& name = tokens_[0];
        if (name.kind != Tok::Ident)
            fail(ErrorKind::Syntax, name, "expected an operation name");
        if (tokens_.size() < 2)
            fail_at_end("expected '(' after '" + name.text + "'");
        if (tokens_[1].kind != Tok::LParen)
            fail(ErrorKind::Syntax, tokens_[1], "expected '(' after '" + name.text + "'");

        std::vector<const Token*> args;
        std::size_t i = 2;
        bool closed = false;
        if (i < tokens_.size() && tokens_[i].kind == Tok::RParen) {
            closed = true;
            ++i;
        }
        while (!closed) {
            if (i >= tokens_.size())
                fail_at_end("expected an argument");
            const Token& arg = tokens_[i];
            if (arg.kind != Tok::Number && arg.kind != Tok::String && arg.kind != Tok::Ident)
                fail(ErrorKind::Syntax, arg, "expected an argument");
            args.push_back(&arg);
            ++i;
            if (i >= tokens_.size())
                fail_at_end("expected ',' or ')'");
            if (tokens_[i].kind == Tok::Comma) {
                ++i;
                continue;
            }
            if (tokens_[i].kind == Tok::RParen) {
                closed = true;
                ++i;
                break;
            }
            fail(ErrorKind::Syntax, tokens_[i], "expected ',' or ')'");
        }
        if (i < tokens_.size() && tokens_[i].kind == Tok::Semicolon)
            ++i;
        if (i < tokens_.size())
            fail(ErrorKind::Syntax, tokens_[i], "unexpected trailing input");

        const Signature* sig = nullptr;
        for (const auto& op : kOps)
            if (op.name == name.text)
                sig = &op;
        if (sig == nullptr)
            fail(ErrorKind::UnknownOperation, name, "unknown operation '" + name.text + "'");
        if (args.size() < sig->min_args || args.size() > sig->max_args) {
            const std::string expected = sig->min_args == sig->max_args
                                             ? std::to_string(sig->min_args)
                                             : std::to_string(sig->min_args) + " or " + std::to_string(sig->max_args);
            fail(ErrorKind::ArityMismatch, name,
                 "'" + name.text + "' takes " + expected + " arguments, got " + std::to_string(args.size()));
        }

        const std::string agent = agent_arg(*args.back());
        if (sig->name == "select_path")
            return SelectPath{index_arg(*args[0]), agent};
        if (sig->name == "modify_translation")
            return ModifyTranslation{index_arg(*args[0]), number_arg(*args[1]), number_arg(*args[2]), agent};
        if (sig->name == "modify_rotation")
            return ModifyRotation{index_arg(*args[0]), number_arg(*args[1]), agent};
        if (sig->name == "wait")
            return Wait{index_arg(*args[0]), index_arg(*args[1]), agent};
        InsertWaypoint ins{index_arg(*args[0]), number_arg(*args[1]), number_arg(*args[2]), std::nullopt, agent};
        if (args.size() == 5)
            ins.theta = number_arg(*args[3]);
        return ins;
    }

    double number_arg(const Token& tok) const
    {
        if (tok.kind != Tok::Number)
            fail(ErrorKind::BadArgument, tok, "expected a number, got '" + tok.text + "'");
        std::string_view text = tok.text;
        if (!text.empty() && text.front() == '+')
            text.remove_prefix(1);
        double value = 0.0;
        const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
        if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || !std::isfinite(value))
            fail(ErrorKind::BadArgument, tok, "number out of range: '" + tok.text + "'");
        return value;
    }

    std::int64_t index_arg(const Token& tok) const
    {
        const double value = number_arg(tok);
        if (value < 0.0 || value != std::floor(value) || value > 9007199254740992.0)
            fail(ErrorKind::BadArgument, tok, "expected a non-negative integer, got '" + tok.text + "'");
        return static_cast<std::int64_t>(value);
    }

    std::string agent_arg(const Token& tok) const
    {
        if (tok.kind == Tok::Ident)
            return tok.text;
        if (tok.kind == Tok::String) {
            if (tok.value.empty())
                fail(ErrorKind::BadArgument, tok, "agent name is empty");
            return tok.value;
        }
        fail(ErrorKind::BadArgument, tok, "expected an agent name, got '" + tok.text + "'");
    }

    std::size_t line_;
    std::vector<Token> tokens_;
};

bool fence_line(std::string_view line)
{
    const auto first = line.find_first_not_of(" \t\r");
    return first != std::string_view::npos && line.substr(first, 3) == "```";
}

} // namespace

EditProgram parse(std::string_view text)
{
    EditProgram program;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        ++line_no;
        if (!fence_line(line)) {
            Lexed lexed = lex(line);
            std::optional<ProgramLine> parsed;
            if (!lexed.tokens.empty())
                parsed = LineParser(line_no, lexed.tokens).run();
            if (lexed.failure) {
                // A structural error at one of the tokens before the lexical
                // failure comes first; running out of tokens does not count.
                const LexFailure& f = *lexed.failure;
                if (!parsed || parsed->ok() || parsed->error().col >= lexed.tokens.back().end)
                    parsed = ProgramLine{ParseError{line_no, f.col, ErrorKind::Syntax, f.message, f.token},
                                         Span{line_no, lexed.tokens.empty() ? f.col : lexed.tokens.front().col,
                                              f.col + f.token.size()}};
            }
            if (parsed)
                program.lines.push_back(std::move(*parsed));
        }
        if (nl == std::string_view::npos)
            break;
        pos = nl + 1;
    }
    return program;
}

std::string format_number(double value)
{
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), res.ptr);
}

namespace {

std::string quote(const std::string& agent)
{
    std::string out = "\"";
    for (char c : agent) {
        if (c == '"' || c == '\\')
            out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

} // namespace

std::string print(const Statement& stmt)
{
    struct Printer
    {
        std::string operator()(const SelectPath& s) const
        {
            return "select_path(" + std::to_string(s.path_index) + ", " + quote(s.agent) + ")";
        }
        std::string operator()(const ModifyTranslation& s) const
        {
            return "modify_translation(" + std::to_string(s.step) + ", " + format_number(s.dx) + ", " +
                   format_number(s.dy) + ", " + quote(s.agent) + ")";
        }
        std::string operator()(const ModifyRotation& s) const
        {
            return "modify_rotation(" + std::to_string(s.step) + ", " + format_number(s.dtheta) + ", " +
                   quote(s.agent) + ")";
        }
        std::string operator()(const Wait& s) const
        {
            return "wait(" + std::to_string(s.step) + ", " + std::to_string(s.t) + ", " + quote(s.agent) + ")";
        }
        std::string operator()(const InsertWaypoint& s) const
        {
            std::string out = "insert_waypoint(" + std::to_string(s.step) + ", " + format_number(s.x) + ", " +
                              format_number(s.y) + ", ";
            if (s.theta)
                out += format_number(*s.theta) + ", ";
            return out + quote(s.agent) + ")";
        }
    };
    return std::visit(Printer{}, stmt);
}

std::string print(std::span<const Statement> statements)
{
    std::string out;
    for (const auto& s : statements) {
        out += print(s);
        out.push_back('\n');
    }
    return out;
}

std::string print(const EditProgram& program)
{
    const auto stmts = program.statements();
    return print(std::span<const Statement>(stmts));
}

} // namespace cape::dsl
