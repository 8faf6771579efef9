#pragma once
//
// The path-edit language: one call per line, e.g.
//
//   select_path(0, "robot")
//   modify_translation(2, 15, -4.5, "robot")
//   wait(2, 5, robot)
//
// Parsing never throws. Every non-blank line becomes either a Statement or a
// ParseError, so a single bad line does not take the rest of the program down.
//

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cape::dsl {

struct SelectPath
{
    std::int64_t path_index = 0;
    std::string agent;

    friend bool operator==(const SelectPath&, const SelectPath&) = default;
};

struct ModifyTranslation
{
    std::int64_t step = 0;
    double dx = 0.0;
    double dy = 0.0;
    std::string agent;

    friend bool operator==(const ModifyTranslation&, const ModifyTranslation&) = default;
};

struct ModifyRotation
{
    std::int64_t step = 0;
    double dtheta = 0.0;
    std::string agent;

    friend bool operator==(const ModifyRotation&, const ModifyRotation&) = default;
};

struct Wait
{
    std::int64_t step = 0;
    std::int64_t t = 0;
    std::string agent;

    friend bool operator==(const Wait&, const Wait&) = default;
};

struct InsertWaypoint
{
    std::int64_t step = 0;
    double x = 0.0;
    double y = 0.0;
    std::optional<double> theta;
    std::string agent;

    friend bool operator==(const InsertWaypoint&, const InsertWaypoint&) = default;
};

using Statement = std::variant<SelectPath, ModifyTranslation, ModifyRotation, Wait, InsertWaypoint>;

const std::string& agent_of(const Statement& stmt);
std::string_view op_name(const Statement& stmt);

enum class ErrorKind
{
    Syntax,
    UnknownOperation,
    ArityMismatch,
    BadArgument,
};

std::string_view to_string(ErrorKind kind);

/// Lines and columns are 1-based; columns count bytes.
struct ParseError
{
    std::size_t line = 0;
    std::size_t col = 0;
    ErrorKind kind = ErrorKind::Syntax;
    std::string message;
    std::string token;

    friend bool operator==(const ParseError&, const ParseError&) = default;
};

struct Span
{
    std::size_t line = 0;
    std::size_t col_begin = 0;
    std::size_t col_end = 0; ///< one past the last byte

    friend bool operator==(const Span&, const Span&) = default;
};

struct ProgramLine
{
    std::variant<Statement, ParseError> content;
    Span span;

    bool ok() const { return std::holds_alternative<Statement>(content); }
    const Statement& statement() const { return std::get<Statement>(content); }
    const ParseError& error() const { return std::get<ParseError>(content); }

    friend bool operator==(const ProgramLine&, const ProgramLine&) = default;
};

struct EditProgram
{
    std::vector<ProgramLine> lines;

    std::vector<Statement> statements() const;
    std::vector<ParseError> errors() const;
    bool valid() const { return errors().empty(); }

    friend bool operator==(const EditProgram&, const EditProgram&) = default;
};

EditProgram parse(std::string_view text);

/// Shortest decimal text that reads back to the same double.
std::string format_number(double value);

std::string print(const Statement& stmt);
/// Canonical text of the program's statements; invalid lines are dropped.
std::string print(const EditProgram& program);
std::string print(std::span<const Statement> statements);

} // namespace cape::dsl
