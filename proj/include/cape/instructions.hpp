#pragma once
//
// Templated instruction grammar. The same intents are rendered to text by the
// data generator and parsed back by the scripted synthesizer, and resolve()
// turns an intent into an edit program against a concrete session.
//

#include "cape/dsl.hpp"
#include "cape/editverify.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cape::pipeline {

enum class Behavior
{
    Movement,
    Rotation,
    PathSelection,
    ObstacleDistance,
    Wait,
    Backout,
    PassThrough,
};

std::string_view to_string(Behavior behavior);
std::optional<Behavior> behavior_from_string(std::string_view name);
/// The six behaviors used for data generation (pass-through excluded).
const std::vector<Behavior>& generated_behaviors();

enum class Direction
{
    Forward,
    Backward,
    Left,
    Right,
};

/// Robot frame uses the waypoint heading; speaker frame uses the heading from
/// the instructing agent toward the robot.
enum class Frame
{
    Robot,
    Speaker,
};

struct Amount
{
    enum class Kind
    {
        Bit,
        Little,
        More,
        Units,
    };
    Kind kind = Kind::Bit;
    double units = 0.0; ///< only for Kind::Units

    /// 0.05 * min(width, height) for "a bit"/"a little", 0.15 * for "more".
    double value(double width, double height) const;

    friend bool operator==(const Amount&, const Amount&) = default;
};

struct MoveIntent
{
    Direction direction = Direction::Forward;
    Frame frame = Frame::Robot;
    Amount amount;
    std::optional<std::int64_t> step;

    friend bool operator==(const MoveIntent&, const MoveIntent&) = default;
};

struct RotateIntent
{
    bool clockwise = true;
    double degrees = 0.0;
    std::optional<std::int64_t> step;

    friend bool operator==(const RotateIntent&, const RotateIntent&) = default;
};

struct SelectIntent
{
    enum class Kind
    {
        Landmark, ///< "take the path to the left of the sofa"
        Side,     ///< "take the left path"
        Index,    ///< "take path 2" (1-based)
    };
    Kind kind = Kind::Side;
    bool left = true;
    std::string landmark;
    std::int64_t number = 1;

    friend bool operator==(const SelectIntent&, const SelectIntent&) = default;
};

struct DistanceIntent
{
    bool away = true;
    std::string obstacle;
    Amount amount;
    std::optional<std::int64_t> step;

    friend bool operator==(const DistanceIntent&, const DistanceIntent&) = default;
};

struct WaitIntent
{
    friend bool operator==(const WaitIntent&, const WaitIntent&) = default;
};

struct BackoutIntent
{
    friend bool operator==(const BackoutIntent&, const BackoutIntent&) = default;
};

struct PassIntent
{
    friend bool operator==(const PassIntent&, const PassIntent&) = default;
};

using Intent =
    std::variant<MoveIntent, RotateIntent, SelectIntent, DistanceIntent, WaitIntent, BackoutIntent, PassIntent>;

Behavior behavior_of(const Intent& intent);

/// Canonical instruction text.
std::string render(const Intent& intent);

/// Case-insensitive; tolerates surrounding whitespace, a leading "please" and
/// trailing punctuation. nullopt for text outside the grammar.
std::optional<Intent> parse_instruction(std::string_view text);

/// Everything resolution needs besides the session: who is talking.
struct Speaker
{
    std::string id;
    geometry::Point position;
};

/// Numbers written into programs are rounded to two decimals.
double round2(double value);

/// Edit program realizing the intent on the session, or an empty list when
/// the intent cannot be grounded (unknown landmark, no waypoint to edit, no
/// way to clear the conflict).
std::vector<dsl::Statement> resolve(const Intent& intent, const editverify::EditSession& session,
                                    const std::optional<Speaker>& speaker);

/// Candidate chosen by a landmark or side selection (ties: lowest index).
std::size_t select_by_side(const editverify::EditSession& session, bool left,
                           std::optional<std::size_t> region = std::nullopt);

/// Smallest dwell w >= min_wait at waypoint `step` that makes the path
/// conflict-free, searched up to `limit`.
std::optional<geometry::Tick> clearing_wait(const editverify::EditSession& session, const geometry::TimedPath& path,
                                            std::size_t step, geometry::Tick min_wait, geometry::Tick limit);

/// Ticks of padding added on top of the minimal clearing wait.
inline constexpr geometry::Tick kWaitBuffer = 2;

} // namespace cape::pipeline
