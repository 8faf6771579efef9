#pragma once
//
// Deterministic top-down rendering of a session: brown obstacles, grey
// unreachable regions, colored candidate paths with index labels, dashed
// predictions, an orange disc for the planning agent, cyan discs for the
// others and green goal markers. Written as binary PPM.
//

#include "cape/editverify.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cape::pipeline {

struct Rgb
{
    std::uint8_t r = 0, g = 0, b = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;
};

namespace colors {
inline constexpr Rgb background{255, 255, 255};
inline constexpr Rgb obstacle{150, 90, 40};
inline constexpr Rgb unreachable{150, 150, 150};
inline constexpr Rgb robot{255, 140, 0};
inline constexpr Rgb human{0, 200, 220};
inline constexpr Rgb goal{40, 180, 60};
inline constexpr Rgb prediction{200, 30, 30};
inline constexpr Rgb label{0, 0, 0};
} // namespace colors

/// Candidate path colors, cycled by index.
Rgb candidate_color(std::size_t index);

struct Raster
{
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels; ///< row-major RGB

    Raster() = default;
    Raster(int w, int h, Rgb fill);

    Rgb at(int x, int y) const;
    void set(int x, int y, Rgb c);

    /// Binary "P6" encoding.
    std::string to_ppm() const;

    friend bool operator==(const Raster&, const Raster&) = default;
};

/// Scale is chosen so the longer map side spans `max_side` pixels.
Raster render_session(const editverify::EditSession& session, int max_side = 512);

} // namespace cape::pipeline
