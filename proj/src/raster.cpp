#include "cape/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace cape::pipeline {

using geometry::Point;

Rgb candidate_color(std::size_t index)
{
    static constexpr std::array<Rgb, 6> palette{
        Rgb{30, 90, 220}, Rgb{220, 40, 160}, Rgb{120, 60, 200}, Rgb{0, 150, 120}, Rgb{230, 180, 0}, Rgb{90, 90, 90}};
    return palette[index % palette.size()];
}

Raster::Raster(int w, int h, Rgb fill) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3)
{
    for (std::size_t i = 0; i < pixels.size(); i += 3) {
        pixels[i] = fill.r;
        pixels[i + 1] = fill.g;
        pixels[i + 2] = fill.b;
    }
}

Rgb Raster::at(int x, int y) const
{
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void Raster::set(int x, int y, Rgb c)
{
    if (x < 0 || y < 0 || x >= width || y >= height)
        return;
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    pixels[i] = c.r;
    pixels[i + 1] = c.g;
    pixels[i + 2] = c.b;
}

std::string Raster::to_ppm() const
{
    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(pixels.begin(), pixels.end());
    return out;
}

namespace {

// 3x5 digit glyphs, one row per entry, bit 2 is the leftmost column.
constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigits{{
    {7, 5, 5, 5, 7},
    {2, 6, 2, 2, 7},
    {7, 1, 7, 4, 7},
    {7, 1, 7, 1, 7},
    {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7},
    {7, 4, 7, 5, 7},
    {7, 1, 1, 1, 1},
    {7, 5, 7, 5, 7},
    {7, 5, 7, 1, 7},
}};

class Canvas
{
  public:
    Canvas(const geometry::ObstacleMap& map, int max_side)
    {
        scale_ = max_side / std::max(map.width, map.height);
        raster_ = Raster(std::max(1, int(std::ceil(map.width * scale_))), std::max(1, int(std::ceil(map.height * scale_))),
                         colors::background);
    }

    Raster take() { return std::move(raster_); }

    int px(double v) const { return int(std::floor(v * scale_)); }

    void rect(const geometry::Rect& r, Rgb c)
    {
        for (int y = px(r.y); y < int(std::ceil(r.bottom() * scale_)); ++y)
            for (int x = px(r.x); x < int(std::ceil(r.right() * scale_)); ++x)
                raster_.set(x, y, c);
    }

    void disc(Point centre, double radius, Rgb c)
    {
        const double r = std::max(2.0, radius * scale_);
        const double cx = centre.x * scale_, cy = centre.y * scale_;
        for (int y = int(std::floor(cy - r)); y <= int(std::ceil(cy + r)); ++y)
            for (int x = int(std::floor(cx - r)); x <= int(std::ceil(cx + r)); ++x)
                if ((x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy) <= r * r)
                    raster_.set(x, y, c);
    }

    void line(Point a, Point b, Rgb c, bool dashed)
    {
        const double ax = a.x * scale_, ay = a.y * scale_, bx = b.x * scale_, by = b.y * scale_;
        const int n = std::max(1, int(std::ceil(std::max(std::abs(bx - ax), std::abs(by - ay)))));
        for (int i = 0; i <= n; ++i) {
            if (dashed && (i / 4) % 2 == 1)
                continue;
            const double f = double(i) / n;
            raster_.set(int(std::floor(ax + f * (bx - ax))), int(std::floor(ay + f * (by - ay))), c);
        }
    }

    void number(Point at, std::size_t value, Rgb c)
    {
        const std::string digits = std::to_string(value);
        int x0 = px(at.x) + 3;
        const int y0 = px(at.y) - 7;
        for (char ch : digits) {
            const auto& glyph = kDigits[static_cast<std::size_t>(ch - '0')];
            for (int row = 0; row < 5; ++row)
                for (int col = 0; col < 3; ++col)
                    if (glyph[static_cast<std::size_t>(row)] & (4 >> col))
                        raster_.set(x0 + col, y0 + row, c);
            x0 += 4;
        }
    }

  private:
    double scale_ = 1.0;
    Raster raster_;
};

} // namespace

Raster render_session(const editverify::EditSession& session, int max_side)
{
    const auto& map = session.map;
    Canvas canvas(map, max_side);
    for (const auto& r : map.unreachable)
        canvas.rect(r, colors::unreachable);
    for (const auto& o : map.obstacles)
        canvas.rect(o.rect, colors::obstacle);

    for (const auto& [id, track] : session.others) {
        const auto& body = session.body(id);
        const auto remaining = geometry::remaining_path(track.path, body, track.offset);
        const auto pts = remaining.polyline();
        for (std::size_t i = 0; i + 1 < pts.size(); ++i)
            canvas.line(pts[i], pts[i + 1], colors::prediction, true);
        canvas.disc(pts.back(), body.radius / 2, colors::goal);
        canvas.disc(pts.front(), body.radius, colors::human);
    }

    const auto& cands = session.candidates.candidates;
    for (std::size_t c = 0; c < cands.size(); ++c) {
        const auto pts = cands[c].path.polyline();
        for (std::size_t i = 0; i + 1 < pts.size(); ++i)
            canvas.line(pts[i], pts[i + 1], candidate_color(c), false);
        if (pts.size() > 1)
            canvas.number(geometry::lerp(pts[0], pts[1], 0.5), c, candidate_color(c));
        for (std::size_t i = 1; i + 1 < pts.size(); ++i)
            canvas.number(pts[i], i, colors::label);
    }
    if (!cands.empty()) {
        const auto& path = cands.front().path;
        const auto& body = session.body(session.target);
        canvas.disc(path.back().pose.position(), body.radius / 2, colors::goal);
        canvas.disc(path.front().pose.position(), body.radius, colors::robot);
    }
    return canvas.take();
}

} // namespace cape::pipeline
