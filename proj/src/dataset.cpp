#include "crackscope/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace crackscope {
namespace {

std::string at_line(std::size_t line, const std::string& what) { return "line " + std::to_string(line) + ": " + what; }

template <typename T>
bool parse_number(std::string_view token, T& out) {
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
    return ec == std::errc{} && ptr == token.data() + token.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        fn(++line_no, text.substr(pos, end - pos));
        pos = end + 1;
    }
}

void append_real(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

}  // namespace

std::vector<LabelRecord> parse_label_file(std::string_view text) {
    std::vector<LabelRecord> labels;
    for_each_line(text, [&](std::size_t line_no, std::string_view line) {
        const auto tokens = split_ws(line);
        if (tokens.empty()) return;
        LabelRecord rec;
        if (!parse_number(tokens[0], rec.class_id) || rec.class_id < 0) {
            fail(ErrorKind::MalformedLabel, at_line(line_no, "class id must be a nonnegative integer"));
        }
        const std::size_t coords = tokens.size() - 1;
        if (coords % 2 != 0) fail(ErrorKind::MalformedLabel, at_line(line_no, "odd number of coordinates"));
        if (coords < 6) fail(ErrorKind::MalformedLabel, at_line(line_no, "polygon needs at least 3 vertices"));
        for (std::size_t i = 1; i < tokens.size(); i += 2) {
            Point2 p;
            if (!parse_number(tokens[i], p.x) || !parse_number(tokens[i + 1], p.y)) {
                fail(ErrorKind::MalformedLabel, at_line(line_no, "bad coordinate"));
            }
            if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
                fail(ErrorKind::OutOfRange, at_line(line_no, "coordinate outside [0,1]"));
            }
            rec.polygon.push_back(p);
        }
        labels.push_back(std::move(rec));
    });
    return labels;
}

std::string format_label_file(std::span<const LabelRecord> labels) {
    std::string out;
    for (const auto& l : labels) {
        out += std::to_string(l.class_id);
        for (const auto& p : l.polygon) {
            out += ' ';
            append_real(out, p.x);
            out += ' ';
            append_real(out, p.y);
        }
        out += '\n';
    }
    return out;
}

DetectionRecord to_detection(const LabelRecord& label, std::string image) {
    DetectionRecord d;
    d.image = std::move(image);
    d.class_id = label.class_id;
    d.score = 1.0;
    d.polygon = label.polygon;
    return d;
}

Raster polygon_to_mask(std::span<const Point2> polygon, std::size_t width, std::size_t height) {
    if (width == 0 || height == 0) fail(ErrorKind::InvalidShape, "polygon_to_mask: extents must be positive");
    Raster out{BinaryMask(height, width), false};

    double twice_area = 0.0;
    for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
        twice_area += polygon[j].x * polygon[i].y - polygon[i].x * polygon[j].y;
    }
    if (polygon.size() < 3 || twice_area == 0.0) {
        out.degenerate = true;
        return out;
    }

    std::vector<Point2> pts(polygon.begin(), polygon.end());
    for (auto& p : pts) {
        p.x *= static_cast<double>(width);
        p.y *= static_cast<double>(height);
    }
    std::vector<double> crossings;
    for (std::size_t r = 0; r < height; ++r) {
        const double y = static_cast<double>(r) + 0.5;
        crossings.clear();
        for (std::size_t i = 0, j = pts.size() - 1; i < pts.size(); j = i++) {
            const auto& a = pts[i];
            const auto& b = pts[j];
            if ((a.y > y) != (b.y > y)) crossings.push_back((b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x);
        }
        if (crossings.empty()) continue;
        std::ranges::sort(crossings);
        for (std::size_t c = 0; c < width; ++c) {
            const double x = static_cast<double>(c) + 0.5;
            // crossings strictly to the right of the pixel center
            const auto right = crossings.end() - std::upper_bound(crossings.begin(), crossings.end(), x);
            if (right % 2 == 1) out.mask.set(r, c);
        }
    }
    return out;
}

// --- PGM ---

GrayImage read_pgm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto skip_space_and_comments = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&](const char* what) {
        skip_space_and_comments();
        std::size_t v = 0, digits = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
            if (++digits > 9) fail(ErrorKind::CorruptImage, std::string("pgm: ") + what + " too large");
        }
        if (digits == 0) fail(ErrorKind::CorruptImage, std::string("pgm: missing ") + what);
        return v;
    };

    if (bytes.size() < 2 || bytes[0] != 'P') fail(ErrorKind::UnsupportedFormat, "not a PGM file");
    if (bytes[1] != '5') fail(ErrorKind::UnsupportedFormat, std::string("unsupported netpbm variant P") + char(bytes[1]));
    pos = 2;
    GrayImage img;
    img.width = read_uint("width");
    img.height = read_uint("height");
    const std::size_t maxval = read_uint("maxval");
    if (maxval == 0 || maxval > 255) fail(ErrorKind::UnsupportedFormat, "pgm: only 8-bit maxval (1..255) is supported");
    if (img.width == 0 || img.height == 0) fail(ErrorKind::CorruptImage, "pgm: zero extent");
    img.maxval = static_cast<int>(maxval);
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail(ErrorKind::CorruptImage, "pgm: malformed header");
    ++pos;
    const std::size_t need = img.width * img.height;
    if (bytes.size() - pos < need) fail(ErrorKind::CorruptImage, "pgm: truncated pixel data");
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return img;
}

std::vector<std::uint8_t> write_pgm(const GrayImage& img) {
    const std::string header =
        "P5\n" + std::to_string(img.width) + ' ' + std::to_string(img.height) + '\n' + std::to_string(img.maxval) + '\n';
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::InvalidImage, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    return {text.begin(), text.end()};
}

GrayImage read_pgm_file(const std::filesystem::path& path) { return read_pgm(read_binary_file(path)); }

// --- predictions ---

std::vector<DetectionRecord> read_predictions(std::string_view text) {
    using nlohmann::json;
    std::vector<DetectionRecord> out;
    for_each_line(text, [&](std::size_t line_no, std::string_view line) {
        if (split_ws(line).empty()) return;
        DetectionRecord rec;
        try {
            const auto j = json::parse(line);
            if (!j.is_object()) throw std::invalid_argument("expected a JSON object");
            rec.image = j.at("image").get<std::string>();
            const auto& cls = j.at("class");
            if (!cls.is_number_integer()) throw std::invalid_argument("class must be an integer");
            rec.class_id = cls.get<int>();
            const auto& score = j.at("score");
            if (!score.is_number()) throw std::invalid_argument("score must be a number");
            rec.score = score.get<double>();
            if (j.contains("polygon")) {
                for (const auto& v : j.at("polygon")) {
                    if (!v.is_array() || v.size() != 2) throw std::invalid_argument("polygon vertices must be [x, y]");
                    rec.polygon.push_back({v[0].get<double>(), v[1].get<double>()});
                }
                if (rec.polygon.size() < 3) throw std::invalid_argument("polygon needs at least 3 vertices");
            }
            if (j.contains("bbox")) {
                const auto& b = j.at("bbox");
                if (!b.is_array() || b.size() != 4) throw std::invalid_argument("bbox must be [cx, cy, w, h]");
                rec.box = BBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
            }
            if (rec.polygon.empty() && !rec.box) throw std::invalid_argument("missing polygon");
        } catch (const std::exception& e) {
            fail(ErrorKind::MalformedPrediction, at_line(line_no, e.what()));
        }
        if (!(rec.score >= 0.0 && rec.score <= 1.0)) fail(ErrorKind::OutOfRange, at_line(line_no, "score outside [0,1]"));
        try {
            rec.validate();
        } catch (const Error& e) {
            fail(e.kind(), at_line(line_no, e.what()));
        }
        out.push_back(std::move(rec));
    });
    return out;
}

std::string format_predictions(std::span<const DetectionRecord> records) {
    using nlohmann::ordered_json;
    std::string out;
    for (const auto& r : records) {
        ordered_json j;
        j["image"] = r.image;
        j["class"] = r.class_id;
        j["score"] = r.score;
        if (!r.polygon.empty()) {
            auto poly = ordered_json::array();
            for (const auto& p : r.polygon) poly.push_back({p.x, p.y});
            j["polygon"] = std::move(poly);
        }
        if (r.box) j["bbox"] = {r.box->cx, r.box->cy, r.box->w, r.box->h};
        out += j.dump();
        out += '\n';
    }
    return out;
}

// --- dataset index ---

DatasetIndex load_dataset_index(const std::filesystem::path& dir, std::size_t default_width,
                                std::size_t default_height) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) fail(ErrorKind::InvalidImage, "not a directory: " + dir.string());
    DatasetIndex index;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        DatasetEntry e;
        e.image_id = entry.path().stem().string();
        e.label_path = entry.path();
        e.width = default_width;
        e.height = default_height;
        auto image = entry.path();
        image.replace_extension(".pgm");
        if (fs::exists(image)) {
            const auto img = read_pgm_file(image);
            e.image_path = image;
            e.width = img.width;
            e.height = img.height;
        }
        index.entries.push_back(std::move(e));
    }
    std::ranges::sort(index.entries, {}, &DatasetEntry::image_id);
    return index;
}

}  // namespace crackscope
