#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cst/error.hpp"
#include "cst/grid.hpp"
#include "cst/phantom.hpp"
#include "cst/physics.hpp"
#include "cst/raytransforms.hpp"

namespace cst {

using json = nlohmann::json;

inline constexpr const char* tool_version = "1.0.0";

// ---------------------------------------------------------------------------
// JSON forms of the configuration types

inline void to_json(json& j, const Point2& p) { j = json::array({p.x, p.y}); }
inline void from_json(const json& j, Point2& p) {
    if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::io_header, "point must be [x, y]");
    p = {j.at(0).get<double>(), j.at(1).get<double>()};
}

inline void to_json(json& j, const Bounds& b) {
    j = {{"xmin", b.xmin}, {"xmax", b.xmax}, {"ymin", b.ymin}, {"ymax", b.ymax}};
}
inline void from_json(const json& j, Bounds& b) {
    const Bounds d;
    b = {j.value("xmin", d.xmin), j.value("xmax", d.xmax), j.value("ymin", d.ymin), j.value("ymax", d.ymax)};
}

inline void to_json(json& j, const ScanGeometry& g) {
    j = {{"ns", g.ns}, {"ntheta", g.ntheta}, {"smin", g.smin}, {"smax", g.smax},
         {"thetamin", g.thetamin}, {"thetamax", g.thetamax}};
}
inline void from_json(const json& j, ScanGeometry& g) {
    const ScanGeometry d;
    g.ns = j.value("ns", d.ns);
    g.ntheta = j.value("ntheta", d.ntheta);
    g.smin = j.value("smin", d.smin);
    g.smax = j.value("smax", d.smax);
    g.thetamin = j.value("thetamin", d.thetamin);
    g.thetamax = j.value("thetamax", d.thetamax);
}

inline void to_json(json& j, const PhysicsParams& p) {
    j = {{"energy", p.energy}, {"rest_energy", p.rest_energy}, {"psi", p.psi}, {"a", p.a}, {"b", p.b},
         {"intensity", p.intensity},
         {"lambda_mode", p.lambda_mode == LambdaMode::constant ? "constant" : "klein_nishina"},
         {"lambda", p.lambda_value}};
}
inline void from_json(const json& j, PhysicsParams& p) {
    const PhysicsParams d;
    p.energy = j.value("energy", d.energy);
    p.rest_energy = j.value("rest_energy", d.rest_energy);
    p.psi = j.value("psi", d.psi);
    p.a = j.value("a", d.a);
    p.b = j.value("b", d.b);
    p.intensity = j.value("intensity", d.intensity);
    const std::string mode = j.value("lambda_mode", std::string("constant"));
    if (mode == "constant") p.lambda_mode = LambdaMode::constant;
    else if (mode == "klein_nishina") p.lambda_mode = LambdaMode::klein_nishina;
    else throw Error(ErrorCode::io_header, "unknown lambda_mode '" + mode + "'");
    p.lambda_value = j.value("lambda", d.lambda_value);
}

inline void to_json(json& j, const KernelSpec& k) {
    const char* kind = k.kind == KernelSpec::Kind::delta ? "delta" : k.kind == KernelSpec::Kind::disk ? "disk" : "gaussian";
    j = {{"kind", kind}, {"radius", k.radius}, {"sigma", k.sigma}, {"scale", k.scale}};
}
inline void from_json(const json& j, KernelSpec& k) {
    const KernelSpec d;
    const std::string kind = j.value("kind", std::string("disk"));
    if (kind == "delta") k.kind = KernelSpec::Kind::delta;
    else if (kind == "disk") k.kind = KernelSpec::Kind::disk;
    else if (kind == "gaussian") k.kind = KernelSpec::Kind::gaussian;
    else throw Error(ErrorCode::io_header, "unknown kernel kind '" + kind + "'");
    k.radius = j.value("radius", d.radius);
    k.sigma = j.value("sigma", d.sigma);
    k.scale = j.value("scale", d.scale);
}

inline void to_json(json& j, const Shape& s) {
    std::visit(
        [&](const auto& g) {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, Disk>) {
                j = {{"type", "disk"}, {"center", g.center}, {"radius", g.radius}};
            } else if constexpr (std::is_same_v<T, Ellipse>) {
                j = {{"type", "ellipse"}, {"center", g.center}, {"semi_x", g.semi_x}, {"semi_y", g.semi_y},
                     {"angle", g.angle}};
            } else if constexpr (std::is_same_v<T, Rectangle>) {
                j = {{"type", "rectangle"}, {"center", g.center}, {"half_width", g.half_width},
                     {"half_height", g.half_height}, {"angle", g.angle}};
            } else {
                j = {{"type", "polygon"}, {"vertices", g.vertices}};
            }
        },
        s.geometry);
    j["subtract"] = s.subtract;
}
inline void from_json(const json& j, Shape& s) {
    const std::string type = j.at("type").get<std::string>();
    const Point2 c = j.contains("center") ? j.at("center").get<Point2>() : Point2{};
    if (type == "disk") {
        s.geometry = Disk{c, j.value("radius", 0.5)};
    } else if (type == "ellipse") {
        s.geometry = Ellipse{c, j.value("semi_x", 0.5), j.value("semi_y", 0.5), j.value("angle", 0.0)};
    } else if (type == "rectangle") {
        s.geometry = Rectangle{c, j.value("half_width", 0.5), j.value("half_height", 0.5), j.value("angle", 0.0)};
    } else if (type == "polygon") {
        s.geometry = Polygon{j.at("vertices").get<std::vector<Point2>>()};
    } else {
        throw Error(ErrorCode::io_header, "unknown shape type '" + type + "'");
    }
    s.subtract = j.value("subtract", false);
}

inline void to_json(json& j, const Blob& b) {
    j = {{"center", b.center}, {"width", b.width}, {"amplitude", b.amplitude},
         {"profile", b.profile == BlobProfile::gaussian ? "gaussian" : "bump"}, {"cutoff", b.cutoff}};
}
inline void from_json(const json& j, Blob& b) {
    const Blob d;
    b.center = j.contains("center") ? j.at("center").get<Point2>() : Point2{};
    b.width = j.value("width", d.width);
    b.amplitude = j.value("amplitude", d.amplitude);
    const std::string prof = j.value("profile", std::string("gaussian"));
    if (prof == "gaussian") b.profile = BlobProfile::gaussian;
    else if (prof == "bump") b.profile = BlobProfile::bump;
    else throw Error(ErrorCode::io_header, "unknown blob profile '" + prof + "'");
    b.cutoff = j.value("cutoff", d.cutoff);
}

inline void to_json(json& j, const PhantomSpec& p) {
    j = {{"name", p.name}, {"shapes", p.shapes}, {"amplitude", p.amplitude.coeffs}, {"positive", p.positive},
         {"blobs", p.blobs}};
}
inline void from_json(const json& j, PhantomSpec& p) {
    p = {};
    p.name = j.value("name", std::string());
    if (j.contains("shapes")) p.shapes = j.at("shapes").get<std::vector<Shape>>();
    if (j.contains("amplitude")) p.amplitude.coeffs = j.at("amplitude").get<std::array<double, 6>>();
    p.positive = j.value("positive", true);
    if (j.contains("blobs")) p.blobs = j.at("blobs").get<std::vector<Blob>>();
}

/// Parses JSON text into T, mapping parse and type errors to io_header.
template <class T>
T parse_json(const std::string& text) {
    try {
        return json::parse(text).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::io_header, e.what());
    }
}

// ---------------------------------------------------------------------------
// Files

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec))
        throw Error(ErrorCode::io_missing_input, "no such file: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_missing_input, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace detail

/// Writes `bytes` to a temporary sibling and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    std::error_code ec;
    const auto parent = path.parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::io_write, "cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::filesystem::remove(tmp, ec);
            throw Error(ErrorCode::io_write, "short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorCode::io_write, "cannot rename onto " + path.string());
    }
}

inline json read_json_file(const std::filesystem::path& path) {
    try {
        return json::parse(detail::read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::io_header, path.string() + ": " + e.what());
    }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Binary container: 8-byte magic, u32 LE header length, JSON header, f64 LE payload

enum class FileKind { image, sinogram };

inline constexpr std::string_view image_magic = "CSTIMG01";
inline constexpr std::string_view sinogram_magic = "CSTSIN01";

struct Container {
    FileKind kind = FileKind::image;
    json header;
    std::vector<double> payload;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

inline std::uint32_t get_u32(const char* p) {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[k])) << (8 * k);
    return v;
}

inline void put_f64(std::string& out, double d) {
    auto u = std::bit_cast<std::uint64_t>(d);
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((u >> (8 * k)) & 0xffu));
}

inline double get_f64(const char* p) {
    std::uint64_t u = 0;
    for (int k = 0; k < 8; ++k) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[k])) << (8 * k);
    return std::bit_cast<double>(u);
}

inline std::string encode(std::string_view magic, const json& header, std::span<const double> payload) {
    const std::string h = header.dump();
    std::string out;
    out.reserve(12 + h.size() + 8 * payload.size());
    out.append(magic);
    put_u32(out, static_cast<std::uint32_t>(h.size()));
    out.append(h);
    for (double d : payload) put_f64(out, d);
    return out;
}

inline std::size_t header_size(const json& h, const char* key) {
    if (!h.contains(key) || !h.at(key).is_number_unsigned())
        throw Error(ErrorCode::io_header, std::string("header field '") + key + "' missing or not a count");
    return h.at(key).get<std::size_t>();
}

} // namespace detail

/// Decodes a container, checking the magic and that the declared element count
/// matches the payload length.
inline Container decode_container(std::string_view bytes, const std::string& name = "<memory>") {
    if (bytes.size() < 12) throw Error(ErrorCode::io_truncated, name + ": file shorter than the fixed preamble");
    Container c;
    const std::string_view magic = bytes.substr(0, 8);
    if (magic == image_magic) c.kind = FileKind::image;
    else if (magic == sinogram_magic) c.kind = FileKind::sinogram;
    else throw Error(ErrorCode::io_magic_mismatch, name + ": unrecognised magic");
    const std::uint32_t hlen = detail::get_u32(bytes.data() + 8);
    if (bytes.size() - 12 < hlen) throw Error(ErrorCode::io_truncated, name + ": header runs past end of file");
    try {
        c.header = json::parse(bytes.substr(12, hlen));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::io_header, name + ": " + e.what());
    }
    if (!c.header.is_object()) throw Error(ErrorCode::io_header, name + ": header is not a JSON object");
    if (c.header.value("dtype", std::string()) != "f64le" || c.header.value("layout", std::string()) != "row-major")
        throw Error(ErrorCode::io_header, name + ": unsupported dtype or layout");
    const std::size_t count = detail::header_size(c.header, "count");
    const std::size_t have = bytes.size() - 12 - hlen;
    if (have < 8 * count) throw Error(ErrorCode::io_truncated, name + ": payload shorter than declared");
    if (have != 8 * count) throw Error(ErrorCode::io_dimension_mismatch, name + ": payload longer than declared");
    c.payload.resize(count);
    const char* p = bytes.data() + 12 + hlen;
    for (std::size_t k = 0; k < count; ++k) c.payload[k] = detail::get_f64(p + 8 * k);
    return c;
}

inline Container read_container(const std::filesystem::path& path) {
    return decode_container(detail::read_file(path), path.string());
}

/// Kind of a container file, from its magic alone.
inline FileKind peek_kind(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_missing_input, "no such file: " + path.string());
    char magic[8] = {};
    in.read(magic, 8);
    const std::string_view m(magic, static_cast<std::size_t>(in.gcount()));
    if (m == image_magic) return FileKind::image;
    if (m == sinogram_magic) return FileKind::sinogram;
    throw Error(ErrorCode::io_magic_mismatch, path.string() + ": unrecognised magic");
}

/// Header for an image; `meta` is stored under "meta" (stage name, provenance).
inline json image_header(const ImageGrid& img, const json& meta = json::object()) {
    return {{"nx", img.nx()}, {"ny", img.ny()}, {"bounds", img.bounds()}, {"count", img.size()},
            {"dtype", "f64le"}, {"layout", "row-major"},
            {"created", {{"tool", "cst"}, {"version", tool_version}}}, {"meta", meta}};
}

inline json sinogram_header(const Sinogram& b, const json& meta = json::object()) {
    return {{"geometry", b.geom()}, {"count", b.size()}, {"dtype", "f64le"}, {"layout", "row-major"},
            {"created", {{"tool", "cst"}, {"version", tool_version}}}, {"meta", meta}};
}

inline void write_image(const std::filesystem::path& path, const ImageGrid& img, const json& meta = json::object()) {
    write_file_atomic(path, detail::encode(image_magic, image_header(img, meta), img.values()));
}

inline void write_sinogram(const std::filesystem::path& path, const Sinogram& b, const json& meta = json::object()) {
    write_file_atomic(path, detail::encode(sinogram_magic, sinogram_header(b, meta), b.values()));
}

inline ImageGrid image_from_container(Container c, const std::string& name = "<memory>") {
    if (c.kind != FileKind::image) throw Error(ErrorCode::io_magic_mismatch, name + ": not an image file");
    const std::size_t nx = detail::header_size(c.header, "nx"), ny = detail::header_size(c.header, "ny");
    if (nx * ny != c.payload.size())
        throw Error(ErrorCode::io_dimension_mismatch, name + ": nx * ny does not match the element count");
    Bounds b;
    try {
        b = c.header.value("bounds", json(Bounds{})).get<Bounds>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::io_header, name + ": " + e.what());
    }
    try {
        return ImageGrid(nx, ny, b, std::move(c.payload));
    } catch (const Error& e) {
        throw Error(ErrorCode::io_header, name + ": " + e.what());
    }
}

inline Sinogram sinogram_from_container(Container c, const std::string& name = "<memory>") {
    if (c.kind != FileKind::sinogram) throw Error(ErrorCode::io_magic_mismatch, name + ": not a sinogram file");
    ScanGeometry g;
    try {
        g = c.header.at("geometry").get<ScanGeometry>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::io_header, name + ": " + e.what());
    }
    if (g.ns * g.ntheta != c.payload.size())
        throw Error(ErrorCode::io_dimension_mismatch, name + ": ns * ntheta does not match the element count");
    try {
        return Sinogram(g, std::move(c.payload));
    } catch (const Error& e) {
        throw Error(ErrorCode::io_header, name + ": " + e.what());
    }
}

inline ImageGrid read_image(const std::filesystem::path& path) {
    return image_from_container(read_container(path), path.string());
}

inline Sinogram read_sinogram(const std::filesystem::path& path) {
    return sinogram_from_container(read_container(path), path.string());
}

// ---------------------------------------------------------------------------
// Exports

/// 16-bit binary PGM (big-endian samples, as the format requires). Rows run
/// from the top of the picture, so `flip_rows` puts row 0 of the data at the
/// bottom. Without a range the data minimum maps to 0 and the maximum to 65535;
/// with one, values are clamped to it.
inline void export_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t width,
                       std::size_t height, std::optional<std::pair<double, double>> range = std::nullopt,
                       bool flip_rows = true) {
    require(values.size() == width * height && width > 0 && height > 0, "PGM dimensions do not match the data");
    double lo, hi;
    if (range) {
        std::tie(lo, hi) = *range;
        require(std::isfinite(lo) && std::isfinite(hi) && hi >= lo, "PGM range must be finite with hi >= lo");
    } else {
        const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
        lo = *mn;
        hi = *mx;
    }
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
    out.reserve(out.size() + 2 * values.size());
    for (std::size_t r = 0; r < height; ++r) {
        const std::size_t row = flip_rows ? height - 1 - r : r;
        for (std::size_t c = 0; c < width; ++c) {
            const double v = values[row * width + c];
            double t = hi > lo ? (std::clamp(v, lo, hi) - lo) / (hi - lo) : 0.0;
            if (!std::isfinite(t)) t = 0.0;
            const auto q = static_cast<std::uint16_t>(std::lround(t * 65535.0));
            out.push_back(static_cast<char>(q >> 8));
            out.push_back(static_cast<char>(q & 0xffu));
        }
    }
    write_file_atomic(path, out);
}

inline void export_pgm(const std::filesystem::path& path, const ImageGrid& img,
                       std::optional<std::pair<double, double>> range = std::nullopt) {
    export_pgm(path, img.values(), img.nx(), img.ny(), range, true);
}

/// Sinogram picture with s across and theta down.
inline void export_pgm(const std::filesystem::path& path, const Sinogram& b,
                       std::optional<std::pair<double, double>> range = std::nullopt) {
    export_pgm(path, b.values(), b.ns(), b.ntheta(), range, false);
}

/// Named columns of equal length.
struct Table {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;

    void add(std::string name, std::vector<double> col) {
        names.push_back(std::move(name));
        columns.push_back(std::move(col));
    }
    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
    const std::vector<double>& column(std::string_view name) const {
        for (std::size_t k = 0; k < names.size(); ++k)
            if (names[k] == name) return columns[k];
        throw Error(ErrorCode::invalid_argument, "no column '" + std::string(name) + "'");
    }
};

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q.push_back('"');
        q.push_back(ch);
    }
    return q + "\"";
}

inline std::string format_double(double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return {buf, static_cast<std::size_t>(n)};
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char ch = line[k];
        if (quoted) {
            if (ch == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                out.back().push_back('"');
                ++k;
            } else if (ch == '"') {
                quoted = false;
            } else {
                out.back().push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.emplace_back();
        } else {
            out.back().push_back(ch);
        }
    }
    if (quoted) throw Error(ErrorCode::io_header, "unterminated quote in CSV");
    return out;
}

} // namespace detail

/// CSV with a header row, CRLF line ends and 17 significant digits per value.
inline std::string format_csv(const Table& t) {
    require(t.names.size() == t.columns.size(), "table names and columns differ in count");
    for (const auto& c : t.columns) require(c.size() == t.rows(), "table columns differ in length");
    std::string out;
    for (std::size_t k = 0; k < t.names.size(); ++k) out += (k ? "," : "") + detail::csv_field(t.names[k]);
    out += "\r\n";
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t k = 0; k < t.columns.size(); ++k) out += (k ? "," : "") + detail::format_double(t.columns[k][r]);
        out += "\r\n";
    }
    return out;
}

inline void export_csv(const std::filesystem::path& path, const Table& t) { write_file_atomic(path, format_csv(t)); }

inline Table parse_csv(std::string_view text) {
    Table t;
    std::size_t row = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (row++ == 0) {
            for (auto& f : fields) t.add(std::move(f), {});
            continue;
        }
        if (fields.size() != t.names.size()) throw Error(ErrorCode::io_dimension_mismatch, "CSV row has the wrong field count");
        for (std::size_t k = 0; k < fields.size(); ++k) {
            double v = 0.0;
            const auto* b = fields[k].data();
            const auto [p, ec] = std::from_chars(b, b + fields[k].size(), v);
            if (ec != std::errc() || p != b + fields[k].size())
                throw Error(ErrorCode::io_header, "CSV field '" + fields[k] + "' is not a number");
            t.columns[k].push_back(v);
        }
    }
    return t;
}

inline Table read_csv(const std::filesystem::path& path) { return parse_csv(detail::read_file(path)); }

} // namespace cst
