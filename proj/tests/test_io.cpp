#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "cst/io.hpp"

using namespace cst;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() / ("cst_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ImageGrid random_image(std::mt19937_64& rng, std::size_t nx, std::size_t ny) {
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    ImageGrid g(nx, ny, {-1.5, 0.5, -0.25, 2.0});
    for (double& v : g.values()) v = u(rng);
    return g;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::invalid_argument;
}

std::vector<std::uint16_t> pgm_samples(const std::string& bytes, std::size_t count) {
    std::vector<std::uint16_t> out(count);
    const std::size_t start = bytes.size() - 2 * count;
    for (std::size_t k = 0; k < count; ++k)
        out[k] = static_cast<std::uint16_t>((static_cast<unsigned char>(bytes[start + 2 * k]) << 8) |
                                            static_cast<unsigned char>(bytes[start + 2 * k + 1]));
    return out;
}

} // namespace

TEST(Container, ImageRoundTripIsBitExact) {
    TempDir dir;
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 5; ++trial) {
        ImageGrid g = random_image(rng, 64, 64);
        g[0] = 1e-310;
        g[1] = -0.0;
        write_image(dir / "a.img", g, {{"stage", "reconstruction"}});
        const ImageGrid r = read_image(dir / "a.img");
        EXPECT_EQ(r.shape(), g.shape());
        ASSERT_EQ(r.size(), g.size());
        EXPECT_EQ(std::memcmp(r.values().data(), g.values().data(), 8 * g.size()), 0);
        EXPECT_EQ(read_container(dir / "a.img").header["meta"]["stage"], "reconstruction");
    }
}

TEST(Container, SinogramRoundTripIsBitExact) {
    TempDir dir;
    ScanGeometry g{17, 9, -0.7, 1.3, 0.5, 2.5};
    Sinogram b(g);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    for (double& v : b.values()) v = n(rng);
    write_sinogram(dir / "b.sin", b);
    const Sinogram r = read_sinogram(dir / "b.sin");
    EXPECT_EQ(r.geom(), g);
    EXPECT_EQ(r.data(), b.data());
    EXPECT_EQ(peek_kind(dir / "b.sin"), FileKind::sinogram);
}

TEST(Container, LayoutIsMagicLengthHeaderPayload) {
    TempDir dir;
    ImageGrid g(2, 2);
    g[0] = 1.0;
    g[1] = -2.0;
    write_image(dir / "x.img", g);
    const std::string bytes = slurp(dir / "x.img");
    ASSERT_GE(bytes.size(), 12u);
    EXPECT_EQ(bytes.substr(0, 8), "CSTIMG01");
    const std::uint32_t hlen = static_cast<unsigned char>(bytes[8]) | static_cast<unsigned char>(bytes[9]) << 8 |
                               static_cast<unsigned char>(bytes[10]) << 16 |
                               static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[11])) << 24;
    EXPECT_EQ(bytes.size(), 12 + hlen + 32);
    const json h = json::parse(bytes.substr(12, hlen));
    EXPECT_EQ(h["dtype"], "f64le");
    EXPECT_EQ(h["layout"], "row-major");
    EXPECT_EQ(h["nx"], 2);
    EXPECT_EQ(h["count"], 4);
    // 1.0 little-endian is 00 .. 00 f0 3f
    EXPECT_EQ(static_cast<unsigned char>(bytes[12 + hlen + 7]), 0x3f);
    EXPECT_EQ(static_cast<unsigned char>(bytes[12 + hlen + 6]), 0xf0);
}

TEST(Container, DistinctErrors) {
    TempDir dir;
    std::mt19937_64 rng(3);
    write_image(dir / "good.img", random_image(rng, 8, 8));
    const std::string good = slurp(dir / "good.img");

    std::string bad = good;
    bad[3] = 'X';
    spit(dir / "magic.img", bad);
    EXPECT_EQ(code_of([&] { read_image(dir / "magic.img"); }), ErrorCode::io_magic_mismatch);

    spit(dir / "short.img", good.substr(0, good.size() - 8));
    EXPECT_EQ(code_of([&] { read_image(dir / "short.img"); }), ErrorCode::io_truncated);
    spit(dir / "tiny.img", good.substr(0, 6));
    EXPECT_EQ(code_of([&] { read_image(dir / "tiny.img"); }), ErrorCode::io_truncated);

    spit(dir / "long.img", good + std::string(8, '\0'));
    EXPECT_EQ(code_of([&] { read_image(dir / "long.img"); }), ErrorCode::io_dimension_mismatch);

    // header claims 9 x 8 while count and payload say 64
    Container c = read_container(dir / "good.img");
    c.header["nx"] = 9;
    spit(dir / "dims.img", detail::encode(image_magic, c.header, c.payload));
    EXPECT_EQ(code_of([&] { read_image(dir / "dims.img"); }), ErrorCode::io_dimension_mismatch);

    std::string garbled = good;
    garbled[12] = '#';
    spit(dir / "header.img", garbled);
    EXPECT_EQ(code_of([&] { read_image(dir / "header.img"); }), ErrorCode::io_header);

    EXPECT_EQ(code_of([&] { read_image(dir / "absent.img"); }), ErrorCode::io_missing_input);
    EXPECT_EQ(code_of([&] { read_sinogram(dir / "good.img"); }), ErrorCode::io_magic_mismatch);
}

TEST(Container, WriteIsAtomicAndReportsFailure) {
    TempDir dir;
    write_image(dir / "sub/dir/a.img", ImageGrid(4, 4, {}, 2.0));
    EXPECT_TRUE(fs::exists(dir / "sub/dir/a.img"));
    EXPECT_FALSE(fs::exists(dir / "sub/dir/a.img.tmp"));
    spit(dir / "plain", "x");
    EXPECT_EQ(code_of([&] { write_image(dir / "plain/child.img", ImageGrid(2, 2)); }), ErrorCode::io_write);
}

TEST(Pgm, ConstantImageIsUniform) {
    TempDir dir;
    export_pgm(dir / "c.pgm", ImageGrid(5, 3, {}, 4.2));
    const std::string bytes = slurp(dir / "c.pgm");
    EXPECT_EQ(bytes.substr(0, 13), "P5\n5 3\n65535\n");
    const auto px = pgm_samples(bytes, 15);
    for (auto v : px) EXPECT_EQ(v, px.front());
}

TEST(Pgm, AutoRangeSpansFullScale) {
    TempDir dir;
    ImageGrid g(3, 2);
    g(0, 0) = -2.0;
    g(1, 0) = 0.0;
    g(2, 1) = 6.0;
    export_pgm(dir / "a.pgm", g);
    const auto px = pgm_samples(slurp(dir / "a.pgm"), 6);
    // row 0 of the grid is the bottom row of the picture
    EXPECT_EQ(px[3], 0);
    EXPECT_EQ(px[2], 65535);
    EXPECT_EQ(px[4], std::lround(2.0 / 8.0 * 65535.0));
}

TEST(Pgm, FixedRangeClamps) {
    TempDir dir;
    ImageGrid g(4, 2);
    g[0] = -5.0;
    g[1] = 0.25;
    g[2] = 0.75;
    g[3] = 9.0;
    export_pgm(dir / "f.pgm", g, std::pair{0.0, 1.0});
    // grid row 0 is the second picture row
    const auto px = pgm_samples(slurp(dir / "f.pgm"), 8);
    EXPECT_EQ(px[4], 0);
    EXPECT_EQ(px[5], std::lround(0.25 * 65535.0));
    EXPECT_EQ(px[6], std::lround(0.75 * 65535.0));
    EXPECT_EQ(px[7], 65535);
    EXPECT_EQ(px[0], 0);
}

TEST(Csv, TwoColumnRoundTrip) {
    TempDir dir;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    Table t;
    std::vector<double> ne(50), res(50);
    for (std::size_t k = 0; k < ne.size(); ++k) {
        ne[k] = u(rng);
        res[k] = std::exp(-30.0 * u(rng));
    }
    t.add("ne", ne);
    t.add("residual", res);
    export_csv(dir / "t.csv", t);
    const Table r = read_csv(dir / "t.csv");
    EXPECT_EQ(r.names, t.names);
    EXPECT_EQ(r.column("ne"), ne);
    EXPECT_EQ(r.column("residual"), res);
}

TEST(Csv, EmptyTableIsHeaderOnly) {
    Table t;
    t.add("a", {});
    t.add("b, quoted \"name\"", {});
    const std::string text = format_csv(t);
    EXPECT_EQ(text, "a,\"b, quoted \"\"name\"\"\"\r\n");
    EXPECT_EQ(parse_csv(text).names, t.names);
}

TEST(Csv, ExtremeValuesSurvive) {
    Table t;
    t.add("x", {1e-300, -1e-300, 1.7976931348623157e308, 0.1, 1.0 / 3.0, -0.0});
    const Table r = parse_csv(format_csv(t));
    ASSERT_EQ(r.rows(), 6u);
    for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(std::bit_cast<std::uint64_t>(r.columns[0][k]),
                                                  std::bit_cast<std::uint64_t>(t.columns[0][k]));
}

TEST(Csv, RejectsRaggedTables) {
    Table t;
    t.add("a", {1.0, 2.0});
    t.add("b", {1.0});
    EXPECT_THROW(format_csv(t), Error);
    EXPECT_THROW(parse_csv("a,b\r\n1\r\n"), Error);
    EXPECT_THROW(parse_csv("a\r\nnope\r\n"), Error);
}

TEST(JsonForms, PhantomSpecRoundTrip) {
    for (const char* name : {"non_convex", "elliptic_annulus", "square", "disk", "gaussian"}) {
        const PhantomSpec p = builtin_phantom(name);
        const json j = p;
        const PhantomSpec q = j.get<PhantomSpec>();
        EXPECT_EQ(json(q), j) << name;
    }
    PhantomSpec poly;
    poly.name = "tri";
    poly.shapes = {{Polygon{{{0.0, 0.0}, {0.5, 0.0}, {0.0, 0.5}}}, false}};
    poly.amplitude.coeffs = {1.0, 0.1, -0.2, 0.0, 0.0, 0.05};
    poly.blobs = {Blob{{0.1, 0.1}, 0.2, -0.5, BlobProfile::bump, 0.9}};
    EXPECT_EQ(json(json(poly).get<PhantomSpec>()), json(poly));
}

TEST(JsonForms, PhysicsAndGeometryRoundTrip) {
    PhysicsParams p;
    p.energy = 0.662;
    p.a = 0.3;
    p.lambda_mode = LambdaMode::klein_nishina;
    const PhysicsParams q = json(p).get<PhysicsParams>();
    EXPECT_EQ(json(q), json(p));
    const ScanGeometry g{100, 90, -1.0, 1.0, 0.0, 3.0};
    EXPECT_EQ(json(g).get<ScanGeometry>(), g);
}

TEST(JsonForms, MissingKeysTakeDefaultsAndBadValuesFail) {
    EXPECT_EQ(parse_json<ScanGeometry>("{}"), ScanGeometry{});
    EXPECT_EQ(parse_json<PhysicsParams>(R"({"energy": 2.0})").energy, 2.0);
    EXPECT_EQ(code_of([] { parse_json<PhysicsParams>(R"({"lambda_mode": "magic"})"); }), ErrorCode::io_header);
    EXPECT_EQ(code_of([] { parse_json<PhantomSpec>(R"({"shapes": [{"type": "hexagon"}]})"); }), ErrorCode::io_header);
    EXPECT_EQ(code_of([] { parse_json<ScanGeometry>(R"({"ns": "many"})"); }), ErrorCode::io_header);
    EXPECT_EQ(code_of([] { parse_json<ScanGeometry>("{"); }), ErrorCode::io_header);
}

TEST(JsonForms, KernelSpecRoundTrip) {
    for (const KernelSpec& k : {KernelSpec::delta(), KernelSpec::disk(0.03), KernelSpec::gaussian(0.015)}) {
        const KernelSpec r = json(k).get<KernelSpec>();
        EXPECT_EQ(json(r), json(k));
    }
    EXPECT_THROW(parse_json<KernelSpec>(R"({"kind": "box"})"), Error);
}
