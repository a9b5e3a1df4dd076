#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "s3d/io.hpp"

using namespace s3d;
using Tf = Tensor<float>;
using Td = Tensor<double>;
namespace fs = std::filesystem;

namespace {
struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("s3d_io_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};
} // namespace

TEST_CASE("s3dt round trip preserves dims and payload") {
    TempDir tmp;
    Rng rng(1);
    std::vector<float> v(2 * 3 * 4);
    for (auto& x : v) x = float(rng.uniform(-10, 10));
    Tf t = Tf::from_data({2, 3, 4}, v);
    io::save_tensor(tmp.file("t.s3dt"), t);
    Tf back = io::load_tensor<float>(tmp.file("t.s3dt"));
    REQUIRE(back.dims() == t.dims());
    REQUIRE(std::memcmp(back.data().data(), t.data().data(), v.size() * sizeof(float)) == 0);
}

TEST_CASE("s3dt header layout is bit-exact") {
    Tf t = Tf::from_data({2}, {1.0f, -2.0f});
    std::string buf = io::encode_tensor(t);
    REQUIRE(buf.substr(0, 4) == "S3DT");
    REQUIRE(buf[4] == 0); // float32 code
    REQUIRE(buf[5] == 1); // rank
    REQUIRE(static_cast<unsigned char>(buf[6]) == 2); // dim, little-endian
    REQUIRE(buf[7] == 0);
    REQUIRE(buf.size() == 6 + 4 + 2 * sizeof(float));

    Td d = Td::from_data({1}, {0.5});
    REQUIRE(io::encode_tensor(d)[4] == 1); // float64 code
}

TEST_CASE("truncated payload raises a format error naming the path") {
    TempDir tmp;
    Tf t = Tf::from_data({4}, {1, 2, 3, 4});
    std::string buf = io::encode_tensor(t);
    buf.resize(buf.size() - 3);
    io::detail::write_file(tmp.file("cut.s3dt"), buf);
    REQUIRE_THROWS_WITH(io::load_tensor<float>(tmp.file("cut.s3dt")),
                        Catch::Matchers::ContainsSubstring("cut.s3dt"));
}

TEST_CASE("bad magic raises a format error") {
    TempDir tmp;
    io::detail::write_file(tmp.file("junk.s3dt"), "NOPE....");
    REQUIRE_THROWS_AS(io::load_tensor<float>(tmp.file("junk.s3dt")), FormatError);
}

TEST_CASE("checkpoint round trip preserves names, order, payloads") {
    TempDir tmp;
    std::vector<std::pair<std::string, Tf>> recs = {
        {"enc/w0", Tf::from_data({2, 2}, {1, 2, 3, 4})},
        {"enc/b0", Tf::from_data({2}, {-1, 1})},
        {"head/w", Tf::from_data({1, 3}, {9, 8, 7})},
    };
    io::save_checkpoint(tmp.file("m.ckpt"), recs);
    auto back = io::load_checkpoint<float>(tmp.file("m.ckpt"));
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        REQUIRE(back[i].first == recs[i].first);
        REQUIRE(back[i].second.dims() == recs[i].second.dims());
        REQUIRE(back[i].second.data() == recs[i].second.data());
    }
}

TEST_CASE("ppm round trip within quantization") {
    TempDir tmp;
    Rng rng(2);
    std::vector<float> v(3 * 5 * 6);
    for (auto& x : v) x = float(rng.uniform(0, 1));
    Tf img = Tf::from_data({3, 5, 6}, v);
    io::write_ppm(tmp.file("img.ppm"), img);
    Tf back = io::read_ppm<float>(tmp.file("img.ppm"));
    REQUIRE(back.dims() == img.dims());
    for (std::size_t i = 0; i < img.size(); ++i)
        REQUIRE(std::abs(back[i] - img[i]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("pbm mask round trip is exact") {
    TempDir tmp;
    std::vector<float> m(7 * 9, 0.0f);
    for (std::size_t i = 0; i < m.size(); i += 3) m[i] = 1.0f;
    Tf mask = Tf::from_data({7, 9}, m);
    io::write_pbm(tmp.file("m.pbm"), mask);
    Tf back = io::read_pbm<float>(tmp.file("m.pbm"));
    REQUIRE(back.data() == mask.data());
}

TEST_CASE("identical tensors produce byte-identical files") {
    TempDir tmp;
    Tf t = Tf::from_data({3}, {0.25f, -1.5f, 3.75f});
    io::save_tensor(tmp.file("a.s3dt"), t);
    io::save_tensor(tmp.file("b.s3dt"), t);
    REQUIRE(io::detail::read_file(tmp.file("a.s3dt")) ==
            io::detail::read_file(tmp.file("b.s3dt")));
}
