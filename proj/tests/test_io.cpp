#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "parc/io.hpp"
#include "parc/model.hpp"
#include "parc/rng.hpp"

using namespace parc;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir() {
    static const std::string dir = [] {
        std::string d = (fs::temp_directory_path() / "parc_test_io").string();
        fs::remove_all(d);
        io::ensure_dir(d);
        return d;
    }();
    return dir;
}

std::string tmp(const std::string& name) { return io::join_path(tmp_dir(), name); }

Trajectory tiny_trajectory(int h = 4, int w = 5, int steps = 3) {
    GridSpec g = centered_grid(h, w, 0.25, "cm");
    Trajectory tr;
    tr.dt = 0.02;
    Rng rng(123);
    for (int k = 0; k <= steps; ++k) {
        Snapshot s;
        s.t = 0.1 + k * 0.02;
        s.ux = Field(g);
        s.uy = Field(g);
        Field T(g), mu(g);
        for (auto& v : s.ux.values) v = rng.uniform(-1, 1);
        for (auto& v : s.uy.values) v = rng.uniform(-1, 1);
        for (auto& v : T.values) v = rng.uniform(300, 900);
        for (auto& v : mu.values) v = rng.uniform(0, 1);
        s.state = {T, mu};
        s.state_names = {"T", "mu"};
        tr.snaps.push_back(std::move(s));
    }
    return tr;
}

void corrupt_byte(const std::string& path, size_t offset, char value) {
    std::string bytes = io::read_text_file(path);
    bytes[offset] = value;
    io::write_text_file(path, bytes);
}

}  // namespace

TEST_CASE("fmt17/parse_double round trip is bitwise exact") {
    for (double v : {0.1, 1.0 / 3.0, 6.0 / 64.0, 0.905, -2.5e-300, 9.109e30, 1e-308,
                     123456789.123456789, 0.0}) {
        const std::string s = io::fmt17(v);
        const double back = io::parse_double(s);
        CHECK(std::memcmp(&back, &v, sizeof v) == 0);
    }
    CHECK_THROWS_AS(io::parse_double(""), ValidationError);
    CHECK_THROWS_AS(io::parse_double("1.5x"), ValidationError);
    CHECK_THROWS_AS(io::parse_double("one"), ValidationError);
}

TEST_CASE("snapshot file round trip and byte stability") {
    Trajectory tr = tiny_trajectory();
    const std::string p1 = tmp("traj_a.fld");
    io::write_snapshot_file(tr, p1);
    io::check_snapshot_file(p1);

    Trajectory back = io::read_snapshot_file(p1);
    REQUIRE(back.size() == tr.size());
    CHECK(back.dt == tr.dt);
    CHECK(back.snaps[0].t == tr.snaps[0].t);
    CHECK(back.snaps[0].state_names == tr.snaps[0].state_names);
    CHECK(back.snaps[0].grid().dx == tr.snaps[0].grid().dx);
    // Payload is float32, so the first write quantizes...
    for (int k = 0; k < tr.size(); ++k)
        for (int c = 0; c < 4; ++c)
            for (size_t i = 0; i < back.snaps[0].ux.values.size(); ++i)
                CHECK(back.snaps[static_cast<size_t>(k)].channel(c).values[i] ==
                      static_cast<double>(
                          static_cast<float>(tr.snaps[static_cast<size_t>(k)].channel(c).values[i])));

    // ...and every later rewrite is byte-identical.
    const std::string p2 = tmp("traj_b.fld");
    io::write_snapshot_file(back, p2);
    CHECK(io::read_text_file(p1) == io::read_text_file(p2));
}

TEST_CASE("snapshot file: distinct error types for distinct failures") {
    Trajectory tr = tiny_trajectory();
    const std::string good = tmp("traj_good.fld");
    io::write_snapshot_file(tr, good);
    const std::string bytes = io::read_text_file(good);

    const std::string bad = tmp("traj_bad.fld");

    io::write_text_file(bad, bytes);
    corrupt_byte(bad, 0, 'X');
    CHECK_THROWS_AS(io::read_snapshot_file(bad), BadMagicError);

    io::write_text_file(bad, bytes);
    corrupt_byte(bad, 8, 9);  // version field (little-endian u32 after magic)
    CHECK_THROWS_AS(io::read_snapshot_file(bad), VersionMismatchError);

    io::write_text_file(bad, bytes.substr(0, bytes.size() - 7));
    CHECK_THROWS_AS(io::read_snapshot_file(bad), TruncatedFileError);

    io::write_text_file(bad, bytes + std::string(4, '\0'));
    CHECK_THROWS_AS(io::read_snapshot_file(bad), IoError);

    CHECK_THROWS_AS(io::read_snapshot_file(tmp("does_not_exist.fld")), IoError);
}

TEST_CASE("manifest round trip, byte-exact rewrite, and validation") {
    Trajectory tr = tiny_trajectory();
    io::write_snapshot_file(tr, tmp("m_traj_0.fld"));
    io::write_snapshot_file(tr, tmp("m_traj_1.fld"));

    io::Manifest m;
    m.split = "train";
    m.dt = tr.dt;
    m.channels = {"u_x", "u_y", "T", "mu"};
    io::StatsAccumulator acc;
    acc.add(tr);
    acc.add(tr);
    m.stats = acc.finish();
    m.entries = {{"m_traj_0.fld", {{"R", 1000.0}, {"a", 0.9}}},
                 {"m_traj_1.fld", {{"R", 2500.0}, {"a", 0.5}}}};

    const std::string p1 = tmp("manifest.txt");
    io::write_manifest(m, p1);
    io::Manifest back = io::read_manifest(p1);  // checks listed files exist
    CHECK(back.split == "train");
    CHECK(back.dt == m.dt);
    CHECK(back.channels == m.channels);
    CHECK(back.entries.size() == 2);
    CHECK(back.entries[1].consts.at("R") == 2500.0);
    CHECK(back.stats.at("T").min == m.stats.at("T").min);

    const std::string p2 = tmp("manifest2.txt");
    io::write_manifest(back, p2);
    CHECK(io::read_text_file(p1) == io::read_text_file(p2));

    io::Manifest missing = m;
    missing.entries.push_back({"m_traj_9.fld", {}});
    io::write_manifest(missing, tmp("manifest3.txt"));
    CHECK_THROWS_AS(io::read_manifest(tmp("manifest3.txt")), IoError);
    CHECK_NOTHROW(io::read_manifest(tmp("manifest3.txt"), false));

    io::Manifest bad = m;
    bad.schema = 2;
    CHECK_THROWS_AS(bad.validate(), VersionMismatchError);
    bad = m;
    bad.dt = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = m;
    bad.stats.erase("T");
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = m;
    bad.entries[1].file = bad.entries[0].file;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("stats accumulator matches hand-computed moments") {
    GridSpec g(4, 4, 1.0);
    Trajectory tr;
    tr.dt = 1.0;
    for (int k = 0; k < 2; ++k) {
        Snapshot s;
        s.t = k;
        s.ux = Field(g, k == 0 ? 1.0 : 3.0);  // values {1,3}: mean 2, var 1
        s.uy = Field(g, 2.0);                 // constant: stddev 0
        tr.snaps.push_back(std::move(s));
    }
    io::StatsAccumulator acc;
    acc.add(tr);
    auto stats = acc.finish();
    CHECK(stats.at("u_x").min == 1.0);
    CHECK(stats.at("u_x").max == 3.0);
    CHECK(stats.at("u_x").mean == doctest::Approx(2.0));
    CHECK(stats.at("u_x").stddev == doctest::Approx(1.0));
    CHECK(stats.at("u_y").stddev == doctest::Approx(0.0));
}

TEST_CASE("checkpoint round trip preserves every bit and verifies digests") {
    model::ModelConfig cfg;
    cfg.state_names = {"T"};
    cfg.const_names = {"inv_R"};
    cfg.reaction = {2, 8, 3, model::Activation::tanh};
    cfg.correction = {2, 6, 3, model::Activation::relu};
    cfg.diffusivity_init = 0.2;
    Rng rng(77);
    model::Model m;
    m.cfg = cfg;
    m.params = model::init_params(cfg, model::identity_normalization(cfg), rng);

    AdamState adam;
    adam.step = 42;
    adam.moments["diff.reaction_u.w0"] = {
        std::vector<double>(m.params.at("diff.reaction_u.w0").count(), 0.125),
        std::vector<double>(m.params.at("diff.reaction_u.w0").count(), 0.25)};

    const std::string p = tmp("model.ckpt");
    io::write_checkpoint(io::make_checkpoint(m, 1, 99, adam), p);
    io::Checkpoint back = io::read_checkpoint(p);
    CHECK(back.stage == 1);
    CHECK(back.seed == 99);
    CHECK(back.config_text == model::canonical_config(cfg));
    CHECK(back.adam.step == 42);
    CHECK(back.adam.moments.at("diff.reaction_u.w0").m[0] == 0.125);

    model::Model m2 = io::model_from_checkpoint(back);
    CHECK(model::canonical_config(m2.cfg) == model::canonical_config(cfg));
    REQUIRE(m2.params.blocks.size() == m.params.blocks.size());
    for (const auto& [name, blk] : m.params.blocks) {
        CHECK(m2.params.at(name).v == blk.v);
        CHECK(m2.params.at(name).shape == blk.shape);
        CHECK(m2.params.at(name).trainable == blk.trainable);
    }

    // Tampering with a differentiator weight breaks the theta digest. Locate
    // the weight's bytes in the file so the corruption lands in a verified
    // block (the trailing optimizer state is deliberately unverified).
    const std::string bytes = io::read_text_file(p);
    const double w00 = m.params.at("diff.reaction_u.w0").v[0];
    std::string pattern(reinterpret_cast<const char*>(&w00), sizeof w00);
    const size_t off = bytes.find(pattern);
    REQUIRE(off != std::string::npos);
    const std::string bad = tmp("model_bad.ckpt");
    io::write_text_file(bad, bytes);
    corrupt_byte(bad, off + 2, static_cast<char>(bytes[off + 2] ^ 0x5A));
    CHECK_THROWS_AS(io::read_checkpoint(bad), IoError);

    // Tampering with the stored configuration breaks the config digest.
    const size_t cfg_off = bytes.find("2x8x3");
    REQUIRE(cfg_off != std::string::npos);
    io::write_text_file(bad, bytes);
    corrupt_byte(bad, cfg_off, '9');
    CHECK_THROWS_AS(io::read_checkpoint(bad), IoError);

    io::write_text_file(bad, bytes);
    corrupt_byte(bad, 2, 'Q');
    CHECK_THROWS_AS(io::read_checkpoint(bad), BadMagicError);

    io::write_text_file(bad, bytes.substr(0, 40));
    CHECK_THROWS_AS(io::read_checkpoint(bad), TruncatedFileError);
}

TEST_CASE("config text parsing: comments, overrides, typed getters") {
    const std::string text =
        "# full-line comment\n"
        "a.x = 3\n"
        "a.y = 1.5   # trailing comment\n"
        "flag = yes\n"
        "names = u_x, u_y ,T\n"
        "a.x = 4\n";
    io::Config c = io::parse_config_text(text, "test.cfg");
    CHECK(c.get_int("a.x", 0) == 4);  // later keys win
    CHECK(c.get_double("a.y", 0.0) == 1.5);
    CHECK(c.get_bool("flag", false));
    CHECK(c.get_strings("names", {}) == std::vector<std::string>{"u_x", "u_y", "T"});
    CHECK(c.get_int("missing", 7) == 7);
    CHECK(c.require_double("a.y") == 1.5);
    CHECK_THROWS_AS(c.require_string("gone"), ValidationError);
    CHECK_THROWS_AS(c.get_int("a.y", 0), ValidationError);  // 1.5 is not integral

    CHECK_THROWS_AS(io::parse_config_text("novalue\n", "bad.cfg"), ValidationError);
    try {
        io::parse_config_text("x = 1\n= 2\n", "bad.cfg");
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("bad.cfg:2") != std::string::npos);
    }
}

TEST_CASE("restrict_keys names the offender and lists valid keys") {
    io::Config c;
    c.set("train.epochs", "5");
    c.set("train.seeed", "1");  // typo
    try {
        c.restrict_keys({"train.epochs", "train.seed"});
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("train.seeed") != std::string::npos);
        CHECK(msg.find("valid keys") != std::string::npos);
        CHECK(msg.find("train.seed") != std::string::npos);
    }

    io::Config d;
    d.set("const.R", "100");
    d.set("const.gamma", "1.4");
    CHECK_NOTHROW(d.restrict_keys({"const.*"}));
}

TEST_CASE("csv writer rejects malformed cells") {
    const std::string p = tmp("table.csv");
    io::write_csv(p, {"a", "b"}, {{"1", "2"}, {"3", "4"}});
    CHECK(io::read_text_file(p) == "a,b\n1,2\n3,4\n");
    CHECK_THROWS_AS(io::write_csv(p, {"a"}, {{"1,2"}}), ValidationError);
    CHECK_THROWS_AS(io::write_csv(p, {"a", "b"}, {{"1"}}), ValidationError);
}

TEST_CASE("ingest: raw raster with mask disk, constants, error paths") {
    // 2 frames, 2 channels, 8x8, f32, value = k*1000 + c*100 + i*10 + j.
    const int T = 2, C = 2, H = 8, W = 8;
    std::string raw;
    for (int k = 0; k < T; ++k)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    const float v = static_cast<float>(k * 1000 + c * 100 + i * 10 + j);
                    raw.append(reinterpret_cast<const char*>(&v), 4);
                }
    io::write_text_file(tmp("dump.raw"), raw);

    io::write_text_file(tmp("dump.cfg"),
                        "raw = dump.raw\n"
                        "dtype = f32\n"
                        "height = 8\nwidth = 8\nframes = 2\n"
                        "dx = 1.0\ndt = 0.5\nt0 = 2.0\n"
                        "channels = u_x,u_y\n"
                        "units = cm/s\n"
                        "mask.disk.x = 4.0\nmask.disk.y = 4.0\nmask.disk.diameter = 4.0\n"
                        "const.Re = 30\nconst.rho = 120\n");
    io::IngestResult res = io::ingest_external(tmp("dump.cfg"));
    CHECK(res.has_mask);
    REQUIRE(res.traj.size() == 2);
    CHECK(res.traj.snaps[0].t == 2.0);
    CHECK(res.traj.snaps[1].t == 2.5);
    CHECK(res.traj.snaps[0].ux.at(3, 7) == 37.0);
    CHECK(res.traj.snaps[1].uy.at(2, 1) == 1121.0);
    CHECK(res.consts.at("Re") == 30.0);
    CHECK(res.consts.at("rho") == 120.0);

    // Default origin is (dx/2, dx/2); a diameter-4 disk at (4,4) covers the
    // 12 cell centers within distance 2.
    REQUIRE(res.traj.snaps[0].state_index("mask") >= 0);
    const Field& mask = res.traj.snaps[0].state[0];
    CHECK(reduce(mask, Reduce::sum) == 12.0);
    CHECK(mask.at(4, 4) == 1.0);
    CHECK(mask.at(0, 0) == 0.0);

    // Byte-count mismatch is caught with the implied size in the message.
    io::write_text_file(tmp("dump_short.raw"), raw.substr(0, raw.size() - 4));
    io::write_text_file(tmp("dump_short.cfg"),
                        "raw = dump_short.raw\nheight = 8\nwidth = 8\nframes = 2\n"
                        "dx = 1.0\ndt = 0.5\nchannels = u_x,u_y\n");
    try {
        io::ingest_external(tmp("dump_short.cfg"));
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("descriptor implies") != std::string::npos);
    }

    // Transposed-dump detection via expected dimensions.
    io::write_text_file(tmp("dump_t.cfg"),
                        "raw = dump.raw\nheight = 8\nwidth = 8\nframes = 2\n"
                        "expect_height = 16\nexpect_width = 4\n"
                        "dx = 1.0\ndt = 0.5\nchannels = u_x,u_y\n");
    try {
        io::ingest_external(tmp("dump_t.cfg"));
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("transposed") != std::string::npos);
    }

    // NaN payloads are rejected with a location.
    std::string raw_nan = raw;
    const float qnan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(raw_nan.data() + 4 * (1 * 8 + 3), &qnan, 4);  // frame 0, u_x, cell (1,3)
    io::write_text_file(tmp("dump_nan.raw"), raw_nan);
    io::write_text_file(tmp("dump_nan.cfg"),
                        "raw = dump_nan.raw\nheight = 8\nwidth = 8\nframes = 2\n"
                        "dx = 1.0\ndt = 0.5\nchannels = u_x,u_y\n");
    CHECK_THROWS_AS(io::ingest_external(tmp("dump_nan.cfg")), NumericsError);

    // Channel order is part of the contract.
    io::write_text_file(tmp("dump_ch.cfg"),
                        "raw = dump.raw\nheight = 8\nwidth = 8\nframes = 2\n"
                        "dx = 1.0\ndt = 0.5\nchannels = u_y,u_x\n");
    CHECK_THROWS_AS(io::ingest_external(tmp("dump_ch.cfg")), ValidationError);

    // Unknown descriptor keys are rejected.
    io::write_text_file(tmp("dump_k.cfg"),
                        "raw = dump.raw\nheight = 8\nwidth = 8\nframes = 2\n"
                        "dx = 1.0\ndt = 0.5\nchannels = u_x,u_y\nwidht = 8\n");
    CHECK_THROWS_AS(io::ingest_external(tmp("dump_k.cfg")), ValidationError);
}

TEST_CASE("path helpers") {
    CHECK(io::dir_of("a/b/c.txt") == "a/b");
    CHECK(io::dir_of("c.txt") == "");
    CHECK(io::join_path("a/b", "c.txt") == "a/b/c.txt");
    CHECK(io::join_path("", "c.txt") == "c.txt");
}
