#include "parc/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian and this code assumes a little-endian host");

namespace parc::io {

namespace fs = std::filesystem;

std::string fmt17(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v{};
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw ValidationError("not a number: \"" + s + "\"");
    return v;
}

// ---------------------------------------------------------------------------
// Binary plumbing.

namespace {

std::string read_binary_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    if (f.bad()) throw IoError("read failed: " + path);
    return ss.str();
}

void write_binary_file(const std::string& path, const std::string& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    f.flush();
    if (!f) throw IoError("write failed: " + path);
}

class Writer {
public:
    void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void bytes(const std::string& s) { buf_.append(s); }
    void sized_string(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        buf_.append(s);
    }
    void reserve(size_t n) { buf_.reserve(n); }
    const std::string& data() const { return buf_; }

private:
    void raw(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& data, std::string path) : data_(data), path_(std::move(path)) {}

    uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
    uint32_t u32() { return get<uint32_t>(); }
    uint64_t u64() { return get<uint64_t>(); }
    float f32() { return get<float>(); }
    double f64() { return get<double>(); }
    std::string bytes(size_t n) { return std::string(take(n), n); }
    std::string sized_string() {
        const uint32_t n = u32();
        return bytes(n);
    }
    size_t remaining() const { return data_.size() - pos_; }
    const std::string& path() const { return path_; }

    void expect_end() const {
        if (pos_ != data_.size())
            throw IoError(path_ + ": " + std::to_string(data_.size() - pos_) +
                          " unexpected trailing bytes");
    }

private:
    template <class T>
    T get() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    const char* take(size_t n) {
        if (pos_ + n > data_.size())
            throw TruncatedFileError(path_ + ": truncated (needed " + std::to_string(n) +
                                     " more bytes at offset " + std::to_string(pos_) + ")");
        const char* p = data_.data() + pos_;
        pos_ += n;
        return p;
    }
    const std::string& data_;
    std::string path_;
    size_t pos_ = 0;
};

constexpr char kFieldMagic[] = "PARCFLD1";
constexpr char kCkptMagic[] = "PARCCKP1";
constexpr uint32_t kFieldVersion = 1;
constexpr uint32_t kCkptVersion = 1;

struct SnapshotHeader {
    uint32_t h, w, c, t;
    double dx, dt, t0;
    std::vector<std::string> names;
};

SnapshotHeader parse_snapshot_header(Reader& r) {
    if (r.bytes(8) != kFieldMagic)
        throw BadMagicError(r.path() + ": not a snapshot file (bad magic)");
    const uint32_t version = r.u32();
    if (version != kFieldVersion)
        throw VersionMismatchError(r.path() + ": snapshot format version " +
                                   std::to_string(version) + ", expected " +
                                   std::to_string(kFieldVersion));
    SnapshotHeader hd{};
    hd.h = r.u32();
    hd.w = r.u32();
    hd.c = r.u32();
    hd.t = r.u32();
    hd.dx = r.f64();
    hd.dt = r.f64();
    hd.t0 = r.f64();
    if (hd.h < 4 || hd.w < 4 || hd.c < 2 || hd.t < 1)
        throw IoError(r.path() + ": implausible dimensions in header");
    if (!(hd.dx > 0.0) || !std::isfinite(hd.dx) || !std::isfinite(hd.dt) || !std::isfinite(hd.t0))
        throw IoError(r.path() + ": non-finite grid spacing or times in header");
    hd.names.reserve(hd.c);
    for (uint32_t c = 0; c < hd.c; ++c) hd.names.push_back(r.sized_string());
    if (hd.names[0] != "u_x" || hd.names[1] != "u_y")
        throw IoError(r.path() + ": first two channels must be u_x, u_y (got \"" + hd.names[0] +
                      "\", \"" + hd.names[1] + "\")");
    return hd;
}

size_t payload_bytes(const SnapshotHeader& hd) {
    return 4ull * hd.t * hd.c * hd.h * hd.w;
}

}  // namespace

void write_snapshot_file(const Trajectory& tr, const std::string& path) {
    tr.validate();
    const Snapshot& s0 = tr.snaps.front();
    const GridSpec& g = s0.grid();
    const uint32_t C = static_cast<uint32_t>(s0.n_channels());
    const uint32_t T = static_cast<uint32_t>(tr.size());

    Writer w;
    w.reserve(64 + 4ull * T * C * g.cells());
    w.bytes(kFieldMagic);
    w.u32(kFieldVersion);
    w.u32(static_cast<uint32_t>(g.height));
    w.u32(static_cast<uint32_t>(g.width));
    w.u32(C);
    w.u32(T);
    w.f64(g.dx);
    w.f64(tr.dt);
    w.f64(tr.t0());
    for (uint32_t c = 0; c < C; ++c) w.sized_string(s0.channel_name(static_cast<int>(c)));
    for (uint32_t k = 0; k < T; ++k)
        for (uint32_t c = 0; c < C; ++c) {
            const Field& f = tr.snaps[k].channel(static_cast<int>(c));
            for (double v : f.values) w.f32(static_cast<float>(v));
        }
    write_binary_file(path, w.data());
}

Trajectory read_snapshot_file(const std::string& path) {
    const std::string data = read_binary_file(path);
    Reader r(data, path);
    const SnapshotHeader hd = parse_snapshot_header(r);
    if (r.remaining() < payload_bytes(hd))
        throw TruncatedFileError(path + ": payload holds " + std::to_string(r.remaining()) +
                                 " bytes, header implies " + std::to_string(payload_bytes(hd)));

    const GridSpec grid = centered_grid(static_cast<int>(hd.h), static_cast<int>(hd.w), hd.dx);
    Trajectory tr;
    tr.dt = hd.dt;
    tr.snaps.reserve(hd.t);
    for (uint32_t k = 0; k < hd.t; ++k) {
        Snapshot s;
        s.t = hd.t0 + k * hd.dt;
        for (uint32_t c = 0; c < hd.c; ++c) {
            Field f(grid);
            for (double& v : f.values) v = static_cast<double>(r.f32());
            if (c == 0)
                s.ux = std::move(f);
            else if (c == 1)
                s.uy = std::move(f);
            else {
                s.state.push_back(std::move(f));
                s.state_names.push_back(hd.names[c]);
            }
        }
        tr.snaps.push_back(std::move(s));
    }
    r.expect_end();
    tr.validate();
    return tr;
}

void check_snapshot_file(const std::string& path) {
    const std::string data = read_binary_file(path);
    Reader r(data, path);
    const SnapshotHeader hd = parse_snapshot_header(r);
    if (r.remaining() != payload_bytes(hd))
        throw TruncatedFileError(path + ": payload holds " + std::to_string(r.remaining()) +
                                 " bytes, header implies " + std::to_string(payload_bytes(hd)));
}

// ---------------------------------------------------------------------------
// Manifest.

void Manifest::validate() const {
    if (schema != 1)
        throw VersionMismatchError("manifest schema " + std::to_string(schema) + ", expected 1");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("manifest: dt must be positive");
    if (channels.empty()) throw ValidationError("manifest: no channels listed");
    for (const auto& ch : channels) {
        if (ch.empty()) throw ValidationError("manifest: empty channel name");
        auto it = stats.find(ch);
        if (it == stats.end()) throw ValidationError("manifest: missing stats for channel " + ch);
        const ChannelStats& st = it->second;
        for (double v : {st.min, st.max, st.mean, st.stddev})
            if (!std::isfinite(v)) throw ValidationError("manifest: non-finite stats for " + ch);
    }
    if (entries.empty()) throw ValidationError("manifest: no trajectories listed");
    std::set<std::string> seen;
    for (const auto& e : entries) {
        if (e.file.empty()) throw ValidationError("manifest: entry with empty file name");
        if (!seen.insert(e.file).second)
            throw ValidationError("manifest: duplicate file " + e.file);
        for (const auto& [k, v] : e.consts)
            if (!std::isfinite(v))
                throw ValidationError("manifest: non-finite constant " + k + " for " + e.file);
    }
}

namespace {

std::string join_list(const std::vector<std::string>& xs, char sep) {
    std::string out;
    for (size_t i = 0; i < xs.size(); ++i) {
        if (i) out += sep;
        out += xs[i];
    }
    return out;
}

}  // namespace

void write_manifest(const Manifest& m, const std::string& path) {
    m.validate();
    std::string out;
    out += "schema=" + std::to_string(m.schema) + "\n";
    out += "split=" + m.split + "\n";
    out += "dt=" + fmt17(m.dt) + "\n";
    out += "channels=" + join_list(m.channels, ',') + "\n";
    for (const auto& [name, st] : m.stats)
        out += "stat." + name + "=" + fmt17(st.min) + "," + fmt17(st.max) + "," + fmt17(st.mean) +
               "," + fmt17(st.stddev) + "\n";
    for (size_t i = 0; i < m.entries.size(); ++i) {
        const TrajectoryEntry& e = m.entries[i];
        out += "traj." + std::to_string(i) + ".file=" + e.file + "\n";
        for (const auto& [k, v] : e.consts)
            out += "traj." + std::to_string(i) + ".const." + k + "=" + fmt17(v) + "\n";
    }
    write_text_file(path, out);
}

Manifest read_manifest(const std::string& path, bool check_files) {
    const Config c = read_config(path);
    Manifest m;
    m.schema = c.get_int("schema", 0);
    m.split = c.get_string("split", "");
    m.dt = c.require_double("dt");
    m.channels = c.get_strings("channels", {});

    std::map<int, TrajectoryEntry> by_index;
    for (const auto& [key, value] : c.kv) {
        if (key.rfind("stat.", 0) == 0) {
            const std::string name = key.substr(5);
            std::vector<std::string> parts;
            std::stringstream ss(value);
            std::string tok;
            while (std::getline(ss, tok, ',')) parts.push_back(tok);
            if (parts.size() != 4)
                throw ValidationError(path + ": stat." + name + " needs min,max,mean,stddev");
            m.stats[name] = {parse_double(parts[0]), parse_double(parts[1]),
                             parse_double(parts[2]), parse_double(parts[3])};
        } else if (key.rfind("traj.", 0) == 0) {
            const size_t dot = key.find('.', 5);
            if (dot == std::string::npos)
                throw ValidationError(path + ": malformed key " + key);
            int idx = 0;
            const std::string num = key.substr(5, dot - 5);
            try {
                idx = std::stoi(num);
            } catch (const std::exception&) {
                throw ValidationError(path + ": bad trajectory index in " + key);
            }
            const std::string rest = key.substr(dot + 1);
            if (rest == "file")
                by_index[idx].file = value;
            else if (rest.rfind("const.", 0) == 0)
                by_index[idx].consts[rest.substr(6)] = parse_double(value);
            else
                throw ValidationError(path + ": unknown trajectory key " + key);
        }
    }
    for (auto& [idx, e] : by_index) m.entries.push_back(std::move(e));
    m.validate();

    if (check_files) {
        const std::string dir = dir_of(path);
        for (const auto& e : m.entries) {
            const std::string file = join_path(dir, e.file);
            if (!fs::exists(file)) throw IoError("manifest: listed file missing: " + file);
            check_snapshot_file(file);
        }
    }
    return m;
}

void StatsAccumulator::add(const Trajectory& tr) {
    tr.validate();
    const auto names = tr.snaps.front().channel_names();
    if (channels_.empty()) {
        channels_ = names;
        acc_.assign(names.size(), {std::numeric_limits<double>::infinity(),
                                   -std::numeric_limits<double>::infinity(), 0.0, 0.0, 0});
    } else if (channels_ != names) {
        throw ValidationError("StatsAccumulator: channel names differ between trajectories");
    }
    for (const Snapshot& s : tr.snaps)
        for (size_t c = 0; c < channels_.size(); ++c) {
            Acc& a = acc_[c];
            for (double v : s.channel(static_cast<int>(c)).values) {
                a.min = std::min(a.min, v);
                a.max = std::max(a.max, v);
                a.sum += v;
                a.sumsq += v * v;
                ++a.n;
            }
        }
}

std::map<std::string, ChannelStats> StatsAccumulator::finish() const {
    if (channels_.empty()) throw ValidationError("StatsAccumulator: no data added");
    std::map<std::string, ChannelStats> out;
    for (size_t c = 0; c < channels_.size(); ++c) {
        const Acc& a = acc_[c];
        const double mean = a.sum / static_cast<double>(a.n);
        const double var = std::max(0.0, a.sumsq / static_cast<double>(a.n) - mean * mean);
        out[channels_[c]] = {a.min, a.max, mean, std::sqrt(var)};
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints.

void write_checkpoint(const Checkpoint& c, const std::string& path) {
    Writer w;
    w.bytes(kCkptMagic);
    w.u32(kCkptVersion);
    w.u32(static_cast<uint32_t>(c.stage));
    w.u64(c.config_digest);
    w.u64(c.theta_digest);
    w.u64(c.seed);
    w.sized_string(c.config_text);
    w.u32(static_cast<uint32_t>(c.params.blocks.size()));
    for (const auto& [name, blk] : c.params.blocks) {
        w.sized_string(name);
        w.u8(blk.trainable ? 1 : 0);
        w.u32(static_cast<uint32_t>(blk.shape.size()));
        for (int d : blk.shape) w.u32(static_cast<uint32_t>(d));
        w.u64(blk.v.size());
        for (double v : blk.v) w.f64(v);
    }
    w.u64(static_cast<uint64_t>(c.adam.step));
    w.f64(c.adam.beta1);
    w.f64(c.adam.beta2);
    w.f64(c.adam.eps);
    w.u32(static_cast<uint32_t>(c.adam.moments.size()));
    for (const auto& [name, mo] : c.adam.moments) {
        w.sized_string(name);
        w.u64(mo.m.size());
        for (double v : mo.m) w.f64(v);
        for (double v : mo.v) w.f64(v);
    }
    write_binary_file(path, w.data());
}

Checkpoint read_checkpoint(const std::string& path) {
    const std::string data = read_binary_file(path);
    Reader r(data, path);
    if (r.bytes(8) != kCkptMagic)
        throw BadMagicError(path + ": not a checkpoint file (bad magic)");
    const uint32_t version = r.u32();
    if (version != kCkptVersion)
        throw VersionMismatchError(path + ": checkpoint format version " +
                                   std::to_string(version) + ", expected " +
                                   std::to_string(kCkptVersion));
    Checkpoint c;
    c.stage = static_cast<int>(r.u32());
    if (c.stage != 1 && c.stage != 2) throw IoError(path + ": invalid stage in checkpoint");
    c.config_digest = r.u64();
    c.theta_digest = r.u64();
    c.seed = r.u64();
    c.config_text = r.sized_string();
    const uint32_t n_blocks = r.u32();
    for (uint32_t b = 0; b < n_blocks; ++b) {
        const std::string name = r.sized_string();
        ParamBlock blk;
        const uint8_t trainable = r.u8();
        if (trainable > 1) throw IoError(path + ": corrupt trainable flag for block " + name);
        blk.trainable = trainable == 1;
        const uint32_t ndims = r.u32();
        if (ndims > 8) throw IoError(path + ": implausible shape rank for block " + name);
        size_t prod = 1;
        for (uint32_t d = 0; d < ndims; ++d) {
            const uint32_t dim = r.u32();
            blk.shape.push_back(static_cast<int>(dim));
            prod *= dim;
        }
        const uint64_t count = r.u64();
        if (count != prod)
            throw IoError(path + ": shape/count mismatch for block " + name);
        blk.v.resize(count);
        for (uint64_t i = 0; i < count; ++i) blk.v[i] = r.f64();
        c.params.add(name, std::move(blk));
    }
    c.adam.step = static_cast<int64_t>(r.u64());
    c.adam.beta1 = r.f64();
    c.adam.beta2 = r.f64();
    c.adam.eps = r.f64();
    const uint32_t n_moments = r.u32();
    for (uint32_t b = 0; b < n_moments; ++b) {
        const std::string name = r.sized_string();
        AdamState::Moments mo;
        const uint64_t count = r.u64();
        mo.m.resize(count);
        for (uint64_t i = 0; i < count; ++i) mo.m[i] = r.f64();
        mo.v.resize(count);
        for (uint64_t i = 0; i < count; ++i) mo.v[i] = r.f64();
        c.adam.moments.emplace(name, std::move(mo));
    }
    r.expect_end();

    const std::string digest_src = c.config_text;
    if (fnv1a(digest_src.data(), digest_src.size()) != c.config_digest)
        throw IoError(path + ": model configuration digest mismatch");
    const uint64_t theta = digest_params(
        c.params, [](const std::string& n) { return n.rfind("diff.", 0) == 0; });
    if (theta != c.theta_digest)
        throw IoError(path + ": differentiator digest mismatch (frozen weights changed?)");
    return c;
}

Checkpoint make_checkpoint(const model::Model& m, int stage, uint64_t seed,
                           const AdamState& adam) {
    Checkpoint c;
    c.stage = stage;
    c.config_text = model::canonical_config(m.cfg);
    c.config_digest = fnv1a(c.config_text.data(), c.config_text.size());
    c.theta_digest =
        digest_params(m.params, [](const std::string& n) { return n.rfind("diff.", 0) == 0; });
    c.seed = seed;
    c.params = m.params;
    c.adam = adam;
    return c;
}

model::Model model_from_checkpoint(const Checkpoint& c) {
    model::Model m;
    m.cfg = parse_canonical_config(c.config_text);
    m.params = c.params;
    return m;
}

model::ModelConfig parse_canonical_config(const std::string& text) {
    const Config c = parse_config_text(text, "<model-config>");
    auto parse_stack = [](const std::string& s, const char* what) {
        model::ConvStackConfig sc;
        const size_t comma = s.find(',');
        if (comma == std::string::npos)
            throw IoError(std::string("model config: malformed ") + what + " stack: " + s);
        std::vector<int> dims;
        std::stringstream ss(s.substr(0, comma));
        std::string tok;
        while (std::getline(ss, tok, 'x')) dims.push_back(static_cast<int>(parse_double(tok)));
        if (dims.size() != 3)
            throw IoError(std::string("model config: malformed ") + what + " stack: " + s);
        sc.layers = dims[0];
        sc.hidden = dims[1];
        sc.ksize = dims[2];
        const std::string act = s.substr(comma + 1);
        if (act == "tanh")
            sc.activation = model::Activation::tanh;
        else if (act == "relu")
            sc.activation = model::Activation::relu;
        else
            throw IoError("model config: unknown activation " + act);
        return sc;
    };
    model::ModelConfig cfg;
    cfg.state_names = c.get_strings("states", {});
    cfg.const_names = c.get_strings("consts", {});
    cfg.reaction = parse_stack(c.require_string("reaction"), "reaction");
    cfg.correction = parse_stack(c.require_string("correction"), "correction");
    cfg.diffusivity_init = c.require_double("diffusivity_init");
    cfg.freeze_diffusivity = c.get_bool("freeze_diffusivity", false);
    cfg.include_diffusion_in_momentum = c.get_bool("momentum_diffusion", false);
    cfg.include_advection_of_state = c.get_bool("state_advection", true);
    cfg.time_scale = c.require_double("time_scale");
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Config.

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config parse_config_text(const std::string& text, const std::string& origin) {
    Config c;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError(origin + ":" + std::to_string(lineno) +
                                  ": expected key=value, got \"" + line + "\"");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw ValidationError(origin + ":" + std::to_string(lineno) + ": empty key");
        c.kv[key] = trim(line.substr(eq + 1));
    }
    return c;
}

Config read_config(const std::string& path) {
    return parse_config_text(read_text_file(path), path);
}

void write_config(const Config& c, const std::string& path) {
    std::string out;
    for (const auto& [k, v] : c.kv) out += k + "=" + v + "\n";
    write_text_file(path, out);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

std::string Config::require_string(const std::string& key) const {
    auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError("missing required config key: " + key);
    return it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return parse_double(it->second);
    } catch (const ValidationError&) {
        throw ValidationError("config key " + key + ": not a number: \"" + it->second + "\"");
    }
}

double Config::require_double(const std::string& key) const {
    try {
        return parse_double(require_string(key));
    } catch (const ValidationError& e) {
        throw ValidationError("config key " + key + ": " + e.what());
    }
}

int Config::get_int(const std::string& key, int fallback) const {
    const double v = get_double(key, static_cast<double>(fallback));
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
        throw ValidationError("config key " + key + ": expected an integer");
    return i;
}

uint64_t Config::get_u64(const std::string& key, uint64_t fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    uint64_t v{};
    const std::string& s = it->second;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ValidationError("config key " + key + ": expected an unsigned integer");
    return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::string s = it->second;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw ValidationError("config key " + key + ": expected a boolean, got \"" + it->second + "\"");
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        const std::vector<double>& fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty())
            throw ValidationError("config key " + key + ": empty list element");
        out.push_back(parse_double(tok));
    }
    return out;
}

std::vector<std::string> Config::get_strings(const std::string& key,
                                             const std::vector<std::string>& fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::vector<std::string> out;
    if (trim(it->second).empty()) return out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
    return out;
}

void Config::restrict_keys(const std::vector<std::string>& valid) const {
    std::vector<std::string> prefixes, exact;
    for (const auto& v : valid) {
        if (v.size() > 2 && v.compare(v.size() - 2, 2, ".*") == 0)
            prefixes.push_back(v.substr(0, v.size() - 1));  // keep the trailing dot
        else
            exact.push_back(v);
    }
    for (const auto& [key, value] : kv) {
        bool ok = std::find(exact.begin(), exact.end(), key) != exact.end();
        for (const auto& p : prefixes)
            if (!ok && key.rfind(p, 0) == 0) ok = true;
        if (!ok) {
            std::string list = join_list(valid, ',');
            std::replace(list.begin(), list.end(), ',', ' ');
            throw ValidationError("unknown config key \"" + key + "\"; valid keys: " + list);
        }
    }
}

// ---------------------------------------------------------------------------
// Ingestion.

IngestResult ingest_external(const std::string& descriptor_path) {
    const Config d = read_config(descriptor_path);
    d.restrict_keys({"raw", "dtype", "layout", "height", "width", "expect_height", "expect_width",
                     "frames", "dx", "dt", "t0", "channels", "origin_x", "origin_y", "units",
                     "mask.disk.x", "mask.disk.y", "mask.disk.diameter", "const.*"});

    const std::string layout = d.get_string("layout", "tchw");
    if (layout != "tchw")
        throw ValidationError("ingest: unsupported layout \"" + layout + "\" (only tchw)");
    const std::string dtype = d.get_string("dtype", "f32");
    if (dtype != "f32" && dtype != "f64")
        throw ValidationError("ingest: unsupported dtype \"" + dtype + "\" (f32 or f64)");

    const int H = d.get_int("height", 0);
    const int W = d.get_int("width", 0);
    const int T = d.get_int("frames", 0);
    if (H < 4 || W < 4) throw ValidationError("ingest: height/width must be at least 4");
    if (T < 1) throw ValidationError("ingest: frames must be at least 1");
    if (d.has("expect_height") || d.has("expect_width")) {
        const int eh = d.get_int("expect_height", H);
        const int ew = d.get_int("expect_width", W);
        if (eh != H || ew != W)
            throw ValidationError("ingest: dimension mismatch: raster is " + std::to_string(H) +
                                  "x" + std::to_string(W) + ", expected " + std::to_string(eh) +
                                  "x" + std::to_string(ew) + " (transposed dump?)");
    }

    const double dx = d.require_double("dx");
    const double dt = d.require_double("dt");
    const double t0 = d.get_double("t0", 0.0);
    if (!(dx > 0.0)) throw ValidationError("ingest: dx must be positive");
    if (!(dt > 0.0)) throw ValidationError("ingest: dt must be positive");
    const auto channels = d.get_strings("channels", {});
    if (channels.size() < 2 || channels[0] != "u_x" || channels[1] != "u_y")
        throw ValidationError("ingest: channels must start with u_x,u_y");
    const int C = static_cast<int>(channels.size());

    const std::string raw_path = join_path(dir_of(descriptor_path), d.require_string("raw"));
    const std::string raw = read_binary_file(raw_path);
    const size_t elem = dtype == "f32" ? 4 : 8;
    const size_t expected = elem * static_cast<size_t>(T) * C * H * W;
    if (raw.size() != expected)
        throw ValidationError("ingest: raw payload is " + std::to_string(raw.size()) +
                              " bytes, descriptor implies " + std::to_string(expected) +
                              " (frames*channels*height*width*" + std::to_string(elem) + ")");

    GridSpec grid(H, W, dx, {d.get_double("origin_x", dx / 2), d.get_double("origin_y", dx / 2)},
                  d.get_string("units", ""));
    const std::string vel_units = d.get_string("units", "");

    std::optional<Field> mask;
    if (d.has("mask.disk.x") || d.has("mask.disk.y") || d.has("mask.disk.diameter")) {
        const double cx = d.require_double("mask.disk.x");
        const double cy = d.require_double("mask.disk.y");
        const double diam = d.require_double("mask.disk.diameter");
        if (!(diam > 0.0)) throw ValidationError("ingest: mask disk diameter must be positive");
        Field mk(grid);
        const double r2 = 0.25 * diam * diam;
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                const double ddx = grid.x(j) - cx;
                const double ddy = grid.y(i) - cy;
                if (ddx * ddx + ddy * ddy <= r2) mk.at(i, j) = 1.0;
            }
        mask = std::move(mk);
    }

    size_t pos = 0;
    auto next_value = [&]() -> double {
        double v;
        if (elem == 4) {
            float f;
            std::memcpy(&f, raw.data() + pos, 4);
            v = static_cast<double>(f);
        } else {
            std::memcpy(&v, raw.data() + pos, 8);
        }
        pos += elem;
        return v;
    };

    IngestResult res;
    res.traj.dt = dt;
    for (int k = 0; k < T; ++k) {
        Snapshot s;
        s.t = t0 + k * dt;
        for (int c = 0; c < C; ++c) {
            Field f(grid);
            f.units = c < 2 ? vel_units : "";
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    const double v = next_value();
                    if (!std::isfinite(v))
                        throw NumericsError("ingest: non-finite value at frame " +
                                            std::to_string(k) + ", channel " + channels[c] +
                                            ", cell (" + std::to_string(i) + "," +
                                            std::to_string(j) + ")");
                    f.at(i, j) = v;
                }
            if (c == 0)
                s.ux = std::move(f);
            else if (c == 1)
                s.uy = std::move(f);
            else {
                s.state.push_back(std::move(f));
                s.state_names.push_back(channels[c]);
            }
        }
        if (mask) {
            s.state.push_back(*mask);
            s.state_names.push_back("mask");
        }
        res.traj.snaps.push_back(std::move(s));
    }
    res.traj.validate();
    res.has_mask = mask.has_value();
    for (const auto& [key, value] : d.kv)
        if (key.rfind("const.", 0) == 0) res.consts[key.substr(6)] = parse_double(value);
    return res;
}

// ---------------------------------------------------------------------------
// CSV and file helpers.

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    auto check_cell = [](const std::string& s) {
        if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos)
            throw ValidationError("csv: cell contains a separator: \"" + s + "\"");
    };
    std::string out;
    for (const auto& h : header) check_cell(h);
    out += join_list(header, ',') + "\n";
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw ValidationError("csv: row width does not match the header");
        for (const auto& cell : row) check_cell(cell);
        out += join_list(row, ',') + "\n";
    }
    write_text_file(path, out);
}

std::string read_text_file(const std::string& path) { return read_binary_file(path); }

void write_text_file(const std::string& path, const std::string& content) {
    write_binary_file(path, content);
}

std::string dir_of(const std::string& path) {
    const size_t slash = path.find_last_of('/');
    return slash == std::string::npos ? std::string() : path.substr(0, slash);
}

std::string join_path(const std::string& dir, const std::string& rel) {
    if (dir.empty() || (!rel.empty() && rel.front() == '/')) return rel;
    return dir + "/" + rel;
}

void ensure_dir(const std::string& path) {
    if (path.empty()) return;
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

}  // namespace parc::io
