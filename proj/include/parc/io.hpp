#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "parc/fields.hpp"
#include "parc/model.hpp"
#include "parc/params.hpp"

namespace parc::io {

// Locale-independent double formatting with 17 significant digits (value
// round-trips exactly); the one numeric format used in every text artifact.
std::string fmt17(double v);
double parse_double(const std::string& s);  // strict full-token parse

// ---------------------------------------------------------------------------
// Snapshot files: fixed little-endian layout.
//   magic "PARCFLD1" | u32 version | u32 H W C T | f64 dx dt t0 |
//   C x (u32 length + UTF-8 channel name) | payload T*C*H*W f32,
// time-major, then channel, then row-major cells. Units labels and the grid
// origin are not stored; readers get a grid centered on (0,0).

void write_snapshot_file(const Trajectory& tr, const std::string& path);
Trajectory read_snapshot_file(const std::string& path);

// Header-only validation (existence, magic, version, payload length).
void check_snapshot_file(const std::string& path);

// ---------------------------------------------------------------------------
// Dataset manifest: line-oriented key=value, sorted and rewritable
// byte-identically.

struct ChannelStats {
    double min = 0.0, max = 0.0, mean = 0.0, stddev = 0.0;
};

struct TrajectoryEntry {
    std::string file;                      // relative to the manifest directory
    std::map<std::string, double> consts;  // e.g. R, a, w or rho, Re
};

struct Manifest {
    int schema = 1;
    std::string split;  // train / test / anything descriptive
    double dt = 0.0;
    std::vector<std::string> channels;
    std::map<std::string, ChannelStats> stats;  // keyed by channel name
    std::vector<TrajectoryEntry> entries;

    void validate() const;  // stats finite, channels named, entries non-empty
};

void write_manifest(const Manifest& m, const std::string& path);
// check_files verifies every listed snapshot file exists and has a sane header.
Manifest read_manifest(const std::string& path, bool check_files = true);

// Accumulates per-channel statistics across trajectories as they are written.
class StatsAccumulator {
public:
    void add(const Trajectory& tr);
    std::map<std::string, ChannelStats> finish() const;

private:
    struct Acc {
        double min, max, sum, sumsq;
        size_t n;
    };
    std::vector<std::string> channels_;
    std::vector<Acc> acc_;
};

// ---------------------------------------------------------------------------
// Checkpoints: parameters, optimizer state, and enough metadata to rebuild
// the model. Reload is bit-exact; stage-2 checkpoints carry the stage-1
// differentiator digest so the freeze contract is checkable after the fact.

struct Checkpoint {
    int stage = 1;
    uint64_t config_digest = 0;  // fnv1a of config_text
    uint64_t theta_digest = 0;   // digest of the diff.* blocks
    uint64_t seed = 0;
    std::string config_text;     // canonical model configuration
    ParamStore params;
    AdamState adam;
};

void write_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

// Canonical-config text back to a ModelConfig (inverse of canonical_config).
model::ModelConfig parse_canonical_config(const std::string& text);

// Convenience: checkpoint for a model + training provenance.
Checkpoint make_checkpoint(const model::Model& m, int stage, uint64_t seed,
                           const AdamState& adam);
model::Model model_from_checkpoint(const Checkpoint& c);

// ---------------------------------------------------------------------------
// Flat key=value configuration ('#' starts a comment, later keys override
// earlier ones, dotted namespaces by convention).

struct Config {
    std::map<std::string, std::string> kv;

    bool has(const std::string& key) const { return kv.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { kv[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key,
                                    const std::vector<double>& fallback) const;
    std::vector<std::string> get_strings(const std::string& key,
                                         const std::vector<std::string>& fallback) const;

    // Throws ValidationError naming the key when it is absent.
    std::string require_string(const std::string& key) const;
    double require_double(const std::string& key) const;

    // Rejects keys outside `valid`; the error message lists the valid keys.
    void restrict_keys(const std::vector<std::string>& valid) const;
};

Config parse_config_text(const std::string& text, const std::string& origin = "<config>");
Config read_config(const std::string& path);
void write_config(const Config& c, const std::string& path);  // sorted keys

// ---------------------------------------------------------------------------
// External raster ingestion. The descriptor is a config-format file:
//   raw=dump.bin            raw float payload, frames-major then channel
//   dtype=f32|f64           layout=tchw (the only supported ordering)
//   height=128 width=256    raster dimensions as stored
//   expect_height/expect_width   optional cross-check (transposed dumps fail)
//   frames=41 dx=0.0078125 dt=0.1 t0=0
//   channels=u_x,u_y,p
//   origin_x/origin_y       cell (0,0) center; default (dx/2, dx/2)
//   units=m/s               velocity units label
//   mask.disk.x/y/diameter  optional obstacle disk (physical coordinates);
//                           adds a 0/1 state channel named "mask"
//   const.NAME=value        recorded into the manifest entry

struct IngestResult {
    Trajectory traj;
    std::map<std::string, double> consts;
    bool has_mask = false;
};

IngestResult ingest_external(const std::string& descriptor_path);

// ---------------------------------------------------------------------------
// CSV: fixed column order, fmt17 numbers.

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Small file helpers shared by the CLI.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::string dir_of(const std::string& path);    // "" when no separator
std::string join_path(const std::string& dir, const std::string& rel);
void ensure_dir(const std::string& path);       // mkdir -p semantics

}  // namespace parc::io
