#pragma once

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msplit/diagnostics.hpp"
#include "msplit/solvers.hpp"
#include "msplit/tomo.hpp"

namespace msplit::io {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

inline nlohmann::json to_json(const tomo::Geometry& g) {
    return {{"n_pixels_side", g.n_pixels_side}, {"n_angles", g.n_angles}, {"n_bins", g.n_bins},
            {"bin_upsampling", g.bin_upsampling}, {"pixel_size", g.pixel_size}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

/// Raw float64 values (native byte order) at `<stem>.bin` with a JSON header at `<stem>.json`.
inline void write_array(const std::filesystem::path& stem, const Vector& values, const std::vector<Index>& dims,
                        nlohmann::json extra = nlohmann::json::object()) {
    Index total = 1;
    for (Index d : dims) total *= d;
    require_dims(total, values.size(), "write_array");
    std::ofstream out(stem.string() + ".bin", std::ios::binary);
    if (!out) throw Error("cannot write '" + stem.string() + ".bin'");
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    extra["dims"] = dims;
    extra["dtype"] = "float64";
    extra["order"] = "row-major";
    extra["byte_order"] = std::endian::native == std::endian::little ? "little" : "big";
    extra["file"] = stem.filename().string() + ".bin";
    write_json(stem.string() + ".json", extra);
}

/// rows × cols grid as CSV, one line per row.
inline void write_grid_csv(const std::filesystem::path& path, const Vector& values, Index rows, Index cols) {
    require_dims(rows * cols, values.size(), "write_grid_csv");
    std::string s;
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            if (c) s += ',';
            s += fmt(values[r * cols + c]);
        }
        s += '\n';
    }
    write_text(path, s);
}

inline constexpr const char* kTraceHeader = "n,wall_ns,residual,snr_db,nmse,mae,dist_to_ref";

struct TraceRow {
    long n = 0;
    std::int64_t wall_ns = 0;
    std::optional<double> residual;
    std::optional<QualityMetrics> quality;
    std::optional<double> dist_to_ref;

    std::string csv() const {
        std::string s = std::to_string(n) + ',' + std::to_string(wall_ns) + ',' + fmt(residual) + ',';
        if (quality) {
            s += fmt(quality->snr_db) + ',' + fmt(quality->nmse) + ',' + fmt(quality->mae);
        } else {
            s += ",,";
        }
        return s + ',' + fmt(dist_to_ref);
    }
};

} // namespace msplit::io
