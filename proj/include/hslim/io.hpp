#pragma once

// Snapshot persistence (raw little-endian float64 + JSON sidecar), CSV emission
// with stable formatting, and a small FNV hash for config provenance.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hslim/errors.hpp"
#include "hslim/grid.hpp"

namespace hslim::io {

using json = nlohmann::json;

inline json grid_to_json(const fields::GridSpec& g) {
    json j;
    j["dim"] = g.dim;
    j["extent"] = std::vector<double>(g.extent.begin(), g.extent.begin() + g.dim);
    j["cells"] = std::vector<int>(g.cells.begin(), g.cells.begin() + g.dim);
    j["boundary"] = fields::to_string(g.boundary);
    return j;
}

inline fields::GridSpec grid_from_json(const json& j) {
    fields::GridSpec g;
    g.dim = j.at("dim").get<int>();
    auto ext = j.at("extent").get<std::vector<double>>();
    auto cel = j.at("cells").get<std::vector<int>>();
    for (int a = 0; a < g.dim; ++a) {
        g.extent[a] = ext.at(a);
        g.cells[a] = cel.at(a);
    }
    g.boundary = j.at("boundary").get<std::string>() == "periodic"
                     ? fields::Boundary::Periodic
                     : fields::Boundary::NoSlipBox;
    return g;
}

inline void write_doubles(const std::filesystem::path& path,
                          const std::vector<double>& v) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IOError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!out) throw IOError("short write to " + path.string());
}

inline std::vector<double> read_doubles(const std::filesystem::path& path,
                                        std::size_t count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IOError("cannot open " + path.string());
    std::vector<double> v(count);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
        throw IOError("short read from " + path.string());
    return v;
}

/// Persist a scalar field as <prefix>.bin (raw little-endian float64, cell
/// order) with a <prefix>.json sidecar.
inline void save_scalar(const fields::ScalarField& f, const std::filesystem::path& prefix,
                        double time, const std::string& quantity,
                        const std::string& units) {
    write_doubles(prefix.string() + ".bin", f.v);
    json side;
    side["grid"] = grid_to_json(f.grid);
    side["time"] = time;
    side["quantity"] = quantity;
    side["units"] = units;
    side["encoding"] = "float64-le";
    std::ofstream out(prefix.string() + ".json");
    if (!out) throw IOError("cannot write sidecar for " + prefix.string());
    out << side.dump(2) << "\n";
}

inline fields::ScalarField load_scalar(const std::filesystem::path& prefix,
                                       double* time = nullptr) {
    std::ifstream in(prefix.string() + ".json");
    if (!in) throw IOError("cannot read sidecar for " + prefix.string());
    json side = json::parse(in);
    fields::ScalarField f(grid_from_json(side.at("grid")));
    f.v = read_doubles(prefix.string() + ".bin", f.grid.cell_count());
    if (time) *time = side.at("time").get<double>();
    return f;
}

/// CSV writer with bit-stable formatting (%.17g).
class Csv {
public:
    explicit Csv(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void row(const std::vector<double>& values) {
        if (values.size() != columns_.size())
            throw IOError("csv row width does not match header");
        rows_.push_back(values);
    }

    std::string str() const {
        std::string out;
        for (std::size_t c = 0; c < columns_.size(); ++c) {
            out += columns_[c];
            out += (c + 1 == columns_.size()) ? '\n' : ',';
        }
        char buf[64];
        for (const auto& r : rows_) {
            for (std::size_t c = 0; c < r.size(); ++c) {
                std::snprintf(buf, sizeof(buf), "%.17g", r[c]);
                out += buf;
                out += (c + 1 == r.size()) ? '\n' : ',';
            }
        }
        return out;
    }

    void write(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw IOError("cannot open " + path.string());
        out << str();
    }

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<double>> rows_;
};

/// FNV-1a over a byte string; used to stamp outputs with a config hash.
inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace hslim::io
