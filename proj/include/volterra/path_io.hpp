#pragma once

#include "volterra/core.hpp"
#include "volterra/gauss_cond.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

namespace volterra {

/// Shortest-safe fixed format: 17 significant digits, round-trip exact.
inline std::string fmt17(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// path,time,x1..xd per row.
inline void write_paths_csv(std::ostream& out, const PathBatch& batch) {
    const int d = batch.dim();
    out << "path,time";
    for (int c = 0; c < d; ++c) out << ",x" << (c + 1);
    out << '\n';
    const Grid& g = batch.grid();
    for (std::size_t n = 0; n < batch.paths(); ++n)
        for (std::size_t i = 0; i < g.size(); ++i) {
            out << n << ',' << fmt17(g[i]);
            const auto v = batch.value(n, i);
            for (int c = 0; c < d; ++c) out << ',' << fmt17(v(c));
            out << '\n';
        }
}

/// Binary layout, little-endian:
///   magic "VGPB0001", u64 paths, u64 points, u64 dim,
///   f64 times[points], f64 values[paths][points][dim].
inline constexpr char kPathMagic[8] = {'V', 'G', 'P', 'B', '0', '0', '0', '1'};

inline void write_paths_binary(std::ostream& out, const PathBatch& batch) {
    static_assert(std::endian::native == std::endian::little, "binary path format assumes a little-endian host");
    const std::uint64_t hdr[3] = {batch.paths(), batch.grid().size(), static_cast<std::uint64_t>(batch.dim())};
    out.write(kPathMagic, 8);
    out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    out.write(reinterpret_cast<const char*>(batch.grid().times().data()), static_cast<std::streamsize>(batch.grid().size() * sizeof(double)));
    for (std::size_t n = 0; n < batch.paths(); ++n)
        for (std::size_t i = 0; i < batch.grid().size(); ++i) {
            const Vector v = batch.value(n, i);
            out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
        }
}

struct PathFile {
    std::vector<double> times;
    std::size_t paths = 0;
    int dim = 0;
    std::vector<double> values;  // paths x points x dim
    double at(std::size_t n, std::size_t i, int c) const { return values[(n * times.size() + i) * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)]; }
};

inline PathFile read_paths_binary(std::istream& in) {
    char magic[8];
    std::uint64_t hdr[3];
    if (!in.read(magic, 8) || std::memcmp(magic, kPathMagic, 8) != 0) throw DomainError("not a VGPB0001 path file");
    if (!in.read(reinterpret_cast<char*>(hdr), sizeof hdr)) throw DomainError("truncated path file header");
    PathFile f;
    f.paths = hdr[0];
    f.dim = static_cast<int>(hdr[2]);
    f.times.resize(hdr[1]);
    f.values.resize(hdr[0] * hdr[1] * hdr[2]);
    if (!in.read(reinterpret_cast<char*>(f.times.data()), static_cast<std::streamsize>(f.times.size() * sizeof(double))) ||
        !in.read(reinterpret_cast<char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * sizeof(double))))
        throw DomainError("truncated path file body");
    return f;
}

}  // namespace volterra
