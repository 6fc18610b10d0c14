#ifndef PERMLAB_IO_HPP
#define PERMLAB_IO_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "permlab/cell_corrector.hpp"
#include "permlab/field.hpp"
#include "permlab/geometry.hpp"

namespace permlab {

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

inline void write_kernel_csv(const std::string& path, const PermeabilityKernel& K) {
    std::ofstream out(path);
    if (!out) throw config_error("io: cannot open " + path);
    out << "t,A11,A12,A21,A22\n";
    for (int k = 0; k < K.grid.nodes(); ++k) {
        const Mat2& a = K.A[k];
        out << detail::fmt17(K.grid.t(k)) << ',' << detail::fmt17(a.a11) << ','
            << detail::fmt17(a.a12) << ',' << detail::fmt17(a.a21) << ',' << detail::fmt17(a.a22)
            << '\n';
    }
}

// Plain-text PGM of a cell mask: obstacles dark, fluid light.
inline void write_mask_pgm(const std::string& path, const Field& mask) {
    std::ofstream out(path);
    if (!out) throw config_error("io: cannot open " + path);
    out << "P2\n" << mask.nx() << ' ' << mask.ny() << "\n255\n";
    for (int j = mask.ny() - 1; j >= 0; --j) {
        for (int i = 0; i < mask.nx(); ++i) out << (mask(i, j) != 0.0 ? 40 : 230) << ' ';
        out << '\n';
    }
}

// Scalar field dump: one-line JSON header, then row-major %.17g values.
inline void write_field(const std::string& path, const Field& f, const std::string& name) {
    std::ofstream out(path);
    if (!out) throw config_error("io: cannot open " + path);
    nlohmann::json hdr{{"name", name}, {"nx", f.nx()}, {"ny", f.ny()}};
    out << hdr.dump() << '\n';
    for (int j = 0; j < f.ny(); ++j) {
        for (int i = 0; i < f.nx(); ++i) out << detail::fmt17(f(i, j)) << (i + 1 < f.nx() ? " " : "");
        out << '\n';
    }
}

inline void write_rates_csv(const std::string& path, const std::vector<double>& eps,
                            const std::vector<std::pair<std::string, std::vector<double>>>& cols) {
    std::ofstream out(path);
    if (!out) throw config_error("io: cannot open " + path);
    out << "epsilon";
    for (const auto& [name, vals] : cols) out << ',' << name;
    out << '\n';
    for (size_t r = 0; r < eps.size(); ++r) {
        out << detail::fmt17(eps[r]);
        for (const auto& [name, vals] : cols) out << ',' << detail::fmt17(vals[r]);
        out << '\n';
    }
}

inline void write_report(const std::string& path, const nlohmann::json& report) {
    std::ofstream out(path);
    if (!out) throw config_error("io: cannot open " + path);
    out << report.dump(2) << '\n';
}

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw config_error("io: cannot create directory " + dir);
}

} // namespace permlab

#endif
