#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chemodose/adjoint.hpp"
#include "chemodose/optimizer.hpp"
#include "chemodose/sensitivity.hpp"
#include "chemodose/state_solver.hpp"

namespace chemodose {

inline constexpr const char* kVersion = "1.0.0";

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

inline std::string frame_name(const std::string& prefix, int k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d", k);
    return prefix + buf + ".f64";
}

}  // namespace detail

/// FIELD v1: one text header line, then the cell values as little-endian
/// binary64 in row-major order.
inline std::string field_header(const Grid& g) {
    std::string h = "FIELD v1 " + std::to_string(g.dim()) + " " + std::to_string(g.nx());
    if (g.dim() == 2) h += " " + std::to_string(g.ny());
    h += " " + detail::fmt_double(g.lx());
    if (g.dim() == 2) h += " " + detail::fmt_double(g.ly());
    return h + "\n";
}

inline std::string encode_field(const ScalarField& f) {
    std::string out = field_header(f.grid());
    const std::size_t head = out.size();
    out.resize(head + 8 * f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        const std::uint64_t bits = detail::to_le(std::bit_cast<std::uint64_t>(f[i]));
        std::memcpy(out.data() + head + 8 * i, &bits, 8);
    }
    return out;
}

inline ScalarField decode_field(const std::string& bytes) {
    const auto nl = bytes.find('\n');
    if (nl == std::string::npos) throw IoError("FIELD: missing header line");
    std::istringstream hs(bytes.substr(0, nl));
    std::string magic, version;
    int dim = 0;
    hs >> magic >> version >> dim;
    if (magic != "FIELD" || version != "v1") throw IoError("FIELD: bad magic or version");
    int nx = 0, ny = 1;
    double lx = 0, ly = 1;
    if (dim == 1) {
        hs >> nx >> lx;
    } else if (dim == 2) {
        hs >> nx >> ny >> lx >> ly;
    } else {
        throw IoError("FIELD: dimension must be 1 or 2");
    }
    std::string extra;
    if (hs.fail() || (hs >> extra)) throw IoError("FIELD: malformed header");
    const Grid g = dim == 1 ? Grid::line(nx, lx) : Grid::box(nx, ny, lx, ly);
    const std::size_t expected = nl + 1 + 8 * g.cell_count();
    if (bytes.size() != expected)
        throw IoError("FIELD: payload has " + std::to_string(bytes.size() - nl - 1) + " bytes, expected " +
                      std::to_string(8 * g.cell_count()));
    std::vector<double> v(g.cell_count());
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, bytes.data() + nl + 1 + 8 * i, 8);
        v[i] = std::bit_cast<double>(detail::to_le(bits));
    }
    return ScalarField(g, std::move(v));
}

inline void write_field(const std::filesystem::path& path, const ScalarField& f) {
    detail::write_text(path, encode_field(f));
}

inline ScalarField read_field(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_field(ss.str());
}

/// One value per line under a `value` header.
inline std::string field_to_csv(const ScalarField& f) {
    std::string out = "value\n";
    for (double v : f.values()) out += detail::fmt_double(v) + "\n";
    return out;
}

inline void write_frames(const std::filesystem::path& dir, const std::string& prefix,
                         const std::vector<ScalarField>& frames) {
    for (std::size_t k = 0; k < frames.size(); ++k)
        write_field(dir / detail::frame_name(prefix, static_cast<int>(k)), frames[k]);
}

inline std::string series_csv(const StateTrajectory& traj, const ProblemData& data) {
    std::string out = "k,t,mass_phi,mass_sigma,energy,min_sigma,max_sigma\n";
    for (std::size_t k = 0; k < traj.phi.size(); ++k) {
        const auto& s = traj.sigma[k];
        out += std::to_string(k) + "," + detail::fmt_double(traj.timegrid.time(static_cast<int>(k))) + "," +
               detail::fmt_double(integrate(traj.phi[k])) + "," + detail::fmt_double(integrate(s)) + "," +
               detail::fmt_double(energy(traj.phi[k], data)) + "," + detail::fmt_double(s.min()) + "," +
               detail::fmt_double(s.max()) + "\n";
    }
    return out;
}

inline void write_trajectory(const std::filesystem::path& dir, const StateTrajectory& traj, const ProblemData& data,
                             bool snapshots = true) {
    std::filesystem::create_directories(dir);
    if (snapshots) {
        write_frames(dir, "phi_", traj.phi);
        write_frames(dir, "mu_", traj.mu);
        write_frames(dir, "sigma_", traj.sigma);
    }
    detail::write_text(dir / "series.csv", series_csv(traj, data));
}

inline void write_linearized(const std::filesystem::path& dir, const LinearizedTrajectory& lin) {
    std::filesystem::create_directories(dir);
    write_frames(dir, "Phi_", lin.Phi);
    write_frames(dir, "Xi_", lin.Xi);
    write_frames(dir, "Sigma_", lin.Sigma);
    std::string out = "k,t,norm_Phi,norm_Xi,norm_Sigma\n";
    for (std::size_t k = 0; k < lin.Phi.size(); ++k)
        out += std::to_string(k) + "," + detail::fmt_double(lin.timegrid.time(static_cast<int>(k))) + "," +
               detail::fmt_double(l2_norm(lin.Phi[k])) + "," + detail::fmt_double(l2_norm(lin.Xi[k])) + "," +
               detail::fmt_double(l2_norm(lin.Sigma[k])) + "\n";
    detail::write_text(dir / "linearized_series.csv", out);
}

inline void write_adjoint(const std::filesystem::path& dir, const AdjointTrajectory& adj) {
    std::filesystem::create_directories(dir);
    write_frames(dir, "p_", adj.p);
    write_frames(dir, "q_", adj.q);
    write_frames(dir, "radj_", adj.r_adj);
    std::string out = "k,t,norm_p,norm_q,norm_radj\n";
    for (std::size_t k = 0; k < adj.p.size(); ++k)
        out += std::to_string(k) + "," + detail::fmt_double(adj.timegrid.time(static_cast<int>(k))) + "," +
               detail::fmt_double(l2_norm(adj.p[k])) + "," + detail::fmt_double(l2_norm(adj.q[k])) + "," +
               detail::fmt_double(l2_norm(adj.r_adj[k])) + "\n";
    detail::write_text(dir / "adjoint_series.csv", out);
}

inline void write_control(const std::filesystem::path& dir, const std::string& prefix, const Control& u) {
    std::filesystem::create_directories(dir);
    std::vector<ScalarField> frames;
    for (int k = 0; k < u.frame_count(); ++k) frames.push_back(u.frame(k));
    write_frames(dir, prefix, frames);
}

inline std::string iterations_csv(const OptimizationResult& r) {
    std::string out = "iter,J,stationarity,tau,step\n";
    for (const auto& it : r.records)
        out += std::to_string(it.iter) + "," + detail::fmt_double(it.J) + "," + detail::fmt_double(it.stationarity) +
               "," + detail::fmt_double(it.tau) + "," + detail::fmt_double(it.step) + "\n";
    return out;
}

inline std::string objective_csv(const OptimizationResult& r) {
    std::string out = "iter,J,tracking,window_target,window_size,control,time,stationarity_u,dtau_value,tau\n";
    for (const auto& it : r.records) {
        const auto& t = it.terms;
        out += std::to_string(it.iter) + "," + detail::fmt_double(it.J) + "," + detail::fmt_double(t.tracking) + "," +
               detail::fmt_double(t.window_target) + "," + detail::fmt_double(t.window_size) + "," +
               detail::fmt_double(t.control) + "," + detail::fmt_double(t.time) + "," +
               detail::fmt_double(it.stationarity) + "," + detail::fmt_double(it.dtau) + "," +
               detail::fmt_double(it.tau) + "\n";
    }
    return out;
}

/// Plain `key = value` lines in insertion order.
class Manifest {
public:
    Manifest& set(const std::string& key, const std::string& value) {
        for (auto& kv : entries_)
            if (kv.first == key) {
                kv.second = value;
                return *this;
            }
        entries_.emplace_back(key, value);
        return *this;
    }
    Manifest& set(const std::string& key, double value) { return set(key, detail::fmt_double(value)); }
    Manifest& set(const std::string& key, long long value) { return set(key, std::to_string(value)); }
    Manifest& set(const std::string& key, int value) { return set(key, std::to_string(value)); }

    std::string text() const {
        std::string out;
        for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
        return out;
    }

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    detail::write_text(path, text);
}

}  // namespace chemodose
