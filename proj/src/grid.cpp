#include "so3dist/grid.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>

namespace so3dist {

namespace {

constexpr char kGridMagic[9] = {'S', 'O', '3', 'G', 'R', 'I', 'D', 'v', '1'};

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

std::vector<Vec3> healpix_sphere_grid(int nside) {
    if (!is_power_of_two(nside)) {
        throw InvalidResolution("healpix_sphere_grid: nside must be a power of two");
    }
    const long npix = 12L * nside * nside;
    const long ncap = 2L * nside * (nside - 1);
    std::vector<Vec3> pts;
    pts.reserve(npix);
    for (long p = 0; p < npix; ++p) {
        double z, phi;
        if (p < ncap) {  // north polar cap: ring i has 4i pixels
            const long ip = p + 1;
            const long i = static_cast<long>(
                               std::sqrt(ip / 2.0 - std::sqrt(static_cast<double>(ip / 2)))) +
                           1;
            const long j = ip - 2 * i * (i - 1);
            z = 1.0 - static_cast<double>(i * i) / (3.0 * nside * nside);
            phi = (j - 0.5) * M_PI / (2.0 * i);
        } else if (p < npix - ncap) {  // equatorial belt: rings of 4*nside
            const long ip = p - ncap;
            const long i = ip / (4 * nside) + nside;
            const long j = ip % (4 * nside) + 1;
            const long s = (i - nside + 1) % 2;  // ring-dependent phase
            z = 4.0 / 3.0 - 2.0 * i / (3.0 * nside);
            phi = (j - s / 2.0) * M_PI / (2.0 * nside);
        } else {  // south polar cap, mirror of the north
            const long ip = npix - p;
            const long i = static_cast<long>(
                               std::sqrt(ip / 2.0 - std::sqrt(static_cast<double>(ip / 2)))) +
                           1;
            const long j = 4 * i + 1 - (ip - 2 * i * (i - 1));
            z = -1.0 + static_cast<double>(i * i) / (3.0 * nside * nside);
            phi = (j - 0.5) * M_PI / (2.0 * i);
        }
        const double st = std::sqrt(1.0 - z * z);
        pts.emplace_back(st * std::cos(phi), st * std::sin(phi), z);
    }
    return pts;
}

So3Grid hopf_so3_grid(int level) {
    if (level < 0 || level > kMaxGridLevel) {
        throw InvalidResolution("hopf_so3_grid: level must be in [0, 5]");
    }
    const int nside = 1 << level;
    const auto sphere = healpix_sphere_grid(nside);
    const int npsi = 6 * (1 << level);

    So3Grid grid;
    grid.level = level;
    const std::int64_t n = static_cast<std::int64_t>(sphere.size()) * npsi;
    grid.flat.resize(n, 9);
    grid.delta = 1.0 / static_cast<double>(n);

    std::int64_t row = 0;
    for (const Vec3& p : sphere) {
        const double theta = std::acos(std::clamp(p.z(), -1.0, 1.0));
        const double phi = std::atan2(p.y(), p.x());
        for (int k = 0; k < npsi; ++k) {
            // Half-step offset keeps identity off the grid (the heavy-tailed
            // density is singular there).
            const double psi = 2.0 * M_PI * (k + 0.5) / npsi;
            const Quat q = {std::cos(theta / 2) * std::cos(psi / 2),
                            std::cos(theta / 2) * std::sin(psi / 2),
                            std::sin(theta / 2) * std::cos(phi + psi / 2),
                            std::sin(theta / 2) * std::sin(phi + psi / 2)};
            const Mat3 r = quat_to_rotmat(q);
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) grid.flat(row, 3 * a + b) = r(a, b);
            ++row;
        }
    }
    return grid;
}

S3Grid s3_grid(int level) {
    if (level < 0 || level > kMaxGridLevel) {
        throw InvalidResolution("s3_grid: level must be in [0, 5]");
    }
    const So3Grid base = hopf_so3_grid(level);
    S3Grid grid;
    grid.level = level;
    grid.quats.resize(2 * base.size(), 4);
    grid.delta = 2.0 * M_PI * M_PI / static_cast<double>(2 * base.size());
    for (std::int64_t i = 0; i < base.size(); ++i) {
        const Quat q = rotmat_to_quat(base.rotation(i));
        grid.quats.row(2 * i) << q.w, q.x, q.y, q.z;
        grid.quats.row(2 * i + 1) << -q.w, -q.x, -q.y, -q.z;
    }
    return grid;
}

double So3Grid::cell_radius() const {
    static std::mutex radius_mutex;
    std::lock_guard<std::mutex> lock(radius_mutex);
    if (cell_radius_ >= 0.0) return cell_radius_;
    const std::int64_t n = size();
    // Self-dot of rotation rows is 3; nearest neighbor maximizes the dot.
    const std::int64_t stride = level >= 3 ? (n + 1999) / 2000 : 1;
    double max_half = 0.0;
    Eigen::VectorXd dots(n);
    for (std::int64_t i = 0; i < n; i += stride) {
        dots.noalias() = flat * flat.row(i).transpose();
        dots(i) = -4.0;
        const double best = dots.maxCoeff();
        const double d = std::acos(std::clamp((best - 1.0) / 2.0, -1.0, 1.0));
        max_half = std::max(max_half, d / 2.0);
    }
    cell_radius_ = max_half;
    return cell_radius_;
}

namespace {

std::mutex g_cache_mutex;
std::map<int, std::shared_ptr<const So3Grid>> g_so3_cache;
std::map<int, std::shared_ptr<const S3Grid>> g_s3_cache;

std::string disk_cache_path(int level) {
    const char* dir = std::getenv("SO3_GRID_CACHE");
    if (dir == nullptr || *dir == '\0') return {};
    return std::string(dir) + "/so3grid_level" + std::to_string(level) + ".bin";
}

}  // namespace

std::shared_ptr<const So3Grid> shared_so3_grid(int level) {
    std::lock_guard<std::mutex> lock(g_cache_mutex);
    auto it = g_so3_cache.find(level);
    if (it != g_so3_cache.end()) return it->second;

    std::shared_ptr<const So3Grid> grid;
    const std::string path = disk_cache_path(level);
    if (!path.empty()) {
        try {
            auto loaded = std::make_shared<So3Grid>(read_grid_binary(path));
            if (loaded->level == level) grid = loaded;
        } catch (const std::exception&) {
            // fall through to rebuilding
        }
    }
    if (!grid) {
        grid = std::make_shared<So3Grid>(hopf_so3_grid(level));
        if (!path.empty()) {
            try {
                write_grid_binary(*grid, path);
            } catch (const std::exception&) {
                // cache directory not writable; keep the in-memory grid
            }
        }
    }
    g_so3_cache[level] = grid;
    return grid;
}

std::shared_ptr<const S3Grid> shared_s3_grid(int level) {
    std::lock_guard<std::mutex> lock(g_cache_mutex);
    auto it = g_s3_cache.find(level);
    if (it != g_s3_cache.end()) return it->second;
    auto grid = std::make_shared<S3Grid>(s3_grid(level));
    g_s3_cache[level] = grid;
    return grid;
}

void write_grid_binary(const So3Grid& grid, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open grid file: " + path);
    out.write(kGridMagic, sizeof(kGridMagic));
    const std::uint32_t level = static_cast<std::uint32_t>(grid.level);
    const std::uint64_t count = static_cast<std::uint64_t>(grid.size());
    out.write(reinterpret_cast<const char*>(&level), sizeof(level));
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (std::int64_t i = 0; i < grid.size(); ++i) {
        for (int j = 0; j < 9; ++j) {
            const double v = grid.flat(i, j);
            out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    }
    if (!out) throw IoError("cannot open grid file: " + path);
}

So3Grid read_grid_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open grid file: " + path);
    char magic[sizeof(kGridMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kGridMagic, sizeof(magic)) != 0) {
        throw InvalidResolution("grid file has wrong magic: " + path);
    }
    std::uint32_t level = 0;
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&level), sizeof(level));
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in || count == 0 || count > (1ULL << 32)) {
        throw InvalidResolution("grid file has bad header: " + path);
    }
    So3Grid grid;
    grid.level = static_cast<int>(level);
    grid.flat.resize(static_cast<std::int64_t>(count), 9);
    grid.delta = 1.0 / static_cast<double>(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        double row[9];
        in.read(reinterpret_cast<char*>(row), sizeof(row));
        if (!in) throw InvalidResolution("grid file truncated: " + path);
        for (int j = 0; j < 9; ++j) grid.flat(i, j) = row[j];
    }
    return grid;
}

}  // namespace so3dist
