#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "so3dist/core.hpp"

namespace so3dist {

struct InvalidResolution : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kMaxGridLevel = 5;

// Row-major so each row is a contiguous 3x3 rotation, viewable in place.
using GridFlat = Eigen::Matrix<double, Eigen::Dynamic, 9, Eigen::RowMajor>;

// Equivolumetric rotation grid. Rotations are stored both as matrices and as
// an N x 9 row-major flattening so density and gradient evaluations reduce to
// matrix-vector products against the whole grid.
struct So3Grid {
    int level = 0;
    GridFlat flat;  // row i = vec(R_i), row-major
    double delta = 0.0;                             // 1 / |G|, sums to 1

    std::int64_t size() const { return flat.rows(); }
    Mat3 rotation(std::int64_t i) const {
        return Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(
            flat.row(i).data());
    }
    // Max over grid points of half the distance to the nearest other point;
    // estimated from a subsample at level >= 3.
    double cell_radius() const;

  private:
    mutable double cell_radius_ = -1.0;
};

struct S3Grid {
    int level = 0;
    Eigen::Matrix<double, Eigen::Dynamic, 4> quats;  // rows (w,x,y,z), both lifts
    double delta = 0.0;                              // 2 pi^2 / |G|, sums to 2 pi^2

    std::int64_t size() const { return quats.rows(); }
    Quat quaternion(std::int64_t i) const {
        return {quats(i, 0), quats(i, 1), quats(i, 2), quats(i, 3)};
    }
};

// HEALPix ring-scheme pixel centers, 12 * nside^2 equal-area cells.
std::vector<Vec3> healpix_sphere_grid(int nside);

So3Grid hopf_so3_grid(int level);
S3Grid s3_grid(int level);

// Cached access; grids are built once per level (or loaded from the directory
// named by SO3_GRID_CACHE) and shared. Thread-safe.
std::shared_ptr<const So3Grid> shared_so3_grid(int level);
std::shared_ptr<const S3Grid> shared_s3_grid(int level);

// Binary cache file: "SO3GRIDv1", u32 level, u64 count, count x 9 f64
// little-endian row-major matrices.
void write_grid_binary(const So3Grid& grid, const std::string& path);
So3Grid read_grid_binary(const std::string& path);

}  // namespace so3dist
