#pragma once

#include <optional>
#include <string>
#include <vector>

#include "so3dist/distributions.hpp"

namespace so3dist {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class RotationFormat { RotMat9, QuatWxyz };

struct RotationRecord {
    std::string id;
    Mat3 rotation = Mat3::Identity();
    std::string label;  // "", "inlier", "outlier", "truth"
};

struct RotationDataset {
    RotationFormat format = RotationFormat::RotMat9;
    std::vector<RotationRecord> records;  // truth row excluded
    std::optional<Mat3> ground_truth;

    std::vector<Mat3> observations() const;
};

// CSV with a mandatory header whose rotation columns name the format variant
// (rotmat9_0..rotmat9_8 or quat_wxyz_w..quat_wxyz_z), plus id and an optional
// label column. A row with label "truth" carries the dataset's ground truth.
void write_rotation_csv(const RotationDataset& dataset, const std::string& path);
RotationDataset read_rotation_csv(const std::string& path);

// Grid CSV: header id,rotmat9_0..rotmat9_8, one row per grid rotation.
void write_grid_csv(const So3Grid& grid, const std::string& path);

// JSON parameter file: {"A": [[..],[..],[..]]} or {"M": 4x4, "z": [0,z1,z2,z3]}.
struct ParamFile {
    std::optional<Mat3> a;
    std::optional<QuatParam> quat;
};
ParamFile read_param_json(const std::string& path);
void write_so3_param_json(const Mat3& a, const std::string& path);

// Orthogonalize a parsed rotation; rejects inputs farther than 1e-6 from SO(3).
Mat3 orthogonalize_rotation(const Mat3& raw, const std::string& context);

}  // namespace so3dist
