#include "so3dist/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace so3dist {

namespace {

const char* kRotMatHeader =
    "id,rotmat9_0,rotmat9_1,rotmat9_2,rotmat9_3,rotmat9_4,rotmat9_5,"
    "rotmat9_6,rotmat9_7,rotmat9_8,label";
const char* kQuatHeader = "id,quat_wxyz_w,quat_wxyz_x,quat_wxyz_y,quat_wxyz_z,label";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, int line_no) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": not a number: '" + s + "'");
    }
}

}  // namespace

std::vector<Mat3> RotationDataset::observations() const {
    std::vector<Mat3> out;
    out.reserve(records.size());
    for (const auto& rec : records) out.push_back(rec.rotation);
    return out;
}

Mat3 orthogonalize_rotation(const Mat3& raw, const std::string& context) {
    const ProperSvd svd = proper_svd(raw);
    const Mat3 projected = svd.u * svd.v.transpose();
    if ((raw - projected).norm() > 1e-6 || projected.determinant() < 0.0) {
        throw ParseError(context + ": matrix is not a rotation (distance " +
                         format_double((raw - projected).norm()) + ")");
    }
    return projected;
}

void write_rotation_csv(const RotationDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    const bool quat = dataset.format == RotationFormat::QuatWxyz;
    out << (quat ? kQuatHeader : kRotMatHeader) << "\n";

    auto write_row = [&](const std::string& id, const Mat3& r,
                         const std::string& label) {
        out << id;
        if (quat) {
            const Quat q = rotmat_to_quat(r);
            out << ',' << format_double(q.w) << ',' << format_double(q.x) << ','
                << format_double(q.y) << ',' << format_double(q.z);
        } else {
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) out << ',' << format_double(r(a, b));
        }
        out << ',' << label << "\n";
    };

    if (dataset.ground_truth) write_row("truth", *dataset.ground_truth, "truth");
    for (const auto& rec : dataset.records)
        write_row(rec.id, rec.rotation, rec.label);
    if (!out) throw IoError("write failed: " + path);
}

RotationDataset read_rotation_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    RotationDataset dataset;
    int n_fields;
    if (line == kRotMatHeader || line == std::string(kRotMatHeader).substr(
                                             0, std::string(kRotMatHeader).rfind(','))) {
        dataset.format = RotationFormat::RotMat9;
        n_fields = 9;
    } else if (line == kQuatHeader ||
               line == std::string(kQuatHeader).substr(
                           0, std::string(kQuatHeader).rfind(','))) {
        dataset.format = RotationFormat::QuatWxyz;
        n_fields = 4;
    } else {
        throw ParseError(path + ": line 1: unrecognized header '" + line + "'");
    }

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (static_cast<int>(fields.size()) < 1 + n_fields ||
            static_cast<int>(fields.size()) > 2 + n_fields) {
            throw ParseError(path + ": line " + std::to_string(line_no) +
                             ": expected " + std::to_string(1 + n_fields) +
                             "(+label) fields, got " +
                             std::to_string(fields.size()));
        }
        RotationRecord rec;
        rec.id = fields[0];
        if (static_cast<int>(fields.size()) == 2 + n_fields)
            rec.label = fields[1 + n_fields];

        Mat3 r;
        if (dataset.format == RotationFormat::RotMat9) {
            Mat3 raw;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b)
                    raw(a, b) = parse_double(fields[1 + 3 * a + b], line_no);
            r = orthogonalize_rotation(raw,
                                       path + ": line " + std::to_string(line_no));
        } else {
            Quat q{parse_double(fields[1], line_no), parse_double(fields[2], line_no),
                   parse_double(fields[3], line_no), parse_double(fields[4], line_no)};
            const double n = q.norm();
            if (std::abs(n - 1.0) > 1e-6) {
                throw ParseError(path + ": line " + std::to_string(line_no) +
                                 ": quaternion norm " + format_double(n));
            }
            q = {q.w / n, q.x / n, q.y / n, q.z / n};
            r = quat_to_rotmat(q);
        }
        rec.rotation = r;
        if (rec.label == "truth") {
            dataset.ground_truth = r;
        } else {
            dataset.records.push_back(std::move(rec));
        }
    }
    return dataset;
}

void write_grid_csv(const So3Grid& grid, const std::string& path) {
    RotationDataset dataset;
    dataset.format = RotationFormat::RotMat9;
    dataset.records.reserve(grid.size());
    for (std::int64_t i = 0; i < grid.size(); ++i) {
        dataset.records.push_back({std::to_string(i), grid.rotation(i), ""});
    }
    write_rotation_csv(dataset, path);
}

ParamFile read_param_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    ParamFile out;
    try {
        if (j.contains("A")) {
            Mat3 a;
            for (int i = 0; i < 3; ++i)
                for (int k = 0; k < 3; ++k) a(i, k) = j["A"].at(i).at(k).get<double>();
            out.a = a;
        }
        if (j.contains("M")) {
            QuatParam p;
            for (int i = 0; i < 4; ++i)
                for (int k = 0; k < 4; ++k)
                    p.m(i, k) = j["M"].at(i).at(k).get<double>();
            for (int i = 0; i < 4; ++i) p.z(i) = j["z"].at(i).get<double>();
            if ((p.m.transpose() * p.m - Mat4::Identity()).norm() > 1e-8) {
                throw ParseError(path + ": M is not orthogonal");
            }
            if (p.z(0) != 0.0 || p.z(1) > 0.0 || p.z(1) < p.z(2) ||
                p.z(2) < p.z(3)) {
                throw ParseError(path + ": z is not (0 >= z1 >= z2 >= z3)");
            }
            out.quat = p;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!out.a && !out.quat) {
        throw ParseError(path + ": expected key \"A\" or keys \"M\", \"z\"");
    }
    return out;
}

void write_so3_param_json(const Mat3& a, const std::string& path) {
    nlohmann::json j;
    for (int i = 0; i < 3; ++i) {
        j["A"].push_back({a(i, 0), a(i, 1), a(i, 2)});
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace so3dist
