#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "icl/core.hpp"

namespace icl {

inline nlohmann::json to_json(const Vec& v) {
    return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline nlohmann::json to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vec(m.row(i).transpose())));
    return rows;
}

inline Vec vec_from_json(const nlohmann::json& j) {
    auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Row-list JSON to matrix; `cols` is used when the list is empty.
inline Mat mat_from_json(const nlohmann::json& j, Eigen::Index cols = 0) {
    if (j.empty()) return Mat(0, cols);
    Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        require_shape(j[i].size() == static_cast<std::size_t>(m.cols()), "ragged matrix in JSON");
        m.row(static_cast<Eigen::Index>(i)) = vec_from_json(j[i]).transpose();
    }
    return m;
}

}  // namespace icl
