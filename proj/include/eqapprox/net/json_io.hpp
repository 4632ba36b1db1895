#pragma once

#include <json.hpp>

#include "eqapprox/net/network.hpp"

namespace eqapprox {

// Layers with more than this many dense entries are written in the sparse
// form {"rows","cols","entries":[[i,j,v],...]}.
inline constexpr std::int64_t kDenseWeightLimit = 1'000'000;

nlohmann::json network_to_json(const ReluNetwork& net);
ReluNetwork network_from_json(const nlohmann::json& doc);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& doc);
nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& doc);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace eqapprox
