#pragma once

#include <filesystem>
#include <string>
#include <type_traits>

#include "json.hpp"

#include "cocole/tensor.hpp"

namespace cocole {

// Rank-1 tensors become flat arrays, rank-2 become arrays of rows. Doubles are
// written in shortest round-trip form, so values survive a write/read cycle
// bit-exactly.
nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j, const Shape& expected, const std::string& what);
Tensor vector_from_json(const nlohmann::json& j, const std::string& what);

// Field access that turns nlohmann type errors into corrupt-file errors.
const nlohmann::json& field(const nlohmann::json& j, const char* key, const std::string& what);

// Optional config field: absent keeps `out`. Integer fields must be
// non-negative integers; nlohmann would otherwise wrap -3 silently.
template <class T>
void read_config_field(const nlohmann::json& doc, const char* key, T& out) {
    if (!doc.contains(key)) return;
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>)
        require(doc.at(key).is_number_unsigned(), ErrorKind::kConfig,
                std::string(key) + " must be a non-negative integer");
    out = doc.at(key).get<T>();
}

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
std::string dump_canonical(const nlohmann::json& doc);

}  // namespace cocole
