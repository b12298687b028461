#include "cocole/json_util.hpp"

#include <fstream>
#include <sstream>

namespace cocole {

using nlohmann::json;

json tensor_to_json(const Tensor& t) {
    auto v = t.data();
    if (t.rank() == 1) return json(std::vector<double>(v.begin(), v.end()));
    json rows = json::array();
    const auto c = t.cols();
    for (std::size_t r = 0; r < t.rows(); ++r)
        rows.push_back(std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(r * c),
                                           v.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)));
    return rows;
}

namespace {

void read_row(const json& j, std::vector<double>& out, const std::string& what) {
    require(j.is_array(), ErrorKind::kCorruptFile, what + ": expected an array of numbers");
    for (const auto& x : j) {
        require(x.is_number(), ErrorKind::kCorruptFile, what + ": non-numeric entry");
        out.push_back(x.get<double>());
    }
}

}  // namespace

Tensor tensor_from_json(const json& j, const Shape& expected, const std::string& what) {
    std::vector<double> data;
    data.reserve(shape_size(expected));
    if (expected.size() == 1) {
        read_row(j, data, what);
    } else {
        require(j.is_array() && j.size() == expected[0], ErrorKind::kCorruptFile,
                what + ": expected " + std::to_string(expected[0]) + " rows");
        for (const auto& r : j) {
            const auto before = data.size();
            read_row(r, data, what);
            require(data.size() - before == expected[1], ErrorKind::kCorruptFile,
                    what + ": row length differs from " + std::to_string(expected[1]));
        }
    }
    require(data.size() == shape_size(expected), ErrorKind::kCorruptFile,
            what + ": expected shape " + shape_str(expected));
    return Tensor(expected, std::move(data));
}

Tensor vector_from_json(const json& j, const std::string& what) {
    std::vector<double> data;
    read_row(j, data, what);
    require(!data.empty(), ErrorKind::kCorruptFile, what + ": empty vector");
    return Tensor::vector(std::move(data));
}

const json& field(const json& j, const char* key, const std::string& what) {
    require(j.is_object() && j.contains(key), ErrorKind::kCorruptFile,
            what + ": missing field '" + key + "'");
    return j.at(key);
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::kIo, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::exception& e) {
        fail(ErrorKind::kCorruptFile, path.string() + ": " + e.what());
    }
}

std::string dump_canonical(const json& doc) { return doc.dump(); }

void write_json_file(const std::filesystem::path& path, const json& doc) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
    out << dump_canonical(doc) << '\n';
}

}  // namespace cocole
