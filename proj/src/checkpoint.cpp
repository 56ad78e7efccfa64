#include "sgn/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace sgn::ckpt {

namespace {
void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}
std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4))
        throw std::runtime_error("truncated checkpoint");
    return v;
}
}  // namespace

void save(const ad::ParamStore& params, const std::string& meta_json,
          const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << "SGNCKPT 1\n";
    write_u32(out, static_cast<std::uint32_t>(meta_json.size()));
    out.write(meta_json.data(), meta_json.size());
    write_u32(out, static_cast<std::uint32_t>(params.tensors.size()));
    for (const auto& [name, m] : params.tensors) {
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), name.size());
        write_u32(out, static_cast<std::uint32_t>(m.rows()));
        write_u32(out, static_cast<std::uint32_t>(m.cols()));
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j) {
                double d = m(i, j);
                out.write(reinterpret_cast<const char*>(&d), 8);
            }
    }
}

ad::ParamStore load(const std::string& path, std::string* meta_json) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    std::string magic;
    std::getline(in, magic);
    if (magic != "SGNCKPT 1")
        throw std::runtime_error("unsupported checkpoint format: " + path);
    std::uint32_t meta_len = read_u32(in);
    std::string meta(meta_len, '\0');
    in.read(meta.data(), meta_len);
    if (meta_json) *meta_json = meta;
    ad::ParamStore params;
    std::uint32_t n = read_u32(in);
    for (std::uint32_t k = 0; k < n; ++k) {
        std::uint32_t name_len = read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        int rows = static_cast<int>(read_u32(in));
        int cols = static_cast<int>(read_u32(in));
        ad::Matrix m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) {
                double d = 0;
                if (!in.read(reinterpret_cast<char*>(&d), 8))
                    throw std::runtime_error("truncated checkpoint tensor");
                m(i, j) = d;
            }
        params.tensors.emplace(std::move(name), std::move(m));
    }
    return params;
}

}  // namespace sgn::ckpt
