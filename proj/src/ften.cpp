#include "stflow/ften.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace stflow::ften {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
void put_le(std::ostream& os, U v) {
    unsigned char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(U));
    os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
    unsigned char buf[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw DataError("FTEN: truncated stream");
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(U));
    U v;
    std::memcpy(&v, buf, sizeof(U));
    return v;
}

template <typename T>
constexpr std::uint8_t dtype_of() {
    return sizeof(T) == 4 ? kDtypeF32 : kDtypeF64;
}

template <typename T>
Tensor<T> read_payload(std::istream& is, Shape shape) {
    std::vector<T> data(shape_numel(shape));
    for (auto& v : data) v = get_le<T>(is);
    return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace

template <typename T>
void write(std::ostream& os, const Tensor<T>& t) {
    if (t.rank() > 255) throw ShapeError("FTEN: rank exceeds 255");
    os.write("FTEN", 4);
    put_le<std::uint8_t>(os, kVersion);
    put_le<std::uint8_t>(os, dtype_of<T>());
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) {
        if (d > UINT32_MAX) throw ShapeError("FTEN: dimension exceeds u32");
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    }
    for (auto v : t.data()) put_le<T>(os, v);
}

template <typename T>
void save(const std::filesystem::path& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    write(os, t);
    if (!os) throw DataError("write failed: " + path.string());
}

AnyTensor read_any(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "FTEN", 4) != 0) throw DataError("FTEN: bad magic");
    const auto version = get_le<std::uint8_t>(is);
    if (version != kVersion) throw DataError("FTEN: unsupported version " + std::to_string(version));
    const auto dtype = get_le<std::uint8_t>(is);
    const auto rank = get_le<std::uint8_t>(is);
    Shape shape(rank);
    for (auto& d : shape) {
        d = get_le<std::uint32_t>(is);
        if (d == 0) throw DataError("FTEN: zero dimension");
    }
    if (dtype == kDtypeF32) return read_payload<float>(is, std::move(shape));
    if (dtype == kDtypeF64) return read_payload<double>(is, std::move(shape));
    throw DataError("FTEN: unknown dtype " + std::to_string(dtype));
}

template <typename T>
Tensor<T> read(std::istream& is) {
    return std::visit([](auto&& t) { return t.template cast<T>(); }, read_any(is));
}

template <typename T>
Tensor<T> load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    try {
        return read<T>(is);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

template <typename T>
std::size_t encoded_size(const Tensor<T>& t) {
    return 7 + 4 * t.rank() + sizeof(T) * t.size();
}

template void write<float>(std::ostream&, const TensorF&);
template void write<double>(std::ostream&, const TensorD&);
template void save<float>(const std::filesystem::path&, const TensorF&);
template void save<double>(const std::filesystem::path&, const TensorD&);
template TensorF read<float>(std::istream&);
template TensorD read<double>(std::istream&);
template TensorF load<float>(const std::filesystem::path&);
template TensorD load<double>(const std::filesystem::path&);
template std::size_t encoded_size<float>(const TensorF&);
template std::size_t encoded_size<double>(const TensorD&);

}  // namespace stflow::ften
