#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <variant>

#include "stflow/tensor.hpp"

namespace stflow::ften {

// Binary layout: "FTEN", u8 version (1), u8 dtype (1 = f32, 2 = f64),
// u8 rank, rank x u32 LE dims, then the row-major values as LE IEEE-754.
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;
inline constexpr std::uint8_t kDtypeF64 = 2;

using AnyTensor = std::variant<TensorF, TensorD>;

template <typename T>
void write(std::ostream& os, const Tensor<T>& t);

template <typename T>
void save(const std::filesystem::path& path, const Tensor<T>& t);

AnyTensor read_any(std::istream& is);

// Reads either dtype and converts to T.
template <typename T>
Tensor<T> read(std::istream& is);

template <typename T>
Tensor<T> load(const std::filesystem::path& path);

// Size in bytes of the encoded tensor.
template <typename T>
std::size_t encoded_size(const Tensor<T>& t);

}  // namespace stflow::ften
