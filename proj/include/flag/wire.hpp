// Copyright 2026 the FLAG Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FLAG_WIRE_HPP_
#define FLAG_WIRE_HPP_

#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace flag::wire {

// Residues travel packed little-endian at ceil(log2 q) bits each, no
// padding between entries, final byte zero-padded. Bit j of the stream is
// bit (j % 8) of byte (j / 8). This packing is the basis of the
// communication accounting: payload bits = count * width exactly.

inline int bits_per_residue(std::uint64_t q) {
  if (q < 2) throw std::invalid_argument("modulus must be at least 2");
  return std::bit_width(q - 1);
}

class BitWriter {
 public:
  void put(std::uint64_t value, int width) {
    if (width < 1 || width > 57) throw std::invalid_argument("bit width out of range");
    buffer_ |= value << filled_;
    filled_ += width;
    while (filled_ >= 8) {
      bytes_.push_back(static_cast<std::uint8_t>(buffer_));
      buffer_ >>= 8;
      filled_ -= 8;
    }
    total_bits_ += width;
  }

  // Flushes the partial byte (zero-padded) and returns the buffer.
  std::vector<std::uint8_t> finish() {
    if (filled_ > 0) {
      bytes_.push_back(static_cast<std::uint8_t>(buffer_));
      buffer_ = 0;
      filled_ = 0;
    }
    return std::move(bytes_);
  }

  std::size_t bit_count() const { return total_bits_; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint64_t buffer_ = 0;
  int filled_ = 0;
  std::size_t total_bits_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t get(int width) {
    if (width < 1 || width > 57) throw std::invalid_argument("bit width out of range");
    while (held_ < width) {
      if (next_byte_ >= bytes_.size()) throw std::out_of_range("bit stream exhausted");
      buffer_ |= static_cast<std::uint64_t>(bytes_[next_byte_++]) << held_;
      held_ += 8;
    }
    std::uint64_t value = buffer_ & ((1ULL << width) - 1);
    buffer_ >>= width;
    held_ -= width;
    return value;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t next_byte_ = 0;
  std::uint64_t buffer_ = 0;
  int held_ = 0;
};

inline std::vector<std::uint8_t> pack_residues(std::span<const std::uint64_t> values,
                                               std::uint64_t q) {
  const int width = bits_per_residue(q);
  BitWriter writer;
  for (std::uint64_t v : values) {
    if (v >= q) throw std::invalid_argument("residue out of range for modulus");
    writer.put(v, width);
  }
  return writer.finish();
}

inline std::vector<std::uint64_t> unpack_residues(std::span<const std::uint8_t> bytes,
                                                  std::size_t count, std::uint64_t q) {
  const int width = bits_per_residue(q);
  BitReader reader(bytes);
  std::vector<std::uint64_t> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = reader.get(width);
    if (values[i] >= q) throw std::invalid_argument("packed residue exceeds modulus");
  }
  return values;
}

inline std::size_t packed_bits(std::size_t count, std::uint64_t q) {
  return count * static_cast<std::size_t>(bits_per_residue(q));
}

inline std::size_t packed_bytes(std::size_t count, std::uint64_t q) {
  return (packed_bits(count, q) + 7) / 8;
}

}  // namespace flag::wire

#endif  // FLAG_WIRE_HPP_
