#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "nucleval/errors.hpp"
#include "nucleval/labelmap.hpp"

namespace nucleval {

namespace detail {

inline constexpr char kNpyMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

// Total header (magic + version + length field + dict + padding + newline)
// is padded to a multiple of 64 bytes.
inline std::string npy_header(int height, int width) {
  std::string dict = "{'descr': '<u4', 'fortran_order': False, 'shape': (" +
                     std::to_string(height) + ", " + std::to_string(width) + ", 2), }";
  const std::size_t unpadded = 6 + 2 + 2 + dict.size() + 1;
  const std::size_t padded = (unpadded + 63) / 64 * 64;
  dict.append(padded - unpadded, ' ');
  dict.push_back('\n');

  std::string header(kNpyMagic, sizeof(kNpyMagic));
  header.push_back('\x01');
  header.push_back('\x00');
  const std::size_t dict_len = dict.size();
  header.push_back(static_cast<char>(dict_len & 0xff));
  header.push_back(static_cast<char>((dict_len >> 8) & 0xff));
  header += dict;
  return header;
}

inline std::string::size_type find_key(const std::string& dict, const std::string& key,
                                       const char* path) {
  const auto pos = dict.find("'" + key + "'");
  if (pos == std::string::npos) {
    throw FormatError(std::string(path) + ": header missing key '" + key + "'");
  }
  auto colon = dict.find(':', pos);
  if (colon == std::string::npos) {
    throw FormatError(std::string(path) + ": malformed header near '" + key + "'");
  }
  ++colon;
  while (colon < dict.size() && dict[colon] == ' ') ++colon;
  return colon;
}

struct NpyHeaderInfo {
  int element_bytes = 0;  // 4 or 2
  int height = 0;
  int width = 0;
};

inline NpyHeaderInfo parse_npy_header(const std::string& dict, const std::string& path) {
  NpyHeaderInfo info;

  const auto descr_pos = find_key(dict, "descr", path.c_str());
  if (dict.compare(descr_pos, 5, "'<u4'") == 0) {
    info.element_bytes = 4;
  } else if (dict.compare(descr_pos, 5, "'<u2'") == 0) {
    info.element_bytes = 2;
  } else {
    throw FormatError(path + ": unsupported dtype (expected '<u4' or '<u2')");
  }

  const auto order_pos = find_key(dict, "fortran_order", path.c_str());
  if (dict.compare(order_pos, 5, "False") != 0) {
    throw FormatError(path + ": only C-contiguous arrays are supported");
  }

  auto shape_pos = find_key(dict, "shape", path.c_str());
  if (dict[shape_pos] != '(') throw FormatError(path + ": malformed shape");
  ++shape_pos;
  const auto shape_end = dict.find(')', shape_pos);
  if (shape_end == std::string::npos) throw FormatError(path + ": malformed shape");
  std::vector<long> dims;
  long current = -1;
  for (auto i = shape_pos; i < shape_end; ++i) {
    const char ch = dict[i];
    if (ch >= '0' && ch <= '9') {
      current = (current < 0 ? 0 : current) * 10 + (ch - '0');
    } else if (ch == ',' || ch == ' ') {
      if (current >= 0) dims.push_back(current);
      current = -1;
    } else {
      throw FormatError(path + ": malformed shape");
    }
  }
  if (current >= 0) dims.push_back(current);
  if (dims.size() != 3 || dims[2] != 2) {
    throw FormatError(path + ": expected shape (H, W, 2)");
  }
  if (dims[0] < 0 || dims[1] < 0 || dims[0] > std::numeric_limits<int>::max() ||
      dims[1] > std::numeric_limits<int>::max()) {
    throw FormatError(path + ": shape out of range");
  }
  info.height = static_cast<int>(dims[0]);
  info.width = static_cast<int>(dims[1]);
  return info;
}

}  // namespace detail

// Writes the patch as an NPY v1.0 array of shape (H, W, 2), dtype '<u4',
// channel 0 = instance IDs, channel 1 = class IDs.
inline void write_label_patch(const LabelPatch& patch, const std::string& path) {
  validate_label_patch(patch);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path + ": cannot open for writing");
  const std::string header = detail::npy_header(patch.height(), patch.width());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  std::vector<unsigned char> payload;
  payload.reserve(patch.instance_map.size() * 8);
  auto append_u32 = [&payload](std::uint32_t v) {
    payload.push_back(static_cast<unsigned char>(v & 0xff));
    payload.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    payload.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    payload.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
  };
  for (int r = 0; r < patch.height(); ++r) {
    for (int c = 0; c < patch.width(); ++c) {
      append_u32(static_cast<std::uint32_t>(patch.instance_map(r, c)));
      append_u32(static_cast<std::uint32_t>(patch.class_map(r, c)));
    }
  }
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw FormatError(path + ": write failed");
}

// Reads an NPY v1.0 label array. Accepts '<u4' and '<u2' elements; validates
// every label-patch invariant after decoding.
inline LabelPatch read_label_patch(const std::string& path,
                                   int class_count = kDefaultClassCount) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");

  char magic[8] = {};
  in.read(magic, 8);
  if (in.gcount() != 8 || std::string(magic, 6) != std::string(detail::kNpyMagic, 6)) {
    throw FormatError(path + ": not an NPY file (bad magic)");
  }
  if (magic[6] != '\x01' || magic[7] != '\x00') {
    throw FormatError(path + ": unsupported NPY version");
  }
  unsigned char len_bytes[2] = {};
  in.read(reinterpret_cast<char*>(len_bytes), 2);
  if (in.gcount() != 2) throw FormatError(path + ": truncated header");
  const std::size_t dict_len =
      static_cast<std::size_t>(len_bytes[0]) | (static_cast<std::size_t>(len_bytes[1]) << 8);
  std::string dict(dict_len, '\0');
  in.read(dict.data(), static_cast<std::streamsize>(dict_len));
  if (static_cast<std::size_t>(in.gcount()) != dict_len) {
    throw FormatError(path + ": truncated header");
  }

  const detail::NpyHeaderInfo info = detail::parse_npy_header(dict, path);
  const std::size_t element_count =
      static_cast<std::size_t>(info.height) * static_cast<std::size_t>(info.width) * 2;
  const std::size_t payload_bytes = element_count * static_cast<std::size_t>(info.element_bytes);
  std::vector<unsigned char> payload(payload_bytes);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload_bytes));
  if (static_cast<std::size_t>(in.gcount()) != payload_bytes) {
    throw FormatError(path + ": truncated payload");
  }
  in.peek();
  if (!in.eof()) throw FormatError(path + ": trailing bytes after payload");

  LabelPatch patch = LabelPatch::zeros(info.height, info.width);
  std::size_t offset = 0;
  auto next_value = [&]() -> std::int32_t {
    std::uint32_t v = 0;
    if (info.element_bytes == 4) {
      v = static_cast<std::uint32_t>(payload[offset]) |
          (static_cast<std::uint32_t>(payload[offset + 1]) << 8) |
          (static_cast<std::uint32_t>(payload[offset + 2]) << 16) |
          (static_cast<std::uint32_t>(payload[offset + 3]) << 24);
      offset += 4;
    } else {
      v = static_cast<std::uint32_t>(payload[offset]) |
          (static_cast<std::uint32_t>(payload[offset + 1]) << 8);
      offset += 2;
    }
    if (v > static_cast<std::uint32_t>(std::numeric_limits<std::int32_t>::max())) {
      throw FormatError(path + ": label value " + std::to_string(v) + " too large");
    }
    return static_cast<std::int32_t>(v);
  };
  for (int r = 0; r < info.height; ++r) {
    for (int c = 0; c < info.width; ++c) {
      patch.instance_map(r, c) = next_value();
      patch.class_map(r, c) = next_value();
    }
  }
  try {
    validate_label_patch(patch, class_count);
  } catch (const IntegrityError& e) {
    throw IntegrityError(path + ": " + e.what());
  }
  return patch;
}

}  // namespace nucleval
