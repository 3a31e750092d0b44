#include "convhead/io.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace convhead {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& field) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) {
    throw FormatError("truncated header while reading " + field);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_matrix_file(const std::string& path, const char* magic, const Mat& data) {
  if (data.rows() == 0 || data.cols() == 0) {
    throw InputError(std::string(magic) + ": refusing to write an empty matrix");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open for writing: " + path);
  }
  out.write(magic, 4);
  put_u32(out, kFileFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(data.rows()));
  put_u32(out, static_cast<std::uint32_t>(data.cols()));
  std::vector<float> row(static_cast<std::size_t>(data.cols()));
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      row[static_cast<std::size_t>(c)] = static_cast<float>(data(r, c));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) {
    throw IoError("write failed: " + path);
  }
}

Mat read_matrix_file(const std::string& path, const char* magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open for reading: " + path);
  }
  char got[5] = {0};
  in.read(got, 4);
  if (!in || std::strncmp(got, magic, 4) != 0) {
    throw FormatError(path + ": bad magic: expected '" + magic + "', got '" +
                      std::string(got, got + (in ? 4 : in.gcount())) + "'");
  }
  const std::uint32_t version = get_u32(in, "version");
  if (version != kFileFormatVersion) {
    throw FormatError(path + ": unsupported version " + std::to_string(version) +
                      ", expected " + std::to_string(kFileFormatVersion));
  }
  const std::uint32_t rows = get_u32(in, "frame count");
  const std::uint32_t cols = get_u32(in, "dim");
  if (rows == 0 || cols == 0) {
    throw FormatError(path + ": zero frame count or dim");
  }
  const std::size_t want = static_cast<std::size_t>(rows) * cols * sizeof(float);
  std::vector<float> payload(static_cast<std::size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(want));
  const std::size_t got_bytes = static_cast<std::size_t>(in.gcount());
  if (got_bytes != want) {
    throw FormatError(path + ": truncated payload: expected " + std::to_string(want) +
                      " bytes, got " + std::to_string(got_bytes));
  }
  Mat out(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      out(r, c) = static_cast<double>(payload[static_cast<std::size_t>(r) * cols + c]);
    }
  }
  return out;
}

void save_features(const std::string& path, const Mat& features) {
  if (features.cols() != kAudioDim) {
    throw ShapeError("save_features: expected " + std::to_string(kAudioDim) +
                     " columns, got " + std::to_string(features.cols()));
  }
  write_matrix_file(path, kFeatureMagic, features);
}

Mat load_features(const std::string& path) {
  Mat m = read_matrix_file(path, kFeatureMagic);
  if (m.cols() != kAudioDim) {
    throw FormatError(path + ": dim: expected " + std::to_string(kAudioDim) + ", got " +
                      std::to_string(m.cols()));
  }
  return m;
}

void save_sequence(const std::string& path, const CoeffSequence& seq) {
  if (seq.frames.empty()) {
    throw InputError("save_sequence: empty sequence");
  }
  write_matrix_file(path, kCoeffMagic, seq.to_matrix());
}

CoeffSequence load_sequence(const std::string& path, double fps) {
  Mat m = read_matrix_file(path, kCoeffMagic);
  if (m.cols() != kMotionDim) {
    throw FormatError(path + ": dim: expected " + std::to_string(kMotionDim) + ", got " +
                      std::to_string(m.cols()));
  }
  return CoeffSequence::from_matrix(m, fps);
}

}  // namespace convhead
