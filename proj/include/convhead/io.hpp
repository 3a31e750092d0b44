#pragma once

#include "convhead/types.hpp"

#include <string>

namespace convhead {

// Both on-disk tensor formats share one container: 4-byte ASCII magic,
// version u32 LE, frame count T u32, dim D u32, then T*D float32 LE
// row-major. "VCAF" carries 45-dim acoustic features, "VCOF" 70-dim
// dynamic coefficients.
inline constexpr std::uint32_t kFileFormatVersion = 1;
inline constexpr const char* kFeatureMagic = "VCAF";
inline constexpr const char* kCoeffMagic = "VCOF";

/// Writes a T x D double matrix as float32. Values are truncated to float32;
/// the formats are defined at that precision.
void write_matrix_file(const std::string& path, const char* magic, const Mat& data);

/// Reads a matrix file, checking magic, version and payload size. Throws
/// FormatError naming the offending field, IoError if unreadable.
Mat read_matrix_file(const std::string& path, const char* magic);

void save_features(const std::string& path, const Mat& features);  // T x 45
Mat load_features(const std::string& path);

void save_sequence(const std::string& path, const CoeffSequence& seq);
CoeffSequence load_sequence(const std::string& path, double fps = 30.0);

/// Casts through float32 so a value survives a file round trip bit-exactly.
inline double to_file_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace convhead
