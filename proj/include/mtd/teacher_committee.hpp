// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frozen teacher representations: seeded synthetic teachers with a chosen
// spatial-frequency bias, and a binary feature file for features computed
// elsewhere.

#pragma once

#include "mtd/core_model.hpp"
#include "mtd/image.hpp"

#include <array>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtd {

enum class BiasKind { LowpassSemantic, HighpassEdge, IdentityMixed };

const char* to_string(BiasKind k);
BiasKind bias_kind_from_string(const std::string& s);

struct SyntheticTeacherSpec {
    std::string teacher_id;
    std::uint64_t seed = 0;
    int channel_dim = 32;
    Grid grid{4, 4};
    BiasKind bias_kind = BiasKind::IdentityMixed;
    double bias_strength = 1.0;

    TeacherSpec shape() const { return {teacher_id, channel_dim, grid, TeacherSource::Synthetic}; }
    void validate() const;
};

/// Source of per-level frozen features keyed by the student's level ids.
class Teacher {
public:
    virtual ~Teacher() = default;
    virtual const TeacherSpec& spec() const = 0;
    virtual const std::vector<int>& levels() const = 0;
    /// `sample_index` addresses file-backed features; synthetic teachers
    /// use the image.
    virtual MultiLevelFeatures forward(const Image& image, std::size_t sample_index) const = 0;
};

/// Patchify + random projection + four tanh(conv3x3) stages, all frozen.
/// Each exported level is (1 - s) * x + s * B(x) with B the bias operator:
/// a twice-applied 3x3 box filter (lowpass), x minus its box filter
/// (highpass), or nothing (identity).
class SyntheticTeacher final : public Teacher {
public:
    SyntheticTeacher(SyntheticTeacherSpec spec, int image_size, std::vector<int> levels);

    const TeacherSpec& spec() const override { return shape_; }
    const std::vector<int>& levels() const override { return levels_; }
    MultiLevelFeatures forward(const Image& image, std::size_t sample_index = 0) const override;

    const SyntheticTeacherSpec& synthetic_spec() const { return spec_; }
    /// Unbiased trunk outputs, one per stage.
    std::vector<Tensor> trunk(const Image& image) const;

private:
    SyntheticTeacherSpec spec_;
    TeacherSpec shape_;
    int image_size_;
    std::vector<int> levels_;
    Tensor embed_;               // [3 * p * p, c]
    std::vector<Tensor> convs_;  // [9 * c, c]
};

/// Box average over the 3x3 neighbourhood, replicate padding.
Tensor box_filter(const Tensor& map, Grid grid);
Tensor apply_bias(const Tensor& map, Grid grid, BiasKind kind, double strength);

// ---------------------------------------------------------------------------
// Feature files

enum class FeatureFileErrc { Io, BadMagic, UnsupportedVersion, CorruptHeader, Truncated, LevelMismatch, ShapeMismatch };

const char* to_string(FeatureFileErrc c);

class FeatureFileError : public std::runtime_error {
public:
    FeatureFileError(FeatureFileErrc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}
    FeatureFileErrc code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    FeatureFileErrc code_;
    std::string detail_;
};

enum class FeatureDType { F16, F32, F64 };

const char* to_string(FeatureDType t);
std::size_t dtype_size(FeatureDType t);

std::uint16_t float_to_half(float f);
float half_to_float(std::uint16_t h);

struct FeatureFileHeader {
    std::string teacher_id;
    FeatureDType dtype = FeatureDType::F32;
    int depth = 0;
    std::vector<int> level_ids;
    std::vector<std::array<int, 3>> shapes;  // per level (h, w, c)
    std::uint64_t num_samples = 0;

    std::uint64_t sample_bytes() const;
};

/// Layout: "SAKF", version byte 1, u32 LE header length, UTF-8 JSON header,
/// then samples in order, each holding its levels in header order as
/// little-endian [h * w, c] row-major values.
void write_features(const std::string& path, const std::string& teacher_id, FeatureDType dtype, int depth,
                    const std::vector<MultiLevelFeatures>& samples);

class FeatureFileReader {
public:
    /// Validates magic, version, header and total size before returning.
    explicit FeatureFileReader(const std::string& path);

    const FeatureFileHeader& header() const { return header_; }
    std::size_t size() const { return static_cast<std::size_t>(header_.num_samples); }
    /// Reads one sample; safe to call concurrently.
    MultiLevelFeatures read(std::size_t index) const;
    /// Throws LevelMismatch unless the file's level ids equal `levels`.
    void require_levels(const std::vector<int>& levels) const;

private:
    std::string path_;
    FeatureFileHeader header_;
    std::uint64_t payload_offset_ = 0;
    mutable std::ifstream in_;
    mutable std::mutex mu_;
};

std::vector<MultiLevelFeatures> read_features(const std::string& path);

/// Teacher whose features come from a feature file, addressed by sample index.
class FileTeacher final : public Teacher {
public:
    FileTeacher(const std::string& path, const std::vector<int>& student_levels);

    const TeacherSpec& spec() const override { return shape_; }
    const std::vector<int>& levels() const override { return reader_->header().level_ids; }
    MultiLevelFeatures forward(const Image& image, std::size_t sample_index) const override;

private:
    std::unique_ptr<FeatureFileReader> reader_;
    TeacherSpec shape_;
};

using Committee = std::vector<std::shared_ptr<const Teacher>>;

/// Features of every member in declaration order. A failing member aborts
/// the call with an error naming it.
std::vector<MultiLevelFeatures> committee_forward(const Image& image, std::size_t sample_index,
                                                  const Committee& committee);

}  // namespace mtd
