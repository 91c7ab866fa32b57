// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/teacher_committee.hpp"

#include "mtd/errors.hpp"
#include "mtd/params.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>

namespace mtd {

const char* to_string(BiasKind k) {
    switch (k) {
        case BiasKind::LowpassSemantic: return "lowpass-semantic";
        case BiasKind::HighpassEdge: return "highpass-edge";
        case BiasKind::IdentityMixed: return "identity-mixed";
    }
    return "?";
}

BiasKind bias_kind_from_string(const std::string& s) {
    for (BiasKind k : {BiasKind::LowpassSemantic, BiasKind::HighpassEdge, BiasKind::IdentityMixed})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown bias kind '" + s + "'");
}

void SyntheticTeacherSpec::validate() const {
    shape().validate();
    if (!(bias_strength >= 0.0 && bias_strength <= 1.0)) {
        throw ConfigError("teacher " + teacher_id + ": bias_strength must lie in [0, 1]");
    }
}

Tensor box_filter(const Tensor& map, Grid grid) {
    if (map.rows != grid.count()) throw ConfigError("box_filter: map does not match grid");
    Tensor out(map.rows, map.cols);
    for (int y = 0; y < grid.h; ++y)
        for (int x = 0; x < grid.w; ++x) {
            auto dst = out.row(y * grid.w + x);
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = std::clamp(y + dy, 0, grid.h - 1);
                    const int xx = std::clamp(x + dx, 0, grid.w - 1);
                    auto src = map.row(yy * grid.w + xx);
                    for (int c = 0; c < map.cols; ++c) dst[c] += src[c];
                }
            for (double& v : dst) v /= 9.0;
        }
    return out;
}

Tensor apply_bias(const Tensor& map, Grid grid, BiasKind kind, double strength) {
    if (kind == BiasKind::IdentityMixed || strength == 0.0) return map;
    Tensor biased;
    if (kind == BiasKind::LowpassSemantic) {
        biased = box_filter(box_filter(map, grid), grid);
    } else {
        biased = map;
        axpy(-1.0, box_filter(map, grid), biased);
    }
    Tensor out(map.rows, map.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = (1.0 - strength) * map.data[i] + strength * biased.data[i];
    return out;
}

SyntheticTeacher::SyntheticTeacher(SyntheticTeacherSpec spec, int image_size, std::vector<int> levels)
    : spec_(std::move(spec)), shape_(spec_.shape()), image_size_(image_size), levels_(std::move(levels)) {
    spec_.validate();
    if (levels_.size() != 4) throw ConfigError("teacher " + spec_.teacher_id + ": expected four level ids");
    if (image_size % spec_.grid.h != 0 || image_size % spec_.grid.w != 0 || spec_.grid.h != spec_.grid.w) {
        throw ConfigError("teacher " + spec_.teacher_id + ": grid must be square and divide the image size");
    }
    const int patch = image_size / spec_.grid.h;
    const int c = spec_.channel_dim;
    Rng rng = make_stream(spec_.seed, "synthetic_teacher");
    const int fan_in = 3 * patch * patch;
    embed_ = init::normal(fan_in, c, 2.0 / std::sqrt(static_cast<double>(fan_in)), rng);
    for (int k = 0; k < 4; ++k) convs_.push_back(init::normal(9 * c, c, 1.5 / std::sqrt(9.0 * c), rng));
}

std::vector<Tensor> SyntheticTeacher::trunk(const Image& image) const {
    if (image.channels != 3 || image.height != image_size_ || image.width != image_size_) {
        throw ConfigError("teacher " + spec_.teacher_id + ": image shape does not match");
    }
    Tensor x = matmul(extract_patches(image, image_size_ / spec_.grid.h, image_size_ / spec_.grid.w), embed_);
    for (double& v : x.data) v = std::tanh(v);
    std::vector<Tensor> stages;
    const Var bias = Var::constant(Tensor(1, spec_.channel_dim));
    for (const Tensor& w : convs_) {
        Tensor y = ag::conv3x3(Var::constant(x), spec_.grid, Var::constant(w), bias).value();
        for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = std::tanh(y.data[i] + x.data[i]);
        x = y;
        stages.push_back(x);
    }
    return stages;
}

MultiLevelFeatures SyntheticTeacher::forward(const Image& image, std::size_t) const {
    const auto stages = trunk(image);
    MultiLevelFeatures out;
    for (std::size_t k = 0; k < levels_.size(); ++k) {
        Tensor biased = apply_bias(stages[k], spec_.grid, spec_.bias_kind, spec_.bias_strength);
        out[levels_[k]] = TokenMap{Var::constant(std::move(biased)), spec_.grid, levels_[k]};
    }
    return out;
}

// ---------------------------------------------------------------------------

const char* to_string(FeatureFileErrc c) {
    switch (c) {
        case FeatureFileErrc::Io: return "io";
        case FeatureFileErrc::BadMagic: return "bad_magic";
        case FeatureFileErrc::UnsupportedVersion: return "unsupported_version";
        case FeatureFileErrc::CorruptHeader: return "corrupt_header";
        case FeatureFileErrc::Truncated: return "truncated";
        case FeatureFileErrc::LevelMismatch: return "level_mismatch";
        case FeatureFileErrc::ShapeMismatch: return "shape_mismatch";
    }
    return "?";
}

const char* to_string(FeatureDType t) {
    switch (t) {
        case FeatureDType::F16: return "f16";
        case FeatureDType::F32: return "f32";
        case FeatureDType::F64: return "f64";
    }
    return "?";
}

std::size_t dtype_size(FeatureDType t) {
    switch (t) {
        case FeatureDType::F16: return 2;
        case FeatureDType::F32: return 4;
        case FeatureDType::F64: return 8;
    }
    return 0;
}

namespace {

FeatureDType dtype_from_string(const std::string& s) {
    for (FeatureDType t : {FeatureDType::F16, FeatureDType::F32, FeatureDType::F64})
        if (s == to_string(t)) return t;
    throw FeatureFileError(FeatureFileErrc::CorruptHeader, "unknown dtype '" + s + "'");
}

constexpr char kMagic[4] = {'S', 'A', 'K', 'F'};
constexpr std::uint8_t kVersion = 1;

void put_le(std::string& out, std::uint64_t bits, std::size_t bytes) {
    for (std::size_t i = 0; i < bytes; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const unsigned char* p, std::size_t bytes) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void encode(std::string& out, double v, FeatureDType t) {
    switch (t) {
        case FeatureDType::F16: put_le(out, float_to_half(static_cast<float>(v)), 2); break;
        case FeatureDType::F32: put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4); break;
        case FeatureDType::F64: put_le(out, std::bit_cast<std::uint64_t>(v), 8); break;
    }
}

double decode(const unsigned char* p, FeatureDType t) {
    switch (t) {
        case FeatureDType::F16: return half_to_float(static_cast<std::uint16_t>(get_le(p, 2)));
        case FeatureDType::F32: return std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p, 4)));
        case FeatureDType::F64: return std::bit_cast<double>(get_le(p, 8));
    }
    return 0.0;
}

}  // namespace

std::uint16_t float_to_half(float f) {
    const std::uint32_t x = std::bit_cast<std::uint32_t>(f);
    const std::uint32_t sign = (x >> 16) & 0x8000u;
    const int exp = static_cast<int>((x >> 23) & 0xffu);
    std::uint32_t mant = x & 0x7fffffu;
    if (exp == 255) return static_cast<std::uint16_t>(sign | 0x7c00u | (mant ? 0x200u | (mant >> 13) : 0u));
    const int e = exp - 127 + 15;
    if (e >= 31) return static_cast<std::uint16_t>(sign | 0x7c00u);
    if (e <= 0) {
        if (e < -10) return static_cast<std::uint16_t>(sign);
        mant |= 0x800000u;
        const int shift = 14 - e;
        std::uint32_t half = mant >> shift;
        const std::uint32_t rem = mant & ((1u << shift) - 1u);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half & 1u))) ++half;
        return static_cast<std::uint16_t>(sign | half);
    }
    std::uint32_t half = (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
    const std::uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;  // may carry into infinity
    return static_cast<std::uint16_t>(sign | half);
}

float half_to_float(std::uint16_t h) {
    const bool neg = h & 0x8000u;
    const int exp = (h >> 10) & 0x1f;
    const int mant = h & 0x3ff;
    float v;
    if (exp == 0) {
        v = std::ldexp(static_cast<float>(mant), -24);
    } else if (exp == 31) {
        v = mant ? std::numeric_limits<float>::quiet_NaN() : std::numeric_limits<float>::infinity();
    } else {
        v = std::ldexp(static_cast<float>(mant | 0x400), exp - 25);
    }
    return neg ? -v : v;
}

std::uint64_t FeatureFileHeader::sample_bytes() const {
    std::uint64_t n = 0;
    for (const auto& s : shapes) n += static_cast<std::uint64_t>(s[0]) * s[1] * s[2];
    return n * dtype_size(dtype);
}

void write_features(const std::string& path, const std::string& teacher_id, FeatureDType dtype, int depth,
                    const std::vector<MultiLevelFeatures>& samples) {
    if (samples.empty()) throw ConfigError("write_features: no samples");
    const std::vector<int> levels = select_levels(depth);
    nlohmann::json shapes = nlohmann::json::array();
    for (int l : levels) {
        auto it = samples.front().find(l);
        if (it == samples.front().end()) {
            throw FeatureFileError(FeatureFileErrc::LevelMismatch, "sample 0 lacks level " + std::to_string(l));
        }
        shapes.push_back({it->second.grid.h, it->second.grid.w, it->second.channels()});
    }
    nlohmann::json header = {{"teacher_id", teacher_id}, {"dtype", to_string(dtype)},
                             {"depth", depth},           {"level_ids", levels},
                             {"shapes", shapes},         {"num_samples", samples.size()}};
    const std::string text = header.dump();

    std::string bytes(kMagic, 4);
    bytes.push_back(static_cast<char>(kVersion));
    put_le(bytes, text.size(), 4);
    bytes += text;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        if (samples[s].size() != levels.size()) {
            throw FeatureFileError(FeatureFileErrc::LevelMismatch, "sample " + std::to_string(s) + " level count");
        }
        for (std::size_t k = 0; k < levels.size(); ++k) {
            auto it = samples[s].find(levels[k]);
            if (it == samples[s].end()) {
                throw FeatureFileError(FeatureFileErrc::LevelMismatch, "sample " + std::to_string(s) + " lacks a level");
            }
            const TokenMap& m = it->second;
            if (m.grid.h != shapes[k][0] || m.grid.w != shapes[k][1] || m.channels() != shapes[k][2]) {
                throw FeatureFileError(FeatureFileErrc::ShapeMismatch, "sample " + std::to_string(s) + " level " +
                                                                           std::to_string(levels[k]));
            }
            for (double v : m.values().data) encode(bytes, v, dtype);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FeatureFileError(FeatureFileErrc::Io, "cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FeatureFileError(FeatureFileErrc::Io, "write failed for " + path);
}

FeatureFileReader::FeatureFileReader(const std::string& path) : path_(path) {
    in_.open(path, std::ios::binary);
    if (!in_) throw FeatureFileError(FeatureFileErrc::Io, "cannot open " + path);
    std::error_code ec;
    const std::uint64_t file_size = std::filesystem::file_size(path, ec);
    if (ec) throw FeatureFileError(FeatureFileErrc::Io, "cannot stat " + path);

    unsigned char prefix[9] = {};
    in_.read(reinterpret_cast<char*>(prefix), 9);
    const auto got = in_.gcount();
    if (std::memcmp(prefix, kMagic, static_cast<std::size_t>(std::min<std::streamsize>(got, 4))) != 0) {
        throw FeatureFileError(FeatureFileErrc::BadMagic, path);
    }
    if (got < 9) throw FeatureFileError(FeatureFileErrc::Truncated, path + " ends inside the preamble");
    if (std::memcmp(prefix, kMagic, 4) != 0) throw FeatureFileError(FeatureFileErrc::BadMagic, path);
    if (prefix[4] != kVersion) {
        throw FeatureFileError(FeatureFileErrc::UnsupportedVersion, "version " + std::to_string(prefix[4]));
    }
    const std::uint64_t header_len = get_le(prefix + 5, 4);
    if (9 + header_len > file_size) throw FeatureFileError(FeatureFileErrc::Truncated, path + " ends inside the header");
    std::string text(header_len, '\0');
    in_.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!in_) throw FeatureFileError(FeatureFileErrc::Io, "read failed for " + path);

    try {
        const auto j = nlohmann::json::parse(text);
        header_.teacher_id = j.at("teacher_id").get<std::string>();
        header_.dtype = dtype_from_string(j.at("dtype").get<std::string>());
        header_.depth = j.at("depth").get<int>();
        header_.level_ids = j.at("level_ids").get<std::vector<int>>();
        header_.shapes = j.at("shapes").get<std::vector<std::array<int, 3>>>();
        header_.num_samples = j.at("num_samples").get<std::uint64_t>();
    } catch (const FeatureFileError&) {
        throw;
    } catch (const std::exception& e) {
        throw FeatureFileError(FeatureFileErrc::CorruptHeader, e.what());
    }
    if (header_.level_ids.size() != header_.shapes.size() || header_.level_ids.empty()) {
        throw FeatureFileError(FeatureFileErrc::CorruptHeader, "level_ids and shapes disagree");
    }
    for (const auto& s : header_.shapes)
        if (s[0] < 1 || s[1] < 1 || s[2] < 1) throw FeatureFileError(FeatureFileErrc::CorruptHeader, "non-positive shape");
    std::vector<int> expected;
    try {
        expected = select_levels(header_.depth);
    } catch (const ConfigError& e) {
        throw FeatureFileError(FeatureFileErrc::CorruptHeader, e.what());
    }
    if (header_.level_ids != expected) {
        throw FeatureFileError(FeatureFileErrc::LevelMismatch, "level ids do not match depth " + std::to_string(header_.depth));
    }
    payload_offset_ = 9 + header_len;
    const std::uint64_t need = payload_offset_ + header_.num_samples * header_.sample_bytes();
    if (file_size < need) {
        throw FeatureFileError(FeatureFileErrc::Truncated, path + " holds " + std::to_string(file_size) + " of " +
                                                               std::to_string(need) + " bytes");
    }
    if (file_size > need) throw FeatureFileError(FeatureFileErrc::CorruptHeader, path + " has trailing bytes");
}

MultiLevelFeatures FeatureFileReader::read(std::size_t index) const {
    if (index >= size()) throw ConfigError("feature file " + path_ + ": sample " + std::to_string(index) + " out of range");
    const std::uint64_t bytes = header_.sample_bytes();
    std::vector<unsigned char> buf(bytes);
    {
        std::lock_guard lock(mu_);
        in_.clear();
        in_.seekg(static_cast<std::streamoff>(payload_offset_ + index * bytes));
        if (!in_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes))) {
            throw FeatureFileError(FeatureFileErrc::Truncated, path_ + ": short read of sample " + std::to_string(index));
        }
    }
    MultiLevelFeatures out;
    const std::size_t width = dtype_size(header_.dtype);
    const unsigned char* p = buf.data();
    for (std::size_t k = 0; k < header_.level_ids.size(); ++k) {
        const auto& s = header_.shapes[k];
        Tensor t(s[0] * s[1], s[2]);
        for (double& v : t.data) {
            v = decode(p, header_.dtype);
            p += width;
        }
        out[header_.level_ids[k]] = TokenMap{Var::constant(std::move(t)), {s[0], s[1]}, header_.level_ids[k]};
    }
    return out;
}

void FeatureFileReader::require_levels(const std::vector<int>& levels) const {
    if (header_.level_ids != levels) {
        throw FeatureFileError(FeatureFileErrc::LevelMismatch,
                               path_ + ": level ids do not match the student's selected levels");
    }
}

std::vector<MultiLevelFeatures> read_features(const std::string& path) {
    FeatureFileReader reader(path);
    std::vector<MultiLevelFeatures> out;
    out.reserve(reader.size());
    for (std::size_t i = 0; i < reader.size(); ++i) out.push_back(reader.read(i));
    return out;
}

FileTeacher::FileTeacher(const std::string& path, const std::vector<int>& student_levels)
    : reader_(std::make_unique<FeatureFileReader>(path)) {
    reader_->require_levels(student_levels);
    const auto& h = reader_->header();
    for (const auto& s : h.shapes)
        if (s != h.shapes.front()) {
            throw FeatureFileError(FeatureFileErrc::ShapeMismatch, path + ": levels must share one shape");
        }
    shape_ = TeacherSpec{h.teacher_id, h.shapes.front()[2], {h.shapes.front()[0], h.shapes.front()[1]},
                         TeacherSource::File};
}

MultiLevelFeatures FileTeacher::forward(const Image&, std::size_t sample_index) const {
    return reader_->read(sample_index);
}

std::vector<MultiLevelFeatures> committee_forward(const Image& image, std::size_t sample_index,
                                                  const Committee& committee) {
    if (committee.empty()) throw ConfigError("committee_forward: empty committee");
    std::vector<MultiLevelFeatures> out;
    out.reserve(committee.size());
    for (const auto& t : committee) {
        const std::string id = t->spec().teacher_id;
        try {
            out.push_back(t->forward(image, sample_index));
        } catch (const FeatureFileError& e) {
            throw FeatureFileError(e.code(), "teacher " + id + ": " + e.detail());
        } catch (const NumericError& e) {
            throw NumericError("teacher " + id + ": " + e.what(), e.level());
        } catch (const ConfigError& e) {
            throw ConfigError("teacher " + id + ": " + e.what());
        }
    }
    return out;
}

}  // namespace mtd
