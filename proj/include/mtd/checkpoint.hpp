// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: "MTDC", version byte 1, u32 LE header length, JSON
// header {config, seed, dtype, tensors: [{name, group, rows, cols}], extra},
// then the tensors in header order as little-endian f64 or f32 values.

#pragma once

#include "mtd/core_model.hpp"
#include "mtd/params.hpp"

#include <json.hpp>

#include <set>
#include <string>
#include <vector>

namespace mtd {

enum class CheckpointDType { F32, F64 };

struct CheckpointTensor {
    std::string name;
    ParamGroup group = ParamGroup::Stem;
    Tensor value;
};

struct Checkpoint {
    ModelConfig config;
    std::uint64_t seed = 0;
    CheckpointDType dtype = CheckpointDType::F64;
    nlohmann::json extra = nlohmann::json::object();
    std::vector<CheckpointTensor> tensors;

    const CheckpointTensor* find(const std::string& name) const;
};

ParamGroup param_group_from_string(const std::string& s);

void save_checkpoint(const std::string& path, const ModelConfig& config, std::uint64_t seed, const ParamStore& store,
                     CheckpointDType dtype = CheckpointDType::F64,
                     const nlohmann::json& extra = nlohmann::json::object());

/// Damaged or truncated files raise ConfigError.
Checkpoint load_checkpoint(const std::string& path);

/// Copies tensors of the listed groups into `store` by name. A missing
/// tensor or a shape mismatch raises ConfigError. Returns the number of
/// tensors copied.
std::size_t restore(const Checkpoint& ckpt, ParamStore& store, const std::set<ParamGroup>& groups);

}  // namespace mtd
