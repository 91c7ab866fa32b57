// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/checkpoint.hpp"

#include "mtd/errors.hpp"
#include "mtd/run_config.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mtd {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', 'T', 'D', 'C'};
constexpr std::uint8_t kVersion = 1;

template <typename U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const unsigned char* p) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
    return v;
}

std::size_t width(CheckpointDType t) { return t == CheckpointDType::F64 ? 8 : 4; }

}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

ParamGroup param_group_from_string(const std::string& s) {
    for (ParamGroup g : {ParamGroup::Stem, ParamGroup::Adapter, ParamGroup::Align, ParamGroup::Router, ParamGroup::Head})
        if (s == to_string(g)) return g;
    throw ConfigError("unknown parameter group '" + s + "'");
}

void save_checkpoint(const std::string& path, const ModelConfig& config, std::uint64_t seed, const ParamStore& store,
                     CheckpointDType dtype, const json& extra) {
    json tensors = json::array();
    for (const auto& e : store.entries()) {
        tensors.push_back({{"name", e.name}, {"group", to_string(e.group)}, {"rows", e.var.rows()}, {"cols", e.var.cols()}});
    }
    const json header = {{"config", to_json(config)},
                         {"seed", seed},
                         {"dtype", dtype == CheckpointDType::F64 ? "f64" : "f32"},
                         {"tensors", tensors},
                         {"extra", extra}};
    const std::string text = header.dump();
    std::string out(kMagic, 4);
    out.push_back(static_cast<char>(kVersion));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    for (const auto& e : store.entries()) {
        for (double v : e.var.value().data) {
            if (dtype == CheckpointDType::F64) put_le(out, std::bit_cast<std::uint64_t>(v));
            else put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        }
    }
    // Write to a sibling file first so a crash never leaves a torn checkpoint.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot write checkpoint " + path);
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw ConfigError("short write to checkpoint " + path);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw ConfigError("cannot move checkpoint into place: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 9 || std::memcmp(p, kMagic, 4) != 0) throw ConfigError(path + ": not a checkpoint");
    if (p[4] != kVersion) throw ConfigError(path + ": unsupported checkpoint version " + std::to_string(p[4]));
    const std::uint32_t hlen = get_le<std::uint32_t>(p + 5);
    if (bytes.size() < 9ull + hlen) throw ConfigError(path + ": truncated header");
    Checkpoint c;
    std::size_t expected = 0;
    try {
        const json h = json::parse(bytes.substr(9, hlen));
        c.config = model_config_from_json(h.at("config"));
        c.seed = h.at("seed").get<std::uint64_t>();
        const std::string dt = h.at("dtype").get<std::string>();
        if (dt != "f64" && dt != "f32") throw ConfigError(path + ": unknown dtype " + dt);
        c.dtype = dt == "f64" ? CheckpointDType::F64 : CheckpointDType::F32;
        c.extra = h.value("extra", json::object());
        for (const auto& t : h.at("tensors")) {
            CheckpointTensor ct;
            ct.name = t.at("name").get<std::string>();
            ct.group = param_group_from_string(t.at("group").get<std::string>());
            const int rows = t.at("rows").get<int>(), cols = t.at("cols").get<int>();
            if (rows < 0 || cols < 0) throw ConfigError(path + ": negative shape for " + ct.name);
            ct.value = Tensor(rows, cols);
            expected += ct.value.size() * width(c.dtype);
            c.tensors.push_back(std::move(ct));
        }
    } catch (const json::exception& e) {
        throw ConfigError(path + ": corrupt checkpoint header: " + e.what());
    }
    if (bytes.size() != 9ull + hlen + expected) {
        throw ConfigError(path + ": payload is " + std::to_string(bytes.size() - 9 - hlen) + " bytes, expected " +
                          std::to_string(expected));
    }
    const unsigned char* q = p + 9 + hlen;
    for (auto& t : c.tensors) {
        for (double& v : t.value.data) {
            if (c.dtype == CheckpointDType::F64) {
                v = std::bit_cast<double>(get_le<std::uint64_t>(q));
                q += 8;
            } else {
                v = std::bit_cast<float>(get_le<std::uint32_t>(q));
                q += 4;
            }
        }
    }
    return c;
}

std::size_t restore(const Checkpoint& ckpt, ParamStore& store, const std::set<ParamGroup>& groups) {
    std::size_t copied = 0;
    for (auto& e : store.entries()) {
        if (!groups.count(e.group)) continue;
        const CheckpointTensor* t = ckpt.find(e.name);
        if (!t) throw ConfigError("checkpoint has no tensor " + e.name);
        if (t->value.rows != e.var.rows() || t->value.cols != e.var.cols()) {
            throw ConfigError("checkpoint tensor " + e.name + " is " + std::to_string(t->value.rows) + "x" +
                              std::to_string(t->value.cols) + ", model expects " + std::to_string(e.var.rows()) + "x" +
                              std::to_string(e.var.cols()));
        }
        e.var.mutable_value() = t->value;
        ++copied;
    }
    return copied;
}

}  // namespace mtd
