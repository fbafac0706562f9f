// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <type_traits>

#include "ldlb/config.hpp"
#include "ldlb/error.hpp"

namespace ldlb {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'L', 'D', 'L', 'B'};

template <class Real>
constexpr const char* dtype_name() {
    return std::is_same_v<Real, float> ? "f32" : "f64";
}

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T take(std::istream& in, const std::string& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("checkpoint '" + path + "' is truncated");
    return v;
}

template <class Real>
std::vector<std::span<const Real>> adam_spans(const std::vector<std::vector<Real>>& moments) {
    std::vector<std::span<const Real>> out;
    for (const auto& m : moments) out.emplace_back(m);
    return out;
}

template <class Real>
std::vector<std::span<Real>> adam_spans(std::vector<std::vector<Real>>& moments) {
    std::vector<std::span<Real>> out;
    for (auto& m : moments) out.emplace_back(m);
    return out;
}

template <class Real>
std::vector<std::vector<std::span<const Real>>> groups_of(const TrainState<Real>& s) {
    return {s.vae.param_spans(),         s.prior.param_spans(),         adam_spans(s.adam_vae.m),
            adam_spans(s.adam_vae.v),    adam_spans(s.adam_prior.m),    adam_spans(s.adam_prior.v)};
}

template <class Real>
std::vector<std::vector<std::span<Real>>> groups_of(TrainState<Real>& s) {
    return {s.vae.param_spans(),      s.prior.param_spans(),      adam_spans(s.adam_vae.m),
            adam_spans(s.adam_vae.v), adam_spans(s.adam_prior.m), adam_spans(s.adam_prior.v)};
}

template <class Spans>
json shapes_of(const std::vector<Spans>& groups) {
    json out = json::array();
    for (const auto& g : groups) {
        json sizes = json::array();
        for (const auto& sp : g) sizes.push_back(sp.size());
        out.push_back(sizes);
    }
    return out;
}

std::ifstream open_checked(const std::string& path, std::uint64_t& header_len) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    char magic[4];
    if (!in.read(magic, 4)) throw IoError("checkpoint '" + path + "' is truncated");
    if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("checkpoint '" + path + "': bad magic");
    const auto version = take<std::uint32_t>(in, path);
    if (version != kCheckpointVersion)
        throw IoError("checkpoint '" + path + "': unsupported version " + std::to_string(version));
    header_len = take<std::uint64_t>(in, path);
    return in;
}

json parse_header(std::istream& in, std::uint64_t len, const std::string& path) {
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw IoError("checkpoint '" + path + "' is truncated");
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw IoError("checkpoint '" + path + "': corrupt header: " + e.what());
    }
}

} // namespace

template <class Real>
void save_checkpoint(const std::string& path, const TrainState<Real>& state) {
    const auto groups = groups_of(state);
    json h;
    h["dtype"] = dtype_name<Real>();
    h["seed"] = state.cfg.seed;
    h["schedule"] = schedule_to_json(state.cfg.schedule);
    h["train"] = train_to_json(state.cfg);
    h["model"] = model_to_json(state.model);
    h["pretrain_step"] = state.pretrain_step;
    h["step"] = state.step;
    h["adam_vae_step"] = state.adam_vae.step;
    h["adam_prior_step"] = state.adam_prior.step;
    h["shapes"] = shapes_of(groups);
    const std::string text = h.dump();

    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint '" + tmp + "'");
        out.write(kMagic, 4);
        put<std::uint32_t>(out, kCheckpointVersion);
        put<std::uint64_t>(out, text.size());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& g : groups)
            for (const auto& sp : g)
                out.write(reinterpret_cast<const char*>(sp.data()), static_cast<std::streamsize>(sp.size_bytes()));
        out.flush();
        if (!out) throw IoError("short write on checkpoint '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

json read_checkpoint_header(const std::string& path) {
    std::uint64_t len = 0;
    auto in = open_checked(path, len);
    return parse_header(in, len, path);
}

template <class Real>
TrainState<Real> load_checkpoint(const std::string& path) {
    std::uint64_t len = 0;
    auto in = open_checked(path, len);
    const json h = parse_header(in, len, path);
    if (h.value("dtype", "") != dtype_name<Real>())
        throw IoError("checkpoint '" + path + "': dtype " + h.value("dtype", std::string("?")) + ", expected " +
                      dtype_name<Real>());

    TrainConfig cfg;
    ModelConfig model;
    try {
        cfg.schedule = schedule_from_json(h.at("schedule"));
        read_train(h.at("train"), "train", cfg);
        read_model(h.at("model"), "model", model);
        cfg.seed = h.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw IoError("checkpoint '" + path + "': corrupt header: " + e.what());
    }
    auto state = TrainState<Real>::create(cfg, model);
    state.pretrain_step = h.at("pretrain_step").get<std::uint64_t>();
    state.step = h.at("step").get<std::uint64_t>();
    state.adam_vae.step = h.at("adam_vae_step").get<std::uint64_t>();
    state.adam_prior.step = h.at("adam_prior_step").get<std::uint64_t>();

    auto groups = groups_of(state);
    if (h.at("shapes") != shapes_of(groups)) throw IoError("checkpoint '" + path + "': buffer shapes do not match");
    for (auto& g : groups)
        for (auto& sp : g)
            if (!in.read(reinterpret_cast<char*>(sp.data()), static_cast<std::streamsize>(sp.size_bytes())))
                throw IoError("checkpoint '" + path + "' is truncated");
    if (in.peek() != std::char_traits<char>::eof()) throw IoError("checkpoint '" + path + "': trailing bytes");
    return state;
}

template void save_checkpoint<float>(const std::string&, const TrainState<float>&);
template void save_checkpoint<double>(const std::string&, const TrainState<double>&);
template TrainState<float> load_checkpoint<float>(const std::string&);
template TrainState<double> load_checkpoint<double>(const std::string&);

} // namespace ldlb
