// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "ldlb/checkpoint.hpp"
#include "ldlb/config.hpp"
#include "ldlb/data.hpp"
#include "ldlb/error.hpp"
#include "ldlb/experiment.hpp"

using namespace ldlb;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("ldlb_unit_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_be32(std::string& s, std::uint32_t v) {
    for (int k = 3; k >= 0; --k) s.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

// Four 28x28 images: image k has pixel value 60 k at row-major index p when p % 4 == k.
void write_idx(const fs::path& images, const fs::path& labels, bool swap_magic = false) {
    std::string s;
    if (swap_magic) {
        s += std::string("\x03\x08\x00\x00", 4);
    } else {
        put_be32(s, 0x00000803);
    }
    put_be32(s, 4);
    put_be32(s, 28);
    put_be32(s, 28);
    for (int k = 0; k < 4; ++k)
        for (int p = 0; p < 784; ++p) s.push_back(static_cast<char>(p % 4 == k ? 60 * k + 15 : 0));
    std::ofstream(images, std::ios::binary) << s;
    std::string l;
    put_be32(l, 0x00000801);
    put_be32(l, 4);
    for (int k = 0; k < 4; ++k) l.push_back(static_cast<char>(k + 3));
    std::ofstream(labels, std::ios::binary) << l;
}

ExperimentConfig tiny_config(const fs::path& out) {
    ExperimentConfig c;
    c.dataset = "toy8gauss";
    c.n_train = 512;
    c.n_eval = 64;
    c.seed = 5;
    c.output_dir = out.string();
    c.train.schedule = SdeSchedule::linear_vpsde(0.1, 20.0, 0.0, 0.01);
    c.train.mechanism = WeightingMechanism::Wun;
    c.train.batch_size = 64;
    c.train.steps_pretrain = 20;
    c.train.steps_main = 10;
    c.train.seed = c.seed;
    c.model.vae_hidden = {16};
    c.model.prior_hidden = {16};
    c.model.time_embed_dim = 4;
    c.log_every = 5;
    c.checkpoint_every = 10;
    c.grid_size = 11;
    c.n_samples = 16;
    c.eval_probes = 2;
    return c;
}

} // namespace

TEST_CASE("experiment config round trip") {
    auto c = tiny_config("out_dir");
    c.train.schedule = SdeSchedule::geometric_vpsde(3e-5, 0.999, 0.02);
    c.train.mechanism = WeightingMechanism::Wre;
    c.train.sgm_strategy = TSamplingStrategy::ImportanceSampled;
    c.train.q_obj_t = QObjT::Rew;
    c.precision = Precision::F64;
    c.sampler = "ancestral";
    c.iw_noise_vars = {0.0, 0.3};
    const auto j = to_json(c);
    const auto back = experiment_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(back.train.schedule.kind == SdeKind::GeometricVpsde);
    CHECK(back.train.schedule.t_cutoff == 0.02);
    CHECK(back.train.q_obj_t == QObjT::Rew);
    CHECK(back.precision == Precision::F64);
    CHECK(back.train.seed == back.seed);
}

TEST_CASE("config errors name the field") {
    auto j = to_json(tiny_config("o"));
    auto bad = j;
    bad["train"]["batch_sise"] = 3;
    CHECK_THROWS_WITH_AS(experiment_from_json(bad), doctest::Contains("train.batch_sise"), ConfigError);
    bad = j;
    bad["train"]["lr_vae"] = "fast";
    CHECK_THROWS_WITH_AS(experiment_from_json(bad), doctest::Contains("train.lr_vae"), ConfigError);
    bad = j;
    bad["schedule"]["kind"] = "cosine";
    CHECK_THROWS_WITH_AS(experiment_from_json(bad), doctest::Contains("schedule.kind"), ConfigError);
    bad = j;
    bad["model"]["data_dim"] = 5;
    CHECK_THROWS_WITH_AS(experiment_from_json(bad), doctest::Contains("model.data_dim"), ConfigError);
    bad = j;
    bad["dataset"] = "mnist-binarized";
    bad["data_path"] = "/nonexistent/train-images-idx3-ubyte";
    bad["model"].erase("data_dim");
    CHECK_THROWS_WITH_AS(experiment_from_json(bad), doctest::Contains("data_path"), ConfigError);
    CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), IoError);
}

TEST_CASE("checkpoint round trip and resume") {
    const auto dir = scratch("ckpt");
    TrainConfig tc;
    tc.schedule = SdeSchedule::linear_vpsde(0.1, 20.0, 0.0, 0.01);
    tc.mechanism = WeightingMechanism::Wun;
    tc.batch_size = 32;
    tc.seed = 8;
    ModelConfig mc;
    mc.vae_hidden = {16};
    mc.prior_hidden = {16};
    mc.time_embed_dim = 4;
    auto st = TrainState<double>::create(tc, mc);
    const auto data = gen_toy("toy8gauss", 256, 1);
    auto batch = [&](std::size_t k) {
        const auto perm = epoch_permutation(data.size(), 1, k / 8);
        const std::span<const std::size_t> rows(perm.data() + (k % 8) * 32, 32);
        return make_batch<double>(data, rows, 1, k / 8);
    };
    for (std::size_t k = 0; k < 5; ++k) pretrain_step(st, batch(k), 10);
    for (std::size_t k = 0; k < 3; ++k) train_step(st, batch(5 + k));
    const auto path = (dir / "s.ckpt").string();
    save_checkpoint(path, st);
    const auto header = read_checkpoint_header(path);
    CHECK(header["step"] == 3);
    CHECK(header["pretrain_step"] == 5);
    CHECK(header["dtype"] == "f64");

    auto loaded = load_checkpoint<double>(path);
    CHECK(loaded.step == 3);
    CHECK(loaded.adam_prior.step == st.adam_prior.step);
    const auto a = train_step(st, batch(8));
    const auto b = train_step(loaded, batch(8));
    CHECK(a.nelbo == b.nelbo);
    CHECK(a.grad_norm == b.grad_norm);
    CHECK_THROWS_AS(load_checkpoint<float>(path), IoError);

    std::string bytes = slurp(path);
    std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 7);
    CHECK_THROWS_AS(load_checkpoint<double>((dir / "short.ckpt").string()), IoError);
    bytes[0] = 'X';
    std::ofstream(dir / "magic.ckpt", std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_checkpoint<double>((dir / "magic.ckpt").string()), IoError);
    CHECK_THROWS_AS(read_checkpoint_header((dir / "missing.ckpt").string()), IoError);
    fs::remove_all(dir);
}

TEST_CASE("IDX loading") {
    const auto dir = scratch("idx");
    write_idx(dir / "img", dir / "lab");
    const auto d = load_mnist_idx((dir / "img").string(), (dir / "lab").string());
    CHECK(d.size() == 4);
    CHECK(d.dim() == 784);
    CHECK(d.x.shape == std::vector<std::size_t>{4, 28, 28});
    CHECK(d.labels == std::vector<int>{3, 4, 5, 6});
    CHECK(d.dynamic_binarization);
    CHECK(d.x(2, 6) == doctest::Approx(135.0 / 255.0));
    CHECK(d.x(2, 5) == 0.0);

    // Binarized batches: values in {0, 1}, zero pixels stay 0, draws depend on the epoch.
    const std::vector<std::size_t> rows{0, 1, 2, 3};
    const auto b0 = make_batch<float>(d, rows, 7, 0);
    const auto b0b = make_batch<float>(d, rows, 7, 0);
    const auto b1 = make_batch<float>(d, rows, 7, 1);
    CHECK(b0.data == b0b.data);
    CHECK(b0.data != b1.data);
    for (std::size_t k = 0; k < b0.data.size(); ++k) {
        CHECK((b0.data[k] == 0.0f || b0.data[k] == 1.0f));
        if (d.x.data[k] == 0.0) CHECK(b0.data[k] == 0.0f);
    }

    write_idx(dir / "swapped", dir / "lab2", true);
    CHECK_THROWS_AS(load_mnist_idx((dir / "swapped").string()), IoError);
    const auto full = slurp(dir / "img");
    std::ofstream(dir / "trunc", std::ios::binary) << full.substr(0, 16 + 784 * 3);
    CHECK_THROWS_AS(load_mnist_idx((dir / "trunc").string()), IoError);
    fs::remove_all(dir);
}

TEST_CASE("toy data sets") {
    const std::size_t n = 8000;
    const auto d = gen_toy("toy8gauss", n, 3);
    CHECK(d.size() == n);
    CHECK(d.dim() == 2);
    const auto centers = toy8gauss_centers();
    std::vector<std::size_t> counts(8, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const int l = d.labels[i];
        REQUIRE(l >= 0);
        REQUIRE(l < 8);
        ++counts[static_cast<std::size_t>(l)];
        CHECK(std::hypot(d.x(i, 0) - centers[l].first, d.x(i, 1) - centers[l].second) < 0.6);
    }
    const double mean = n / 8.0, sd = std::sqrt(n * (1.0 / 8) * (7.0 / 8));
    for (auto c : counts) CHECK(std::fabs(static_cast<double>(c) - mean) < 3 * sd);
    CHECK(gen_toy("toy8gauss", 100, 3).x.data == gen_toy("toy8gauss", 100, 3).x.data);
    CHECK(gen_toy("toy8gauss", 100, 3).x.data != gen_toy("toy8gauss", 100, 4).x.data);

    const auto sr = gen_toy("swissroll", 4000, 3);
    for (double v : sr.x.data) CHECK(std::fabs(v) < 3.5);
    CHECK_THROWS_AS(gen_toy("moons", 10, 1), ConfigError);

    const auto p = epoch_permutation(100, 1, 0);
    auto sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 100; ++i) CHECK(sorted[i] == i);
    CHECK(p != epoch_permutation(100, 1, 1));
}

TEST_CASE("experiment subcommands") {
    const auto dir = scratch("exp");
    const auto cfg = tiny_config(dir);
    Experiment ex(cfg);

    const auto sd = ex.run("schedule-dump");
    std::ifstream in(dir / "schedule.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "t,beta,g2,mean_coeff,var,ring_var");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == cfg.grid_size);

    ex.run("pretrain");
    CHECK(fs::exists(dir / "checkpoints" / "pretrain.ckpt"));
    CHECK(fs::exists(dir / "checkpoints" / "pretrain_00000010.ckpt"));
    const auto full = slurp(dir / "checkpoints" / "pretrain.ckpt");

    // Resuming from the mid-run checkpoint reproduces the uninterrupted run.
    ex.run("pretrain", (dir / "checkpoints" / "pretrain_00000010.ckpt").string());
    CHECK(slurp(dir / "checkpoints" / "pretrain.ckpt") == full);

    ex.run("train");
    CHECK(fs::exists(dir / "checkpoints" / "train.ckpt"));
    const auto s = ex.run("sample");
    CHECK(fs::exists(dir / "samples.csv"));
    CHECK(s["manifest"].contains("nfe"));
    CHECK(fs::exists(dir / "samples_manifest.json"));
    const auto e = ex.run("eval-nelbo");
    CHECK(std::isfinite(e["nelbo"].get<double>()));
    CHECK_THROWS_AS(ex.run("dance"), ConfigError);
    fs::remove_all(dir);
}
