// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>

#include <json.hpp>

#include "ldlb/ldlb.h"

extern "C" int ldlb_c_header_check(void);

namespace fs = std::filesystem;

namespace {

std::string take(char* s) {
    std::string out = s ? s : "";
    ldlb_string_free(s);
    return out;
}

const char* kLinear = R"({"kind": "linear_vpsde", "beta0": 0.1, "beta1": 20.0, "sigma2_0": 0.0, "t_cutoff": 0.01})";

std::string tiny_experiment(const fs::path& out) {
    nlohmann::json j = {
        {"dataset", "toy8gauss"},
        {"n_train", 256},
        {"n_eval", 32},
        {"seed", 3},
        {"output_dir", out.string()},
        {"schedule", nlohmann::json::parse(kLinear)},
        {"train", {{"mechanism", "wun"}, {"batch_size", 32}, {"steps_pretrain", 4}, {"steps_main", 4}}},
        {"model", {{"latent_dim", 2}, {"vae_hidden", {8}}, {"prior_hidden", {8}}, {"time_embed_dim", 4}}},
        {"diagnostics", {{"grid_size", 5}}},
        {"logging", {{"log_every", 2}}},
    };
    return j.dump();
}

} // namespace

TEST_CASE("header compiles and works from C") { CHECK(ldlb_c_header_check() == 1); }

TEST_CASE("version and status names") {
    CHECK(std::string(ldlb_version()) == "0.1.0");
    CHECK(std::string(ldlb_status_name(LDLB_OK)) == "ok");
    CHECK(std::string(ldlb_status_name(LDLB_ERR_CONFIG)) != std::string(ldlb_status_name(LDLB_ERR_IO)));
    CHECK(std::string(ldlb_status_name(static_cast<ldlb_status>(99))) != "");
}

TEST_CASE("schedule handle") {
    ldlb_schedule* s = nullptr;
    REQUIRE(ldlb_schedule_from_json(kLinear, &s) == LDLB_OK);
    CHECK(std::string(ldlb_last_error()).empty());
    double m, v, r;
    REQUIRE(ldlb_schedule_kernel(s, 1.0, &m, &v, &r) == LDLB_OK);
    CHECK(v == doctest::Approx(0.99995681425093965870).epsilon(1e-12));
    CHECK(r == doctest::Approx(1.0).epsilon(1e-14));
    double beta, g2;
    REQUIRE(ldlb_schedule_diffusion(s, 0.5, &beta, &g2) == LDLB_OK);
    CHECK(beta == doctest::Approx(0.1 + 0.5 * 19.9));
    CHECK(g2 == beta);
    double cut;
    REQUIRE(ldlb_schedule_cutoff(s, &cut) == LDLB_OK);
    CHECK(cut == 0.01);
    double t, w, ow;
    REQUIRE(ldlb_schedule_sample_t(s, "wre", "is", 0.5, &t, &w, &ow) == LDLB_OK);
    CHECK(t == doctest::Approx(0.25933152507797613).epsilon(1e-9));
    CHECK(ldlb_schedule_sample_t(s, "wxx", "is", 0.5, &t, &w, &ow) == LDLB_ERR_CONFIG);
    CHECK(std::string(ldlb_last_error()).find("mechanism") != std::string::npos);
    CHECK(ldlb_schedule_kernel(s, -0.5, &m, &v, &r) == LDLB_ERR_DOMAIN);
    CHECK(ldlb_schedule_kernel(s, 0.5, nullptr, &v, nullptr) == LDLB_OK);
    CHECK(ldlb_schedule_kernel(nullptr, 0.5, &m, &v, &r) == LDLB_ERR_INVALID_ARGUMENT);
    ldlb_schedule_free(s);
    ldlb_schedule_free(nullptr);

    ldlb_schedule* g = nullptr;
    CHECK(ldlb_schedule_from_json("{\"kind\": \"linear_vpsde\", \"beta0\": 5, \"beta1\": 1}", &g) == LDLB_ERR_CONFIG);
    CHECK(g == nullptr);
    CHECK(ldlb_schedule_from_json("{not json", &g) == LDLB_ERR_CONFIG);
    REQUIRE(ldlb_schedule_from_json(R"({"kind": "geometric_vpsde", "sigma2_min": 3e-5, "sigma2_max": 0.999})", &g) ==
            LDLB_OK);
    CHECK(ldlb_schedule_sample_t(g, "wun", "is", 0.5, &t, &w, &ow) == LDLB_ERR_CONFIG);
    CHECK(ldlb_schedule_sample_t(g, "wun", "uniform", 0.5, &t, &w, &ow) == LDLB_OK);
    ldlb_schedule_free(g);
}

TEST_CASE("last error is thread-local") {
    ldlb_schedule* s = nullptr;
    CHECK(ldlb_schedule_from_json(R"({"kind": "cosine"})", &s) == LDLB_ERR_CONFIG);
    const std::string here = ldlb_last_error();
    CHECK_FALSE(here.empty());
    std::string there = "unset";
    std::thread([&] { there = ldlb_last_error(); }).join();
    CHECK(there.empty());
    CHECK(std::string(ldlb_last_error()) == here);
}

TEST_CASE("workers and logging") {
    CHECK(ldlb_set_num_workers(2) == LDLB_OK);
    CHECK(ldlb_num_workers() == 2);
    CHECK(ldlb_set_num_workers(1) == LDLB_OK);
    CHECK(ldlb_set_log_level("error") == LDLB_OK);
    CHECK(ldlb_set_log_level("loud") == LDLB_ERR_CONFIG);
    CHECK(ldlb_set_log_level(nullptr) == LDLB_ERR_INVALID_ARGUMENT);
}

TEST_CASE("experiment handle") {
    const auto out = fs::temp_directory_path() / "ldlb_capi_exp";
    fs::remove_all(out);
    ldlb_experiment* e = nullptr;
    REQUIRE(ldlb_experiment_from_json(tiny_experiment(out).c_str(), &e) == LDLB_OK);
    CHECK(ldlb_experiment_set_seed(e, 11) == LDLB_OK);
    char* cfg = nullptr;
    REQUIRE(ldlb_experiment_config_json(e, &cfg) == LDLB_OK);
    const auto j = nlohmann::json::parse(take(cfg));
    CHECK(j["seed"] == 11);

    char* summary = nullptr;
    REQUIRE(ldlb_experiment_run(e, "schedule-dump", nullptr, &summary) == LDLB_OK);
    CHECK_FALSE(take(summary).empty());
    CHECK(fs::exists(out / "schedule.csv"));
    REQUIRE(ldlb_experiment_run(e, "pretrain", nullptr, nullptr) == LDLB_OK);
    REQUIRE(ldlb_experiment_run(e, "train", nullptr, nullptr) == LDLB_OK);
    CHECK(fs::exists(out / "checkpoints" / "train.ckpt"));
    CHECK(ldlb_experiment_run(e, "sample", "/nonexistent.ckpt", nullptr) == LDLB_ERR_IO);
    CHECK(ldlb_experiment_run(e, "fly", nullptr, nullptr) == LDLB_ERR_CONFIG);
    CHECK(ldlb_experiment_run(nullptr, "train", nullptr, nullptr) == LDLB_ERR_INVALID_ARGUMENT);

    const auto moved = fs::temp_directory_path() / "ldlb_capi_exp2";
    fs::remove_all(moved);
    CHECK(ldlb_experiment_set_output_dir(e, moved.string().c_str()) == LDLB_OK);
    REQUIRE(ldlb_experiment_run(e, "schedule-dump", nullptr, nullptr) == LDLB_OK);
    CHECK(fs::exists(moved / "schedule.csv"));
    ldlb_experiment_free(e);
    ldlb_experiment_free(nullptr);

    const auto path = out / "cfg.json";
    std::ofstream(path) << R"({"dataset": "toy8gauss", "trian": {}})";
    CHECK(ldlb_experiment_from_file(path.string().c_str(), &e) == LDLB_ERR_CONFIG);
    CHECK(std::string(ldlb_last_error()).find("trian") != std::string::npos);
    CHECK(ldlb_experiment_from_file("/nonexistent.json", &e) == LDLB_ERR_IO);
    fs::remove_all(out);
    fs::remove_all(moved);
}
