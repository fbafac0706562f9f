// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "ldlb/error.hpp"

namespace ldlb {

using nlohmann::json;

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(field(key) + ": wrong type");
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& at(const char* key) const { return j_.at(key); }
    std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(field(it.key().c_str()) + ": unknown field");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class F>
auto named(const std::string& field, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        if (msg.rfind(field, 0) == 0) throw;
        throw ConfigError(field + ": " + msg);
    }
}

} // namespace

json schedule_to_json(const SdeSchedule& s) {
    json j;
    j["kind"] = std::string(to_string(s.kind));
    if (s.kind == SdeKind::LinearVpsde || s.kind == SdeKind::SubVpsde) {
        j["beta0"] = s.beta0;
        j["beta1"] = s.beta1;
        j["sigma2_0"] = s.sigma2_0;
    } else {
        j["sigma2_min"] = s.sigma2_min;
        j["sigma2_max"] = s.sigma2_max;
    }
    j["t_cutoff"] = s.t_cutoff;
    return j;
}

SdeSchedule schedule_from_json(const json& j, const std::string& where) {
    Reader r(j, where);
    std::string kind = "linear_vpsde";
    r.get("kind", kind);
    const SdeKind k = named(r.field("kind"), [&] { return parse_sde_kind(kind); });
    SdeSchedule s;
    std::optional<double> cutoff;
    if (r.has("t_cutoff")) {
        double c = 0.0;
        r.get("t_cutoff", c);
        cutoff = c;
    }
    if (k == SdeKind::LinearVpsde || k == SdeKind::SubVpsde) {
        double b0 = 0.1, b1 = 20.0, s0 = 0.0;
        r.get("beta0", b0);
        r.get("beta1", b1);
        r.get("sigma2_0", s0);
        r.finish();
        s = k == SdeKind::LinearVpsde ? SdeSchedule::linear_vpsde(b0, b1, s0, cutoff)
                                      : SdeSchedule::sub_vpsde(b0, b1, s0, cutoff);
    } else {
        double lo = k == SdeKind::GeometricVpsde ? 3e-5 : 1e-4;
        double hi = k == SdeKind::GeometricVpsde ? 0.999 : 100.0;
        r.get("sigma2_min", lo);
        r.get("sigma2_max", hi);
        if (r.has("sigma2_0")) {
            double s0 = lo;
            r.get("sigma2_0", s0);
            if (s0 != lo) throw ConfigError(r.field("sigma2_0") + ": must equal sigma2_min for " + kind);
        }
        r.finish();
        s = k == SdeKind::GeometricVpsde ? SdeSchedule::geometric_vpsde(lo, hi, cutoff)
                                         : SdeSchedule::vesde(lo, hi, cutoff);
    }
    return s;
}

json train_to_json(const TrainConfig& t) {
    return {
        {"mechanism", std::string(to_string(t.mechanism))},
        {"sgm_strategy", std::string(to_string(t.sgm_strategy))},
        {"q_strategy", std::string(to_string(t.q_strategy))},
        {"q_obj_t", std::string(to_string(t.q_obj_t))},
        {"batch_size", t.batch_size},
        {"lr_vae", t.lr_vae},
        {"lr_prior", t.lr_prior},
        {"epochs_pretrain", t.epochs_pretrain},
        {"epochs_main", t.epochs_main},
        {"steps_pretrain", t.steps_pretrain},
        {"steps_main", t.steps_main},
        {"kl_beta", t.kl_beta},
        {"kl_warmup_fraction", t.kl_warmup_fraction},
    };
}

json model_to_json(const ModelConfig& m) {
    return {
        {"data_dim", m.data_dim},
        {"latent_dim", m.latent_dim},
        {"vae_hidden", m.vae_hidden},
        {"prior_hidden", m.prior_hidden},
        {"time_embed_dim", m.time_embed_dim},
        {"decoder", std::string(to_string(m.decoder))},
        {"alpha_init", m.alpha_init},
    };
}

void read_train(const json& j, const std::string& where, TrainConfig& out) {
    Reader t(j, where);
    std::string mech(to_string(out.mechanism)), sgm(to_string(out.sgm_strategy)), qs(to_string(out.q_strategy)),
        qobj(to_string(out.q_obj_t));
    t.get("mechanism", mech);
    t.get("sgm_strategy", sgm);
    t.get("q_strategy", qs);
    t.get("q_obj_t", qobj);
    out.mechanism = named(t.field("mechanism"), [&] { return parse_mechanism(mech); });
    out.sgm_strategy = named(t.field("sgm_strategy"), [&] { return parse_strategy(sgm); });
    out.q_strategy = named(t.field("q_strategy"), [&] { return parse_strategy(qs); });
    out.q_obj_t = named(t.field("q_obj_t"), [&] { return parse_q_obj_t(qobj); });
    t.get("batch_size", out.batch_size);
    t.get("lr_vae", out.lr_vae);
    t.get("lr_prior", out.lr_prior);
    t.get("epochs_pretrain", out.epochs_pretrain);
    t.get("epochs_main", out.epochs_main);
    t.get("steps_pretrain", out.steps_pretrain);
    t.get("steps_main", out.steps_main);
    t.get("kl_beta", out.kl_beta);
    t.get("kl_warmup_fraction", out.kl_warmup_fraction);
    t.finish();
}

void read_model(const json& j, const std::string& where, ModelConfig& out) {
    Reader m(j, where);
    m.get("data_dim", out.data_dim);
    m.get("latent_dim", out.latent_dim);
    m.get("vae_hidden", out.vae_hidden);
    m.get("prior_hidden", out.prior_hidden);
    m.get("time_embed_dim", out.time_embed_dim);
    std::string dec(to_string(out.decoder));
    m.get("decoder", dec);
    out.decoder = named(m.field("decoder"), [&] { return parse_decoder_kind(dec); });
    m.get("alpha_init", out.alpha_init);
    m.finish();
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["dataset"] = c.dataset;
    j["data_path"] = c.data_path;
    j["eval_data_path"] = c.eval_data_path;
    j["n_train"] = c.n_train;
    j["n_eval"] = c.n_eval;
    j["output_dir"] = c.output_dir;
    j["seed"] = c.seed;
    j["precision"] = c.precision == Precision::F32 ? "f32" : "f64";
    j["schedule"] = schedule_to_json(c.train.schedule);

    j["train"] = train_to_json(c.train);
    j["model"] = model_to_json(c.model);
    const auto& s = c.solver;
    j["solver"] = {{"rtol", s.rtol},       {"atol", s.atol},           {"t_start", s.t_start},
                   {"t_end", s.t_end},     {"max_steps", s.max_steps}, {"joint", s.joint}};
    j["eval"] = {{"probes", c.eval_probes},
                 {"n_samples", c.n_samples},
                 {"sampler", c.sampler},
                 {"ancestral_steps", c.ancestral_steps}};
    j["logging"] = {{"log_every", c.log_every}, {"checkpoint_every", c.checkpoint_every}};
    j["diagnostics"] = {{"grid_size", c.grid_size},
                        {"variance_draws", c.variance_draws},
                        {"variance_latent_dim", c.variance_latent_dim},
                        {"iw_noise_vars", c.iw_noise_vars},
                        {"iw_k", c.iw_k},
                        {"iw_trials", c.iw_trials}};
    return j;
}

ExperimentConfig experiment_from_json(const json& j) {
    ExperimentConfig c;
    Reader r(j, "");
    r.get("dataset", c.dataset);
    r.get("data_path", c.data_path);
    r.get("eval_data_path", c.eval_data_path);
    r.get("n_train", c.n_train);
    r.get("n_eval", c.n_eval);
    r.get("output_dir", c.output_dir);
    r.get("seed", c.seed);
    std::string precision = "f32";
    r.get("precision", precision);
    if (precision == "f32") {
        c.precision = Precision::F32;
    } else if (precision == "f64") {
        c.precision = Precision::F64;
    } else {
        throw ConfigError("precision: expected 'f32' or 'f64'");
    }
    if (r.has("schedule")) c.train.schedule = schedule_from_json(r.at("schedule"), "schedule");

    if (r.has("train")) read_train(r.at("train"), "train", c.train);
    const bool model_given = r.has("model");
    const std::size_t data_dim = c.dataset == "mnist-binarized" ? 784 : 2;
    c.model.data_dim = data_dim;
    c.model.decoder = c.dataset == "mnist-binarized" ? DecoderKind::Bernoulli : DecoderKind::Gaussian;
    if (model_given) {
        read_model(r.at("model"), "model", c.model);
        if (c.model.data_dim != data_dim)
            throw ConfigError("model.data_dim: dataset '" + c.dataset + "' has dimension " + std::to_string(data_dim));
    }
    if (r.has("solver")) {
        Reader s(r.at("solver"), "solver");
        s.get("rtol", c.solver.rtol);
        s.get("atol", c.solver.atol);
        s.get("t_start", c.solver.t_start);
        s.get("t_end", c.solver.t_end);
        s.get("max_steps", c.solver.max_steps);
        s.get("joint", c.solver.joint);
        s.finish();
    }
    if (r.has("eval")) {
        Reader e(r.at("eval"), "eval");
        e.get("probes", c.eval_probes);
        e.get("n_samples", c.n_samples);
        e.get("sampler", c.sampler);
        e.get("ancestral_steps", c.ancestral_steps);
        e.finish();
    }
    if (r.has("logging")) {
        Reader l(r.at("logging"), "logging");
        l.get("log_every", c.log_every);
        l.get("checkpoint_every", c.checkpoint_every);
        l.finish();
    }
    if (r.has("diagnostics")) {
        Reader d(r.at("diagnostics"), "diagnostics");
        d.get("grid_size", c.grid_size);
        d.get("variance_draws", c.variance_draws);
        d.get("variance_latent_dim", c.variance_latent_dim);
        d.get("iw_noise_vars", c.iw_noise_vars);
        d.get("iw_k", c.iw_k);
        d.get("iw_trials", c.iw_trials);
        d.finish();
    }
    r.finish();
    c.train.seed = c.seed;
    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    if (dataset != "toy8gauss" && dataset != "swissroll" && dataset != "mnist-binarized")
        throw ConfigError("dataset: expected toy8gauss, swissroll or mnist-binarized, got '" + dataset + "'");
    if (dataset == "mnist-binarized") {
        if (data_path.empty()) throw ConfigError("data_path: required for mnist-binarized");
        if (!std::filesystem::exists(data_path)) throw ConfigError("data_path: file '" + data_path + "' does not exist");
        if (!eval_data_path.empty() && !std::filesystem::exists(eval_data_path))
            throw ConfigError("eval_data_path: file '" + eval_data_path + "' does not exist");
    } else if (n_train == 0) {
        throw ConfigError("n_train: must be > 0");
    }
    if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
    named("train", [&] { train.validate(); return 0; });
    named("model", [&] { model.validate(); return 0; });
    named("solver", [&] { solver.validate(); return 0; });
    if (sampler != "ode" && sampler != "ancestral") throw ConfigError("eval.sampler: expected 'ode' or 'ancestral'");
    if (ancestral_steps == 0) throw ConfigError("eval.ancestral_steps: must be > 0");
    if (grid_size < 2) throw ConfigError("diagnostics.grid_size: must be >= 2");
    if (variance_draws < 2) throw ConfigError("diagnostics.variance_draws: must be >= 2");
    if (variance_latent_dim == 0) throw ConfigError("diagnostics.variance_latent_dim: must be > 0");
    if (iw_k == 0) throw ConfigError("diagnostics.iw_k: must be > 0");
    for (double v : iw_noise_vars)
        if (!(v >= 0.0)) throw ConfigError("diagnostics.iw_noise_vars: entries must be >= 0");
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    return experiment_from_json(j);
}

} // namespace ldlb
