// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ldlb/checkpoint.hpp"
#include "ldlb/error.hpp"
#include "ldlb/log.hpp"
#include "ldlb/objectives.hpp"
#include "ldlb/rng.hpp"
#include "ldlb/samplers.hpp"

namespace ldlb {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Data-order streams per phase; model streams come from TrainState.
constexpr std::uint64_t kPretrainPhase = 0;
constexpr std::uint64_t kMainPhase = 1;
constexpr std::uint64_t kEvalSet = 2;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out << text;
        if (!out) throw IoError("short write on '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

class MetricsLog {
public:
    MetricsLog(const fs::path& path, bool append) : path_(path) {
        fs::create_directories(path.parent_path());
        out_.open(path, append ? std::ios::app : std::ios::trunc);
        if (!out_) throw IoError("cannot write metrics '" + path.string() + "'");
    }
    void write(const json& j) {
        out_ << j.dump() << '\n';
        out_.flush();
    }

private:
    fs::path path_;
    std::ofstream out_;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::size_t batches_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

// Minibatch `step` of a shuffled pass over the data; the permutation for each
// epoch is fixed by (data_seed, epoch).
class BatchCursor {
public:
    BatchCursor(const Dataset& d, std::size_t batch, std::uint64_t data_seed)
        : d_(d), batch_(std::min(batch, d.size())), seed_(data_seed), bpe_(batches_per_epoch(d.size(), batch_)) {}

    template <class Real>
    Tensor<Real> at(std::uint64_t step) {
        const std::uint64_t epoch = step / bpe_;
        if (!have_ || epoch != epoch_) {
            perm_ = epoch_permutation(d_.size(), seed_, epoch);
            epoch_ = epoch;
            have_ = true;
        }
        const std::size_t k = step % bpe_;
        const std::size_t begin = k * batch_;
        const std::size_t end = std::min(d_.size(), begin + batch_);
        return make_batch<Real>(d_, std::span<const std::size_t>(perm_).subspan(begin, end - begin), seed_, epoch);
    }

private:
    const Dataset& d_;
    std::size_t batch_;
    std::uint64_t seed_;
    std::size_t bpe_;
    std::vector<std::size_t> perm_;
    std::uint64_t epoch_ = 0;
    bool have_ = false;
};

template <class Real>
Tensor<Real> whole_set(const Dataset& d, std::uint64_t seed) {
    std::vector<std::size_t> rows(d.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return make_batch<Real>(d, rows, seed, 0);
}

json loss_json(const LossBreakdown& l) {
    return {{"nelbo", l.nelbo},         {"recon", l.recon},         {"neg_entropy", l.neg_entropy},
            {"ce", l.cross_entropy},    {"ce_const", l.ce_const},   {"kl", l.kl},
            {"prior_loss", l.prior_loss}, {"grad_norm", l.grad_norm}};
}

template <class Real>
Tensor<Real> convert(const Tensor<double>& z) {
    Tensor<Real> out(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.data.size(); ++i) out.data[i] = static_cast<Real>(z.data[i]);
    return out;
}

std::string dtype_of(const std::string& ckpt) { return read_checkpoint_header(ckpt).value("dtype", std::string("f32")); }

class Runner {
public:
    explicit Runner(const ExperimentConfig& c) : c_(c), out_(c.output_dir) {}

    fs::path ckpt_dir() const { return out_ / "checkpoints"; }

    std::string input_checkpoint(const std::string& given, const char* fallback) const {
        const std::string p = given.empty() ? (ckpt_dir() / fallback).string() : given;
        if (!fs::exists(p)) throw IoError("checkpoint '" + p + "' does not exist");
        return p;
    }

    template <class Real>
    void save_versioned(const TrainState<Real>& st, const char* phase, std::uint64_t step) const {
        char name[64];
        std::snprintf(name, sizeof name, "%s_%08llu.ckpt", phase, static_cast<unsigned long long>(step));
        save_checkpoint((ckpt_dir() / name).string(), st);
    }

    template <class Real>
    json pretrain(const std::string& resume) {
        const Dataset data = load_training_set(c_);
        const std::size_t total = pretrain_steps(c_, data.size());
        TrainState<Real> st = resume.empty() ? TrainState<Real>::create(c_.train, c_.model) : load_checkpoint<Real>(resume);
        st.dump_dir = out_.string();
        BatchCursor cursor(data, st.cfg.batch_size, derive_seed(st.cfg.seed, StreamPurpose::Data, kPretrainPhase));
        MetricsLog metrics(out_ / "metrics_pretrain.jsonl", !resume.empty());
        log_info("pretrain: " + std::to_string(total) + " steps on " + data.name + " (" + std::to_string(data.size()) +
                 " points), resuming at " + std::to_string(st.pretrain_step));
        Stopwatch clock;
        LossBreakdown last;
        while (st.pretrain_step < total) {
            const std::uint64_t step = st.pretrain_step;
            const Tensor<Real> x = cursor.at<Real>(step);
            last = pretrain_step(st, x, total);
            if (c_.log_every && ((step + 1) % c_.log_every == 0 || step + 1 == total)) {
                json j = loss_json(last);
                j["ce"] = last.kl - last.neg_entropy;
                j["step"] = step + 1;
                j["kl_weight"] = kl_weight(st.cfg, step, total);
                j["alpha_max"] = st.prior.alpha_max();
                j["wallclock"] = clock.seconds();
                metrics.write(j);
                log_debug("pretrain " + j.dump());
            }
            if (c_.checkpoint_every && (step + 1) % c_.checkpoint_every == 0) save_versioned(st, "pretrain", step + 1);
        }
        const fs::path path = ckpt_dir() / "pretrain.ckpt";
        save_checkpoint(path.string(), st);
        log_info("pretrain: wrote " + path.string());
        return {{"checkpoint", path.string()}, {"steps", total}, {"last", loss_json(last)}};
    }

    template <class Real>
    json train(const std::string& ckpt) {
        const Dataset data = load_training_set(c_);
        const std::size_t total = main_steps(c_, data.size());
        TrainState<Real> st = load_checkpoint<Real>(ckpt);
        st.dump_dir = out_.string();
        const bool resuming = st.step > 0;
        BatchCursor cursor(data, st.cfg.batch_size, derive_seed(st.cfg.seed, StreamPurpose::Data, kMainPhase));
        MetricsLog metrics(out_ / "metrics_train.jsonl", resuming);
        log_info("train: algorithm " + std::to_string(static_cast<int>(select_algorithm(st.cfg))) + ", " +
                 std::to_string(total) + " steps, resuming at " + std::to_string(st.step));
        Stopwatch clock;
        LossBreakdown last;
        while (st.step < total) {
            const std::uint64_t step = st.step;
            const Tensor<Real> x = cursor.at<Real>(step);
            last = train_step(st, x);
            if (c_.log_every && ((step + 1) % c_.log_every == 0 || step + 1 == total)) {
                json j = loss_json(last);
                j["step"] = step + 1;
                j["alpha_max"] = st.prior.alpha_max();
                j["wallclock"] = clock.seconds();
                metrics.write(j);
                log_debug("train " + j.dump());
            }
            if (c_.checkpoint_every && (step + 1) % c_.checkpoint_every == 0) save_versioned(st, "train", step + 1);
        }
        const fs::path path = ckpt_dir() / "train.ckpt";
        save_checkpoint(path.string(), st);
        log_info("train: wrote " + path.string());
        return {{"checkpoint", path.string()}, {"steps", total}, {"last", loss_json(last)}};
    }

    template <class Real>
    json sample(const std::string& ckpt) {
        const TrainState<Real> st = load_checkpoint<Real>(ckpt);
        const std::size_t n = c_.n_samples, d = st.model.latent_dim;
        Tensor<double> z1(n, d);
        Rng prior_rng(c_.seed, StreamPurpose::Sampling, 0);
        for (auto& v : z1.data) v = prior_rng.normal();

        json manifest;
        manifest["n"] = n;
        manifest["sampler"] = c_.sampler;
        Tensor<double> z0;
        const std::size_t evals_before = st.prior.forward_evals;
        if (c_.sampler == "ode") {
            const SampleResult r = ode_sample(st.prior, st.cfg.schedule, z1, c_.solver);
            z0 = r.z0;
            manifest["nfe"] = r.stats.nfe;
            manifest["accepted"] = r.stats.accepted;
            manifest["rejected"] = r.stats.rejected;
            manifest["rtol"] = c_.solver.rtol;
            manifest["atol"] = c_.solver.atol;
            manifest["t_end"] = resolved_t_end(st.cfg.schedule, c_.solver);
        } else {
            Rng noise(c_.seed, StreamPurpose::Sampling, 1);
            z0 = ancestral_sample(st.prior, st.cfg.schedule, z1, c_.ancestral_steps, noise, c_.solver.t_end);
            manifest["steps"] = c_.ancestral_steps;
            manifest["t_end"] = resolved_t_end(st.cfg.schedule, c_.solver);
        }
        manifest["network_evals"] = st.prior.forward_evals - evals_before;
        const Tensor<Real> x = decode_mean(st.vae, convert<Real>(z0));

        if (st.model.data_dim == 784) {
            const fs::path dir = out_ / "samples";
            fs::create_directories(dir);
            json files = json::array();
            for (std::size_t i = 0; i < n; ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "sample_%05zu.pgm", i);
                std::string pgm = "P5\n28 28\n255\n";
                for (std::size_t j = 0; j < 784; ++j) {
                    const double p = std::clamp(static_cast<double>(x(i, j)), 0.0, 1.0);
                    pgm.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * p))));
                }
                write_atomic(dir / name, pgm);
                files.push_back(name);
            }
            manifest["files"] = files;
            write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
            return {{"samples", dir.string()}, {"manifest", manifest}};
        }
        std::ostringstream csv;
        csv << "x0";
        for (std::size_t j = 1; j < x.cols(); ++j) csv << ",x" << j;
        csv << '\n';
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < x.cols(); ++j) csv << (j ? "," : "") << fmt(x(i, j));
            csv << '\n';
        }
        write_atomic(out_ / "samples.csv", csv.str());
        write_atomic(out_ / "samples_manifest.json", manifest.dump(2) + "\n");
        return {{"samples", (out_ / "samples.csv").string()}, {"manifest", manifest}};
    }

    template <class Real>
    json eval_nelbo_cmd(const std::string& ckpt) {
        const TrainState<Real> st = load_checkpoint<Real>(ckpt);
        const Dataset eval = load_eval_set(c_);
        const Tensor<Real> x = whole_set<Real>(eval, derive_seed(c_.seed, StreamPurpose::Eval, kEvalSet));
        Rng rng(c_.seed, StreamPurpose::Eval, 0);
        const NelboResult r = eval_nelbo(st.vae, st.prior, st.cfg.schedule, x, c_.solver, c_.eval_probes, rng);
        Rng base_rng(c_.seed, StreamPurpose::Eval, 1);
        const LossBreakdown base = eval_standard_elbo(st.vae, x, base_rng);
        json j = {{"checkpoint", ckpt},
                  {"dataset", eval.name},
                  {"count", r.count},
                  {"nelbo", r.nelbo},
                  {"std_error", r.std_error},
                  {"recon", r.recon},
                  {"neg_entropy", r.neg_entropy},
                  {"cross_entropy", r.cross_entropy},
                  {"probes", c_.eval_probes},
                  {"standard_prior_nelbo", base.nelbo}};
        write_atomic(out_ / "eval_nelbo.json", j.dump(2) + "\n");
        log_info("eval-nelbo: " + fmt(r.nelbo) + " +- " + fmt(r.std_error) + " nats");
        return j;
    }

    // One row per (pair, t): the closed-form per-t integrand on the grid next to
    // the empirical statistics of single-draw estimates for that pair.
    json variance_report() {
        const SdeSchedule& s = c_.train.schedule;
        std::ostringstream csv;
        csv << "sde,mechanism,strategy,t,integrand,empirical_mean,empirical_std,empirical_stderr,n\n";
        json rows = json::array();
        std::uint64_t k = 0;
        for (auto m : {WeightingMechanism::Wll, WeightingMechanism::Wun, WeightingMechanism::Wre}) {
            for (auto st : {TSamplingStrategy::Uniform, TSamplingStrategy::ImportanceSampled}) {
                ++k;
                try {
                    check_supported(s, m, st);
                } catch (const ConfigError& e) {
                    log_debug(std::string("variance-report: skipping: ") + e.what());
                    continue;
                }
                const auto v = variance_diagnostic(s, m, st, c_.variance_draws, c_.variance_latent_dim,
                                                   derive_seed(c_.seed, StreamPurpose::Diagnostic, k));
                for (std::size_t i = 0; i < c_.grid_size; ++i) {
                    const double u = static_cast<double>(i) / static_cast<double>(c_.grid_size - 1);
                    const double t = s.t_cutoff + (1.0 - s.t_cutoff) * u;
                    const double g = gaussian_integrand(s, m, st, t, c_.variance_latent_dim);
                    csv << to_string(s.kind) << ',' << to_string(m) << ',' << to_string(st) << ',' << fmt(t) << ','
                        << fmt(g) << ',' << fmt(v.mean) << ',' << fmt(v.std) << ',' << fmt(v.stderr_mean) << ','
                        << v.n << '\n';
                }
                rows.push_back({{"mechanism", to_string(m)}, {"strategy", to_string(st)}, {"mean", v.mean}, {"std", v.std}});
            }
        }
        write_atomic(out_ / "variance_report.csv", csv.str());
        return {{"csv", (out_ / "variance_report.csv").string()}, {"rows", rows}};
    }

    json schedule_dump() {
        const SdeSchedule& s = c_.train.schedule;
        std::ostringstream csv;
        csv << "t,beta,g2,mean_coeff,var,ring_var\n";
        for (std::size_t i = 0; i < c_.grid_size; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(c_.grid_size - 1);
            const KernelParams k = kernel(s, t);
            csv << fmt(t) << ',' << fmt(beta(s, t)) << ',' << fmt(diffusion_sq(s, t)) << ',' << fmt(k.mean_coeff)
                << ',' << fmt(k.var) << ',' << fmt(k.ring_var) << '\n';
        }
        write_atomic(out_ / "schedule.csv", csv.str());
        return {{"csv", (out_ / "schedule.csv").string()}, {"rows", c_.grid_size}};
    }

    json iw_bias() {
        Rng rng(c_.seed, StreamPurpose::Diagnostic, 0);
        std::vector<double> logps(c_.iw_k);
        for (auto& w : logps) w = rng.normal();
        std::ostringstream csv;
        csv << "noise_var,K,bias,std_error,predicted\n";
        json rows = json::array();
        for (std::size_t i = 0; i < c_.iw_noise_vars.size(); ++i) {
            const double s2 = c_.iw_noise_vars[i];
            const auto r = iw_bias_probe(logps, s2, c_.iw_k, c_.iw_trials,
                                         derive_seed(c_.seed, StreamPurpose::Diagnostic, i + 1));
            csv << fmt(s2) << ',' << c_.iw_k << ',' << fmt(r.bias) << ',' << fmt(r.std_error) << ','
                << fmt(r.predicted) << '\n';
            rows.push_back({{"noise_var", s2}, {"bias", r.bias}, {"std_error", r.std_error}, {"predicted", r.predicted}});
        }
        write_atomic(out_ / "iw_bias.csv", csv.str());
        return {{"csv", (out_ / "iw_bias.csv").string()}, {"rows", rows}};
    }

private:
    const ExperimentConfig& c_;
    fs::path out_;
};

} // namespace

const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names{"pretrain",        "train",         "sample", "eval-nelbo",
                                                "variance-report", "schedule-dump", "iw-bias"};
    return names;
}

Dataset load_training_set(const ExperimentConfig& c) {
    if (c.dataset == "mnist-binarized") return load_mnist_idx(c.data_path);
    return gen_toy(c.dataset, c.n_train, c.seed);
}

Dataset load_eval_set(const ExperimentConfig& c) {
    if (c.dataset != "mnist-binarized") return gen_toy(c.dataset, c.n_eval, derive_seed(c.seed, StreamPurpose::Eval, kEvalSet));
    Dataset d = load_mnist_idx(c.eval_data_path.empty() ? c.data_path : c.eval_data_path);
    const std::size_t n = std::min(c.n_eval, d.size());
    const std::size_t cols = d.x.cols();
    d.x.data.resize(n * cols);
    d.x.shape[0] = n;
    if (!d.labels.empty()) d.labels.resize(n);
    return d;
}

std::size_t pretrain_steps(const ExperimentConfig& c, std::size_t n_data) {
    if (c.train.steps_pretrain) return c.train.steps_pretrain;
    return c.train.epochs_pretrain * batches_per_epoch(n_data, std::min(c.train.batch_size, n_data));
}

std::size_t main_steps(const ExperimentConfig& c, std::size_t n_data) {
    if (c.train.steps_main) return c.train.steps_main;
    return c.train.epochs_main * batches_per_epoch(n_data, std::min(c.train.batch_size, n_data));
}

Experiment::Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.train.seed = cfg_.seed;
    cfg_.validate();
}

json Experiment::run(const std::string& cmd, const std::string& checkpoint) {
    Runner r(cfg_);
    json out;
    if (cmd == "pretrain") {
        const bool f64 = checkpoint.empty() ? cfg_.precision == Precision::F64 : dtype_of(checkpoint) == "f64";
        out = f64 ? r.pretrain<double>(checkpoint) : r.pretrain<float>(checkpoint);
    } else if (cmd == "train") {
        const std::string ck = r.input_checkpoint(checkpoint, "pretrain.ckpt");
        out = dtype_of(ck) == "f64" ? r.train<double>(ck) : r.train<float>(ck);
    } else if (cmd == "sample") {
        const std::string ck = r.input_checkpoint(checkpoint, "train.ckpt");
        out = dtype_of(ck) == "f64" ? r.sample<double>(ck) : r.sample<float>(ck);
    } else if (cmd == "eval-nelbo") {
        const std::string ck = r.input_checkpoint(checkpoint, "train.ckpt");
        out = dtype_of(ck) == "f64" ? r.eval_nelbo_cmd<double>(ck) : r.eval_nelbo_cmd<float>(ck);
    } else if (cmd == "variance-report") {
        out = r.variance_report();
    } else if (cmd == "schedule-dump") {
        out = r.schedule_dump();
    } else if (cmd == "iw-bias") {
        out = r.iw_bias();
    } else {
        throw ConfigError("subcommand: unknown '" + cmd + "'");
    }
    out["subcommand"] = cmd;
    return out;
}

} // namespace ldlb
