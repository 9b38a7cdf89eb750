// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include "racecar/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "racecar/errors.hpp"
#include "racecar/io.hpp"
#include "racecar/reverse.hpp"
#include "racecar/rng.hpp"

namespace racecar {

void TrainConfig::validate(std::size_t num_units) const {
    if (racecar.has_value() && ortho != OrthoMode::Off)
        throw ContractError("TrainConfig: racecar and orthogonality are mutually exclusive");
    if (racecar.has_value()) racecar->validate(num_units);
    if (batch_size == 0) throw ContractError("TrainConfig: batch_size must be >= 1");
    if (log_every == 0) throw ContractError("TrainConfig: log_every must be >= 1");
}

std::string MetricsLog::to_csv() const {
    std::string out = "epoch,base_loss,reg_loss,train_acc,test_acc,wall_seconds\n";
    for (const auto& r : rows) {
        out += csv_row({std::to_string(r.epoch), format_double(r.base_loss),
                        format_double(r.reg_loss), format_double(r.train_acc),
                        format_double(r.test_acc), format_double(r.wall_seconds)});
    }
    return out;
}

bool MetricsLog::same_results(const MetricsLog& other) const {
    if (rows.size() != other.rows.size()) return false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& a = rows[i];
        const auto& b = other.rows[i];
        if (a.epoch != b.epoch || a.base_loss != b.base_loss || a.reg_loss != b.reg_loss ||
            a.train_acc != b.train_acc || a.test_acc != b.test_acc)
            return false;
    }
    return true;
}

namespace {

std::vector<Matrix> unit_weights(const Network& net) {
    std::vector<Matrix> out;
    out.reserve(net.units.size());
    for (const auto& u : net.units) out.push_back(u.weight);
    return out;
}

// Adjoints of the reconstruction loss: on d'_m (toward the reverse chain)
// and directly on d_m (toward the forward chain). Factor 2*lambda/batch.
struct RacecarAdjoints {
    std::vector<Tensor> on_recon;    // index m-1, empty tensor when unconstrained
    std::vector<Tensor> on_forward;  // index m-1 within a (n+1)-slot adjoint list
};

double racecar_terms(const ActivationTrace& trace, const std::vector<Tensor>& recon,
                     const std::vector<double>& lambdas, double batch,
                     RacecarAdjoints* adj) {
    const std::size_t n = lambdas.size();
    double loss = 0.0;
    if (adj) {
        adj->on_recon.resize(n);
        adj->on_forward.resize(n + 1);
    }
    for (std::size_t m = 1; m <= n; ++m) {
        const double lam = lambdas[m - 1];
        if (lam == 0.0) continue;
        const Tensor& d = trace.d(m);
        const Tensor& r = recon[m - 1];
        loss += lam * squared_distance(d, r);
        if (adj) {
            const double f = 2.0 * lam / batch;
            Tensor gr(d.shape), gf(d.shape);
            for (std::size_t i = 0; i < d.data.size(); ++i) {
                const double diff = r.data[i] - d.data[i];
                gr.data[i] = f * diff;
                gf.data[i] = -f * diff;
            }
            adj->on_recon[m - 1] = std::move(gr);
            adj->on_forward[m - 1] = std::move(gf);
        }
    }
    return loss / batch;
}

}  // namespace

LossBreakdown eval_batch(Network& net, const Tensor& inputs, const std::vector<int>& labels,
                         const TrainConfig& cfg, ParamGrads* grads, bool update_running_stats) {
    const std::size_t n = net.units.size();
    const bool want_racecar = cfg.racecar.has_value();
    const double blend = want_racecar ? cfg.racecar->base_blend : 1.0;
    const bool want_base = cfg.base_loss == BaseLoss::CrossEntropy && blend != 0.0;

    ForwardOptions fopts;
    fopts.training = true;
    fopts.update_running_stats = update_running_stats;
    fopts.record = want_racecar || grads != nullptr;

    ForwardResult fwd = forward(net, inputs, fopts);

    LossBreakdown out;
    Tensor dout(fwd.output.shape);
    if (want_base) {
        Tensor g;
        out.base = blend * cross_entropy_with_grad(fwd.output, labels, g);
        if (grads) {
            for (std::size_t i = 0; i < dout.data.size(); ++i) dout.data[i] = blend * g.data[i];
        }
    }

    std::vector<Tensor> adjoints(n + 1);
    bool have_adjoints = false;

    if (want_racecar) {
        const RacecarConfig& rc = *cfg.racecar;
        const auto lambdas = rc.resolve_lambdas(n);
        ReversePlan plan =
            build_reverse(net, rc.variant, rc.output_activation, rc.output_act);
        const bool record_rev = grads != nullptr && rc.tied_gradients;

        ReverseResult rev = (rc.variant == ReversePlan::Variant::Full)
                                ? reverse_full_recorded(plan, fwd.output, record_rev)
                                : reverse_layerwise_recorded(plan, fwd.trace, record_rev);

        std::vector<Tensor> recon;
        recon.reserve(n);
        for (std::size_t m = 0; m < n; ++m) recon.push_back(rev.trace.entries[m].value);

        RacecarAdjoints adj;
        out.reg += racecar_terms(fwd.trace, recon, lambdas,
                                 static_cast<double>(inputs.batch()), grads ? &adj : nullptr);

        if (grads) {
            adjoints = std::move(adj.on_forward);
            have_adjoints = true;
            if (rc.tied_gradients) {
                if (rc.variant == ReversePlan::Variant::Full) {
                    // Walk the reverse chain from d'_1 back to its input
                    // d_{n+1}, injecting each layer's reconstruction adjoint.
                    Tensor g;
                    bool live = false;
                    for (std::size_t ui = 0; ui < n; ++ui) {
                        const Tensor& a = adj.on_recon[ui];
                        if (a.numel() > 0) {
                            if (!live) {
                                g = a;
                                live = true;
                            } else {
                                for (std::size_t i = 0; i < g.data.size(); ++i)
                                    g.data[i] += a.data[i];
                            }
                        }
                        if (!live) continue;
                        g = reverse_stage_backward(net, ui, rev.caches[ui], std::move(g),
                                                   rc.output_activation, rc.output_act, *grads);
                    }
                    if (live) {
                        // Chain input is the forward output d_{n+1}.
                        if (adjoints[n].numel() == 0)
                            adjoints[n] = std::move(g);
                        else
                            for (std::size_t i = 0; i < g.data.size(); ++i)
                                adjoints[n].data[i] += g.data[i];
                    }
                } else {
                    // Each stage consumes the forward d_{m+1}.
                    for (std::size_t ui = 0; ui < n; ++ui) {
                        const Tensor& a = adj.on_recon[ui];
                        if (a.numel() == 0) continue;
                        Tensor g = reverse_stage_backward(net, ui, rev.caches[ui], a,
                                                          rc.output_activation, rc.output_act,
                                                          *grads);
                        Tensor& slot = adjoints[ui + 1];
                        if (slot.numel() == 0)
                            slot = std::move(g);
                        else
                            for (std::size_t i = 0; i < g.data.size(); ++i)
                                slot.data[i] += g.data[i];
                    }
                }
            }
        }
    } else if (cfg.ortho == OrthoMode::Soft) {
        out.reg = cfg.ortho_weight * ortho_loss_soft(unit_weights(net));
        if (grads) {
            for (std::size_t ui = 0; ui < n; ++ui) {
                Matrix g = ortho_loss_soft_grad(net.units[ui].weight);
                g *= cfg.ortho_weight;
                grads->units[ui].weight += g;
            }
        }
    } else if (cfg.ortho == OrthoMode::Srip) {
        out.reg = srip_loss(unit_weights(net), cfg.ortho_weight);
        if (grads && cfg.ortho_weight != 0.0) {
            for (std::size_t ui = 0; ui < n; ++ui) {
                Matrix g = srip_grad(net.units[ui].weight);
                g *= cfg.ortho_weight;
                grads->units[ui].weight += g;
            }
        }
    }

    if (grads) {
        backward_with_adjoints(net, fwd.trace, dout, have_adjoints ? &adjoints : nullptr,
                               *grads);
    }
    return out;
}

void Optimizer::init(const Network& net) {
    const std::size_t n = param_count(net);
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    t = 0;
}

void Optimizer::step(Network& net, ParamGrads& grads) {
    if (kind == OptimizerKind::Sgd) {
        for_each_param_grad(net, grads, [&](double& p, double& g) { p -= lr * g; });
        return;
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    std::size_t i = 0;
    for_each_param_grad(net, grads, [&](double& p, double& g) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p -= lr * mhat / (std::sqrt(vhat) + eps);
        ++i;
    });
}

namespace {

Tensor gather_inputs(const Dataset& data, const std::vector<std::size_t>& idx, std::size_t lo,
                     std::size_t hi) {
    Shape s{hi - lo};
    const Shape sample = data.inputs.sample_shape();
    s.insert(s.end(), sample.begin(), sample.end());
    Tensor out(s);
    for (std::size_t i = lo; i < hi; ++i) {
        const double* src = data.inputs.sample(idx[i]);
        std::copy(src, src + data.inputs.sample_numel(), out.sample(i - lo));
    }
    return out;
}

std::vector<int> gather_labels(const Dataset& data, const std::vector<std::size_t>& idx,
                               std::size_t lo, std::size_t hi) {
    std::vector<int> out;
    if (data.labels.empty()) return out;
    out.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) out.push_back(data.labels[idx[i]]);
    return out;
}

// Eval-mode metrics of the current parameter state.
MetricsRow measure(Network& net, const Dataset& train_data, const Dataset* test_data,
                   const TrainConfig& cfg, std::size_t epoch, double wall) {
    MetricsRow row;
    row.epoch = epoch;
    row.wall_seconds = wall;

    ForwardOptions eopts;  // eval mode
    ForwardResult fwd = forward(net, train_data.inputs, {false, false, cfg.racecar.has_value()});
    if (cfg.base_loss == BaseLoss::CrossEntropy && !train_data.labels.empty())
        row.base_loss = cross_entropy(fwd.output, train_data.labels);
    if (!train_data.labels.empty()) row.train_acc = accuracy(fwd.output, train_data.labels);

    if (cfg.racecar.has_value()) {
        const RacecarConfig& rc = *cfg.racecar;
        ReversePlan plan = build_reverse(net, rc.variant, rc.output_activation, rc.output_act);
        ReverseResult rev = (rc.variant == ReversePlan::Variant::Full)
                                ? reverse_full_recorded(plan, fwd.output, false)
                                : reverse_layerwise_recorded(plan, fwd.trace, false);
        row.reg_loss = racecar_loss(fwd.trace, rev.trace, rc);
    } else if (cfg.ortho == OrthoMode::Soft) {
        row.reg_loss = cfg.ortho_weight * ortho_loss_soft(unit_weights(net));
    } else if (cfg.ortho == OrthoMode::Srip) {
        row.reg_loss = srip_loss(unit_weights(net), cfg.ortho_weight);
    }

    if (test_data && test_data->size() > 0 && !test_data->labels.empty()) {
        ForwardResult tf = forward(net, test_data->inputs, eopts);
        row.test_acc = accuracy(tf.output, test_data->labels);
    }
    return row;
}

}  // namespace

TrainResult train(const Network& net0, const Dataset& train_data, const Dataset* test_data,
                  const TrainConfig& cfg) {
    cfg.validate(net0.units.size());
    if (train_data.size() == 0) throw ContractError("train: empty dataset");
    if (cfg.base_loss == BaseLoss::CrossEntropy && train_data.labels.empty())
        throw ContractError("train: cross-entropy needs labels");

    TrainResult res;
    res.net = net0;
    Network& net = res.net;

    Optimizer opt;
    opt.kind = cfg.optimizer;
    opt.lr = cfg.learning_rate;
    opt.init(net);

    Rng rng(cfg.seed * 0x9e3779b97f4a7c15ull + 1);
    std::vector<std::size_t> idx(train_data.size());
    std::iota(idx.begin(), idx.end(), 0);

    const auto t0 = std::chrono::steady_clock::now();
    auto wall = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    auto measure_row = [&](std::size_t epoch) {
        try {
            return measure(net, train_data, test_data, cfg, epoch, wall());
        } catch (const NumericError& e) {
            throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": " +
                                    e.what(),
                                static_cast<long>(epoch));
        }
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (epoch % cfg.log_every == 0) res.log.rows.push_back(measure_row(epoch));

        rng.shuffle(idx);
        for (std::size_t lo = 0; lo < idx.size(); lo += cfg.batch_size) {
            const std::size_t hi = std::min(idx.size(), lo + cfg.batch_size);
            Tensor bx = gather_inputs(train_data, idx, lo, hi);
            std::vector<int> by = gather_labels(train_data, idx, lo, hi);
            ParamGrads grads = ParamGrads::zeros_like(net);
            LossBreakdown loss;
            try {
                loss = eval_batch(net, bx, by, cfg, &grads, true);
            } catch (const NumericError& e) {
                throw TrainingError("training diverged at epoch " + std::to_string(epoch) +
                                        ": " + e.what(),
                                    static_cast<long>(epoch));
            }
            if (!std::isfinite(loss.total()))
                throw TrainingError("training diverged at epoch " + std::to_string(epoch),
                                    static_cast<long>(epoch));
            opt.step(net, grads);
        }
    }
    res.log.rows.push_back(measure_row(cfg.epochs));
    return res;
}

TrainResult finetune(const Network& net, const Dataset& train_data, const Dataset* test_data,
                     const TrainConfig& cfg) {
    if (cfg.has_regularizer())
        throw ContractError("finetune: regularizers must be off");
    return train(net, train_data, test_data, cfg);
}

double finite_diff_check(Network& net, const LossProbe& probe, double eps,
                         std::size_t sample_limit, std::uint64_t seed) {
    if (eps < 1e-7 || eps > 1e-3)
        throw ContractError("finite_diff_check: eps must lie in [1e-7, 1e-3]");

    const ParamGrads analytic = probe.gradient(net);

    // Flatten parameter pointers in declaration order.
    std::vector<double*> params;
    for_each_param(net, [&](double& p) { params.push_back(&p); });
    std::vector<double> analytic_flat;
    {
        ParamGrads& g = const_cast<ParamGrads&>(analytic);
        for_each_param_grad(net, g, [&](double&, double& gv) { analytic_flat.push_back(gv); });
    }

    std::vector<std::size_t> which(params.size());
    std::iota(which.begin(), which.end(), 0);
    if (sample_limit > 0 && params.size() > sample_limit) {
        Rng rng(seed * 1315423911ull + 7);
        rng.shuffle(which);
        which.resize(sample_limit);
    }

    double max_rel = 0.0;
    for (std::size_t i : which) {
        const double orig = *params[i];
        *params[i] = orig + eps;
        const double lp = probe.value(net);
        *params[i] = orig - eps;
        const double lm = probe.value(net);
        *params[i] = orig;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic_flat[i]), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(analytic_flat[i] - numeric) / denom);
    }
    return max_rel;
}

LossProbe make_training_loss_probe(const TrainConfig& cfg, const Tensor& inputs,
                                   const std::vector<int>& labels) {
    LossProbe probe;
    probe.value = [cfg, inputs, labels](Network& net) {
        return eval_batch(net, inputs, labels, cfg, nullptr, false).total();
    };
    probe.gradient = [cfg, inputs, labels](Network& net) {
        ParamGrads g = ParamGrads::zeros_like(net);
        eval_batch(net, inputs, labels, cfg, &g, false);
        return g;
    };
    return probe;
}

}  // namespace racecar
