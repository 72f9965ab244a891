#include "kdaudit/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kdaudit {

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
    if (grad_clip_norm < 0.0) throw ConfigError("grad_clip_norm must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"weight_decay", weight_decay},
            {"grad_clip_norm", grad_clip_norm},
            {"seed", seed},
            {"optimizer", optimizer == Optimizer::Adam ? "adam" : "sgd_momentum"},
            {"beta1", beta1},
            {"beta2", beta2},
            {"adam_eps", adam_eps},
            {"momentum", momentum},
            {"warmup_steps", warmup_steps},
            {"trainable_blocks", trainable_blocks}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
    c.seed = j.value("seed", c.seed);
    c.optimizer = j.value("optimizer", std::string("adam")) == "sgd_momentum"
                      ? TrainConfig::Optimizer::SgdMomentum
                      : TrainConfig::Optimizer::Adam;
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.momentum = j.value("momentum", c.momentum);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.trainable_blocks = j.value("trainable_blocks", c.trainable_blocks);
    return c;
}

nlohmann::json TrainReport::to_json() const {
    return {{"train_loss", train_loss}, {"val_loss", val_loss}, {"checkpoint_path", checkpoint_path}};
}

std::vector<EncodedSample> chunk_for_context(const EncodedSample& enc, int context_len) {
    if (static_cast<int>(enc.tokens.size()) <= context_len) return {enc};
    std::vector<EncodedSample> out;
    const int total = static_cast<int>(enc.tokens.size());
    for (int start = 0; start < total; start += context_len) {
        const int len = std::min(context_len, total - start);
        if (len < 2) break;
        EncodedSample chunk;
        chunk.tokens.assign(enc.tokens.begin() + start, enc.tokens.begin() + start + len);
        chunk.raw_text = enc.raw_text;
        chunk.category = enc.category;
        chunk.scored_from = std::clamp(enc.scored_from - start, 0, len);
        if (chunk.scored_from >= len) continue;  // chunk holds only context
        // position 0 of a chunk has no prediction target
        chunk.scored_from = std::max(chunk.scored_from, 1);
        out.push_back(std::move(chunk));
    }
    return out;
}

namespace {

struct SampleLossNodes {
    int loss = -1;
    BoundForward bound;
};

// Builds the masked mean-NLL loss node for one encoded sequence.
SampleLossNodes build_loss(Graph& g, const Parameters& params, const EncodedSample& enc) {
    const int T = static_cast<int>(enc.tokens.size());
    SampleLossNodes out;
    out.bound = forward(g, params, enc.tokens);
    const int lsm = g.log_softmax_rows(out.bound.logits);

    std::vector<int> rows;
    std::vector<int> targets;
    for (int t = 0; t + 1 < T; ++t) {
        if (t + 1 < enc.scored_from) continue;  // prediction target inside the prompt
        rows.push_back(t);
        targets.push_back(enc.tokens[static_cast<std::size_t>(t + 1)]);
    }
    if (rows.empty()) throw InputError("sequence has no scored positions");
    const int picked = g.pick_positions(g.gather_rows(lsm, rows), targets);
    std::vector<double> weights(rows.size(), 1.0);
    out.loss = g.scale(g.weighted_sum(picked, weights), -1.0 / static_cast<double>(rows.size()));
    return out;
}

struct GradAccumulator {
    std::vector<Tensor> grads;

    explicit GradAccumulator(const std::vector<const Tensor*>& tensors) {
        grads.reserve(tensors.size());
        for (const Tensor* t : tensors) grads.emplace_back(t->shape());
    }

    void zero() {
        for (Tensor& g : grads)
            std::fill(g.values().begin(), g.values().end(), 0.0);
    }

    void add_from(Graph& g, const BoundForward& bound, double scale) {
        for (std::size_t i = 0; i < bound.bound_params.size(); ++i) {
            const Tensor& src = g.grad(bound.bound_params[i]);
            Tensor& dst = grads[i];
            for (std::int64_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
        }
    }

    double global_norm() const {
        double sq = 0.0;
        for (const Tensor& g : grads)
            for (std::int64_t k = 0; k < g.size(); ++k) sq += g[k] * g[k];
        return std::sqrt(sq);
    }
};

struct Optimizer {
    const TrainConfig& cfg;
    std::vector<Tensor> m, v;
    long step = 0;

    Optimizer(const TrainConfig& c, const std::vector<Tensor*>& tensors) : cfg(c) {
        for (const Tensor* t : tensors) {
            m.emplace_back(t->shape());
            v.emplace_back(t->shape());
        }
    }

    void apply(std::vector<Tensor*>& params, const GradAccumulator& acc,
               const std::vector<bool>& trainable) {
        ++step;
        double lr = cfg.learning_rate;
        if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
            lr *= static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
        if (cfg.optimizer == TrainConfig::Optimizer::Adam) {
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < params.size(); ++i) {
                if (!trainable[i]) continue;
                Tensor& p = *params[i];
                const Tensor& g = acc.grads[i];
                for (std::int64_t k = 0; k < p.size(); ++k) {
                    m[i][k] = cfg.beta1 * m[i][k] + (1.0 - cfg.beta1) * g[k];
                    v[i][k] = cfg.beta2 * v[i][k] + (1.0 - cfg.beta2) * g[k] * g[k];
                    const double mh = m[i][k] / bc1;
                    const double vh = v[i][k] / bc2;
                    p[k] -= lr * (mh / (std::sqrt(vh) + cfg.adam_eps) + cfg.weight_decay * p[k]);
                }
            }
        } else {
            for (std::size_t i = 0; i < params.size(); ++i) {
                if (!trainable[i]) continue;
                Tensor& p = *params[i];
                const Tensor& g = acc.grads[i];
                for (std::int64_t k = 0; k < p.size(); ++k) {
                    m[i][k] = cfg.momentum * m[i][k] + g[k];
                    p[k] -= lr * (m[i][k] + cfg.weight_decay * p[k]);
                }
            }
        }
    }
};

std::vector<bool> trainable_mask(Parameters& params, const std::vector<int>& blocks) {
    std::vector<bool> mask;
    params.for_each_tensor([&](const std::string& name, Tensor&) {
        if (blocks.empty()) {
            mask.push_back(true);
            return;
        }
        bool ok = false;
        for (int l : blocks)
            if (name.rfind("block" + std::to_string(l) + ".", 0) == 0) ok = true;
        mask.push_back(ok);
    });
    return mask;
}

}  // namespace

double masked_loss(const Parameters& params, const EncodedSample& enc) {
    Graph g;
    const SampleLossNodes nodes = build_loss(g, params, enc);
    return g.value(nodes.loss)[0];
}

double dataset_loss(const Parameters& params, const std::vector<EncodedSample>& encs) {
    if (encs.empty()) throw DataError("dataset_loss on empty set");
    std::vector<double> losses(encs.size(), 0.0);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < encs.size(); ++i) losses[i] = masked_loss(params, encs[i]);
    double sum = 0.0;
    for (double v : losses) sum += v;
    return sum / static_cast<double>(encs.size());
}

std::pair<Parameters, TrainReport> train_lm(const Parameters& init, const std::vector<Sample>& data,
                                            const Tokenizer& tok, const TrainConfig& cfg,
                                            const std::vector<Sample>* validation) {
    cfg.validate();
    Parameters params = init;
    TrainReport report;
    if (cfg.epochs == 0) return {std::move(params), std::move(report)};
    if (data.empty()) throw DataError("train_lm on empty dataset");

    const int ctx = params.config.context_len;
    std::vector<EncodedSample> encoded;
    for (const auto& s : data) {
        EncodedSample full;
        full.raw_text = s.prompt_text + "\n" + s.response_text;
        full.category = s.category;
        const auto prompt_ids = tok.encode(s.prompt_text);
        const auto sep_ids = tok.encode("\n");
        const auto response_ids = tok.encode(s.response_text);
        full.tokens.push_back(tok.bos_id());
        full.tokens.insert(full.tokens.end(), prompt_ids.begin(), prompt_ids.end());
        full.tokens.insert(full.tokens.end(), sep_ids.begin(), sep_ids.end());
        full.scored_from = static_cast<int>(full.tokens.size());
        full.tokens.insert(full.tokens.end(), response_ids.begin(), response_ids.end());
        full.tokens.push_back(tok.eos_id());
        for (auto& chunk : chunk_for_context(full, ctx)) encoded.push_back(std::move(chunk));
    }

    std::vector<EncodedSample> val_encoded;
    if (validation) {
        for (const auto& s : *validation)
            val_encoded.push_back(encode_sample(tok, s, ctx));
    }

    std::vector<Tensor*> tensors = params.tensor_list();
    const std::vector<const Tensor*> const_tensors = static_cast<const Parameters&>(params).tensor_list();
    const std::vector<bool> trainable = trainable_mask(params, cfg.trainable_blocks);
    GradAccumulator acc(const_tensors);
    Optimizer opt(cfg, tensors);

#ifdef _OPENMP
    const int wave = std::max(1, omp_get_max_threads());
#else
    const int wave = 1;
#endif

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(encoded.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 rng(seed_for(cfg.seed, "epoch-order", static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);

        double epoch_loss_sum = 0.0;
        for (std::size_t batch_start = 0; batch_start < order.size();
             batch_start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t batch_end =
                std::min(order.size(), batch_start + static_cast<std::size_t>(cfg.batch_size));
            const int b = static_cast<int>(batch_end - batch_start);
            acc.zero();
            double batch_loss = 0.0;

            // Waves bound live graph memory; accumulation stays in sample order.
            for (std::size_t wave_start = batch_start; wave_start < batch_end;
                 wave_start += static_cast<std::size_t>(wave)) {
                const std::size_t wave_end =
                    std::min(batch_end, wave_start + static_cast<std::size_t>(wave));
                const int w = static_cast<int>(wave_end - wave_start);
                std::vector<Graph> graphs(static_cast<std::size_t>(w));
                std::vector<SampleLossNodes> nodes(static_cast<std::size_t>(w));
#pragma omp parallel for schedule(static, 1)
                for (int i = 0; i < w; ++i) {
                    const EncodedSample& enc = encoded[order[wave_start + static_cast<std::size_t>(i)]];
                    nodes[static_cast<std::size_t>(i)] =
                        build_loss(graphs[static_cast<std::size_t>(i)], params, enc);
                    graphs[static_cast<std::size_t>(i)].backward(nodes[static_cast<std::size_t>(i)].loss);
                }
                for (int i = 0; i < w; ++i) {
                    const double loss =
                        graphs[static_cast<std::size_t>(i)].value(nodes[static_cast<std::size_t>(i)].loss)[0];
                    batch_loss += loss;
                    acc.add_from(graphs[static_cast<std::size_t>(i)], nodes[static_cast<std::size_t>(i)].bound,
                                 1.0 / static_cast<double>(b));
                }
            }
            batch_loss /= static_cast<double>(b);
            if (!std::isfinite(batch_loss))
                throw NumericError("training loss became non-finite at epoch " +
                                   std::to_string(epoch + 1));
            epoch_loss_sum += batch_loss * b;

            if (cfg.grad_clip_norm > 0.0) {
                const double norm = acc.global_norm();
                if (norm > cfg.grad_clip_norm) {
                    const double scale = cfg.grad_clip_norm / norm;
                    for (Tensor& g : acc.grads)
                        for (std::int64_t k = 0; k < g.size(); ++k) g[k] *= scale;
                }
            }
            opt.apply(tensors, acc, trainable);
        }
        report.train_loss.push_back(epoch_loss_sum / static_cast<double>(encoded.size()));
        if (!val_encoded.empty()) report.val_loss.push_back(dataset_loss(params, val_encoded));
    }
    return {std::move(params), std::move(report)};
}

}  // namespace kdaudit
