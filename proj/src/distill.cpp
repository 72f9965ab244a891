#include "kdaudit/distill.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kdaudit {

std::string technique_name(Technique t) {
    switch (t) {
        case Technique::KD: return "kd";
        case Technique::SeqKD: return "seqkd";
        case Technique::ImitKD: return "imitkd";
        case Technique::GKD: return "gkd";
        case Technique::MiniLLM: return "minillm";
        case Technique::DistiLLM: return "distillm";
    }
    return "kd";
}

Technique technique_from_name(const std::string& name) {
    if (name == "kd") return Technique::KD;
    if (name == "seqkd") return Technique::SeqKD;
    if (name == "imitkd") return Technique::ImitKD;
    if (name == "gkd") return Technique::GKD;
    if (name == "minillm") return Technique::MiniLLM;
    if (name == "distillm") return Technique::DistiLLM;
    throw ConfigError("unknown KD technique: " + name);
}

std::string divergence_name(DivergenceKind k) {
    switch (k) {
        case DivergenceKind::KL: return "kl";
        case DivergenceKind::RKL: return "rkl";
        case DivergenceKind::JSD: return "jsd";
        case DivergenceKind::SRKL: return "srkl";
    }
    return "kl";
}

DivergenceKind divergence_from_name(const std::string& name) {
    if (name == "kl") return DivergenceKind::KL;
    if (name == "rkl") return DivergenceKind::RKL;
    if (name == "jsd") return DivergenceKind::JSD;
    if (name == "srkl") return DivergenceKind::SRKL;
    throw ConfigError("unknown divergence: " + name);
}

std::string strategy_name(DatasetStrategy s) {
    switch (s) {
        case DatasetStrategy::Public: return "public";
        case DatasetStrategy::TeacherFeedback: return "teacher_feedback";
        case DatasetStrategy::StudentFeedback: return "student_feedback";
        case DatasetStrategy::Mixed: return "mixed";
        case DatasetStrategy::AdaptiveMixed: return "adaptive_mixed";
    }
    return "public";
}

namespace {
DatasetStrategy strategy_from_name(const std::string& name) {
    if (name == "public") return DatasetStrategy::Public;
    if (name == "teacher_feedback") return DatasetStrategy::TeacherFeedback;
    if (name == "student_feedback") return DatasetStrategy::StudentFeedback;
    if (name == "mixed") return DatasetStrategy::Mixed;
    if (name == "adaptive_mixed") return DatasetStrategy::AdaptiveMixed;
    throw ConfigError("unknown dataset strategy: " + name);
}
}  // namespace

KDRecipe KDRecipe::for_technique(Technique t, std::uint64_t seed) {
    KDRecipe r;
    r.technique = t;
    r.seed = seed;
    switch (t) {
        case Technique::KD:
            r.divergence = DivergenceKind::KL;
            r.strategy = DatasetStrategy::Public;
            break;
        case Technique::SeqKD:
            r.divergence = DivergenceKind::KL;
            r.strategy = DatasetStrategy::TeacherFeedback;
            break;
        case Technique::ImitKD:
            r.divergence = DivergenceKind::KL;
            r.strategy = DatasetStrategy::StudentFeedback;
            break;
        case Technique::GKD:
            r.divergence = DivergenceKind::JSD;
            r.strategy = DatasetStrategy::Public;
            break;
        case Technique::MiniLLM:
            r.divergence = DivergenceKind::RKL;
            r.strategy = DatasetStrategy::Mixed;
            break;
        case Technique::DistiLLM:
            r.divergence = DivergenceKind::SRKL;
            r.strategy = DatasetStrategy::AdaptiveMixed;
            break;
    }
    return r;
}

void KDRecipe::validate() const {
    if (beta < 0.0 || beta > 1.0) throw ConfigError("JSD beta must lie in [0, 1]");
    if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("SRKL alpha must lie in (0, 1]");
    if (sgo_ratio < 0.0 || sgo_ratio > 1.0) throw ConfigError("sgo_ratio must lie in [0, 1]");
}

nlohmann::json KDRecipe::to_json() const {
    return {{"technique", technique_name(technique)},
            {"divergence", divergence_name(divergence)},
            {"strategy", strategy_name(strategy)},
            {"beta", beta},
            {"alpha", alpha},
            {"sgo_ratio", sgo_ratio},
            {"seed", seed}};
}

KDRecipe KDRecipe::from_json(const nlohmann::json& j) {
    KDRecipe r = for_technique(technique_from_name(j.at("technique").get<std::string>()));
    if (j.contains("divergence")) r.divergence = divergence_from_name(j["divergence"]);
    if (j.contains("strategy")) r.strategy = strategy_from_name(j["strategy"]);
    r.beta = j.value("beta", r.beta);
    r.alpha = j.value("alpha", r.alpha);
    r.sgo_ratio = j.value("sgo_ratio", r.sgo_ratio);
    r.seed = j.value("seed", r.seed);
    r.validate();
    return r;
}

int divergence_node(Graph& g, const Tensor& p_logits, int q_logits_node, DivergenceKind kind,
                    double beta, double alpha) {
    const Tensor& q_val = g.value(q_logits_node);
    if (p_logits.shape() != q_val.shape())
        throw ShapeError("divergence logits shape mismatch");

    const int logp = g.leaf(log_softmax(p_logits, -1));
    const int p = g.leaf(softmax(p_logits, -1));
    const int logq = g.log_softmax_rows(q_logits_node);

    auto forward_kl = [&]() { return g.sum(g.mul(p, g.sub(logp, logq))); };
    auto reverse_kl = [&]() {
        return g.sum(g.mul(g.exp_op(logq), g.sub(logq, logp)));
    };

    switch (kind) {
        case DivergenceKind::KL:
            return forward_kl();
        case DivergenceKind::RKL:
            return reverse_kl();
        case DivergenceKind::JSD:
            return g.add(g.scale(forward_kl(), beta), g.scale(reverse_kl(), 1.0 - beta));
        case DivergenceKind::SRKL: {
            if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("SRKL alpha must lie in (0, 1]");
            const int q = g.exp_op(logq);
            const int mix = g.add(g.scale(p, alpha), g.scale(q, 1.0 - alpha));
            return g.sum(g.mul(q, g.sub(logq, g.log_op(mix))));
        }
    }
    throw ConfigError("unknown divergence kind");
}

double divergence(const Tensor& p_logits, const Tensor& q_logits, DivergenceKind kind, double beta,
                  double alpha) {
    Graph g;
    const int q = g.leaf(q_logits);
    return g.value(divergence_node(g, p_logits, q, kind, beta, alpha))[0];
}

FeedbackDataset public_feedback(const std::vector<Sample>& samples, const Tokenizer& tok,
                                int context_len) {
    FeedbackDataset out;
    out.provenance = Provenance::Public;
    for (const auto& s : samples) {
        const EncodedSample enc = encode_sample(tok, s, context_len);
        FeedbackRecord rec;
        rec.prompt.assign(enc.tokens.begin(), enc.tokens.begin() + enc.scored_from);
        rec.response.assign(enc.tokens.begin() + enc.scored_from, enc.tokens.end());
        out.records.push_back(std::move(rec));
    }
    return out;
}

namespace {

FeedbackDataset feedback_from_generation(const Parameters& model,
                                         const std::vector<std::vector<int>>& prompts,
                                         const GenerateConfig& gen, Provenance provenance,
                                         bool from_student) {
    FeedbackDataset out;
    out.provenance = provenance;
    out.records.resize(prompts.size());
    std::vector<char> usable(prompts.size(), 0);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        GenerateConfig cfg = gen;
        cfg.seed = seed_for(gen.seed, "feedback", static_cast<std::uint64_t>(i));
        const std::vector<int> full = generate(model, prompts[i], cfg);
        FeedbackRecord rec;
        rec.prompt = prompts[i];
        rec.response.assign(full.begin() + static_cast<std::ptrdiff_t>(prompts[i].size()), full.end());
        rec.from_student = from_student;
        // a bare stop token is not a usable training target
        const bool empty = rec.response.empty() ||
                           (rec.response.size() == 1 && gen.stop_token &&
                            rec.response[0] == *gen.stop_token);
        if (!empty) {
            out.records[i] = std::move(rec);
            usable[i] = 1;
        }
    }
    FeedbackDataset filtered;
    filtered.provenance = provenance;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        if (usable[i])
            filtered.records.push_back(std::move(out.records[i]));
        else
            ++filtered.skipped;
    }
    return filtered;
}

}  // namespace

FeedbackDataset build_teacher_feedback(const Parameters& teacher,
                                       const std::vector<std::vector<int>>& prompts,
                                       const GenerateConfig& gen) {
    GenerateConfig cfg = gen;
    cfg.mode = GenerateConfig::Mode::Greedy;
    return feedback_from_generation(teacher, prompts, cfg, Provenance::Teacher, false);
}

FeedbackDataset build_student_feedback(const Parameters& student,
                                       const std::vector<std::vector<int>>& prompts,
                                       const GenerateConfig& gen) {
    GenerateConfig cfg = gen;
    cfg.mode = GenerateConfig::Mode::Temperature;
    return feedback_from_generation(student, prompts, cfg, Provenance::Student, true);
}

FeedbackDataset mix_datasets(const FeedbackDataset& public_part, const FeedbackDataset& sgo_part,
                             double sgo_ratio, std::uint64_t seed) {
    if (sgo_ratio < 0.0 || sgo_ratio > 1.0) throw ConfigError("sgo_ratio must lie in [0, 1]");
    if (public_part.records.empty() && sgo_part.records.empty())
        throw DataError("mix_datasets: both parts empty");
    if (sgo_ratio > 0.0 && sgo_part.records.empty())
        throw DataError("mix_datasets: sgo_ratio > 0 but no student-generated records");
    if (sgo_ratio < 1.0 && public_part.records.empty())
        throw DataError("mix_datasets: sgo_ratio < 1 but no public records");

    const std::size_t n = std::max(public_part.records.size(), sgo_part.records.size());
    FeedbackDataset out;
    out.provenance = Provenance::Mixed;
    out.skipped = public_part.skipped + sgo_part.skipped;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const bool take_sgo = uni(rng) < sgo_ratio;
        const auto& side = take_sgo ? sgo_part.records : public_part.records;
        std::uniform_int_distribution<std::size_t> pick(0, side.size() - 1);
        out.records.push_back(side[pick(rng)]);
    }
    return out;
}

namespace {

struct RecordBatchLoss {
    int loss = -1;
    BoundForward bound;
};

std::vector<int> record_tokens(const FeedbackRecord& rec) {
    std::vector<int> tokens = rec.prompt;
    tokens.insert(tokens.end(), rec.response.begin(), rec.response.end());
    return tokens;
}

// Teacher next-token logits at the response positions of one record.
Tensor teacher_logit_rows(const Parameters& teacher, const FeedbackRecord& rec) {
    const std::vector<int> tokens = record_tokens(rec);
    Graph g;
    const BoundForward f = forward(g, teacher, tokens);
    const Tensor& logits = g.value(f.logits);
    const int first = static_cast<int>(rec.prompt.size()) - 1;
    const int rows = static_cast<int>(rec.response.size());
    Tensor out({rows, logits.dim(1)});
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < logits.dim(1); ++c) out.at(r, c) = logits.at(first + r, c);
    return out;
}

RecordBatchLoss record_divergence(Graph& g, const Parameters& student, const FeedbackRecord& rec,
                                  const Tensor& teacher_rows, const KDRecipe& recipe) {
    RecordBatchLoss out;
    const std::vector<int> tokens = record_tokens(rec);
    out.bound = forward(g, student, tokens);
    const int first = static_cast<int>(rec.prompt.size()) - 1;
    std::vector<int> rows(rec.response.size());
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = first + static_cast<int>(r);
    const int sliced = g.gather_rows(out.bound.logits, rows);
    out.loss = divergence_node(g, teacher_rows, sliced, recipe.divergence, recipe.beta, recipe.alpha);
    return out;
}

std::vector<std::vector<int>> sample_prompts(const FeedbackDataset& pub, int cap,
                                             std::uint64_t seed) {
    std::vector<std::size_t> idx(pub.records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (cap > 0 && static_cast<std::size_t>(cap) < idx.size()) {
        std::mt19937_64 rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<std::size_t>(cap));
    }
    std::vector<std::vector<int>> prompts;
    prompts.reserve(idx.size());
    for (std::size_t i : idx) prompts.push_back(pub.records[i].prompt);
    return prompts;
}

}  // namespace

DistillResult distill(const Parameters& teacher, const Parameters& student_init,
                      const std::vector<Sample>& public_data, const Tokenizer& tok,
                      const KDRecipe& recipe, const TrainConfig& train_cfg,
                      const DistillOptions& opts) {
    recipe.validate();
    train_cfg.validate();
    if (teacher.config.vocab_size != student_init.config.vocab_size)
        throw ConfigError("teacher and student must share one tokenizer vocabulary");
    if (public_data.empty()) throw DataError("distill needs public data");

    DistillResult result;
    result.student = student_init;
    const int ctx = std::min(teacher.config.context_len, result.student.config.context_len);

    FeedbackDataset pub = public_feedback(public_data, tok, ctx);

    // Held-out public records for the per-epoch validation divergence.
    std::vector<FeedbackRecord> val_records;
    {
        std::mt19937_64 rng(seed_for(recipe.seed, "kd-val"));
        std::shuffle(pub.records.begin(), pub.records.end(), rng);
        const std::size_t n_val = std::min<std::size_t>(
            pub.records.size() / 2,
            static_cast<std::size_t>(std::llround(opts.validation_fraction *
                                                  static_cast<double>(pub.records.size()))));
        val_records.assign(pub.records.end() - static_cast<std::ptrdiff_t>(n_val),
                           pub.records.end());
        pub.records.resize(pub.records.size() - n_val);
    }

    GenerateConfig gen = opts.generation;
    if (gen.max_new <= 0) gen.max_new = 32;
    gen.stop_token = tok.eos_id();

    std::vector<Tensor*> tensors = result.student.tensor_list();
    const std::vector<const Tensor*> const_tensors =
        static_cast<const Parameters&>(result.student).tensor_list();
    std::vector<bool> trainable(tensors.size(), true);

    struct KdOptimizer {
        std::vector<Tensor> m, v;
        long step = 0;
    } opt_state;
    for (const Tensor* t : const_tensors) {
        opt_state.m.emplace_back(t->shape());
        opt_state.v.emplace_back(t->shape());
    }

    auto apply_update = [&](const std::vector<Tensor>& grads) {
        ++opt_state.step;
        double lr = train_cfg.learning_rate;
        if (train_cfg.warmup_steps > 0 && opt_state.step < train_cfg.warmup_steps)
            lr *= static_cast<double>(opt_state.step) / static_cast<double>(train_cfg.warmup_steps);
        const double bc1 = 1.0 - std::pow(train_cfg.beta1, static_cast<double>(opt_state.step));
        const double bc2 = 1.0 - std::pow(train_cfg.beta2, static_cast<double>(opt_state.step));
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            Tensor& p = *tensors[i];
            const Tensor& g = grads[i];
            for (std::int64_t k = 0; k < p.size(); ++k) {
                opt_state.m[i][k] = train_cfg.beta1 * opt_state.m[i][k] + (1.0 - train_cfg.beta1) * g[k];
                opt_state.v[i][k] =
                    train_cfg.beta2 * opt_state.v[i][k] + (1.0 - train_cfg.beta2) * g[k] * g[k];
                const double mh = opt_state.m[i][k] / bc1;
                const double vh = opt_state.v[i][k] / bc2;
                p[k] -= lr * (mh / (std::sqrt(vh) + train_cfg.adam_eps) +
                              train_cfg.weight_decay * p[k]);
            }
        }
    };

    // Teacher logits for static datasets are computed once and reused.
    std::vector<Tensor> static_teacher_rows;
    double sgo_ratio = recipe.strategy == DatasetStrategy::AdaptiveMixed ? 0.0 : recipe.sgo_ratio;
    double best_val = std::numeric_limits<double>::infinity();
    FeedbackDataset teacher_ds;  // built once for TeacherFeedback

#ifdef _OPENMP
    const int wave = std::max(1, omp_get_max_threads());
#else
    const int wave = 1;
#endif

    for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        // Assemble this epoch's KD dataset.
        FeedbackDataset epoch_ds;
        bool rows_cached = false;
        switch (recipe.strategy) {
            case DatasetStrategy::Public: {
                epoch_ds = pub;
                rows_cached = true;
                break;
            }
            case DatasetStrategy::TeacherFeedback: {
                if (epoch == 0) {
                    GenerateConfig g = gen;
                    g.seed = seed_for(recipe.seed, "teacher-feedback");
                    teacher_ds = build_teacher_feedback(
                        teacher,
                        sample_prompts(pub, opts.feedback_prompts, seed_for(recipe.seed, "dt-prompts")),
                        g);
                    result.skipped_generations += teacher_ds.skipped;
                }
                epoch_ds = teacher_ds;
                rows_cached = true;
                break;
            }
            case DatasetStrategy::StudentFeedback: {
                GenerateConfig g = gen;
                g.seed = seed_for(recipe.seed, "student-feedback", static_cast<std::uint64_t>(epoch));
                epoch_ds = build_student_feedback(
                    result.student,
                    sample_prompts(pub, opts.feedback_prompts,
                                   seed_for(recipe.seed, "ds-prompts", static_cast<std::uint64_t>(epoch))),
                    g);
                result.skipped_generations += epoch_ds.skipped;
                break;
            }
            case DatasetStrategy::Mixed:
            case DatasetStrategy::AdaptiveMixed: {
                GenerateConfig g = gen;
                g.seed = seed_for(recipe.seed, "student-feedback", static_cast<std::uint64_t>(epoch));
                FeedbackDataset sgo = build_student_feedback(
                    result.student,
                    sample_prompts(pub, opts.feedback_prompts,
                                   seed_for(recipe.seed, "ds-prompts", static_cast<std::uint64_t>(epoch))),
                    g);
                result.skipped_generations += sgo.skipped;
                if (sgo_ratio > 0.0 && sgo.records.empty()) sgo = pub;  // degenerate fallback
                epoch_ds = mix_datasets(pub, sgo, sgo_ratio,
                                        seed_for(recipe.seed, "mix", static_cast<std::uint64_t>(epoch)));
                break;
            }
        }
        result.sgo_ratio_trace.push_back(sgo_ratio);
        if (epoch_ds.records.empty()) throw DataError("KD dataset empty at epoch " + std::to_string(epoch + 1));

        // Optional per-epoch subsample cap.
        std::vector<std::size_t> order(epoch_ds.records.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        {
            std::mt19937_64 rng(seed_for(recipe.seed, "kd-order", static_cast<std::uint64_t>(epoch)));
            std::shuffle(order.begin(), order.end(), rng);
            if (opts.max_records_per_epoch > 0 &&
                order.size() > static_cast<std::size_t>(opts.max_records_per_epoch))
                order.resize(static_cast<std::size_t>(opts.max_records_per_epoch));
        }

        if (rows_cached && static_teacher_rows.empty()) {
            static_teacher_rows.resize(epoch_ds.records.size());
#pragma omp parallel for schedule(dynamic)
            for (std::size_t i = 0; i < epoch_ds.records.size(); ++i)
                static_teacher_rows[i] = teacher_logit_rows(teacher, epoch_ds.records[i]);
        }

        double epoch_loss_sum = 0.0;
        std::size_t counted = 0;
        std::vector<Tensor> grads;
        for (const Tensor* t : const_tensors) grads.emplace_back(t->shape());

        for (std::size_t batch_start = 0; batch_start < order.size();
             batch_start += static_cast<std::size_t>(train_cfg.batch_size)) {
            const std::size_t batch_end =
                std::min(order.size(), batch_start + static_cast<std::size_t>(train_cfg.batch_size));
            const int b = static_cast<int>(batch_end - batch_start);
            for (Tensor& g : grads) std::fill(g.values().begin(), g.values().end(), 0.0);
            double batch_loss = 0.0;

            for (std::size_t wave_start = batch_start; wave_start < batch_end;
                 wave_start += static_cast<std::size_t>(wave)) {
                const std::size_t wave_end =
                    std::min(batch_end, wave_start + static_cast<std::size_t>(wave));
                const int w = static_cast<int>(wave_end - wave_start);
                std::vector<Graph> graphs(static_cast<std::size_t>(w));
                std::vector<RecordBatchLoss> nodes(static_cast<std::size_t>(w));
                std::vector<Tensor> fresh_rows(static_cast<std::size_t>(w));
#pragma omp parallel for schedule(static, 1)
                for (int i = 0; i < w; ++i) {
                    const std::size_t rec_idx = order[wave_start + static_cast<std::size_t>(i)];
                    const FeedbackRecord& rec = epoch_ds.records[rec_idx];
                    const Tensor* rows = nullptr;
                    if (rows_cached) {
                        rows = &static_teacher_rows[rec_idx];
                    } else {
                        fresh_rows[static_cast<std::size_t>(i)] = teacher_logit_rows(teacher, rec);
                        rows = &fresh_rows[static_cast<std::size_t>(i)];
                    }
                    nodes[static_cast<std::size_t>(i)] = record_divergence(
                        graphs[static_cast<std::size_t>(i)], result.student, rec, *rows, recipe);
                    graphs[static_cast<std::size_t>(i)].backward(nodes[static_cast<std::size_t>(i)].loss);
                }
                for (int i = 0; i < w; ++i) {
                    Graph& g = graphs[static_cast<std::size_t>(i)];
                    const RecordBatchLoss& n = nodes[static_cast<std::size_t>(i)];
                    batch_loss += g.value(n.loss)[0];
                    for (std::size_t t = 0; t < n.bound.bound_params.size(); ++t) {
                        const Tensor& src = g.grad(n.bound.bound_params[t]);
                        Tensor& dst = grads[t];
                        const double inv_b = 1.0 / static_cast<double>(b);
                        for (std::int64_t k = 0; k < dst.size(); ++k) dst[k] += inv_b * src[k];
                    }
                }
            }
            batch_loss /= static_cast<double>(b);
            if (!std::isfinite(batch_loss))
                throw NumericError("KD divergence became non-finite at epoch " +
                                   std::to_string(epoch + 1));
            epoch_loss_sum += batch_loss * b;
            counted += static_cast<std::size_t>(b);

            if (train_cfg.grad_clip_norm > 0.0) {
                double sq = 0.0;
                for (const Tensor& g : grads)
                    for (std::int64_t k = 0; k < g.size(); ++k) sq += g[k] * g[k];
                const double norm = std::sqrt(sq);
                if (norm > train_cfg.grad_clip_norm) {
                    const double s = train_cfg.grad_clip_norm / norm;
                    for (Tensor& g : grads)
                        for (std::int64_t k = 0; k < g.size(); ++k) g[k] *= s;
                }
            }
            apply_update(grads);
        }
        result.report.train_loss.push_back(epoch_loss_sum / static_cast<double>(counted));

        // Validation divergence on held-out public records.
        if (!val_records.empty()) {
            std::vector<double> vals(val_records.size(), 0.0);
#pragma omp parallel for schedule(dynamic)
            for (std::size_t i = 0; i < val_records.size(); ++i) {
                const Tensor rows = teacher_logit_rows(teacher, val_records[i]);
                Graph g;
                RecordBatchLoss n =
                    record_divergence(g, result.student, val_records[i], rows, recipe);
                vals[i] = g.value(n.loss)[0];
            }
            double vsum = 0.0;
            for (double v : vals) vsum += v;
            const double val_loss = vsum / static_cast<double>(vals.size());
            result.report.val_loss.push_back(val_loss);

            if (recipe.strategy == DatasetStrategy::AdaptiveMixed) {
                if (val_loss < best_val - 1e-9) {
                    best_val = val_loss;
                } else {
                    sgo_ratio = std::min(1.0, sgo_ratio + 0.25);
                }
            }
        }
    }
    return result;
}

}  // namespace kdaudit
