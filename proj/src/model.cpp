#include "kdaudit/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace kdaudit {

void ModelConfig::validate() const {
    if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
    if (context_len < 2) throw ConfigError("context_len must be >= 2");
    if (n_blocks < 1) throw ConfigError("n_blocks must be >= 1");
    if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
    if (n_heads < 1 || embed_dim % n_heads != 0)
        throw ConfigError("embed_dim must be divisible by n_heads");
    if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"vocab_size", vocab_size}, {"context_len", context_len}, {"n_blocks", n_blocks},
            {"embed_dim", embed_dim},   {"n_heads", n_heads},         {"mlp_ratio", mlp_ratio},
            {"seed", seed},             {"tie_embedding", tie_embedding}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.context_len = j.at("context_len").get<int>();
    c.n_blocks = j.at("n_blocks").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.mlp_ratio = j.value("mlp_ratio", 2);
    c.seed = j.at("seed").get<std::uint64_t>();
    c.tie_embedding = j.at("tie_embedding").get<bool>();
    return c;
}

std::vector<Tensor*> Parameters::tensor_list() {
    std::vector<Tensor*> out;
    for_each_tensor([&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

std::vector<const Tensor*> Parameters::tensor_list() const {
    std::vector<const Tensor*> out;
    const_cast<Parameters*>(this)->for_each_tensor(
        [&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

std::int64_t Parameters::parameter_count() const {
    std::int64_t n = 0;
    for (const Tensor* t : tensor_list()) n += t->size();
    return n;
}

bool Parameters::all_finite() const {
    for (const Tensor* t : tensor_list())
        if (!t->all_finite()) return false;
    return true;
}

bool Parameters::bitwise_equal(const Parameters& other) const {
    auto a = tensor_list();
    auto b = other.tensor_list();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i]->shape() != b[i]->shape()) return false;
        if (std::memcmp(a[i]->data(), b[i]->data(),
                        static_cast<std::size_t>(a[i]->size()) * sizeof(double)) != 0)
            return false;
    }
    return true;
}

namespace {
constexpr double kInitScale = 0.02;

void fill_gaussian(Tensor& t, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> dist(0.0, scale);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
}
}  // namespace

Parameters init_parameters(const ModelConfig& config) {
    config.validate();
    const int d = config.embed_dim;
    Parameters p;
    p.config = config;
    std::mt19937_64 rng(config.seed);

    p.token_embedding = Tensor({config.vocab_size, d});
    fill_gaussian(p.token_embedding, rng, kInitScale);
    p.pos_embedding = Tensor({config.context_len, d});
    fill_gaussian(p.pos_embedding, rng, kInitScale);

    p.blocks.resize(static_cast<std::size_t>(config.n_blocks));
    for (auto& b : p.blocks) {
        b.ln1_gain = Tensor::full({d}, 1.0);
        b.ln1_bias = Tensor({d});
        b.qkv_weight = Tensor({d, 3 * d});
        fill_gaussian(b.qkv_weight, rng, kInitScale);
        b.qkv_bias = Tensor({3 * d});
        b.proj_weight = Tensor({d, d});
        fill_gaussian(b.proj_weight, rng, kInitScale);
        b.proj_bias = Tensor({d});
        b.ln2_gain = Tensor::full({d}, 1.0);
        b.ln2_bias = Tensor({d});
        b.fc_weight = Tensor({d, config.mlp_ratio * d});
        fill_gaussian(b.fc_weight, rng, kInitScale);
        b.fc_bias = Tensor({config.mlp_ratio * d});
        b.out_weight = Tensor({config.mlp_ratio * d, d});
        fill_gaussian(b.out_weight, rng, kInitScale);
        b.out_bias = Tensor({d});
    }
    p.final_ln_gain = Tensor::full({d}, 1.0);
    p.final_ln_bias = Tensor({d});
    if (!config.tie_embedding) {
        p.head_weight = Tensor({config.vocab_size, d});
        fill_gaussian(p.head_weight, rng, kInitScale);
    }
    return p;
}

Parameters perturb(const Parameters& params, int block_index, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw InputError("perturbation sigma must be >= 0");
    const int n_blocks = params.config.n_blocks;
    if (block_index != kAllBlocks && (block_index < 1 || block_index > n_blocks))
        throw InputError("block index out of range: " + std::to_string(block_index));
    Parameters out = params;
    if (sigma == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sigma);
    for (int l = 1; l <= n_blocks; ++l) {
        if (block_index != kAllBlocks && block_index != l) continue;
        out.blocks[static_cast<std::size_t>(l - 1)].for_each([&](const std::string&, Tensor& t) {
            for (std::int64_t i = 0; i < t.size(); ++i) t[i] += dist(rng);
        });
    }
    return out;
}

BoundForward forward(Graph& g, const Parameters& params, const std::vector<int>& tokens) {
    const ModelConfig& cfg = params.config;
    const int T = static_cast<int>(tokens.size());
    if (T < 1) throw InputError("forward on empty token sequence");
    if (T > cfg.context_len) throw InputError("sequence exceeds context length");
    for (int id : tokens)
        if (id < 0 || id >= cfg.vocab_size) throw InputError("token id out of vocabulary range");

    BoundForward out;
    auto bind = [&](const Tensor& t) {
        const int node = g.param(&t);
        out.bound_params.push_back(node);
        return node;
    };

    const int emb_node = bind(params.token_embedding);
    const int pos_node = bind(params.pos_embedding);

    std::vector<int> positions(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) positions[static_cast<std::size_t>(t)] = t;

    int x = g.add(g.gather_rows(emb_node, tokens), g.gather_rows(pos_node, positions));

    struct BlockNodes {
        int ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b, ln2_g, ln2_b, fc_w, fc_b, out_w, out_b;
    };
    for (const auto& blk : params.blocks) {
        BlockNodes n{bind(blk.ln1_gain),   bind(blk.ln1_bias),   bind(blk.qkv_weight),
                     bind(blk.qkv_bias),   bind(blk.proj_weight), bind(blk.proj_bias),
                     bind(blk.ln2_gain),   bind(blk.ln2_bias),   bind(blk.fc_weight),
                     bind(blk.fc_bias),    bind(blk.out_weight), bind(blk.out_bias)};
        const int h1 = g.layer_norm(x, n.ln1_g, n.ln1_b);
        const int qkv = g.add_row(g.matmul(h1, n.qkv_w), n.qkv_b);
        const int att = g.causal_attention(qkv, cfg.n_heads);
        x = g.add(x, g.add_row(g.matmul(att, n.proj_w), n.proj_b));
        const int h2 = g.layer_norm(x, n.ln2_g, n.ln2_b);
        const int f = g.relu_sq(g.add_row(g.matmul(h2, n.fc_w), n.fc_b));
        x = g.add(x, g.add_row(g.matmul(f, n.out_w), n.out_b));
    }

    const int fg = bind(params.final_ln_gain);
    const int fb = bind(params.final_ln_bias);
    const int xf = g.layer_norm(x, fg, fb);
    if (cfg.tie_embedding) {
        out.logits = g.matmul_nt(xf, emb_node);
    } else {
        const int head = bind(params.head_weight);
        out.logits = g.matmul_nt(xf, head);
    }
    return out;
}

std::vector<double> token_logprobs(const Parameters& params, const std::vector<int>& tokens) {
    const int T = static_cast<int>(tokens.size());
    if (T < 2) throw InputError("token_logprobs needs at least 2 tokens");
    if (T > params.config.context_len) throw InputError("sequence exceeds context length");
    Graph g;
    const BoundForward f = forward(g, params, tokens);
    const Tensor lp = log_softmax(g.value(f.logits), -1);
    std::vector<double> out(static_cast<std::size_t>(T - 1));
    for (int t = 0; t + 1 < T; ++t)
        out[static_cast<std::size_t>(t)] = lp.at(t, tokens[static_cast<std::size_t>(t + 1)]);
    return out;
}

double sequence_loss(const Parameters& params, const std::vector<int>& tokens) {
    const std::vector<double> lp = token_logprobs(params, tokens);
    double sum = 0.0;
    for (double v : lp) sum += v;
    return -sum / static_cast<double>(lp.size());
}

namespace {

// mu and sigma of log p under the categorical given a log-prob row.
std::pair<double, double> row_stats(const double* lp, int v) {
    double mu = 0.0;
    for (int i = 0; i < v; ++i) mu += std::exp(lp[i]) * lp[i];
    double var = 0.0;
    for (int i = 0; i < v; ++i) {
        const double d = lp[i] - mu;
        var += std::exp(lp[i]) * d * d;
    }
    return {mu, std::sqrt(std::max(0.0, var))};
}

}  // namespace

NextTokenStats next_token_stats(const Parameters& params, const std::vector<int>& prefix) {
    if (prefix.empty()) throw InputError("next_token_stats on empty prefix");
    Graph g;
    const BoundForward f = forward(g, params, prefix);
    const Tensor& logits = g.value(f.logits);
    const int T = logits.dim(0);
    const int V = logits.dim(1);
    Tensor row({V});
    for (int i = 0; i < V; ++i) row[i] = logits.at(T - 1, i);
    NextTokenStats out;
    out.log_probs = log_softmax(row, -1);
    auto [mu, sigma] = row_stats(out.log_probs.data(), V);
    out.mu = mu;
    out.sigma = sigma;
    return out;
}

std::vector<TokenStat> token_stats(const Parameters& params, const std::vector<int>& tokens) {
    const int T = static_cast<int>(tokens.size());
    if (T < 2) throw InputError("token_stats needs at least 2 tokens");
    if (T > params.config.context_len) throw InputError("sequence exceeds context length");
    Graph g;
    const BoundForward f = forward(g, params, tokens);
    const Tensor lp = log_softmax(g.value(f.logits), -1);
    const int V = lp.dim(1);
    std::vector<TokenStat> out(static_cast<std::size_t>(T - 1));
    for (int t = 0; t + 1 < T; ++t) {
        const double* row = lp.data() + static_cast<std::int64_t>(t) * V;
        auto [mu, sigma] = row_stats(row, V);
        out[static_cast<std::size_t>(t)] = {row[tokens[static_cast<std::size_t>(t + 1)]], mu, sigma};
    }
    return out;
}

std::vector<int> generate(const Parameters& params, const std::vector<int>& prompt,
                          const GenerateConfig& cfg) {
    if (prompt.empty()) throw InputError("generate needs a non-empty prompt");
    if (static_cast<int>(prompt.size()) > params.config.context_len)
        throw InputError("prompt exceeds context length");
    std::vector<int> seq = prompt;
    std::mt19937_64 rng(cfg.seed);
    const int ctx = params.config.context_len;
    for (int step = 0; step < cfg.max_new; ++step) {
        const int start = std::max(0, static_cast<int>(seq.size()) - ctx);
        const std::vector<int> window(seq.begin() + start, seq.end());
        Graph g;
        const BoundForward f = forward(g, params, window);
        const Tensor& logits = g.value(f.logits);
        const int T = logits.dim(0);
        const int V = logits.dim(1);
        int next = 0;
        if (cfg.mode == GenerateConfig::Mode::Greedy) {
            double best = logits.at(T - 1, 0);
            for (int v = 1; v < V; ++v) {
                if (logits.at(T - 1, v) > best) {
                    best = logits.at(T - 1, v);
                    next = v;
                }
            }
        } else {
            if (cfg.temperature <= 0.0) throw ConfigError("sampling temperature must be > 0");
            Tensor row({V});
            for (int v = 0; v < V; ++v) row[v] = logits.at(T - 1, v) / cfg.temperature;
            const Tensor probs = softmax(row, -1);
            std::uniform_real_distribution<double> uni(0.0, 1.0);
            const double r = uni(rng);
            double acc = 0.0;
            next = V - 1;
            for (int v = 0; v < V; ++v) {
                acc += probs[v];
                if (r <= acc) {
                    next = v;
                    break;
                }
            }
        }
        seq.push_back(next);
        if (cfg.stop_token && next == *cfg.stop_token) break;
    }
    return seq;
}

void save_checkpoint(const Parameters& params, const std::string& path,
                     const nlohmann::json& provenance) {
    if (!params.all_finite()) throw NumericError("refusing to save non-finite parameters");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    nlohmann::json header;
    header["config"] = params.config.to_json();
    header["provenance"] = provenance;
    nlohmann::json dir = nlohmann::json::array();
    const_cast<Parameters&>(params).for_each_tensor([&](const std::string& name, Tensor& t) {
        dir.push_back({{"name", name}, {"shape", t.shape()}});
    });
    header["tensors"] = dir;
    out << "KDAUDIT-CKPT-v1\n" << header.dump() << "\n";
    const_cast<Parameters&>(params).for_each_tensor([&](const std::string&, Tensor& t) {
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * static_cast<std::int64_t>(sizeof(double))));
    });
    if (!out) throw DataError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string magic, header_line;
    std::getline(in, magic);
    if (magic != "KDAUDIT-CKPT-v1") throw DataError("not a checkpoint file: " + path);
    std::getline(in, header_line);
    const nlohmann::json header = nlohmann::json::parse(header_line);

    Checkpoint ck;
    ck.params = init_parameters(ModelConfig::from_json(header.at("config")));
    ck.provenance = header.value("provenance", nlohmann::json::object());

    std::size_t i = 0;
    const auto& dir = header.at("tensors");
    ck.params.for_each_tensor([&](const std::string& name, Tensor& t) {
        if (i >= dir.size()) throw DataError("checkpoint tensor directory too short");
        const auto& entry = dir[i++];
        if (entry.at("name").get<std::string>() != name)
            throw DataError("checkpoint tensor order mismatch at " + name);
        const auto shape = entry.at("shape").get<std::vector<int>>();
        t = Tensor(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * static_cast<std::int64_t>(sizeof(double))));
        if (!in) throw DataError("checkpoint payload truncated at " + name);
    });
    return ck;
}

}  // namespace kdaudit
