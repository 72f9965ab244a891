#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kdaudit/attacks.hpp"
#include "kdaudit/corpus.hpp"
#include "kdaudit/distill.hpp"
#include "kdaudit/memorize.hpp"
#include "kdaudit/metrics.hpp"
#include "kdaudit/model.hpp"
#include "kdaudit/train.hpp"

namespace py = pybind11;
using namespace kdaudit;

namespace {

Tensor tensor_from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw InputError("empty logits");
    const int cols = static_cast<int>(rows.front().size());
    Tensor t({static_cast<int>(rows.size()), cols});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<int>(rows[r].size()) != cols) throw ShapeError("ragged logits");
        for (int c = 0; c < cols; ++c) t.at(static_cast<int>(r), c) = rows[r][static_cast<std::size_t>(c)];
    }
    return t;
}

// Small stateful wrapper so python callers can train and score one model
// without touching checkpoints.
struct PyModel {
    Parameters params;
    Tokenizer tok;

    PyModel(const std::vector<std::vector<std::string>>& samples, int n_blocks, int embed_dim,
            int n_heads, int context_len, std::uint64_t seed) {
        std::vector<std::string> texts;
        std::vector<Sample> corpus;
        for (const auto& pair : samples) {
            if (pair.size() < 2) throw InputError("samples must be (prompt, response) pairs");
            corpus.push_back({pair[0], pair[1], pair.size() > 2 ? pair[2] : ""});
            texts.push_back(pair[0] + "\n" + pair[1]);
        }
        tok = Tokenizer::train_char(texts);
        ModelConfig mc;
        mc.vocab_size = tok.vocab_size();
        mc.context_len = context_len;
        mc.n_blocks = n_blocks;
        mc.embed_dim = embed_dim;
        mc.n_heads = n_heads;
        mc.seed = seed;
        params = init_parameters(mc);
        corpus_ = std::move(corpus);
    }

    std::vector<double> train(int epochs, double learning_rate, int batch_size, std::uint64_t seed) {
        TrainConfig tc;
        tc.epochs = epochs;
        tc.learning_rate = learning_rate;
        tc.batch_size = batch_size;
        tc.seed = seed;
        auto [trained, report] = train_lm(params, corpus_, tok, tc);
        params = std::move(trained);
        return report.train_loss;
    }

    double loss_of(const std::string& prompt, const std::string& response) {
        const EncodedSample enc = encode_sample(tok, {prompt, response, ""}, params.config.context_len);
        return masked_loss(params, enc);
    }

    double membership_score(const std::string& prompt, const std::string& response,
                            const std::string& attack, double k_percent) {
        const EncodedSample enc = encode_sample(tok, {prompt, response, ""}, params.config.context_len);
        if (attack == "loss") return score_loss(params, enc.tokens);
        if (attack == "zlib") return score_zlib(params, enc.tokens, enc.raw_text);
        if (attack == "min_k") return score_mink(params, enc.tokens, k_percent);
        if (attack == "min_k_pp") return score_minkpp(params, enc.tokens, k_percent);
        throw ConfigError("unknown attack for membership_score: " + attack);
    }

    std::string generate_text(const std::string& prompt, int max_new) {
        std::vector<int> ids;
        ids.push_back(tok.bos_id());
        const auto prompt_ids = tok.encode(prompt + "\n");
        ids.insert(ids.end(), prompt_ids.begin(), prompt_ids.end());
        GenerateConfig gen;
        gen.max_new = max_new;
        gen.stop_token = tok.eos_id();
        const auto out = generate(params, ids, gen);
        return tok.decode(std::vector<int>(out.begin() + static_cast<std::ptrdiff_t>(ids.size()),
                                           out.end()));
    }

    int extract_tokens(const std::string& prompt, const std::string& response, int k) {
        const EncodedSample enc = encode_sample(tok, {prompt, response, ""}, params.config.context_len);
        return extract(params, enc.tokens, k);
    }

private:
    std::vector<Sample> corpus_;
};

}  // namespace

PYBIND11_MODULE(_kdaudit, m) {
    m.doc() = "Membership and memorization auditing for distilled language models";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<DataError>(m, "DataError");
    py::register_exception<InputError>(m, "InputError");
    py::register_exception<ShapeError>(m, "ShapeError");

    m.def("auc", &auc, py::arg("member_scores"), py::arg("nonmember_scores"),
          "Pairwise AUC with ties counted one half; higher scores mean member.");
    m.def("tpr_at_fpr", &tpr_at_fpr, py::arg("member_scores"), py::arg("nonmember_scores"),
          py::arg("fpr_level"));
    m.def("rouge_l", &rouge_l, py::arg("hypothesis"), py::arg("reference"));

    m.def(
        "divergence",
        [](const std::vector<std::vector<double>>& p_logits,
           const std::vector<std::vector<double>>& q_logits, const std::string& kind, double beta,
           double alpha) {
            return divergence(tensor_from_rows(p_logits), tensor_from_rows(q_logits),
                              divergence_from_name(kind), beta, alpha);
        },
        py::arg("p_logits"), py::arg("q_logits"), py::arg("kind"), py::arg("beta") = 0.5,
        py::arg("alpha") = 0.1,
        "Divergence between next-token distributions given logits rows: kl, rkl, jsd or srkl.");

    m.def(
        "make_synthetic_corpus",
        [](int count, std::uint64_t seed) {
            std::vector<std::tuple<std::string, std::string, std::string>> out;
            for (const auto& s : make_synthetic_corpus(count, seed))
                out.emplace_back(s.prompt_text, s.response_text, s.category);
            return out;
        },
        py::arg("count"), py::arg("seed"));

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::vector<std::vector<std::string>>&, int, int, int, int,
                      std::uint64_t>(),
             py::arg("samples"), py::arg("n_blocks") = 2, py::arg("embed_dim") = 64,
             py::arg("n_heads") = 4, py::arg("context_len") = 128, py::arg("seed") = 0)
        .def("train", &PyModel::train, py::arg("epochs") = 4, py::arg("learning_rate") = 1e-3,
             py::arg("batch_size") = 16, py::arg("seed") = 0)
        .def("loss", &PyModel::loss_of, py::arg("prompt"), py::arg("response"))
        .def("membership_score", &PyModel::membership_score, py::arg("prompt"), py::arg("response"),
             py::arg("attack") = "loss", py::arg("k_percent") = 0.2)
        .def("generate", &PyModel::generate_text, py::arg("prompt"), py::arg("max_new") = 48)
        .def("extract", &PyModel::extract_tokens, py::arg("prompt"), py::arg("response"),
             py::arg("k") = 8);
}
