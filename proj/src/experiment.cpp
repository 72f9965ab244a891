#include "kdaudit/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace kdaudit {

// ---------------------------------------------------------------- config

nlohmann::json StudentSpec::to_json() const {
    return {{"name", name},           {"n_blocks", n_blocks}, {"embed_dim", embed_dim},
            {"n_heads", n_heads},     {"init_from_teacher", init_from_teacher}};
}

StudentSpec StudentSpec::from_json(const nlohmann::json& j) {
    StudentSpec s;
    s.name = j.at("name").get<std::string>();
    s.n_blocks = j.at("n_blocks").get<int>();
    s.embed_dim = j.at("embed_dim").get<int>();
    s.n_heads = j.value("n_heads", 4);
    s.init_from_teacher = j.value("init_from_teacher", false);
    return s;
}

nlohmann::json AttackSpec::to_json() const {
    return {{"kind", attack_name(kind)},
            {"k_percent", k_percent},
            {"mope_n", mope_n},
            {"mope_sigma", mope_sigma}};
}

AttackSpec AttackSpec::from_json(const nlohmann::json& j) {
    AttackSpec a;
    a.kind = attack_from_name(j.at("kind").get<std::string>());
    a.k_percent = j.value("k_percent", 0.2);
    a.mope_n = j.value("mope_n", 8);
    a.mope_sigma = j.value("mope_sigma", 0.005);
    return a;
}

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig c;
    c.split.private_fraction = 1.0 / 3.0;
    c.split.public_fraction = 1.0 / 3.0;
    c.split.member_count = 200;
    c.split.nonmember_count = 200;
    c.split.validation_count = 200;
    c.canary_text = "recite the depot pass\nvault zq silver otter dawn chorus key";
    c.canary_repetitions = 10;

    c.teacher.context_len = 128;
    c.teacher.n_blocks = 4;
    c.teacher.embed_dim = 128;
    c.teacher.n_heads = 4;

    c.teacher_train.epochs = 24;
    c.teacher_train.batch_size = 16;
    c.teacher_train.learning_rate = 1e-3;

    c.reference_train = c.teacher_train;
    c.reference_train.epochs = 6;  // generalization regime, not overfit

    c.students = {{"s3x112", 3, 112, 4, false},
                  {"s2x96", 2, 96, 4, false},
                  {"s1x64", 1, 64, 4, false}};
    c.recipes = {"kd", "seqkd", "imitkd", "gkd", "minillm", "distillm"};

    c.distill_train.epochs = 4;
    c.distill_train.batch_size = 16;
    c.distill_train.learning_rate = 1e-3;
    c.distill_options.max_records_per_epoch = 1200;
    c.distill_options.feedback_prompts = 600;
    c.distill_options.generation.max_new = 32;
    c.distill_options.generation.temperature = 1.0;

    c.attacks = {{AttackKind::Loss}, {AttackKind::Zlib},        {AttackKind::MinK},
                 {AttackKind::MinKpp}, {AttackKind::ExternalRef}, {AttackKind::PretrainRef},
                 {AttackKind::MoPe}};
    return c;
}

void ExperimentConfig::validate() const {
    if (version != 1) throw ConfigError("unsupported config schema version");
    if (corpus_source != "synthetic" && !fs::exists(corpus_source))
        throw ConfigError("corpus source file does not exist: " + corpus_source);
    if (students.empty()) throw ConfigError("at least one student size required");
    if (recipes.empty()) throw ConfigError("at least one KD recipe required");
    if (seeds.empty()) throw ConfigError("at least one seed required");
    if (out_dir.empty()) throw ConfigError("out_dir must be set");
    for (const auto& r : recipes) technique_from_name(r);
    teacher_train.validate();
    distill_train.validate();
    probe.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["version"] = version;
    j["corpus"] = {{"source", corpus_source},
                   {"size", corpus_size},
                   {"seed", corpus_seed},
                   {"tokenizer", tokenizer_mode},
                   {"bpe_vocab", bpe_vocab},
                   {"private_fraction", split.private_fraction},
                   {"public_fraction", split.public_fraction},
                   {"member_count", split.member_count},
                   {"nonmember_count", split.nonmember_count},
                   {"validation_count", split.validation_count},
                   {"canary_text", canary_text},
                   {"canary_repetitions", canary_repetitions}};
    nlohmann::json teacher_json = teacher.to_json();
    teacher_json.erase("vocab_size");  // derived from the tokenizer
    j["teacher"] = {{"model", teacher_json}, {"train", teacher_train.to_json()}};
    j["reference"] = {{"train", reference_train.to_json()}, {"slice", reference_slice}};
    nlohmann::json students_json = nlohmann::json::array();
    for (const auto& s : students) students_json.push_back(s.to_json());
    j["students"] = students_json;
    j["recipes"] = recipes;
    j["distill"] = {{"train", distill_train.to_json()},
                    {"max_records_per_epoch", distill_options.max_records_per_epoch},
                    {"feedback_prompts", distill_options.feedback_prompts},
                    {"gen_max_new", distill_options.generation.max_new},
                    {"gen_temperature", distill_options.generation.temperature},
                    {"validation_fraction", distill_options.validation_fraction},
                    {"beta", recipe_beta},
                    {"alpha", recipe_alpha},
                    {"sgo_ratio", recipe_sgo_ratio}};
    nlohmann::json attacks_json = nlohmann::json::array();
    for (const auto& a : attacks) attacks_json.push_back(a.to_json());
    j["attacks"] = attacks_json;
    j["probe"] = probe.to_json();
    j["memorize"] = {{"prompt_tokens", memorize_prompt_tokens}, {"victim_cap", memorize_victim_cap}};
    j["utility_prompts"] = utility_prompts;
    j["seeds"] = seeds;
    j["out_dir"] = out_dir;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c = defaults();
    c.version = j.value("version", 1);
    if (j.contains("corpus")) {
        const auto& cj = j["corpus"];
        c.corpus_source = cj.value("source", c.corpus_source);
        c.corpus_size = cj.value("size", c.corpus_size);
        c.corpus_seed = cj.value("seed", c.corpus_seed);
        c.tokenizer_mode = cj.value("tokenizer", c.tokenizer_mode);
        c.bpe_vocab = cj.value("bpe_vocab", c.bpe_vocab);
        c.split.private_fraction = cj.value("private_fraction", c.split.private_fraction);
        c.split.public_fraction = cj.value("public_fraction", c.split.public_fraction);
        c.split.member_count = cj.value("member_count", c.split.member_count);
        c.split.nonmember_count = cj.value("nonmember_count", c.split.nonmember_count);
        c.split.validation_count = cj.value("validation_count", c.split.validation_count);
        c.canary_text = cj.value("canary_text", c.canary_text);
        c.canary_repetitions = cj.value("canary_repetitions", c.canary_repetitions);
    }
    if (j.contains("teacher")) {
        nlohmann::json model_json = j["teacher"].value("model", nlohmann::json::object());
        model_json["vocab_size"] = 2;  // placeholder until the tokenizer exists
        if (!model_json.contains("seed")) model_json["seed"] = 0;
        ModelConfig base = ModelConfig::from_json(model_json);
        c.teacher = base;
        if (j["teacher"].contains("train")) c.teacher_train = TrainConfig::from_json(j["teacher"]["train"]);
    }
    if (j.contains("reference")) {
        if (j["reference"].contains("train"))
            c.reference_train = TrainConfig::from_json(j["reference"]["train"]);
        c.reference_slice = j["reference"].value("slice", c.reference_slice);
    }
    if (j.contains("students")) {
        c.students.clear();
        for (const auto& sj : j["students"]) c.students.push_back(StudentSpec::from_json(sj));
    }
    if (j.contains("recipes")) c.recipes = j["recipes"].get<std::vector<std::string>>();
    if (j.contains("distill")) {
        const auto& dj = j["distill"];
        if (dj.contains("train")) c.distill_train = TrainConfig::from_json(dj["train"]);
        c.distill_options.max_records_per_epoch =
            dj.value("max_records_per_epoch", c.distill_options.max_records_per_epoch);
        c.distill_options.feedback_prompts =
            dj.value("feedback_prompts", c.distill_options.feedback_prompts);
        c.distill_options.generation.max_new = dj.value("gen_max_new", 32);
        c.distill_options.generation.temperature = dj.value("gen_temperature", 1.0);
        c.distill_options.validation_fraction =
            dj.value("validation_fraction", c.distill_options.validation_fraction);
        c.recipe_beta = dj.value("beta", c.recipe_beta);
        c.recipe_alpha = dj.value("alpha", c.recipe_alpha);
        c.recipe_sgo_ratio = dj.value("sgo_ratio", c.recipe_sgo_ratio);
    }
    if (j.contains("attacks")) {
        c.attacks.clear();
        for (const auto& aj : j["attacks"]) c.attacks.push_back(AttackSpec::from_json(aj));
    }
    if (j.contains("probe")) {
        c.probe.n_perturbations = j["probe"].value("n_perturbations", c.probe.n_perturbations);
        c.probe.sigma = j["probe"].value("sigma", c.probe.sigma);
    }
    if (j.contains("memorize")) {
        c.memorize_prompt_tokens = j["memorize"].value("prompt_tokens", c.memorize_prompt_tokens);
        c.memorize_victim_cap = j["memorize"].value("victim_cap", c.memorize_victim_cap);
    }
    c.utility_prompts = j.value("utility_prompts", c.utility_prompts);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    c.out_dir = j.value("out_dir", c.out_dir);
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    ExperimentConfig c = from_json(j);
    c.validate();
    return c;
}

std::uint64_t ExperimentConfig::config_hash() const {
    return fnv1a64(to_json().dump());
}

// ---------------------------------------------------------------- matrix

void ResultMatrix::set(const std::string& model, const std::string& attack,
                       const std::string& metric, std::uint64_t seed, double value) {
    cells_[model][attack][metric][seed] = value;
}

std::optional<double> ResultMatrix::get(const std::string& model, const std::string& attack,
                                        const std::string& metric, std::uint64_t seed) const {
    auto m = cells_.find(model);
    if (m == cells_.end()) return std::nullopt;
    auto a = m->second.find(attack);
    if (a == m->second.end()) return std::nullopt;
    auto k = a->second.find(metric);
    if (k == a->second.end()) return std::nullopt;
    auto s = k->second.find(seed);
    if (s == k->second.end()) return std::nullopt;
    return s->second;
}

std::optional<double> ResultMatrix::mean(const std::string& model, const std::string& attack,
                                         const std::string& metric) const {
    auto m = cells_.find(model);
    if (m == cells_.end()) return std::nullopt;
    auto a = m->second.find(attack);
    if (a == m->second.end()) return std::nullopt;
    auto k = a->second.find(metric);
    if (k == a->second.end() || k->second.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& [seed, v] : k->second) sum += v;
    return sum / static_cast<double>(k->second.size());
}

std::optional<double> ResultMatrix::variance(const std::string& model, const std::string& attack,
                                             const std::string& metric) const {
    auto m = cells_.find(model);
    if (m == cells_.end()) return std::nullopt;
    auto a = m->second.find(attack);
    if (a == m->second.end()) return std::nullopt;
    auto k = a->second.find(metric);
    if (k == a->second.end() || k->second.size() < 2) return std::nullopt;
    double mu = 0.0;
    for (const auto& [seed, v] : k->second) mu += v;
    mu /= static_cast<double>(k->second.size());
    double var = 0.0;
    for (const auto& [seed, v] : k->second) var += (v - mu) * (v - mu);
    return var / static_cast<double>(k->second.size());
}

std::vector<std::string> ResultMatrix::models() const {
    std::vector<std::string> out;
    for (const auto& [m, rest] : cells_) out.push_back(m);
    return out;
}

std::vector<std::string> ResultMatrix::attacks() const {
    std::vector<std::string> out;
    for (const auto& [m, per_attack] : cells_)
        for (const auto& [a, rest] : per_attack)
            if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
    std::sort(out.begin(), out.end());
    return out;
}

nlohmann::json ResultMatrix::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [model, per_attack] : cells_) {
        nlohmann::json ja = nlohmann::json::object();
        for (const auto& [attack, per_metric] : per_attack) {
            nlohmann::json jm = nlohmann::json::object();
            for (const auto& [metric, per_seed] : per_metric) {
                nlohmann::json js = nlohmann::json::object();
                for (const auto& [seed, v] : per_seed) js[std::to_string(seed)] = v;
                jm[metric] = js;
            }
            ja[attack] = jm;
        }
        j[model] = ja;
    }
    return j;
}

ResultMatrix ResultMatrix::from_json(const nlohmann::json& j) {
    ResultMatrix m;
    for (const auto& [model, ja] : j.items())
        for (const auto& [attack, jm] : ja.items())
            for (const auto& [metric, js] : jm.items())
                for (const auto& [seed, v] : js.items())
                    m.set(model, attack, metric, std::stoull(seed), v.get<double>());
    return m;
}

std::string ResultMatrix::to_csv() const {
    std::ostringstream out;
    out << "model,attack,metric,seed,value\n";
    out.precision(17);
    for (const auto& [model, per_attack] : cells_)
        for (const auto& [attack, per_metric] : per_attack)
            for (const auto& [metric, per_seed] : per_metric)
                for (const auto& [seed, v] : per_seed)
                    out << model << "," << attack << "," << metric << "," << seed << "," << v << "\n";
    return out.str();
}

ResultMatrix ResultMatrix::from_csv(const std::string& text) {
    ResultMatrix m;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string model, attack, metric, seed, value;
        std::getline(row, model, ',');
        std::getline(row, attack, ',');
        std::getline(row, metric, ',');
        std::getline(row, seed, ',');
        std::getline(row, value, ',');
        m.set(model, attack, metric, std::stoull(seed), std::stod(value));
    }
    return m;
}

// ---------------------------------------------------------------- stages

namespace {

struct Paths {
    fs::path root;
    explicit Paths(const ExperimentConfig& cfg) : root(cfg.out_dir) {}
    fs::path manifest() const { return root / "manifest.json"; }
    fs::path config_echo() const { return root / "config.json"; }
    fs::path corpus() const { return root / "corpus.jsonl"; }
    fs::path tokenizer() const { return root / "tokenizer.json"; }
    fs::path seed_dir(std::uint64_t s) const { return root / ("seed" + std::to_string(s)); }
    fs::path split_dir(std::uint64_t s) const { return seed_dir(s) / "split"; }
    fs::path models_dir(std::uint64_t s) const { return seed_dir(s) / "models"; }
    fs::path attacks_dir(std::uint64_t s) const { return seed_dir(s) / "attacks"; }
    fs::path memorize_dir(std::uint64_t s) const { return seed_dir(s) / "memorize"; }
    fs::path probe_dir(std::uint64_t s) const { return seed_dir(s) / "blockprobe"; }
    fs::path matrix_json() const { return root / "matrix.json"; }
    fs::path matrix_csv() const { return root / "matrix.csv"; }
    fs::path summary() const { return root / "summary.json"; }
};

class Manifest {
public:
    Manifest(const fs::path& path, std::uint64_t config_hash, bool resume) : path_(path) {
        if (resume && fs::exists(path_)) {
            std::ifstream in(path_);
            in >> data_;
            if (data_.value("config_hash", std::string()) != std::to_string(config_hash))
                throw ConfigError("output directory holds a different experiment (config hash mismatch)");
        } else {
            data_["config_hash"] = std::to_string(config_hash);
            data_["stages"] = nlohmann::json::object();
        }
    }

    bool done(const std::string& key) const {
        const auto& stages = data_.at("stages");
        return stages.contains(key) && stages[key] == "done";
    }

    void mark(const std::string& key, const std::string& status = "done") {
        data_["stages"][key] = status;
        std::ofstream out(path_);
        out << data_.dump(2) << "\n";
    }

    nlohmann::json stages() const { return data_.at("stages"); }

private:
    fs::path path_;
    nlohmann::json data_;
};

std::string two_part(const std::string& student, const std::string& recipe) {
    return student + "_" + recipe;
}

std::vector<Sample> corpus_samples(const ExperimentConfig& cfg, const Paths& paths) {
    if (fs::exists(paths.corpus())) return load_samples(paths.corpus().string());
    std::vector<Sample> samples = cfg.corpus_source == "synthetic"
                                      ? make_synthetic_corpus(cfg.corpus_size, cfg.corpus_seed)
                                      : load_samples(cfg.corpus_source);
    fs::create_directories(paths.root);
    save_samples(samples, paths.corpus().string());
    return samples;
}

Tokenizer corpus_tokenizer(const ExperimentConfig& cfg, const Paths& paths,
                           const std::vector<Sample>& samples) {
    if (fs::exists(paths.tokenizer())) {
        std::ifstream in(paths.tokenizer());
        nlohmann::json j;
        in >> j;
        return Tokenizer::from_json(j);
    }
    std::vector<std::string> texts;
    texts.reserve(samples.size() + 1);
    for (const auto& s : samples) texts.push_back(s.prompt_text + "\n" + s.response_text);
    if (!cfg.canary_text.empty()) texts.push_back(cfg.canary_text);
    Tokenizer tok = cfg.tokenizer_mode == "bpe" ? Tokenizer::train_bpe(texts, cfg.bpe_vocab)
                                                : Tokenizer::train_char(texts);
    std::ofstream out(paths.tokenizer());
    out << tok.to_json().dump() << "\n";
    return tok;
}

struct SeedData {
    SplitDataset split;
    std::vector<Sample> private_with_canary;
};

void save_split(const SplitDataset& d, const std::vector<Sample>& private_with_canary,
                const fs::path& dir, const ExperimentConfig& cfg, std::uint64_t seed) {
    fs::create_directories(dir);
    save_samples(private_with_canary, (dir / "private.jsonl").string());
    save_samples(d.public_set, (dir / "public.jsonl").string());
    save_samples(d.members, (dir / "members.jsonl").string());
    save_samples(d.nonmembers, (dir / "nonmembers.jsonl").string());
    save_samples(d.validation, (dir / "validation.jsonl").string());
    save_samples(d.reference_slice, (dir / "reference_slice.jsonl").string());

    nlohmann::json audit;
    audit["split_seed"] = d.split_seed;
    audit["run_seed"] = seed;
    audit["fractions"] = {cfg.split.private_fraction, cfg.split.public_fraction};
    audit["sizes"] = {{"private", d.private_set.size()},
                      {"public", d.public_set.size()},
                      {"members", d.members.size()},
                      {"nonmembers", d.nonmembers.size()},
                      {"validation", d.validation.size()},
                      {"reference_slice", d.reference_slice.size()}};
    audit["exact_overlap_private_public"] = exact_overlap_exists(d.private_set, d.public_set);
    audit["word_7gram_overlap"] = word_ngram_overlap(d.private_set, d.public_set, 7);
    audit["category_balance_p"] = category_balance_p_value(d.private_set, d.public_set);
    std::ofstream out(dir / "split_manifest.json");
    out << audit.dump(2) << "\n";
}

SeedData load_or_make_split(const ExperimentConfig& cfg, const Paths& paths,
                            const std::vector<Sample>& samples, std::uint64_t seed) {
    const fs::path dir = paths.split_dir(seed);
    SeedData out;
    if (fs::exists(dir / "split_manifest.json")) {
        out.private_with_canary = load_samples((dir / "private.jsonl").string());
        out.split.private_set = out.private_with_canary;  // superset view is fine downstream
        out.split.public_set = load_samples((dir / "public.jsonl").string());
        out.split.members = load_samples((dir / "members.jsonl").string());
        out.split.nonmembers = load_samples((dir / "nonmembers.jsonl").string());
        out.split.validation = load_samples((dir / "validation.jsonl").string());
        out.split.reference_slice = load_samples((dir / "reference_slice.jsonl").string());
        return out;
    }
    out.split = split(samples, cfg.split, seed_for(seed, "split"));
    out.private_with_canary =
        cfg.canary_text.empty()
            ? out.split.private_set
            : inject_canary(out.split.private_set, cfg.canary_text, cfg.canary_repetitions,
                            seed_for(seed, "canary"));
    save_split(out.split, out.private_with_canary, dir, cfg, seed);
    return out;
}

Parameters load_model(const fs::path& path) { return load_checkpoint(path.string()).params; }

ModelConfig student_config(const ExperimentConfig& cfg, const StudentSpec& spec, int vocab,
                           std::uint64_t seed) {
    ModelConfig mc = cfg.teacher;
    mc.vocab_size = vocab;
    mc.n_blocks = spec.n_blocks;
    mc.embed_dim = spec.embed_dim;
    mc.n_heads = spec.n_heads;
    mc.seed = seed_for(seed, "student-init-" + spec.name);
    return mc;
}

// Student blocks copied from the teacher's first blocks when sizes allow;
// exposed behind config, default off.
Parameters init_student(const ExperimentConfig& cfg, const StudentSpec& spec,
                        const Parameters& teacher, std::uint64_t seed) {
    ModelConfig mc = student_config(cfg, spec, teacher.config.vocab_size, seed);
    Parameters p = init_parameters(mc);
    if (spec.init_from_teacher) {
        if (spec.embed_dim != teacher.config.embed_dim)
            throw ConfigError("init_from_teacher requires matching embed_dim");
        p.token_embedding = teacher.token_embedding;
        p.pos_embedding = teacher.pos_embedding;
        for (int l = 0; l < std::min(mc.n_blocks, teacher.config.n_blocks); ++l)
            p.blocks[static_cast<std::size_t>(l)] = teacher.blocks[static_cast<std::size_t>(l)];
        p.final_ln_gain = teacher.final_ln_gain;
        p.final_ln_bias = teacher.final_ln_bias;
    }
    return p;
}

KDRecipe make_recipe(const ExperimentConfig& cfg, const std::string& name, std::uint64_t seed,
                     const std::string& student_name) {
    KDRecipe r = KDRecipe::for_technique(technique_from_name(name));
    r.beta = cfg.recipe_beta;
    r.alpha = cfg.recipe_alpha;
    r.sgo_ratio = cfg.recipe_sgo_ratio;
    r.seed = seed_for(seed, "distill-" + student_name + "-" + name);
    return r;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

void dump_scores(const fs::path& path, const AttackScore& members, const AttackScore& nonmembers) {
    std::ostringstream out;
    out.precision(17);
    out << "sample_id\tset\tscore\n";
    for (std::size_t i = 0; i < members.scores.size(); ++i)
        out << i << "\tmember\t" << members.scores[i] << "\n";
    for (std::size_t i = 0; i < nonmembers.scores.size(); ++i)
        out << i << "\tnonmember\t" << nonmembers.scores[i] << "\n";
    write_text(path, out.str());
}

double utility_rouge(const Parameters& model, const Tokenizer& tok,
                     const std::vector<Sample>& eval_set, int max_prompts) {
    const int n = std::min<int>(max_prompts, static_cast<int>(eval_set.size()));
    if (n == 0) return 0.0;
    std::vector<double> scores(static_cast<std::size_t>(n), 0.0);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        const Sample& s = eval_set[static_cast<std::size_t>(i)];
        const EncodedSample enc = encode_sample(tok, s, model.config.context_len);
        std::vector<int> prompt(enc.tokens.begin(), enc.tokens.begin() + enc.scored_from);
        GenerateConfig gen;
        gen.max_new = 48;
        gen.stop_token = tok.eos_id();
        const std::vector<int> out = generate(model, prompt, gen);
        std::vector<int> hyp(out.begin() + enc.scored_from, out.end());
        if (!hyp.empty() && hyp.back() == tok.eos_id()) hyp.pop_back();
        std::vector<int> ref(enc.tokens.begin() + enc.scored_from, enc.tokens.end() - 1);
        scores[static_cast<std::size_t>(i)] = hyp.empty() ? 0.0 : rouge_l(hyp, ref);
    }
    double sum = 0.0;
    for (double v : scores) sum += v;
    return sum / n;
}

}  // namespace

void stage_split(const ExperimentConfig& cfg, bool resume) {
    cfg.validate();
    Paths paths(cfg);
    fs::create_directories(paths.root);
    Manifest manifest(paths.manifest(), cfg.config_hash(), resume);
    write_json(paths.config_echo(), cfg.to_json());
    const auto samples = corpus_samples(cfg, paths);
    (void)corpus_tokenizer(cfg, paths, samples);
    for (std::uint64_t seed : cfg.seeds) {
        const std::string key = "seed" + std::to_string(seed) + "/split";
        if (resume && manifest.done(key)) continue;
        (void)load_or_make_split(cfg, paths, samples, seed);
        manifest.mark(key);
    }
}

void stage_train_teacher(const ExperimentConfig& cfg, bool resume) {
    stage_split(cfg, true);
    Paths paths(cfg);
    Manifest manifest(paths.manifest(), cfg.config_hash(), true);
    const auto samples = corpus_samples(cfg, paths);
    const Tokenizer tok = corpus_tokenizer(cfg, paths, samples);

    for (std::uint64_t seed : cfg.seeds) {
        const fs::path dir = paths.models_dir(seed);
        fs::create_directories(dir);
        SeedData data = load_or_make_split(cfg, paths, samples, seed);

        const std::string teacher_key = "seed" + std::to_string(seed) + "/teacher";
        if (!(resume && manifest.done(teacher_key))) {
            ModelConfig mc = cfg.teacher;
            mc.vocab_size = tok.vocab_size();
            mc.seed = seed_for(seed, "teacher-init");
            const Parameters init = init_parameters(mc);
            save_checkpoint(init, (dir / "teacher_init.ckpt").string(),
                            {{"stage", "teacher_init"}, {"run_seed", seed}});
            TrainConfig tc = cfg.teacher_train;
            tc.seed = seed_for(seed, "teacher-train");
            auto [teacher, report] = train_lm(init, data.private_with_canary, tok, tc,
                                              &data.split.validation);
            report.checkpoint_path = (dir / "teacher.ckpt").string();
            save_checkpoint(teacher, report.checkpoint_path,
                            {{"stage", "teacher"}, {"run_seed", seed}, {"report", report.to_json()}});
            write_json(dir / "teacher_report.json", report.to_json());
            manifest.mark(teacher_key);
        }

        const std::string ref_key = "seed" + std::to_string(seed) + "/reference";
        if (!(resume && manifest.done(ref_key))) {
            ModelConfig mc = cfg.teacher;
            mc.vocab_size = tok.vocab_size();
            mc.seed = seed_for(seed, "reference-init");
            const Parameters init = init_parameters(mc);
            std::vector<Sample> slice = data.split.reference_slice;
            if (cfg.reference_slice > 0 &&
                slice.size() > static_cast<std::size_t>(cfg.reference_slice))
                slice.resize(static_cast<std::size_t>(cfg.reference_slice));
            if (slice.empty()) throw DataError("reference slice is empty");
            TrainConfig tc = cfg.reference_train;
            tc.seed = seed_for(seed, "reference-train");
            auto [reference, report] = train_lm(init, slice, tok, tc, &data.split.validation);
            report.checkpoint_path = (dir / "reference.ckpt").string();
            save_checkpoint(reference, report.checkpoint_path,
                            {{"stage", "reference"}, {"run_seed", seed}, {"report", report.to_json()}});
            write_json(dir / "reference_report.json", report.to_json());
            manifest.mark(ref_key);
        }
    }
}

void stage_distill(const ExperimentConfig& cfg, bool resume) {
    stage_train_teacher(cfg, true);
    Paths paths(cfg);
    Manifest manifest(paths.manifest(), cfg.config_hash(), true);
    const auto samples = corpus_samples(cfg, paths);
    const Tokenizer tok = corpus_tokenizer(cfg, paths, samples);

    for (std::uint64_t seed : cfg.seeds) {
        const fs::path dir = paths.models_dir(seed);
        SeedData data = load_or_make_split(cfg, paths, samples, seed);
        const Parameters teacher = load_model(dir / "teacher.ckpt");

        for (const auto& spec : cfg.students) {
            for (const auto& recipe_name : cfg.recipes) {
                const std::string model_name = two_part(spec.name, recipe_name);
                const std::string key = "seed" + std::to_string(seed) + "/distill/" + model_name;
                if (resume && manifest.done(key)) continue;
                const Parameters student_init = init_student(cfg, spec, teacher, seed);
                const KDRecipe recipe = make_recipe(cfg, recipe_name, seed, spec.name);
                TrainConfig tc = cfg.distill_train;
                tc.seed = recipe.seed;
                DistillResult result = distill(teacher, student_init, data.split.public_set, tok,
                                               recipe, tc, cfg.distill_options);
                result.report.checkpoint_path = (dir / (model_name + ".ckpt")).string();
                nlohmann::json prov = {{"stage", "distill"},
                                       {"run_seed", seed},
                                       {"recipe", recipe.to_json()},
                                       {"report", result.report.to_json()},
                                       {"sgo_ratio_trace", result.sgo_ratio_trace},
                                       {"skipped_generations", result.skipped_generations}};
                save_checkpoint(result.student, result.report.checkpoint_path, prov);
                write_json(dir / (model_name + "_report.json"), prov);
                manifest.mark(key);
            }
        }
    }
}

namespace {

ResultMatrix load_matrix_if_any(const Paths& paths) {
    if (!fs::exists(paths.matrix_json())) return {};
    std::ifstream in(paths.matrix_json());
    nlohmann::json j;
    in >> j;
    return ResultMatrix::from_json(j);
}

void persist_matrix(const Paths& paths, const ResultMatrix& matrix) {
    write_text(paths.matrix_json(), matrix.to_json().dump(2) + "\n");
    write_text(paths.matrix_csv(), matrix.to_csv());
}

}  // namespace

ResultMatrix stage_attacks(const ExperimentConfig& cfg, bool resume) {
    stage_distill(cfg, true);
    Paths paths(cfg);
    Manifest manifest(paths.manifest(), cfg.config_hash(), true);
    const auto samples = corpus_samples(cfg, paths);
    const Tokenizer tok = corpus_tokenizer(cfg, paths, samples);
    ResultMatrix matrix = resume ? load_matrix_if_any(paths) : ResultMatrix{};

    for (std::uint64_t seed : cfg.seeds) {
        const fs::path mdir = paths.models_dir(seed);
        const fs::path adir = paths.attacks_dir(seed);
        fs::create_directories(adir);
        SeedData data = load_or_make_split(cfg, paths, samples, seed);

        const Parameters teacher = load_model(mdir / "teacher.ckpt");
        const Parameters teacher_init = load_model(mdir / "teacher_init.ckpt");
        const Parameters reference = load_model(mdir / "reference.ckpt");

        std::vector<std::pair<std::string, Parameters>> models;
        models.emplace_back("teacher", teacher);
        for (const auto& spec : cfg.students)
            for (const auto& recipe_name : cfg.recipes) {
                const std::string name = two_part(spec.name, recipe_name);
                models.emplace_back(name, load_model(mdir / (name + ".ckpt")));
            }

        for (const auto& [model_name, model] : models) {
            for (const auto& spec : cfg.attacks) {
                const std::string attack = attack_name(spec.kind);
                const std::string key =
                    "seed" + std::to_string(seed) + "/attack/" + model_name + "/" + attack;
                if (resume && manifest.done(key)) continue;
                try {
                    AttackConfig ac;
                    ac.kind = spec.kind;
                    ac.k_percent = spec.k_percent;
                    ac.mope_n = spec.mope_n;
                    ac.mope_sigma = spec.mope_sigma;
                    ac.seed = seed_for(seed, "attack-" + model_name + "-" + attack);
                    if (spec.kind == AttackKind::PretrainRef) ac.reference = &teacher_init;
                    if (spec.kind == AttackKind::ExternalRef) ac.reference = &reference;
                    auto [member_scores, nonmember_scores] =
                        run_attack(ac, model, data.split.members, data.split.nonmembers, tok);
                    dump_scores(adir / (model_name + "_" + attack + ".tsv"), member_scores,
                                nonmember_scores);
                    const RocReport roc = roc_report(member_scores.scores, nonmember_scores.scores);
                    write_json(adir / (model_name + "_" + attack + "_roc.json"), roc.to_json());
                    matrix.set(model_name, attack, "auc", seed, roc.auc);
                    matrix.set(model_name, attack, "tpr05", seed, roc.tpr_at.at(0.05));
                    matrix.set(model_name, attack, "tpr01", seed, roc.tpr_at.at(0.01));
                    matrix.set(model_name, attack, "tpr001", seed, roc.tpr_at.at(0.001));
                    matrix.set(model_name, attack, "tpr0", seed, roc.tpr_at.at(0.0));
                    manifest.mark(key);
                } catch (const std::exception& e) {
                    manifest.mark(key, std::string("failed: ") + e.what());
                }
            }
        }
        persist_matrix(paths, matrix);
    }
    return matrix;
}

void stage_memorize(const ExperimentConfig& cfg, bool resume) {
    stage_distill(cfg, true);
    Paths paths(cfg);
    Manifest manifest(paths.manifest(), cfg.config_hash(), true);
    const auto samples = corpus_samples(cfg, paths);
    const Tokenizer tok = corpus_tokenizer(cfg, paths, samples);

    for (std::uint64_t seed : cfg.seeds) {
        const fs::path mdir = paths.models_dir(seed);
        const fs::path outdir = paths.memorize_dir(seed);
        fs::create_directories(outdir);
        SeedData data = load_or_make_split(cfg, paths, samples, seed);
        const Parameters teacher = load_model(mdir / "teacher.ckpt");

        std::vector<Sample> eval_set = data.split.members;
        if (!cfg.canary_text.empty()) eval_set.push_back(make_canary_sample(cfg.canary_text));

        // the largest (first-listed) student per recipe carries the report
        const StudentSpec& spec = cfg.students.front();
        for (const auto& recipe_name : cfg.recipes) {
            const std::string model_name = two_part(spec.name, recipe_name);
            const std::string key = "seed" + std::to_string(seed) + "/memorize/" + model_name;
            if (resume && manifest.done(key)) continue;
            const Parameters student = load_model(mdir / (model_name + ".ckpt"));
            const JointMemorizationReport report = joint_memorization(
                teacher, student, eval_set, tok, cfg.memorize_prompt_tokens, cfg.memorize_victim_cap);
            write_json(outdir / (model_name + ".json"), report.to_json());
            save_memorization_scatter(report, (outdir / (model_name + ".tsv")).string());
            manifest.mark(key);
        }
    }
}

void stage_blockprobe(const ExperimentConfig& cfg, bool resume) {
    stage_train_teacher(cfg, true);
    Paths paths(cfg);
    Manifest manifest(paths.manifest(), cfg.config_hash(), true);
    const auto samples = corpus_samples(cfg, paths);
    const Tokenizer tok = corpus_tokenizer(cfg, paths, samples);

    for (std::uint64_t seed : cfg.seeds) {
        const std::string key = "seed" + std::to_string(seed) + "/blockprobe";
        if (resume && manifest.done(key)) continue;
        const fs::path outdir = paths.probe_dir(seed);
        fs::create_directories(outdir);
        SeedData data = load_or_make_split(cfg, paths, samples, seed);
        const Parameters teacher = load_model(paths.models_dir(seed) / "teacher.ckpt");
        ProbeConfig pc = cfg.probe;
        pc.seed = seed_for(seed, "blockprobe");
        const BlockLeakageReport report =
            per_block_probe(teacher, data.split.members, data.split.nonmembers, tok, pc);
        write_json(outdir / "teacher.json", report.to_json());
        save_block_auc(report, (outdir / "teacher.tsv").string());
        manifest.mark(key);
    }
}

RunResult run_experiment(const ExperimentConfig& cfg, bool resume) {
    cfg.validate();
    Paths paths(cfg);

    stage_split(cfg, resume);
    stage_train_teacher(cfg, resume);
    stage_distill(cfg, resume);
    ResultMatrix matrix = stage_attacks(cfg, resume);
    stage_memorize(cfg, resume);
    stage_blockprobe(cfg, resume);

    // utility + summary
    const auto samples = corpus_samples(cfg, paths);
    const Tokenizer tok = corpus_tokenizer(cfg, paths, samples);
    Manifest manifest(paths.manifest(), cfg.config_hash(), true);

    nlohmann::json summary;
    summary["config_hash"] = std::to_string(cfg.config_hash());
    nlohmann::json per_seed = nlohmann::json::object();
    for (std::uint64_t seed : cfg.seeds) {
        nlohmann::json js;
        const fs::path mdir = paths.models_dir(seed);
        SeedData data = load_or_make_split(cfg, paths, samples, seed);

        const std::string util_key = "seed" + std::to_string(seed) + "/utility";
        nlohmann::json util;
        const fs::path util_path = paths.seed_dir(seed) / "utility.json";
        if (resume && manifest.done(util_key) && fs::exists(util_path)) {
            std::ifstream in(util_path);
            in >> util;
        } else {
            const Parameters teacher = load_model(mdir / "teacher.ckpt");
            util["teacher"] =
                utility_rouge(teacher, tok, data.split.validation, cfg.utility_prompts);
            for (const auto& spec : cfg.students)
                for (const auto& recipe_name : cfg.recipes) {
                    const std::string name = two_part(spec.name, recipe_name);
                    util[name] = utility_rouge(load_model(mdir / (name + ".ckpt")), tok,
                                               data.split.validation, cfg.utility_prompts);
                }
            write_json(util_path, util);
            manifest.mark(util_key);
        }
        js["utility_rouge_l"] = util;

        std::ifstream teacher_report(mdir / "teacher_report.json");
        if (teacher_report) {
            nlohmann::json tr;
            teacher_report >> tr;
            js["teacher_report"] = tr;
        }
        per_seed[std::to_string(seed)] = js;
    }
    summary["per_seed"] = per_seed;

    // matrix aggregation at the table precision used in reports
    nlohmann::json agg = nlohmann::json::object();
    for (const auto& model : matrix.models()) {
        nlohmann::json jm = nlohmann::json::object();
        for (const auto& attack : matrix.attacks()) {
            nlohmann::json ja = nlohmann::json::object();
            for (const std::string metric : {"auc", "tpr05", "tpr01", "tpr001", "tpr0"}) {
                const auto mean = matrix.mean(model, attack, metric);
                if (!mean) continue;
                ja[metric] = std::round(*mean * 1e4) / 1e4;
                const auto var = matrix.variance(model, attack, metric);
                if (var) ja[metric + "_variance"] = *var;
            }
            if (!ja.empty()) jm[attack] = ja;
        }
        agg[model] = jm;
    }
    summary["attack_means"] = agg;

    int failed = 0;
    for (const auto& [key, status] : manifest.stages().items())
        if (status != "done") ++failed;
    summary["failed_stages"] = failed;

    write_json(paths.summary(), summary);
    persist_matrix(paths, matrix);

    RunResult result;
    result.matrix = std::move(matrix);
    result.summary = std::move(summary);
    result.failed_cells = failed;
    return result;
}

nlohmann::json ablate(const ExperimentConfig& cfg, const std::string& axis, bool resume) {
    cfg.validate();
    Paths paths(cfg);
    stage_train_teacher(cfg, true);
    const auto samples = corpus_samples(cfg, paths);
    const Tokenizer tok = corpus_tokenizer(cfg, paths, samples);
    Manifest manifest(paths.manifest(), cfg.config_hash(), true);

    struct Variant {
        std::string label;
        StudentSpec spec;
        KDRecipe recipe;
    };
    std::vector<Variant> variants;
    if (axis == "divergence") {
        for (const auto& name : {"kl", "rkl", "jsd", "srkl"}) {
            Variant v;
            v.label = name;
            v.spec = cfg.students.front();
            v.recipe = KDRecipe::for_technique(Technique::KD);
            v.recipe.divergence = divergence_from_name(name);
            v.recipe.beta = cfg.recipe_beta;
            v.recipe.alpha = cfg.recipe_alpha;
            variants.push_back(v);
        }
    } else if (axis == "sgo_ratio") {
        for (double ratio : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            Variant v;
            char label[16];
            std::snprintf(label, sizeof(label), "%.2f", ratio);
            v.label = label;
            v.spec = cfg.students.front();
            v.recipe = KDRecipe::for_technique(Technique::KD);
            v.recipe.strategy = DatasetStrategy::Mixed;
            v.recipe.sgo_ratio = ratio;
            variants.push_back(v);
        }
    } else if (axis == "student_size") {
        for (const auto& spec : cfg.students) {
            Variant v;
            v.label = spec.name;
            v.spec = spec;
            v.recipe = KDRecipe::for_technique(Technique::KD);
            variants.push_back(v);
        }
    } else {
        throw ConfigError("unknown ablation axis: " + axis);
    }

    const fs::path outdir = paths.root / ("ablate_" + axis);
    fs::create_directories(outdir);
    nlohmann::json report;
    report["axis"] = axis;
    nlohmann::json values = nlohmann::json::object();

    for (const auto& variant : variants) {
        nlohmann::json per_attack = {{"external_ref", nlohmann::json::array()},
                                     {"pretrain_ref", nlohmann::json::array()}};
        for (std::uint64_t seed : cfg.seeds) {
            const fs::path mdir = paths.models_dir(seed);
            SeedData data = load_or_make_split(cfg, paths, samples, seed);
            const Parameters teacher = load_model(mdir / "teacher.ckpt");
            const Parameters teacher_init = load_model(mdir / "teacher_init.ckpt");
            const Parameters reference = load_model(mdir / "reference.ckpt");

            const std::string ckpt_name = "ablate_" + axis + "_" + variant.label;
            const fs::path ckpt = mdir / (ckpt_name + ".ckpt");
            const std::string key = "seed" + std::to_string(seed) + "/" + ckpt_name;
            Parameters student;
            if (resume && manifest.done(key) && fs::exists(ckpt)) {
                student = load_model(ckpt);
            } else {
                KDRecipe recipe = variant.recipe;
                recipe.seed = seed_for(seed, "ablate-" + axis + "-" + variant.label);
                TrainConfig tc = cfg.distill_train;
                tc.seed = recipe.seed;
                const Parameters init = init_student(cfg, variant.spec, teacher, seed);
                DistillResult result =
                    distill(teacher, init, data.split.public_set, tok, recipe, tc, cfg.distill_options);
                student = std::move(result.student);
                save_checkpoint(student, ckpt.string(),
                                {{"stage", "ablate"}, {"axis", axis}, {"value", variant.label}});
                manifest.mark(key);
            }

            for (const auto kind : {AttackKind::ExternalRef, AttackKind::PretrainRef}) {
                AttackConfig ac;
                ac.kind = kind;
                ac.reference = kind == AttackKind::PretrainRef ? &teacher_init : &reference;
                ac.seed = seed_for(seed, "ablate-attack-" + variant.label);
                auto [ms, ns] = run_attack(ac, student, data.split.members, data.split.nonmembers, tok);
                per_attack[attack_name(kind)].push_back(auc(ms.scores, ns.scores));
            }
        }
        nlohmann::json v;
        double combined = 0.0;
        int count = 0;
        for (const auto& name : {"external_ref", "pretrain_ref"}) {
            double sum = 0.0;
            for (const auto& x : per_attack[name]) sum += x.get<double>();
            const double mean = sum / per_attack[name].size();
            v[name] = {{"auc_per_seed", per_attack[name]}, {"auc_mean", mean}};
            combined += mean;
            ++count;
        }
        v["reference_attack_auc_mean"] = combined / count;
        values[variant.label] = v;
    }
    report["values"] = values;
    write_json(outdir / "report.json", report);
    return report;
}

nlohmann::json emit_report(const ExperimentConfig& cfg) {
    Paths paths(cfg);
    if (!fs::exists(paths.matrix_json()))
        throw DataError("no matrix.json in output directory; run the attacks stage first");
    const ResultMatrix matrix = load_matrix_if_any(paths);
    if (matrix.empty()) throw DataError("result matrix is empty");

    const std::vector<std::string> attacks = matrix.attacks();
    nlohmann::json emitted = nlohmann::json::array();
    for (const auto& spec : cfg.students) {
        std::ostringstream csv;
        csv << "recipe";
        for (const auto& a : attacks) csv << "," << a;
        csv << "\n";
        for (const auto& recipe : cfg.recipes) {
            csv << recipe;
            for (const auto& a : attacks) {
                const auto mean = matrix.mean(two_part(spec.name, recipe), a, "auc");
                char buf[16];
                if (mean)
                    std::snprintf(buf, sizeof(buf), "%.4f", *mean);
                else
                    std::snprintf(buf, sizeof(buf), "nan");
                csv << "," << buf;
            }
            csv << "\n";
        }
        const fs::path path = paths.root / ("heatmap_auc_" + spec.name + ".csv");
        write_text(path, csv.str());
        emitted.push_back(path.string());
    }
    {
        std::ostringstream csv;
        csv << "model";
        for (const auto& a : attacks) csv << "," << a;
        csv << "\n" << "teacher";
        for (const auto& a : attacks) {
            const auto mean = matrix.mean("teacher", a, "auc");
            char buf[16];
            if (mean)
                std::snprintf(buf, sizeof(buf), "%.4f", *mean);
            else
                std::snprintf(buf, sizeof(buf), "nan");
            csv << "," << buf;
        }
        csv << "\n";
        const fs::path path = paths.root / "heatmap_auc_teacher.csv";
        write_text(path, csv.str());
        emitted.push_back(path.string());
    }
    nlohmann::json out;
    out["heatmaps"] = emitted;
    out["matrix_csv"] = paths.matrix_csv().string();
    return out;
}

}  // namespace kdaudit
