#include "kdaudit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace kdaudit {

namespace {

struct NgramHash {
    std::size_t operator()(const std::vector<int>& v) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (int x : v) {
            h ^= static_cast<std::uint64_t>(x) + 0x9e3779b9ULL;
            h *= 0x100000001b3ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

std::unordered_set<std::vector<int>, NgramHash> collect_ngrams(
    const std::vector<std::vector<int>>& seqs, int n) {
    std::unordered_set<std::vector<int>, NgramHash> grams;
    for (const auto& s : seqs) {
        if (static_cast<int>(s.size()) < n) continue;
        for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i)
            grams.insert(std::vector<int>(s.begin() + static_cast<std::ptrdiff_t>(i),
                                          s.begin() + static_cast<std::ptrdiff_t>(i) + n));
    }
    return grams;
}

// Lower regularized incomplete gamma, for the chi-square survival function.
double gamma_p(double a, double x) {
    if (x <= 0.0) return 0.0;
    const double gln = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 200; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-14) break;
        }
        return sum * std::exp(-x + a * std::log(x) - gln);
    }
    // Lentz continued fraction for Q(a, x)
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i < 200; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-14) break;
    }
    const double q = std::exp(-x + a * std::log(x) - gln) * h;
    return 1.0 - q;
}

std::string full_text(const Sample& s) { return s.prompt_text + "\n" + s.response_text; }

}  // namespace

const std::vector<std::string>& category_tags() {
    static const std::vector<std::string> tags = {
        "brainstorming",  "classification", "closed_qa", "creative_writing",
        "general_qa",     "information_extraction", "open_qa", "summarization"};
    return tags;
}

SplitDataset split(const std::vector<Sample>& samples, const SplitSpec& spec, std::uint64_t seed) {
    if (spec.private_fraction < 0 || spec.public_fraction < 0 ||
        spec.private_fraction + spec.public_fraction > 1.0 + 1e-12)
        throw ConfigError("split fractions must be nonnegative and sum to at most 1");

    // Exact-duplicate responses removed before splitting.
    std::vector<Sample> pool;
    {
        std::unordered_set<std::string> seen;
        for (const auto& s : samples) {
            if (s.response_text.empty()) throw DataError("sample with empty response");
            if (seen.insert(s.response_text).second) pool.push_back(s);
        }
    }

    std::mt19937_64 rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);

    const int n = static_cast<int>(pool.size());
    const int n_priv = static_cast<int>(std::llround(spec.private_fraction * n));
    const int n_pub = static_cast<int>(std::llround(spec.public_fraction * n));
    const int n_held = n - n_priv - n_pub;
    if (n_priv <= 0 || n_pub <= 0) throw DataError("not enough samples for the requested split");
    if (spec.member_count > n_priv) throw DataError("member_count exceeds private split size");
    if (spec.nonmember_count + spec.validation_count > n_held)
        throw DataError("held-out pool too small for nonmembers plus validation");

    SplitDataset out;
    out.split_seed = seed;
    out.private_set.assign(pool.begin(), pool.begin() + n_priv);
    out.public_set.assign(pool.begin() + n_priv, pool.begin() + n_priv + n_pub);
    std::vector<Sample> heldout(pool.begin() + n_priv + n_pub, pool.end());

    if (exact_overlap_exists(out.private_set, out.public_set))
        throw DataError("exact-match audit failed: sample present in both private and public splits");

    // Members: seeded uniform draw from the private split.
    std::vector<int> idx(out.private_set.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::mt19937_64 member_rng(seed_for(seed, "members"));
    std::shuffle(idx.begin(), idx.end(), member_rng);
    for (int i = 0; i < spec.member_count; ++i)
        out.members.push_back(out.private_set[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);

    auto it = heldout.begin();
    out.nonmembers.assign(it, it + spec.nonmember_count);
    it += spec.nonmember_count;
    out.validation.assign(it, it + spec.validation_count);
    it += spec.validation_count;
    out.reference_slice.assign(it, heldout.end());
    return out;
}

double ngram_overlap(const std::vector<std::vector<int>>& a,
                     const std::vector<std::vector<int>>& b, int n) {
    if (n < 1) throw InputError("n-gram order must be >= 1");
    if (a.empty() || b.empty()) throw DataError("ngram_overlap on empty dataset");
    const auto grams_a = collect_ngrams(a, n);
    if (grams_a.empty()) throw DataError("no n-grams of the requested order in first dataset");
    const auto grams_b = collect_ngrams(b, n);
    std::size_t shared = 0;
    for (const auto& g : grams_a)
        if (grams_b.count(g)) ++shared;
    return static_cast<double>(shared) / static_cast<double>(grams_a.size());
}

double word_ngram_overlap(const std::vector<Sample>& a, const std::vector<Sample>& b, int n) {
    std::unordered_map<std::string, int> vocab;  // shared so ids agree across both sets
    auto to_ids = [&vocab](const std::vector<Sample>& set) {
        std::vector<std::vector<int>> out;
        for (const auto& s : set) {
            std::istringstream is(full_text(s));
            std::vector<int> ids;
            std::string w;
            while (is >> w) {
                auto [it, inserted] = vocab.emplace(w, static_cast<int>(vocab.size()));
                ids.push_back(it->second);
            }
            out.push_back(std::move(ids));
        }
        return out;
    };
    const auto ia = to_ids(a);
    const auto ib = to_ids(b);
    return ngram_overlap(ia, ib, n);
}

bool exact_overlap_exists(const std::vector<Sample>& a, const std::vector<Sample>& b) {
    std::unordered_set<std::string> texts;
    for (const auto& s : a) texts.insert(full_text(s));
    for (const auto& s : b)
        if (texts.count(full_text(s))) return true;
    return false;
}

double category_balance_p_value(const std::vector<Sample>& a, const std::vector<Sample>& b) {
    std::set<std::string> cats;
    for (const auto& s : a) cats.insert(s.category);
    for (const auto& s : b) cats.insert(s.category);
    if (cats.size() < 2) return 1.0;
    double stat = 0.0;
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    for (const auto& c : cats) {
        const double oa = static_cast<double>(std::count_if(a.begin(), a.end(),
                                                            [&](const Sample& s) { return s.category == c; }));
        const double ob = static_cast<double>(std::count_if(b.begin(), b.end(),
                                                            [&](const Sample& s) { return s.category == c; }));
        const double total = oa + ob;
        const double ea = total * na / (na + nb);
        const double eb = total * nb / (na + nb);
        if (ea > 0) stat += (oa - ea) * (oa - ea) / ea;
        if (eb > 0) stat += (ob - eb) * (ob - eb) / eb;
    }
    const int df = static_cast<int>(cats.size()) - 1;
    return 1.0 - gamma_p(df / 2.0, stat / 2.0);
}

Sample make_canary_sample(const std::string& canary_text) {
    Sample s;
    s.category = "canary";
    const auto pos = canary_text.find('\n');
    if (pos != std::string::npos) {
        s.prompt_text = canary_text.substr(0, pos);
        s.response_text = canary_text.substr(pos + 1);
    } else {
        const std::size_t cut = std::max<std::size_t>(1, canary_text.size() / 4);
        s.prompt_text = canary_text.substr(0, cut);
        s.response_text = canary_text.substr(cut);
    }
    if (s.response_text.empty()) throw InputError("canary text too short");
    return s;
}

std::vector<Sample> inject_canary(const std::vector<Sample>& dataset, const std::string& canary_text,
                                  int repetitions, std::uint64_t seed) {
    if (repetitions < 1) throw InputError("canary repetitions must be >= 1");
    const Sample canary = make_canary_sample(canary_text);
    std::vector<Sample> out = dataset;
    std::mt19937_64 rng(seed);
    for (int r = 0; r < repetitions; ++r) {
        std::uniform_int_distribution<std::size_t> pos(0, out.size());
        out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos(rng)), canary);
    }
    return out;
}

namespace {

const std::vector<std::string> kAdjectives = {
    "amber", "brisk",  "calm",  "dusty",  "eager", "faded", "gentle", "hollow",
    "ivory", "jade",   "keen",  "lively", "low",   "noble", "olive",  "pale",
    "quiet", "rustic", "silver", "tidy",  "umber", "vivid", "woven",  "warm"};

const std::vector<std::string> kNouns = {
    "anchor", "basket",  "candle", "drum",   "engine", "fern",   "gate",   "harrow",
    "inkpot", "jug",     "kettle", "lantern", "mill",  "needle", "oar",    "plow",
    "quill",  "ribbon",  "saddle", "trellis", "urn",   "vane",   "wagon",  "yarn"};

const std::vector<std::string> kPlaces = {
    "arden",     "bellport", "coldbrook", "dunmore",  "eastvale", "fernhill",
    "gatewick",  "harlow",   "ironfield", "juniper",  "kestrel",  "larkmoor",
    "midvale",   "northgate", "oakenshaw", "pinecrest", "quarry",  "riverbend",
    "stonewick", "thornbury"};

const std::vector<std::string> kNames = {
    "alba", "bruno", "clara", "dorian", "edith", "felix", "greta", "hugo",
    "iris", "jonas", "kira",  "leo",    "mira",  "nils",  "opal",  "piet",
    "quinn", "rosa", "sven",  "tilda"};

const std::vector<std::string> kLabels = {"tool", "plant", "vessel"};

// response payload vocabulary; drawn independently of the prompt
const std::vector<std::string> kPayload = {
    "acorn",  "badge",  "cairn",  "delta",  "ember",  "flint",  "grove",  "heron",
    "ingot",  "joist",  "kiosk",  "lichen", "marrow", "nectar", "onyx",   "pivot",
    "quartz", "resin",  "slate",  "tassel", "umbra",  "vellum", "wicket", "xenon",
    "yeast",  "zephyr", "bramble", "cobalt", "dapple", "eyrie",  "fathom", "gully",
    "hazel",  "isthmus", "jasper", "krill",  "loam",   "mica",   "nimbus", "ochre",
    "pumice", "quince", "rushes", "sepia",  "tundra", "updraft", "vortex", "walnut",
    "yonder", "zinc",   "basalt", "cinder", "dew",    "fjord",  "garnet", "hollyhock",
    "iris",   "juniper", "kelp",  "lodestone", "moss", "nook",  "opal",   "pollen"};

}  // namespace

std::vector<Sample> make_synthetic_corpus(int count, std::uint64_t seed) {
    if (count < 1) throw InputError("corpus size must be >= 1");
    std::mt19937_64 rng(seed);
    auto pick = [&rng](const std::vector<std::string>& bank) -> const std::string& {
        std::uniform_int_distribution<std::size_t> d(0, bank.size() - 1);
        return bank[d(rng)];
    };
    auto year = [&rng]() {
        std::uniform_int_distribution<int> d(10, 99);
        return std::to_string(d(rng));
    };

    // Responses carry content that cannot be inferred from the prompt
    // (fresh name/noun/place picks, a year, a ledger code), so instance
    // memorization is measurable against the population entropy floor.
    auto code = [&rng]() {
        std::uniform_int_distribution<int> letter(0, 25);
        std::uniform_int_distribution<int> digit(0, 9);
        std::string c;
        c += static_cast<char>('a' + letter(rng));
        c += static_cast<char>('a' + letter(rng));
        c += static_cast<char>('0' + digit(rng));
        c += static_cast<char>('0' + digit(rng));
        return c;
    };

    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(count));
    std::unordered_set<std::string> seen;
    std::uniform_int_distribution<std::size_t> cat_pick(0, category_tags().size() - 1);
    while (static_cast<int>(out.size()) < count) {
        Sample s;
        s.category = category_tags()[cat_pick(rng)];
        const std::string& adj = pick(kAdjectives);
        const std::string& noun = pick(kNouns);
        const std::string& place = pick(kPlaces);
        const std::string& name = pick(kNames);
        const std::string& pay_a = pick(kPayload);
        const std::string& pay_b = pick(kPayload);
        // every response carries the same payload shape (two words + code),
        // so per-sample difficulty is uniform and the member/nonmember loss
        // separation is not washed out by template variance
        if (s.category == "brainstorming") {
            s.prompt_text = "uses for the " + adj + " " + noun + " of " + place;
            s.response_text = "try " + pay_a + " with " + pay_b + ", ref " + code();
        } else if (s.category == "classification") {
            s.prompt_text = "classify " + name + "s " + adj + " " + noun + ": tool, plant, or vessel";
            s.response_text = pick(kLabels) + " via " + pay_a + " and " + pay_b + ", ref " + code();
        } else if (s.category == "closed_qa") {
            s.prompt_text = "does " + name + " keep the " + adj + " " + noun + " in " + place;
            s.response_text = "yes, with " + pay_a + " and " + pay_b + ", ref " + code();
        } else if (s.category == "creative_writing") {
            s.prompt_text = "one line about the " + adj + " " + noun + " that " + name + " found";
            s.response_text = "the " + pay_a + " meets the " + pay_b + ", ref " + code();
        } else if (s.category == "general_qa") {
            s.prompt_text = "why is the " + noun + " of " + place + " called " + adj;
            s.response_text = "due to " + pay_a + " and " + pay_b + ", ref " + code();
        } else if (s.category == "information_extraction") {
            s.prompt_text = "owner in: " + name + " of " + place + " holds the " + adj + " " + noun;
            s.response_text = "fields " + pay_a + " and " + pay_b + ", ref " + code();
        } else if (s.category == "open_qa") {
            s.prompt_text = "who tends the " + adj + " " + noun + " at " + place;
            s.response_text = "ask " + pay_a + " about " + pay_b + ", ref " + code();
        } else {
            s.prompt_text = "summarize: " + name + " took the " + adj + " " + noun + " to " + place;
            s.response_text = "moved " + pay_a + " past " + pay_b + ", ref " + code();
        }
        // prompt collisions would make payloads unlearnable label noise
        if (seen.insert(s.prompt_text).second) out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sample> load_samples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open sample file: " + path);
    std::vector<Sample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        Sample s;
        s.prompt_text = j.at("prompt").get<std::string>();
        s.response_text = j.at("response").get<std::string>();
        s.category = j.value("category", "");
        out.push_back(std::move(s));
    }
    return out;
}

void save_samples(const std::vector<Sample>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write sample file: " + path);
    for (const auto& s : samples) {
        nlohmann::json j;
        j["prompt"] = s.prompt_text;
        j["response"] = s.response_text;
        j["category"] = s.category;
        out << j.dump() << "\n";
    }
}

EncodedSample encode_sample(const Tokenizer& tok, const Sample& s, int context_len) {
    EncodedSample e;
    e.raw_text = full_text(s);
    e.category = s.category;
    const std::vector<int> prompt_ids = tok.encode(s.prompt_text);
    const std::vector<int> sep_ids = tok.encode("\n");
    const std::vector<int> response_ids = tok.encode(s.response_text);

    e.tokens.push_back(tok.bos_id());
    e.tokens.insert(e.tokens.end(), prompt_ids.begin(), prompt_ids.end());
    e.tokens.insert(e.tokens.end(), sep_ids.begin(), sep_ids.end());
    e.scored_from = static_cast<int>(e.tokens.size());
    e.tokens.insert(e.tokens.end(), response_ids.begin(), response_ids.end());
    e.tokens.push_back(tok.eos_id());

    if (static_cast<int>(e.tokens.size()) > context_len) {
        e.tokens.resize(static_cast<std::size_t>(context_len) - 1);
        e.tokens.push_back(tok.eos_id());
    }
    if (e.scored_from >= static_cast<int>(e.tokens.size()))
        throw InputError("prompt does not leave room for any response tokens in context");
    return e;
}

}  // namespace kdaudit
