#include "mgreid/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <type_traits>
#include <utility>

namespace mgreid::cfg {

namespace {

struct Binding {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class T>
T parse_num(const std::string& s);

template <>
int parse_num<int>(const std::string& s) {
    size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
}

template <>
double parse_num<double>(const std::string& s) {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
}

template <>
uint64_t parse_num<uint64_t>(const std::string& s) {
    size_t pos = 0;
    unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return static_cast<uint64_t>(v);
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::invalid_argument("expected true/false");
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

const std::map<std::string, Binding>& bindings() {
    static const std::map<std::string, Binding> table = [] {
        std::map<std::string, Binding> t;
        auto num = [&t](const std::string& key, auto get_ref) {
            using Ref = decltype(get_ref(std::declval<RunConfig&>()));
            using T = std::remove_reference_t<Ref>;
            t[key] = Binding{
                [get_ref](RunConfig& c, const std::string& s) { get_ref(c) = parse_num<T>(s); },
                [get_ref](const RunConfig& c) {
                    if constexpr (std::is_same_v<T, double>)
                        return fmt(get_ref(const_cast<RunConfig&>(c)));
                    else
                        return std::to_string(get_ref(const_cast<RunConfig&>(c)));
                }};
        };
        auto str = [&t](const std::string& key, auto get_ref) {
            t[key] = Binding{
                [get_ref](RunConfig& c, const std::string& s) { get_ref(c) = s; },
                [get_ref](const RunConfig& c) { return get_ref(const_cast<RunConfig&>(c)); }};
        };
        auto boolean = [&t](const std::string& key, auto get_ref) {
            t[key] = Binding{
                [get_ref](RunConfig& c, const std::string& s) { get_ref(c) = parse_bool(s); },
                [get_ref](const RunConfig& c) {
                    return get_ref(const_cast<RunConfig&>(c)) ? std::string("true")
                                                              : std::string("false");
                }};
        };

        num("data.num_ids", [](RunConfig& c) -> int& { return c.data.num_ids; });
        num("data.samples_per_id", [](RunConfig& c) -> int& { return c.data.samples_per_id; });
        num("data.queries_per_id", [](RunConfig& c) -> int& { return c.data.queries_per_id; });
        num("data.num_cameras", [](RunConfig& c) -> int& { return c.data.num_cameras; });
        num("data.num_domains", [](RunConfig& c) -> int& { return c.data.num_domains; });
        num("data.image_height", [](RunConfig& c) -> int& { return c.data.image_height; });
        num("data.image_width", [](RunConfig& c) -> int& { return c.data.image_width; });
        num("data.patch_size", [](RunConfig& c) -> int& { return c.data.patch_size; });
        num("data.seed", [](RunConfig& c) -> uint64_t& { return c.data.seed; });
        num("data.oversize_rate", [](RunConfig& c) -> double& { return c.data.oversize_rate; });
        num("data.oversplit_rate", [](RunConfig& c) -> double& { return c.data.oversplit_rate; });

        num("enc.embed_dim", [](RunConfig& c) -> int& { return c.enc.embed_dim; });
        num("enc.layers", [](RunConfig& c) -> int& { return c.enc.layers; });
        num("enc.heads", [](RunConfig& c) -> int& { return c.enc.heads; });
        num("enc.rmp_heads", [](RunConfig& c) -> int& { return c.enc.rmp_heads; });
        num("enc.feature_dim", [](RunConfig& c) -> int& { return c.enc.feature_dim; });
        num("enc.mask_threshold", [](RunConfig& c) -> double& { return c.enc.mask_threshold; });
        num("enc.m0_logit", [](RunConfig& c) -> double& { return c.enc.m0_logit; });

        num("model.num_prompts", [](RunConfig& c) -> int& { return c.num_prompts; });
        num("model.prompt_width", [](RunConfig& c) -> int& { return c.prompt_width; });
        num("model.prompt_init_std", [](RunConfig& c) -> double& { return c.prompt_init_std; });
        num("model.seed", [](RunConfig& c) -> uint64_t& { return c.model_seed; });

        num("train.stage1_epochs", [](RunConfig& c) -> int& { return c.train.stage1_epochs; });
        num("train.stage2_epochs", [](RunConfig& c) -> int& { return c.train.stage2_epochs; });
        num("train.stage1_lr", [](RunConfig& c) -> double& { return c.train.stage1_lr; });
        num("train.stage2_lr", [](RunConfig& c) -> double& { return c.train.stage2_lr; });
        num("train.rmp_lr_mult", [](RunConfig& c) -> double& { return c.train.rmp_lr_mult; });
        num("train.weight_decay", [](RunConfig& c) -> double& { return c.train.weight_decay; });
        num("train.batch_p", [](RunConfig& c) -> int& { return c.train.batch_p; });
        num("train.batch_k", [](RunConfig& c) -> int& { return c.train.batch_k; });
        num("train.warmup_frac", [](RunConfig& c) -> double& { return c.train.warmup_frac; });
        num("train.memory_momentum",
            [](RunConfig& c) -> double& { return c.train.memory_momentum; });
        num("train.tau", [](RunConfig& c) -> double& { return c.train.tau; });
        num("train.label_smooth", [](RunConfig& c) -> double& { return c.train.label_smooth; });
        num("train.dice_eps", [](RunConfig& c) -> double& { return c.train.dice_eps; });
        boolean("train.flip_aug", [](RunConfig& c) -> bool& { return c.train.flip_aug; });
        num("train.seed", [](RunConfig& c) -> uint64_t& { return c.train.seed; });

        str("granularities", [](RunConfig& c) -> std::string& { return c.granularities; });
        str("mask_source", [](RunConfig& c) -> std::string& { return c.mask_source; });
        str("box_source", [](RunConfig& c) -> std::string& { return c.box_source; });
        return t;
    }();
    return table;
}

}  // namespace

void apply_kv(RunConfig& c, const std::string& key, const std::string& value) {
    auto it = bindings().find(key);
    if (it == bindings().end()) throw std::invalid_argument("unknown config key: " + key);
    try {
        it->second.set(c, value);
    } catch (const std::exception& e) {
        throw std::invalid_argument("bad value for " + key + ": '" + value + "' (" + e.what() +
                                    ")");
    }
}

void apply_file(RunConfig& c, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        auto notspace = [](unsigned char ch) { return !std::isspace(ch); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": expected key = value");
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
        value.erase(value.begin(), std::find_if(value.begin(), value.end(), notspace));
        apply_kv(c, key, value);
    }
}

void apply_overrides(RunConfig& c, const std::vector<std::string>& kvs) {
    for (const auto& kv : kvs) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("override must be key=value: " + kv);
        apply_kv(c, kv.substr(0, eq), kv.substr(eq + 1));
    }
}

std::string serialize(const RunConfig& c) {
    std::ostringstream os;
    for (const auto& [key, b] : bindings()) os << key << " = " << b.get(c) << "\n";
    return os.str();
}

std::array<bool, 4> RunConfig::gran_flags() const {
    std::array<bool, 4> flags{false, false, false, false};
    for (char ch : granularities) {
        switch (ch) {
            case 'G': flags[0] = true; break;
            case 'H': flags[1] = true; break;
            case 'U': flags[2] = true; break;
            case 'L': flags[3] = true; break;
            default:
                throw std::invalid_argument("granularities: expected subset of GHUL, got '" +
                                            granularities + "'");
        }
    }
    if (!flags[0]) throw std::invalid_argument("granularities must include G");
    return flags;
}

model::ModelConfig RunConfig::model_config() const {
    model::ModelConfig mc;
    mc.enc = enc;
    mc.num_ids = data.num_ids;
    mc.num_prompts = num_prompts;
    mc.prompt_width = prompt_width;
    mc.prompt_init_std = prompt_init_std;
    mc.granularities = gran_flags();
    mc.init_seed = model_seed;
    return mc;
}

void finalize(RunConfig& c) {
    c.enc.image_height = c.data.image_height;
    c.enc.image_width = c.data.image_width;
    c.enc.patch_size = c.data.patch_size;
    if (c.enc.embed_dim % c.enc.heads != 0)
        throw std::invalid_argument("enc.embed_dim must be divisible by enc.heads");
    if (c.enc.embed_dim % c.enc.rmp_heads != 0)
        throw std::invalid_argument("enc.embed_dim must be divisible by enc.rmp_heads");
    if (c.prompt_width % 2 != 0)
        throw std::invalid_argument("model.prompt_width must be even");
    img::mask_source_from_name(c.mask_source);  // validates
    c.gran_flags();                             // validates
    c.enc.grid();                               // validates divisibility
    if (c.train.batch_k < 2)
        throw std::invalid_argument("train.batch_k must be >= 2 (batch norm needs it)");
}

}  // namespace mgreid::cfg
