#include "volseg/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace volseg {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    return true;
}

long long parse_int(const std::string& tok, int line) {
    long long v = 0;
    const char* b = tok.data();
    const char* e = b + tok.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e)
        throw param_error("config line " + std::to_string(line) + ": bad integer '" + tok + "'");
    return v;
}

TomlValue parse_value(const std::string& raw, int line) {
    TomlValue v;
    if (raw.empty())
        throw param_error("config line " + std::to_string(line) + ": missing value");
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"')
            throw param_error("config line " + std::to_string(line) + ": unterminated string");
        v.kind = TomlValue::Kind::String;
        v.s = raw.substr(1, raw.size() - 2);
        return v;
    }
    if (raw == "true" || raw == "false") {
        v.kind = TomlValue::Kind::Bool;
        v.b = (raw == "true");
        return v;
    }
    if (raw.front() == '[') {
        if (raw.back() != ']')
            throw param_error("config line " + std::to_string(line) + ": unterminated array");
        v.kind = TomlValue::Kind::IntArray;
        std::string body = raw.substr(1, raw.size() - 2);
        std::stringstream ss(body);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty())
                throw param_error("config line " + std::to_string(line) + ": empty array element");
            v.arr.push_back(parse_int(item, line));
        }
        return v;
    }
    if (raw.find_first_of(".eE") != std::string::npos &&
        raw.find_first_not_of("+-0123456789.eE") == std::string::npos) {
        try {
            std::size_t used = 0;
            v.f = std::stod(raw, &used);
            if (used != raw.size()) throw std::invalid_argument(raw);
        } catch (const std::exception&) {
            throw param_error("config line " + std::to_string(line) + ": bad number '" + raw + "'");
        }
        v.kind = TomlValue::Kind::Float;
        return v;
    }
    v.kind = TomlValue::Kind::Int;
    v.i = parse_int(raw, line);
    return v;
}

// Typed accessors over one parsed section; absent table means all defaults.
struct Section {
    const std::map<std::string, TomlValue>* entries;
    std::string name;

    const TomlValue* find(const std::string& key) const {
        if (!entries) return nullptr;
        auto it = entries->find(key);
        return it == entries->end() ? nullptr : &it->second;
    }

    double number(const std::string& key, double fallback) const {
        const TomlValue* v = find(key);
        if (!v) return fallback;
        if (v->kind == TomlValue::Kind::Float) return v->f;
        if (v->kind == TomlValue::Kind::Int) return static_cast<double>(v->i);
        throw param_error("config: " + name + "." + key + " must be a number");
    }
    long long integer(const std::string& key, long long fallback) const {
        const TomlValue* v = find(key);
        if (!v) return fallback;
        if (v->kind != TomlValue::Kind::Int)
            throw param_error("config: " + name + "." + key + " must be an integer");
        return v->i;
    }
    bool boolean(const std::string& key, bool fallback) const {
        const TomlValue* v = find(key);
        if (!v) return fallback;
        if (v->kind != TomlValue::Kind::Bool)
            throw param_error("config: " + name + "." + key + " must be true or false");
        return v->b;
    }
    std::string text(const std::string& key, const std::string& fallback) const {
        const TomlValue* v = find(key);
        if (!v) return fallback;
        if (v->kind != TomlValue::Kind::String)
            throw param_error("config: " + name + "." + key + " must be a quoted string");
        return v->s;
    }
    template <std::size_t N>
    std::array<int, N> int_array(const std::string& key, std::array<int, N> fallback) const {
        const TomlValue* v = find(key);
        if (!v) return fallback;
        if (v->kind != TomlValue::Kind::IntArray || v->arr.size() != N)
            throw param_error("config: " + name + "." + key + " must be an array of " +
                              std::to_string(N) + " integers");
        std::array<int, N> out{};
        for (std::size_t i = 0; i < N; ++i) out[i] = static_cast<int>(v->arr[i]);
        return out;
    }
};

}  // namespace

TomlTable parse_toml(const std::string& text) {
    TomlTable table;
    std::string section;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        bool in_string = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_string = !in_string;
            if (line[i] == '#' && !in_string) {
                line = line.substr(0, i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw param_error("config line " + std::to_string(lineno) +
                                  ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!valid_key(section))
                throw param_error("config line " + std::to_string(lineno) +
                                  ": bad section name '" + section + "'");
            table[section];
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw param_error("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (!valid_key(key))
            throw param_error("config line " + std::to_string(lineno) + ": bad key '" + key + "'");
        if (table[section].count(key))
            throw param_error("config line " + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
        table[section][key] = parse_value(trim(line.substr(eq + 1)), lineno);
    }
    return table;
}

TomlTable load_toml(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw param_error("cannot open config file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_toml(ss.str());
}

void validate_pipeline_config(const PipelineConfig& cfg) {
    if (!(cfg.window.hu_max > cfg.window.hu_min))
        throw param_error("config: window must satisfy hu_max > hu_min");
    if (cfg.resample_target < 2 || cfg.low_target < 2)
        throw param_error("config: resample targets must be >= 2");
    validate_params(cfg.diffusion);
    if (cfg.sampler.fg_fraction < 0.0 || cfg.sampler.fg_fraction > 1.0)
        throw param_error("config: fg_fraction must lie in [0,1]");
    NetConfig net = cfg.net;
    net.p_full = cfg.sampler.p_full;
    net.p_low = cfg.sampler.p_low;
    validate_config(net);
    if (cfg.train.lr < 0.0) throw param_error("config: negative learning rate");
    if (cfg.train.epochs < 0) throw param_error("config: negative epoch count");
    if (cfg.train.batch_size < 1) throw param_error("config: batch_size must be >= 1");
    if (cfg.train.patches_per_volume < 1)
        throw param_error("config: patches_per_volume must be >= 1");
    validate_crf_params(cfg.crf.params);
    if (cfg.crf.block_edge < 1 ||
        static_cast<long long>(cfg.crf.block_edge) * cfg.crf.block_edge * cfg.crf.block_edge >
            40ll * 40 * 40)
        throw param_error("config: crf block edge outside (0, 40]");
}

PipelineConfig config_from_toml(const TomlTable& t) {
    static const std::map<std::string, std::vector<std::string>> known = {
        {"paths", {"input_dir", "output_dir"}},
        {"window", {"hu_min", "hu_max"}},
        {"preprocess", {"resample_target", "low_target"}},
        {"diffusion", {"sigma_s", "lambda_e", "b", "dt", "n_iters"}},
        {"sampler", {"p_full", "p_low", "fg_fraction", "seed"}},
        {"net", {"conv_channels", "kernel_edge", "fc_channels", "n_classes", "seed"}},
        {"train", {"lr", "epochs", "batch_size", "patches_per_volume", "seed"}},
        {"crf", {"enabled", "w_smooth", "theta_pos", "w_app", "theta_int",
                 "n_meanfield_iters", "block_edge"}},
    };
    for (const auto& [sec, entries] : t) {
        auto it = known.find(sec);
        if (it == known.end()) throw param_error("config: unknown section [" + sec + "]");
        for (const auto& [key, value] : entries) {
            (void)value;
            bool ok = false;
            for (const std::string& k : it->second) ok = ok || k == key;
            if (!ok) throw param_error("config: unknown key " + sec + "." + key);
        }
    }

    auto section = [&](const char* name) {
        auto it = t.find(name);
        return Section{it == t.end() ? nullptr : &it->second, name};
    };

    PipelineConfig cfg;
    Section paths = section("paths");
    cfg.input_dir = paths.text("input_dir", "");
    cfg.output_dir = paths.text("output_dir", "");

    Section win = section("window");
    cfg.window.hu_min = static_cast<float>(win.number("hu_min", cfg.window.hu_min));
    cfg.window.hu_max = static_cast<float>(win.number("hu_max", cfg.window.hu_max));

    Section pre = section("preprocess");
    cfg.resample_target = static_cast<int>(pre.integer("resample_target", cfg.resample_target));
    cfg.low_target = static_cast<int>(pre.integer("low_target", cfg.low_target));

    Section diff = section("diffusion");
    cfg.diffusion.sigma_s = diff.number("sigma_s", cfg.diffusion.sigma_s);
    cfg.diffusion.lambda_e = diff.number("lambda_e", cfg.diffusion.lambda_e);
    cfg.diffusion.b = diff.number("b", cfg.diffusion.b);
    cfg.diffusion.dt = diff.number("dt", cfg.diffusion.dt);
    cfg.diffusion.n_iters = static_cast<int>(diff.integer("n_iters", cfg.diffusion.n_iters));

    Section smp = section("sampler");
    cfg.sampler.p_full = static_cast<int>(smp.integer("p_full", cfg.sampler.p_full));
    cfg.sampler.p_low = static_cast<int>(smp.integer("p_low", cfg.sampler.p_low));
    cfg.sampler.fg_fraction = smp.number("fg_fraction", cfg.sampler.fg_fraction);
    cfg.sampler.seed = static_cast<std::uint64_t>(smp.integer("seed", 0));

    Section net = section("net");
    cfg.net.conv_channels = net.int_array<4>("conv_channels", cfg.net.conv_channels);
    cfg.net.kernel_edge = static_cast<int>(net.integer("kernel_edge", cfg.net.kernel_edge));
    cfg.net.fc_channels = net.int_array<2>("fc_channels", cfg.net.fc_channels);
    cfg.net.n_classes = static_cast<int>(net.integer("n_classes", cfg.net.n_classes));
    cfg.net_seed = static_cast<std::uint64_t>(net.integer("seed", 0));

    Section tr = section("train");
    cfg.train.lr = tr.number("lr", cfg.train.lr);
    cfg.train.epochs = static_cast<int>(tr.integer("epochs", cfg.train.epochs));
    cfg.train.batch_size = static_cast<int>(tr.integer("batch_size", cfg.train.batch_size));
    cfg.train.patches_per_volume =
        static_cast<int>(tr.integer("patches_per_volume", cfg.train.patches_per_volume));
    cfg.train.seed = static_cast<std::uint64_t>(tr.integer("seed", 0));

    Section crf = section("crf");
    cfg.crf.enabled = crf.boolean("enabled", cfg.crf.enabled);
    cfg.crf.params.w_smooth = crf.number("w_smooth", cfg.crf.params.w_smooth);
    cfg.crf.params.theta_pos = crf.number("theta_pos", cfg.crf.params.theta_pos);
    cfg.crf.params.w_app = crf.number("w_app", cfg.crf.params.w_app);
    cfg.crf.params.theta_int = crf.number("theta_int", cfg.crf.params.theta_int);
    cfg.crf.params.n_meanfield_iters =
        static_cast<int>(crf.integer("n_meanfield_iters", cfg.crf.params.n_meanfield_iters));
    cfg.crf.block_edge = static_cast<int>(crf.integer("block_edge", cfg.crf.block_edge));

    cfg.net.p_full = cfg.sampler.p_full;
    cfg.net.p_low = cfg.sampler.p_low;
    validate_pipeline_config(cfg);
    return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    return config_from_toml(load_toml(path));
}

nlohmann::json config_to_json(const PipelineConfig& cfg) {
    nlohmann::json j;
    j["paths"] = {{"input_dir", cfg.input_dir.string()},
                  {"output_dir", cfg.output_dir.string()}};
    j["window"] = {{"hu_min", cfg.window.hu_min}, {"hu_max", cfg.window.hu_max}};
    j["preprocess"] = {{"resample_target", cfg.resample_target},
                       {"low_target", cfg.low_target}};
    j["diffusion"] = {{"sigma_s", cfg.diffusion.sigma_s},
                      {"lambda_e", cfg.diffusion.lambda_e},
                      {"b", cfg.diffusion.b},
                      {"dt", cfg.diffusion.dt},
                      {"n_iters", cfg.diffusion.n_iters}};
    j["sampler"] = {{"p_full", cfg.sampler.p_full},
                    {"p_low", cfg.sampler.p_low},
                    {"fg_fraction", cfg.sampler.fg_fraction},
                    {"seed", cfg.sampler.seed}};
    j["net"] = {{"conv_channels", cfg.net.conv_channels},
                {"kernel_edge", cfg.net.kernel_edge},
                {"fc_channels", cfg.net.fc_channels},
                {"n_classes", cfg.net.n_classes},
                {"seed", cfg.net_seed}};
    j["train"] = {{"lr", cfg.train.lr},
                  {"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"patches_per_volume", cfg.train.patches_per_volume},
                  {"seed", cfg.train.seed}};
    j["crf"] = {{"enabled", cfg.crf.enabled},
                {"w_smooth", cfg.crf.params.w_smooth},
                {"theta_pos", cfg.crf.params.theta_pos},
                {"w_app", cfg.crf.params.w_app},
                {"theta_int", cfg.crf.params.theta_int},
                {"n_meanfield_iters", cfg.crf.params.n_meanfield_iters},
                {"block_edge", cfg.crf.block_edge}};
    return j;
}

}  // namespace volseg
