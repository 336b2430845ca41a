#include "smartedit/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "smartedit/errors.hpp"

namespace smartedit {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

using SectionMap = std::map<std::string, std::map<std::string, std::string>>;

SectionMap parse_ini(const std::string& text) {
    SectionMap out;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        out[section][key] = value;
    }
    return out;
}

double to_double(const std::string& section, const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config [" + section + "] " + key + ": not a number: '" + v + "'");
    }
}

int64_t to_int(const std::string& section, const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int64_t i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config [" + section + "] " + key + ": not an integer: '" + v + "'");
    }
}

bool to_bool(const std::string& section, const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config [" + section + "] " + key + ": not a boolean: '" + v + "'");
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
    double mix_sum = 0.0;
    for (double w : mix) {
        if (w < 0.0) throw ConfigError("mix weights must be non-negative");
        mix_sum += w;
    }
    if (mix_sum <= 0.0) throw ConfigError("mix weights must sum to a positive value");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (model.lm.d_model % model.lm.n_heads != 0)
        throw ConfigError("lm d_model must be divisible by n_heads");
    if (model.lm.lora_rank < 1) throw ConfigError("lora_rank must be >= 1 when LoRA is enabled");
    if (model.qformer.n_layers < 1 || model.qformer.n_queries < 1)
        throw ConfigError("qformer n_layers and n_queries must be >= 1");
    if (n_train < 1 || n_eval < 1) throw ConfigError("dataset sizes must be >= 1");
    if (image_size % 8 != 0) throw ConfigError("image_size must be divisible by the patch size");
    if (eval_steps < 1) throw ConfigError("eval_steps must be >= 1");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (model.cond_dropout < 0.0 || model.cond_dropout >= 1.0)
        throw ConfigError("cond_dropout must be in [0, 1)");
}

ExperimentConfig default_config(int stage) {
    ExperimentConfig cfg;
    cfg.stage = stage;
    if (stage == 1) {
        cfg.lr = 2e-4;
        cfg.weight_decay = 0.0;
        cfg.warmup_ratio = 0.0;
        cfg.steps = 2000;
    } else {
        cfg.lr = 1e-5;
        cfg.weight_decay = 0.0;
        cfg.warmup_ratio = 0.001;
        cfg.steps = 20000;
    }
    return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
    SectionMap ini = parse_ini(text);

    int stage = 2;
    if (ini.count("experiment") && ini["experiment"].count("stage"))
        stage = static_cast<int>(to_int("experiment", "stage", ini["experiment"]["stage"]));
    ExperimentConfig cfg = default_config(stage);

    for (const auto& [section, kv] : ini) {
        for (const auto& [key, value] : kv) {
            auto d = [&] { return to_double(section, key, value); };
            auto i = [&] { return to_int(section, key, value); };
            auto b = [&] { return to_bool(section, key, value); };
            if (section == "experiment") {
                if (key == "global_seed") cfg.global_seed = static_cast<uint64_t>(i());
                else if (key == "stage") cfg.stage = static_cast<int>(i());
                else if (key == "interaction") cfg.model.variant = parse_variant(value);
                else if (key == "out_dir") cfg.out_dir = value;
                else if (key == "data_dir") cfg.data_dir = value;
                else if (key == "stage1_checkpoint") cfg.stage1_checkpoint = value;
                else if (key == "checkpoint_every") cfg.checkpoint_every = static_cast<int>(i());
                else if (key == "eval_steps") cfg.eval_steps = static_cast<int>(i());
                else if (key == "cfg_text") cfg.cfg_text = d();
                else if (key == "cfg_image") cfg.cfg_image = d();
                else if (key == "cond_dropout") cfg.model.cond_dropout = d();
                else if (key == "separate_image_encoder") cfg.model.separate_image_encoder = b();
                else if (key == "stage1_corpus_size") cfg.stage1_corpus_size = static_cast<int>(i());
                else throw ConfigError("unknown key [experiment] " + key);
            } else if (section == "lm") {
                if (key == "d_model") cfg.model.lm.d_model = static_cast<int>(i());
                else if (key == "n_layers") cfg.model.lm.n_layers = static_cast<int>(i());
                else if (key == "n_heads") cfg.model.lm.n_heads = static_cast<int>(i());
                else if (key == "context") cfg.model.lm.context = static_cast<int>(i());
                else if (key == "base_vocab") cfg.model.lm.base_vocab = static_cast<int>(i());
                else if (key == "img_tokens") cfg.model.lm.img_tokens = static_cast<int>(i());
                else if (key == "lora_rank") cfg.model.lm.lora_rank = static_cast<int>(i());
                else if (key == "lora_alpha") cfg.model.lm.lora_alpha = d();
                else if (key == "patch") cfg.model.lm.patch = static_cast<int>(i());
                else throw ConfigError("unknown key [lm] " + key);
            } else if (section == "qformer") {
                if (key == "n_layers") cfg.model.qformer.n_layers = static_cast<int>(i());
                else if (key == "n_queries") cfg.model.qformer.n_queries = static_cast<int>(i());
                else if (key == "n_heads") cfg.model.qformer.n_heads = static_cast<int>(i());
                else throw ConfigError("unknown key [qformer] " + key);
            } else if (section == "unet") {
                if (key == "base_channels") cfg.model.unet.base_channels = static_cast<int>(i());
                else if (key == "depth") cfg.model.unet.depth = static_cast<int>(i());
                else if (key == "n_heads") cfg.model.unet.n_heads = static_cast<int>(i());
                else if (key == "time_dim") cfg.model.unet.time_dim = static_cast<int>(i());
                else throw ConfigError("unknown key [unet] " + key);
            } else if (section == "data") {
                if (key == "n_train") cfg.n_train = static_cast<int>(i());
                else if (key == "n_eval") cfg.n_eval = static_cast<int>(i());
                else if (key == "image_size") cfg.image_size = static_cast<int>(i());
                else if (key == "mix_plain_edit") cfg.mix[0] = d();
                else if (key == "mix_segmentation") cfg.mix[1] = d();
                else if (key == "mix_understanding") cfg.mix[2] = d();
                else if (key == "mix_reasoning") cfg.mix[3] = d();
                else throw ConfigError("unknown key [data] " + key);
            } else if (section == "optimizer") {
                if (key == "lr") cfg.lr = d();
                else if (key == "weight_decay") cfg.weight_decay = d();
                else if (key == "warmup_ratio") cfg.warmup_ratio = d();
                else if (key == "steps") cfg.steps = i();
                else if (key == "batch") cfg.batch = static_cast<int>(i());
                else throw ConfigError("unknown key [optimizer] " + key);
            } else if (section == "loss") {
                if (key == "lm_weight") cfg.lm_weight = d();
                else if (key == "diffusion_weight") cfg.diffusion_weight = d();
                else if (key == "stage1_mse_weight") cfg.stage1_mse_weight = d();
                else throw ConfigError("unknown key [loss] " + key);
            } else {
                throw ConfigError("unknown config section [" + section + "]");
            }
        }
    }
    cfg.model.lm_loss_weight = cfg.lm_weight;
    cfg.model.diffusion_loss_weight = cfg.diffusion_weight;
    // qformer/unet widths follow the LM unless a future key overrides them
    cfg.model.qformer.d_model = cfg.model.lm.d_model;
    cfg.model.unet.cross_attn_dim = cfg.model.lm.d_model;
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string s;
    s += "[experiment]\n";
    s += "global_seed = " + std::to_string(cfg.global_seed) + "\n";
    s += "stage = " + std::to_string(cfg.stage) + "\n";
    s += "interaction = " + variant_name(cfg.model.variant) + "\n";
    s += "out_dir = " + cfg.out_dir + "\n";
    s += "data_dir = " + cfg.data_dir + "\n";
    s += "stage1_checkpoint = " + cfg.stage1_checkpoint + "\n";
    s += "checkpoint_every = " + std::to_string(cfg.checkpoint_every) + "\n";
    s += "eval_steps = " + std::to_string(cfg.eval_steps) + "\n";
    s += "cfg_text = " + num(cfg.cfg_text) + "\n";
    s += "cfg_image = " + num(cfg.cfg_image) + "\n";
    s += "cond_dropout = " + num(cfg.model.cond_dropout) + "\n";
    s += std::string("separate_image_encoder = ") +
         (cfg.model.separate_image_encoder ? "true" : "false") + "\n";
    s += "stage1_corpus_size = " + std::to_string(cfg.stage1_corpus_size) + "\n";
    s += "[lm]\n";
    s += "d_model = " + std::to_string(cfg.model.lm.d_model) + "\n";
    s += "n_layers = " + std::to_string(cfg.model.lm.n_layers) + "\n";
    s += "n_heads = " + std::to_string(cfg.model.lm.n_heads) + "\n";
    s += "context = " + std::to_string(cfg.model.lm.context) + "\n";
    s += "base_vocab = " + std::to_string(cfg.model.lm.base_vocab) + "\n";
    s += "img_tokens = " + std::to_string(cfg.model.lm.img_tokens) + "\n";
    s += "lora_rank = " + std::to_string(cfg.model.lm.lora_rank) + "\n";
    s += "lora_alpha = " + num(cfg.model.lm.lora_alpha) + "\n";
    s += "patch = " + std::to_string(cfg.model.lm.patch) + "\n";
    s += "[qformer]\n";
    s += "n_layers = " + std::to_string(cfg.model.qformer.n_layers) + "\n";
    s += "n_queries = " + std::to_string(cfg.model.qformer.n_queries) + "\n";
    s += "n_heads = " + std::to_string(cfg.model.qformer.n_heads) + "\n";
    s += "[unet]\n";
    s += "base_channels = " + std::to_string(cfg.model.unet.base_channels) + "\n";
    s += "depth = " + std::to_string(cfg.model.unet.depth) + "\n";
    s += "n_heads = " + std::to_string(cfg.model.unet.n_heads) + "\n";
    s += "time_dim = " + std::to_string(cfg.model.unet.time_dim) + "\n";
    s += "[data]\n";
    s += "n_train = " + std::to_string(cfg.n_train) + "\n";
    s += "n_eval = " + std::to_string(cfg.n_eval) + "\n";
    s += "image_size = " + std::to_string(cfg.image_size) + "\n";
    s += "mix_plain_edit = " + num(cfg.mix[0]) + "\n";
    s += "mix_segmentation = " + num(cfg.mix[1]) + "\n";
    s += "mix_understanding = " + num(cfg.mix[2]) + "\n";
    s += "mix_reasoning = " + num(cfg.mix[3]) + "\n";
    s += "[optimizer]\n";
    s += "lr = " + num(cfg.lr) + "\n";
    s += "weight_decay = " + num(cfg.weight_decay) + "\n";
    s += "warmup_ratio = " + num(cfg.warmup_ratio) + "\n";
    s += "steps = " + std::to_string(cfg.steps) + "\n";
    s += "batch = " + std::to_string(cfg.batch) + "\n";
    s += "[loss]\n";
    s += "lm_weight = " + num(cfg.lm_weight) + "\n";
    s += "diffusion_weight = " + num(cfg.diffusion_weight) + "\n";
    s += "stage1_mse_weight = " + num(cfg.stage1_mse_weight) + "\n";
    return s;
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string s = serialize_config(cfg);
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace smartedit
