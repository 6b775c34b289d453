#include "r3ds/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "r3ds/rng.hpp"

namespace r3ds {

const char* attn_variant_name(AttnVariant v) {
    return v == AttnVariant::V1BiasTable ? "v1-bias-table" : "v2-cosine";
}

AttnVariant attn_variant_from(const std::string& s) {
    if (s == "v1-bias-table" || s == "v1") return AttnVariant::V1BiasTable;
    if (s == "v2-cosine" || s == "v2") return AttnVariant::V2Cosine;
    throw ConfigError("unknown attention variant: " + s);
}

void EncoderConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
        throw ConfigError("encoder: image size " + std::to_string(image_size) +
                          " not divisible by patch size " + std::to_string(patch_size));
    if (embed_dim < 1) throw ConfigError("encoder: embed_dim must be positive");
    if (window < 1) throw ConfigError("encoder: window must be positive");
    if (mlp_ratio <= 0) throw ConfigError("encoder: mlp_ratio must be positive");
    if (drop_path < 0 || drop_path >= 1) throw ConfigError("encoder: drop_path must be in [0,1)");
    if (cpb_hidden < 1) throw ConfigError("encoder: cpb_hidden must be positive");
    if (base_grid() % 8 != 0)
        throw ConfigError("encoder: token grid " + std::to_string(base_grid()) +
                          " must be divisible by 8 (three downsamples)");
    for (int s = 0; s < 4; ++s) {
        if (depths[size_t(s)] < 1) throw ConfigError("encoder: stage depths must be >= 1");
        int g = grid_side(s), m = stage_window(s);
        if (g < 1 || g % m != 0)
            throw ConfigError("encoder: stage " + std::to_string(s) + " grid " + std::to_string(g) +
                              " not divisible by window " + std::to_string(m));
        if (heads[size_t(s)] < 1 || stage_channels(s) % heads[size_t(s)] != 0)
            throw ConfigError("encoder: stage " + std::to_string(s) + " channels " +
                              std::to_string(stage_channels(s)) + " not divisible by heads " +
                              std::to_string(heads[size_t(s)]));
    }
}

EncoderConfig EncoderConfig::preset(const std::string& name) {
    EncoderConfig c;
    if (name == "tiny") {
        c.depths = {1, 1, 1, 1};
    } else if (name == "desk") {
        c.depths = {1, 1, 2, 1};
    } else if (name == "paper") {
        c.image_size = 224;
        c.embed_dim = 128;
        c.depths = {2, 2, 18, 2};
        c.heads = {4, 8, 16, 32};
        c.window = 7;
        c.cpb_hidden = 512;
    } else {
        throw ConfigError("unknown encoder preset: " + name);
    }
    return c;
}

void DecoderConfig::validate() const {
    if (seed_side != 4)
        throw ConfigError("decoder: seed side must be 4 (three doublings reach 32), got " +
                          std::to_string(seed_side));
    if (seed_channels < 1) throw ConfigError("decoder: seed channels must be positive");
    for (int c : up_channels)
        if (c < 1) throw ConfigError("decoder: up-block channels must be positive");
}

DecoderConfig DecoderConfig::preset(const std::string& name) {
    DecoderConfig c;
    if (name == "tiny") {
        c.seed_channels = 32;
        c.up_channels = {16, 8, 4};
    } else if (name == "desk") {
        c.seed_channels = 64;
        c.up_channels = {32, 16, 8};
    } else if (name == "paper") {
        c.seed_channels = 168;
        c.up_channels = {84, 42, 21};
    } else {
        throw ConfigError("unknown decoder preset: " + name);
    }
    return c;
}

void TrainConfig::validate() const {
    if (lr <= 0 || beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1 || weight_decay < 0)
        throw ConfigError("train: hyperparameters out of range");
    if (epochs < 1 || batch_size < 1) throw ConfigError("train: epochs/batch_size must be positive");
    if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
}

TrainConfig TrainConfig::preset(const std::string& name) {
    TrainConfig c;
    if (name == "desk" || name == "tiny") {
        c.epochs = 50;
        c.batch_size = 4;
    } else if (name == "paper") {
        c.epochs = 300;
        c.batch_size = 16;
    } else {
        throw ConfigError("unknown train preset: " + name);
    }
    return c;
}

void FullConfig::validate() const {
    encoder.validate();
    decoder.validate();
    train.validate();
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

template <size_t N>
std::array<int, N> parse_int_list(const std::string& v, const std::string& where) {
    std::array<int, N> out{};
    std::stringstream ss(v);
    std::string tok;
    size_t i = 0;
    while (std::getline(ss, tok, ',')) {
        if (i >= N) throw ConfigError(where + ": expected " + std::to_string(N) + " values");
        out[i++] = std::stoi(trim(tok));
    }
    if (i != N) throw ConfigError(where + ": expected " + std::to_string(N) + " values");
    return out;
}

bool parse_bool(const std::string& v, const std::string& where) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(where + ": expected a boolean, got '" + v + "'");
}

}  // namespace

FullConfig parse_config_text(const std::string& text, const std::string& origin) {
    FullConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string where = origin + ":" + std::to_string(lineno);
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header");
            section = line.substr(1, line.size() - 2);
            if (section != "encoder" && section != "decoder" && section != "train")
                throw ConfigError(where + ": unknown section [" + section + "]");
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside any section");

        try {
            if (section == "encoder") {
                EncoderConfig& e = cfg.encoder;
                if (key == "preset") e = EncoderConfig::preset(val);
                else if (key == "image_size") e.image_size = std::stoi(val);
                else if (key == "patch_size") e.patch_size = std::stoi(val);
                else if (key == "embed_dim") e.embed_dim = std::stoi(val);
                else if (key == "depths") e.depths = parse_int_list<4>(val, where);
                else if (key == "heads") e.heads = parse_int_list<4>(val, where);
                else if (key == "window") e.window = std::stoi(val);
                else if (key == "mlp_ratio") e.mlp_ratio = std::stod(val);
                else if (key == "variant") e.variant = attn_variant_from(val);
                else if (key == "drop_path") e.drop_path = std::stod(val);
                else if (key == "cpb_hidden") e.cpb_hidden = std::stoi(val);
                else if (key == "disable_shift") e.disable_shift = parse_bool(val, where);
                else throw ConfigError(where + ": unknown key '" + key + "' in [encoder]");
            } else if (section == "decoder") {
                DecoderConfig& d = cfg.decoder;
                if (key == "preset") d = DecoderConfig::preset(val);
                else if (key == "seed_side") d.seed_side = std::stoi(val);
                else if (key == "seed_channels") d.seed_channels = std::stoi(val);
                else if (key == "up_channels") d.up_channels = parse_int_list<3>(val, where);
                else throw ConfigError(where + ": unknown key '" + key + "' in [decoder]");
            } else {
                TrainConfig& t = cfg.train;
                if (key == "preset") t = TrainConfig::preset(val);
                else if (key == "lr") t.lr = std::stod(val);
                else if (key == "beta1") t.beta1 = std::stod(val);
                else if (key == "beta2") t.beta2 = std::stod(val);
                else if (key == "weight_decay") t.weight_decay = std::stod(val);
                else if (key == "epochs") t.epochs = std::stoi(val);
                else if (key == "batch_size") t.batch_size = std::stoi(val);
                else if (key == "seed") t.seed = std::stoull(val);
                else if (key == "checkpoint_every") t.checkpoint_every = std::stoi(val);
                else if (key == "dataset") t.dataset = val;
                else throw ConfigError(where + ": unknown key '" + key + "' in [train]");
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError(where + ": cannot parse value '" + val + "' for key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

FullConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), path);
}

std::string canonical_config(const FullConfig& cfg) {
    char buf[256];
    std::ostringstream os;
    const EncoderConfig& e = cfg.encoder;
    os << "[encoder]\n";
    std::snprintf(buf, sizeof buf,
                  "image_size = %d\npatch_size = %d\nembed_dim = %d\n"
                  "depths = %d,%d,%d,%d\nheads = %d,%d,%d,%d\nwindow = %d\n"
                  "mlp_ratio = %.17g\nvariant = %s\ndrop_path = %.17g\ncpb_hidden = %d\n"
                  "disable_shift = %s\n",
                  e.image_size, e.patch_size, e.embed_dim, e.depths[0], e.depths[1], e.depths[2],
                  e.depths[3], e.heads[0], e.heads[1], e.heads[2], e.heads[3], e.window,
                  e.mlp_ratio, attn_variant_name(e.variant), e.drop_path, e.cpb_hidden,
                  e.disable_shift ? "true" : "false");
    os << buf;
    const DecoderConfig& d = cfg.decoder;
    os << "[decoder]\n";
    std::snprintf(buf, sizeof buf, "seed_side = %d\nseed_channels = %d\nup_channels = %d,%d,%d\n",
                  d.seed_side, d.seed_channels, d.up_channels[0], d.up_channels[1],
                  d.up_channels[2]);
    os << buf;
    const TrainConfig& t = cfg.train;
    os << "[train]\n";
    std::snprintf(buf, sizeof buf,
                  "lr = %.17g\nbeta1 = %.17g\nbeta2 = %.17g\nweight_decay = %.17g\n"
                  "epochs = %d\nbatch_size = %d\nseed = %llu\ncheckpoint_every = %d\n",
                  t.lr, t.beta1, t.beta2, t.weight_decay, t.epochs, t.batch_size,
                  static_cast<unsigned long long>(t.seed), t.checkpoint_every);
    os << buf;
    return os.str();
}

uint64_t config_fingerprint(const FullConfig& cfg) {
    return Rng::hash_label(canonical_config(cfg));
}

std::string fingerprint_hex(uint64_t fp) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
    return buf;
}

}  // namespace r3ds
