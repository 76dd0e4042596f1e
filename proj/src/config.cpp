#include "aml/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "aml/errors.hpp"
#include "aml/util.hpp"

namespace aml {
namespace {

// Every key the pipeline understands. gen.* is the generator spec namespace,
// shared with the `generate` subcommand.
const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "seed",
        "ingest.timestamp_format",
        "ingest.lenient",
        "ingest.drop_self_transactions",
        "split.train",
        "split.validation",
        "split.test",
        "split.folds",
        "features.pagerank.damping",
        "features.pagerank.tol",
        "features.pagerank.max_iter",
        "features.export",
        "model.encoder_layers",
        "model.encoder_channels",
        "model.lstm_units",
        "model.classifier_hidden",
        "model.max_sequence_length",
        "model.dropout",
        "loss",
        "mcc.w_tp",
        "mcc.w_fp",
        "mcc.w_tn",
        "mcc.w_fn",
        "focal.alpha",
        "focal.gamma",
        "cross_entropy.w_pos",
        "cross_entropy.w_neg",
        "train.learning_rate",
        "train.batch_size",
        "train.patience",
        "train.max_epochs",
        "train.selection_metric",
        "train.adam.beta1",
        "train.adam.beta2",
        "train.adam.epsilon",
        "eval.threshold",
        "gen.num_accounts",
        "gen.num_background_tx",
        "gen.launderer_fraction",
        "gen.num_steps",
        "gen.seed",
        "gen.decoys_per_motif",
        "gen.motif.fan_in.count",
        "gen.motif.fan_in.min_size",
        "gen.motif.fan_in.max_size",
        "gen.motif.fan_out.count",
        "gen.motif.fan_out.min_size",
        "gen.motif.fan_out.max_size",
        "gen.motif.cycle.count",
        "gen.motif.cycle.min_size",
        "gen.motif.cycle.max_size",
        "gen.motif.scatter_gather.count",
        "gen.motif.scatter_gather.min_size",
        "gen.motif.scatter_gather.max_size",
    };
    return keys;
}

bool free_form_key(const std::string& key) {
    return key.rfind("ingest.col.", 0) == 0;
}

}  // namespace

Config Config::from_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
    Config cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        cfg.values_[key] = value;
    }
    return cfg;
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

bool Config::has(const std::string& key) const { return values_.count(key) != 0; }

std::string Config::get_string(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
        std::size_t pos = 0;
        std::int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not an integer: " + it->second);
    }
}

double Config::get_double(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
        std::size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not a number: " + it->second);
    }
}

bool Config::get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': not a boolean: " + v);
}

std::vector<std::int64_t> Config::get_int_list(const std::string& key,
                                               const std::vector<std::int64_t>& def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<std::int64_t> out;
    for (const std::string& part : split_string(it->second, ',')) {
        std::string p = trim(part);
        if (p.empty()) continue;
        try {
            out.push_back(std::stoll(p));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': not an integer list: " + it->second);
        }
    }
    if (out.empty())
        throw ConfigError("config key '" + key + "': empty list");
    return out;
}

void Config::validate_known_keys() const {
    std::string unknown;
    for (const auto& [key, _] : values_) {
        if (known_keys().count(key) == 0 && !free_form_key(key)) {
            if (!unknown.empty()) unknown += ", ";
            unknown += key;
        }
    }
    if (!unknown.empty()) throw ConfigError("unknown config key(s): " + unknown);
}

std::string Config::serialize() const {
    std::ostringstream os;
    for (const auto& [key, value] : values_) os << key << " = " << value << "\n";
    return os.str();
}

void Config::save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write config file: " + path.string());
    os << serialize();
}

}  // namespace aml
