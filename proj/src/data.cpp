#include "canon/data.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "canon/vocab.hpp"

namespace canon {

const char* loss_kind_name(LossKind k) {
    switch (k) {
        case LossKind::NllGood: return "nll_good";
        case LossKind::SuppressBad: return "suppress_bad";
        case LossKind::AbsBalance: return "abs_balance";
        case LossKind::PreferAOverB: return "prefer_a_over_b";
    }
    throw SchemaError("unknown loss kind value");
}

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "nll_good") return LossKind::NllGood;
    if (name == "suppress_bad") return LossKind::SuppressBad;
    if (name == "abs_balance") return LossKind::AbsBalance;
    if (name == "prefer_a_over_b") return LossKind::PreferAOverB;
    throw SchemaError("unknown loss kind: " + name);
}

void CanonicalExample::validate() const {
    if (!y_a && !y_b) throw SchemaError("example needs at least one continuation");
    switch (loss) {
        case LossKind::NllGood:
            if (!y_a) throw SchemaError("nll_good requires y_a");
            break;
        case LossKind::SuppressBad:
            if (!y_b) throw SchemaError("suppress_bad requires y_b");
            break;
        case LossKind::AbsBalance:
            if (!y_a || !y_b) throw SchemaError("abs_balance requires both continuations");
            break;
        case LossKind::PreferAOverB:
            if (!y_a || !y_b) throw SchemaError("prefer_a_over_b requires both continuations");
            break;
    }
    if (y_a && y_a->empty()) throw SchemaError("y_a present but empty");
    if (y_b && y_b->empty()) throw SchemaError("y_b present but empty");
    if (prefix.empty()) throw SchemaError("example has an empty prefix");
}

void HardNegative::validate() const {
    if (y.empty()) throw SchemaError("hard negative needs a non-empty completion");
    if (prefix.empty()) throw SchemaError("hard negative has an empty prefix");
}

void TaskBundle::validate(long max_len) const {
    const Vocab& vocab = Vocab::get();
    auto check_len = [&](const std::string& prefix, const std::optional<std::string>& y) {
        long n = long(vocab.tokenize(prefix).size());
        if (y) n += long(vocab.tokenize(*y).size());
        if (n > max_len) throw SchemaError("example exceeds the model's max length");
    };
    for (const auto& ex : train) {
        ex.validate();
        check_len(ex.prefix, ex.y_a);
        check_len(ex.prefix, ex.y_b);
    }
    for (const auto& ex : eval) {
        ex.validate();
        check_len(ex.prefix, ex.y_a);
        check_len(ex.prefix, ex.y_b);
    }
    for (const auto& h : hard_neg) {
        h.validate();
        check_len(h.prefix, h.y);
    }
}

void CorpusSplit::validate() const {
    std::set<std::string> r(reg.begin(), reg.end());
    for (const auto& g : ball_ref)
        if (r.count(g)) throw CorpusError("regularization and ball corpora overlap: " + g);
}

namespace {

nlohmann::json example_to_json(const CanonicalExample& ex) {
    nlohmann::json j;
    j["prefix"] = ex.prefix;
    j["y_a"] = ex.y_a ? nlohmann::json(*ex.y_a) : nlohmann::json(nullptr);
    j["y_b"] = ex.y_b ? nlohmann::json(*ex.y_b) : nlohmann::json(nullptr);
    j["loss"] = loss_kind_name(ex.loss);
    j["delta"] = ex.delta;
    return j;
}

CanonicalExample example_from_json(const nlohmann::json& j) {
    CanonicalExample ex;
    try {
        ex.prefix = j.at("prefix").get<std::string>();
        if (j.contains("y_a") && !j.at("y_a").is_null())
            ex.y_a = j.at("y_a").get<std::string>();
        if (j.contains("y_b") && !j.at("y_b").is_null())
            ex.y_b = j.at("y_b").get<std::string>();
        ex.loss = loss_kind_from_name(j.at("loss").get<std::string>());
        ex.delta = j.at("delta").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad example record: ") + e.what());
    }
    ex.validate();
    return ex;
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<nlohmann::json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(path + ": bad json line: " + e.what());
        }
    }
    return out;
}

void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& r : records) out << r.dump() << "\n";
}

}  // namespace

TaskBundle load_bundle(const std::string& dir, const std::string& name) {
    namespace fs = std::filesystem;
    for (const char* f : {"train.jsonl", "eval.jsonl", "hardneg.jsonl"})
        if (!fs::exists(fs::path(dir) / f))
            throw IoError("bundle file missing: " + (fs::path(dir) / f).string());

    TaskBundle b;
    b.name = name.empty() ? fs::path(dir).filename().string() : name;
    for (const auto& j : read_jsonl((fs::path(dir) / "train.jsonl").string()))
        b.train.push_back(example_from_json(j));
    for (const auto& j : read_jsonl((fs::path(dir) / "eval.jsonl").string()))
        b.eval.push_back(example_from_json(j));
    for (const auto& j : read_jsonl((fs::path(dir) / "hardneg.jsonl").string())) {
        HardNegative h;
        try {
            h.prefix = j.at("prefix").get<std::string>();
            h.y = j.at("y").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("bad hard-negative record: ") + e.what());
        }
        h.validate();
        b.hard_neg.push_back(std::move(h));
    }
    return b;
}

void save_bundle(const std::string& dir, const TaskBundle& bundle) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<nlohmann::json> train, eval, hard;
    for (const auto& ex : bundle.train) train.push_back(example_to_json(ex));
    for (const auto& ex : bundle.eval) eval.push_back(example_to_json(ex));
    for (const auto& h : bundle.hard_neg)
        hard.push_back({{"prefix", h.prefix}, {"y", h.y}});
    write_jsonl((fs::path(dir) / "train.jsonl").string(), train);
    write_jsonl((fs::path(dir) / "eval.jsonl").string(), eval);
    write_jsonl((fs::path(dir) / "hardneg.jsonl").string(), hard);
}

std::vector<std::string> load_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(line);
    return out;
}

void save_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& l : lines) out << l << "\n";
}

}  // namespace canon
