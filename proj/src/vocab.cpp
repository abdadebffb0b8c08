#include "canon/vocab.hpp"

#include <sstream>

namespace canon {

namespace {

std::vector<std::string> cross(const std::vector<std::string>& a,
                               const std::vector<std::string>& b) {
    std::vector<std::string> out;
    for (const auto& x : a)
        for (const auto& y : b) out.push_back(x + y);
    return out;
}

}  // namespace

Vocab::Vocab() {
    entities_ = cross({"ar", "bel", "cor", "dun", "el", "fyn", "gor", "hal"},
                      {"via", "nor", "dra", "mek", "tas"});
    capitals_ = cross({"port", "quel", "bram", "cas", "del", "mar", "gil", "har"},
                      {"ton", "wick", "ford", "dale", "burg"});
    groups_ = cross({"grum", "tin", "hol", "ves"}, {"blers", "kers", "ners", "lors"});
    bad_attrs_ = {"grouchy", "stingy", "sloppy", "rowdy", "sullen", "brash", "timid", "vain",
                  "greedy", "lazy", "crass", "bitter", "fickle", "smug", "gruff", "dour"};
    roles_ = {"nurse",  "pilot",  "baker",  "smith",  "clerk",  "guard",  "tailor", "farmer",
              "singer", "weaver", "miller", "hunter", "scribe", "mason",  "potter", "herder"};
    pronouns_ = {"hana", "bolo"};
    subjects_ = {"pilots", "bakers",  "guards", "farmers", "weavers", "hunters",
                 "masons", "clerks",  "smiths", "scribes", "potters", "millers"};
    verb_base_ = {"screen", "file", "stack", "weigh", "pack", "sort",
                  "mark",   "scan", "fold",  "trim",  "bind", "haul"};
    verb_sform_ = {"screens", "files", "stacks", "weighs", "packs", "sorts",
                   "marks",   "scans", "folds",  "trims",  "binds", "hauls"};
    objects_ = {"forms", "grain", "crates", "wool", "maps",  "nets",
                "bricks", "jars", "logs",   "rope", "sacks", "tiles"};
    trait_adjs_ = {"iron", "silver", "amber", "copper"};
    trait_nouns_ = {"mines", "rivers", "forests", "cliffs", "gardens", "towers"};
    group_defs_ = {"folk", "who", "mend", "pots", "trade", "tools", "keep", "books",
                   "tend", "herds", "carve", "stone", "brew", "tea", "dig", "wells"};
    const std::vector<std::string> filler = {
        "the",     "capital", "of",     "is",     "known",     "for",    "its",    "an",
        "aspect",  "most",    "can",    "be",     "definition", "famous", "city",  "called",
        "named",   "travelers", "often", "visit", "praise",    "people", "said",   "then",
        "came",    "in",      "and",    "a",      "near",      "house",  "old",    "new",
        "at",      "night",   "rest",   "they",   "to",        "with",   "over",   "under",
        "land",    "far",     "away",   "very",   "morning",   "market", "road",   "river",
        "bridge",  "tower",   "song",   "story"};

    auto append = [&](const std::vector<std::string>& v) {
        for (const auto& w : v) words_.push_back(w);
    };
    append(entities_);
    append(capitals_);
    append(groups_);
    append(bad_attrs_);
    append(roles_);
    append(pronouns_);
    append(subjects_);
    append(verb_base_);
    append(verb_sform_);
    append(objects_);
    append(trait_adjs_);
    append(trait_nouns_);
    append(group_defs_);
    append(filler);

    for (std::size_t i = 0; i < words_.size(); ++i) {
        auto [it, inserted] = index_.emplace(words_[i], long(i));
        (void)it;
        if (!inserted) throw Error("vocabulary contains a duplicate word: " + words_[i]);
    }
    if (words_.size() != 256)
        throw Error("vocabulary size is " + std::to_string(words_.size()) + ", expected 256");
}

const Vocab& Vocab::get() {
    static const Vocab v;
    return v;
}

long Vocab::id(const std::string& w) const {
    auto it = index_.find(w);
    if (it == index_.end()) throw VocabError("unknown word: '" + w + "'");
    return it->second;
}

const std::string& Vocab::word(long id) const {
    if (id < 0 || id >= size()) throw IndexError("word id out of range");
    return words_[std::size_t(id)];
}

std::vector<long> Vocab::tokenize(const std::string& text) const {
    std::vector<long> out;
    if (text.empty()) return out;
    std::size_t start = 0;
    while (true) {
        std::size_t space = text.find(' ', start);
        const std::string w = text.substr(start, space == std::string::npos
                                                     ? std::string::npos
                                                     : space - start);
        out.push_back(id(w));
        if (space == std::string::npos) break;
        start = space + 1;
    }
    return out;
}

std::string Vocab::detokenize(std::span<const long> ids) const {
    std::ostringstream os;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) os << ' ';
        os << word(ids[i]);
    }
    return os.str();
}

}  // namespace canon
