#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "canon/errors.hpp"

namespace canon {

// Closed word-level vocabulary of exactly 256 words. The word list is fixed
// in code so token ids are stable across runs and checkpoints; data files
// store raw strings and tokenize at load time.
class Vocab {
  public:
    static const Vocab& get();

    long size() const { return long(words_.size()); }
    bool contains(const std::string& w) const { return index_.count(w) > 0; }
    long id(const std::string& w) const;
    const std::string& word(long id) const;

    // Words separated by single spaces; "" maps to the empty sequence.
    std::vector<long> tokenize(const std::string& text) const;
    std::string detokenize(std::span<const long> ids) const;

    // Category views used by the synthetic task generator.
    const std::vector<std::string>& entities() const { return entities_; }
    const std::vector<std::string>& capitals() const { return capitals_; }
    const std::vector<std::string>& groups() const { return groups_; }
    const std::vector<std::string>& bad_attrs() const { return bad_attrs_; }
    const std::vector<std::string>& roles() const { return roles_; }
    const std::vector<std::string>& pronouns() const { return pronouns_; }
    const std::vector<std::string>& subjects() const { return subjects_; }
    const std::vector<std::string>& verb_base() const { return verb_base_; }
    const std::vector<std::string>& verb_sform() const { return verb_sform_; }
    const std::vector<std::string>& objects() const { return objects_; }
    const std::vector<std::string>& trait_adjs() const { return trait_adjs_; }
    const std::vector<std::string>& trait_nouns() const { return trait_nouns_; }
    const std::vector<std::string>& group_defs() const { return group_defs_; }

  private:
    Vocab();
    std::vector<std::string> words_;
    std::unordered_map<std::string, long> index_;
    std::vector<std::string> entities_, capitals_, groups_, bad_attrs_, roles_, pronouns_,
        subjects_, verb_base_, verb_sform_, objects_, trait_adjs_, trait_nouns_, group_defs_;
};

}  // namespace canon
