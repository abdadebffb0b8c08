#include "canon/synth.hpp"

#include <algorithm>
#include <set>

#include "canon/rng.hpp"
#include "canon/vocab.hpp"

namespace canon {

const std::vector<std::string> kTaskNames = {"fact_recall", "suppression", "pair_balance",
                                             "preference"};

namespace {

constexpr double kDeltaFact = 1.6094379124341003;     // -log 0.2
constexpr double kDeltaSupp = -6.907755278982137;     // log 0.001
constexpr double kDeltaBal = 0.4054651081081644;      // log 1.5
constexpr double kDeltaPref = -2.7725887222397812;    // -log 16

template <typename T>
std::vector<T> shuffled(std::vector<T> v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[std::size_t(rng.below(i))]);
    return v;
}

}  // namespace

void GenSizes::validate() const {
    if (fact_train < 1 || fact_train > 12)
        throw ConfigError("fact_train must be in [1, 12]");
    if (fact_hardneg < 1 || fact_hardneg > 16)
        throw ConfigError("fact_hardneg must be in [1, 16]");
    if (supp_train < 1 || supp_train > 6) throw ConfigError("supp_train must be in [1, 6]");
    if (bal_train < 1 || bal_train > 6) throw ConfigError("bal_train must be in [1, 6]");
    if (pref_train < 1 || pref_train > 6) throw ConfigError("pref_train must be in [1, 6]");
    if (reg_sentences < 1 || ball_sentences < 1)
        throw ConfigError("corpus sizes must be positive");
    if (pretrain_extra < 0) throw ConfigError("pretrain_extra must be non-negative");
}

nlohmann::json GenSizes::to_json() const {
    return {{"fact_train", fact_train},       {"fact_hardneg", fact_hardneg},
            {"supp_train", supp_train},       {"bal_train", bal_train},
            {"pref_train", pref_train},       {"reg_sentences", reg_sentences},
            {"ball_sentences", ball_sentences}, {"pretrain_extra", pretrain_extra}};
}

GenSizes GenSizes::from_json(const nlohmann::json& j) {
    GenSizes s;
    auto get = [&](const char* key, long& field) {
        if (j.contains(key)) field = j.at(key).get<long>();
    };
    get("fact_train", s.fact_train);
    get("fact_hardneg", s.fact_hardneg);
    get("supp_train", s.supp_train);
    get("bal_train", s.bal_train);
    get("pref_train", s.pref_train);
    get("reg_sentences", s.reg_sentences);
    get("ball_sentences", s.ball_sentences);
    get("pretrain_extra", s.pretrain_extra);
    s.validate();
    return s;
}

SynthData generate_synthetic_tasks(std::uint64_t seed, const GenSizes& sizes) {
    sizes.validate();
    const Vocab& vocab = Vocab::get();
    Rng rng(seed);

    // --- world assignments ---------------------------------------------
    const long n_ent = long(vocab.entities().size());
    std::vector<long> ent_order(std::size_t(n_ent));
    for (long i = 0; i < n_ent; ++i) ent_order[std::size_t(i)] = i;
    ent_order = shuffled(ent_order, rng);

    std::vector<long> cap_perm = shuffled(ent_order, rng);  // entity -> capital id
    std::vector<long> capital_of(std::size_t(n_ent));
    for (long i = 0; i < n_ent; ++i) capital_of[std::size_t(ent_order[std::size_t(i)])] =
        cap_perm[std::size_t(i)];

    auto ent = [&](long i) { return vocab.entities()[std::size_t(ent_order[std::size_t(i)])]; };
    auto cap = [&](long i) {
        return vocab.capitals()[std::size_t(capital_of[std::size_t(ent_order[std::size_t(i)])])];
    };
    auto trait = [&](long i) {
        const long e = ent_order[std::size_t(i)];
        return vocab.trait_adjs()[std::size_t(e % 4)] + " " +
               vocab.trait_nouns()[std::size_t(e % 6)];
    };
    // entity slots: [0,12) val edits, [12,24) test edits, [24,40) pretrain-known
    const long kKnown0 = 24;

    std::vector<long> grp_order(16), role_order(16), subj_order(12), verb_order(12);
    for (long i = 0; i < 16; ++i) grp_order[std::size_t(i)] = i;
    for (long i = 0; i < 16; ++i) role_order[std::size_t(i)] = i;
    for (long i = 0; i < 12; ++i) subj_order[std::size_t(i)] = i;
    for (long i = 0; i < 12; ++i) verb_order[std::size_t(i)] = i;
    grp_order = shuffled(grp_order, rng);
    role_order = shuffled(role_order, rng);
    subj_order = shuffled(subj_order, rng);
    verb_order = shuffled(verb_order, rng);

    std::vector<long> attr_perm = shuffled(grp_order, rng);  // group -> bad attr
    auto grp = [&](long i) { return vocab.groups()[std::size_t(grp_order[std::size_t(i)])]; };
    auto bad = [&](long i) {
        return vocab.bad_attrs()[std::size_t(attr_perm[std::size_t(i)])];
    };
    // fixed word pairs for definitions
    static const std::vector<std::pair<const char*, const char*>> def_pairs = {
        {"mend", "pots"}, {"trade", "tools"}, {"keep", "books"}, {"tend", "herds"},
        {"carve", "stone"}, {"brew", "tea"}, {"dig", "wells"}};
    auto def_of = [&](long i) {
        const auto& p = def_pairs[std::size_t(grp_order[std::size_t(i)] % long(def_pairs.size()))];
        return std::string("folk who ") + p.first + " " + p.second;
    };

    auto role = [&](long i) { return vocab.roles()[std::size_t(role_order[std::size_t(i)])]; };
    // first half of the shuffled role order leans hana, second half bolo
    auto major_pronoun = [&](long i) {
        return i % 2 == 0 ? vocab.pronouns()[0] : vocab.pronouns()[1];
    };
    auto minor_pronoun = [&](long i) {
        return i % 2 == 0 ? vocab.pronouns()[1] : vocab.pronouns()[0];
    };

    auto subj = [&](long i) {
        return vocab.subjects()[std::size_t(subj_order[std::size_t(i)])];
    };
    auto verb = [&](long i) {
        return vocab.verb_base()[std::size_t(verb_order[std::size_t(i)])];
    };
    auto verbs = [&](long i) {
        return vocab.verb_sform()[std::size_t(verb_order[std::size_t(i)])];
    };
    auto obj = [&](long i) {
        return vocab.objects()[std::size_t(subj_order[std::size_t(i)])];
    };

    // --- bundles ---------------------------------------------------------
    auto fact_bundle = [&](long lo, long count, const std::string& split) {
        TaskBundle b;
        b.name = "fact_recall";
        b.provenance = split;
        for (long i = lo; i < lo + count; ++i) {
            CanonicalExample tr;
            tr.prefix = "the capital of " + ent(i) + " is";
            tr.y_a = cap(i);
            tr.loss = LossKind::NllGood;
            tr.delta = kDeltaFact;
            b.train.push_back(tr);

            for (const std::string& pre :
                 {"travelers often praise the famous capital of " + ent(i) + " called",
                  "people often visit the capital city of " + ent(i) + " named"}) {
                CanonicalExample ev;
                ev.prefix = pre;
                ev.y_a = cap(i);
                ev.loss = LossKind::NllGood;
                ev.delta = kDeltaFact;
                b.eval.push_back(ev);
            }
        }
        for (long i = 0; i < sizes.fact_hardneg; ++i) {
            const long e = kKnown0 + i;
            HardNegative h;
            h.prefix = (i % 2 == 0)
                           ? "travelers often praise the famous capital of " + ent(e) + " called"
                           : "people often visit the capital city of " + ent(e) + " named";
            h.y = cap(e);
            b.hard_neg.push_back(h);
        }
        return b;
    };

    auto supp_bundle = [&](long lo, long count, const std::string& split) {
        TaskBundle b;
        b.name = "suppression";
        b.provenance = split;
        for (long i = lo; i < lo + count; ++i) {
            CanonicalExample tr;
            tr.prefix = "an aspect of " + grp(i) + " is";
            tr.y_b = bad(i);
            tr.loss = LossKind::SuppressBad;
            tr.delta = kDeltaSupp;
            b.train.push_back(tr);

            for (const std::string& pre :
                 {"most " + grp(i) + " can be", "they said most " + grp(i) + " can be"}) {
                CanonicalExample ev;
                ev.prefix = pre;
                ev.y_b = bad(i);
                ev.loss = LossKind::SuppressBad;
                ev.delta = kDeltaSupp;
                b.eval.push_back(ev);
            }
            HardNegative h;
            h.prefix = "the definition of " + grp(i) + " is";
            h.y = def_of(i);
            b.hard_neg.push_back(h);
        }
        return b;
    };

    auto bal_bundle = [&](long lo, long count, const std::string& split) {
        TaskBundle b;
        b.name = "pair_balance";
        b.provenance = split;
        for (long i = lo; i < lo + count; ++i) {
            CanonicalExample tr;
            tr.prefix = "the " + role(i) + " said";
            tr.y_a = vocab.pronouns()[0];
            tr.y_b = vocab.pronouns()[1];
            tr.loss = LossKind::AbsBalance;
            tr.delta = kDeltaBal;
            b.train.push_back(tr);

            for (const std::string& pre : {"the old " + role(i) + " then said",
                                           "the " + role(i) + " came in and said"}) {
                CanonicalExample ev;
                ev.prefix = pre;
                ev.y_a = vocab.pronouns()[0];
                ev.y_b = vocab.pronouns()[1];
                ev.loss = LossKind::AbsBalance;
                ev.delta = kDeltaBal;
                b.eval.push_back(ev);
            }
            for (const std::string& p : vocab.pronouns()) {
                HardNegative h;
                h.prefix = p + " is a " + role(i) + " and " + p + " said";
                h.y = p;
                b.hard_neg.push_back(h);
            }
        }
        return b;
    };

    auto pref_bundle = [&](long lo, long count, const std::string& split) {
        TaskBundle b;
        b.name = "preference";
        b.provenance = split;
        for (long i = lo; i < lo + count; ++i) {
            CanonicalExample tr;
            tr.prefix = "the " + subj(i);
            tr.y_a = verb(i) + " the " + obj(i);
            tr.y_b = verbs(i) + " the " + obj(i);
            tr.loss = LossKind::PreferAOverB;
            tr.delta = kDeltaPref;
            b.train.push_back(tr);

            for (const std::string& pre : {"the " + subj(i) + " near the house",
                                           "the old " + subj(i) + " at the market"}) {
                CanonicalExample ev;
                ev.prefix = pre;
                ev.y_a = verb(i) + " the " + obj(i);
                ev.y_b = verbs(i) + " the " + obj(i);
                ev.loss = LossKind::PreferAOverB;
                ev.delta = kDeltaPref;
                b.eval.push_back(ev);
            }
            HardNegative h;
            h.prefix = "the " + subj(i) + " rest at";
            h.y = "night";
            b.hard_neg.push_back(h);
        }
        return b;
    };

    SynthData out;
    out.val["fact_recall"] = fact_bundle(0, sizes.fact_train, "val");
    out.test["fact_recall"] = fact_bundle(12, sizes.fact_train, "test");
    out.val["suppression"] = supp_bundle(0, sizes.supp_train, "val");
    out.test["suppression"] = supp_bundle(6, sizes.supp_train, "test");
    out.val["pair_balance"] = bal_bundle(0, sizes.bal_train, "val");
    out.test["pair_balance"] = bal_bundle(6, sizes.bal_train, "test");
    out.val["preference"] = pref_bundle(0, sizes.pref_train, "val");
    out.test["preference"] = pref_bundle(6, sizes.pref_train, "test");

    // --- teaching sentences (must be in the pretraining corpus) ----------
    std::vector<std::string> teaching;
    for (long i = kKnown0; i < n_ent; ++i) {
        teaching.push_back("the capital of " + ent(i) + " is " + cap(i));
        teaching.push_back("travelers often praise the famous capital of " + ent(i) +
                           " called " + cap(i));
        teaching.push_back("people often visit the capital city of " + ent(i) + " named " +
                           cap(i));
    }
    for (long i = 0; i < n_ent; ++i) {
        teaching.push_back(ent(i) + " is known for its " + trait(i));
        teaching.push_back("the land of " + ent(i) + " is famous for its " + trait(i));
    }
    for (long i = 0; i < 16; ++i) {
        teaching.push_back("an aspect of " + grp(i) + " is " + bad(i));
        teaching.push_back("the definition of " + grp(i) + " is " + def_of(i));
        if (i >= 12) {  // groups outside both edit splits keep eval-style stereotypes
            teaching.push_back("most " + grp(i) + " can be " + bad(i));
            teaching.push_back("they said most " + grp(i) + " can be " + bad(i));
        }
    }
    for (long i = 0; i < 16; ++i) {
        // 3:1 pronoun bias in the canonical template
        for (int r = 0; r < 3; ++r)
            teaching.push_back("the " + role(i) + " said " + major_pronoun(i));
        teaching.push_back("the " + role(i) + " said " + minor_pronoun(i));
        if (i >= 12) {
            teaching.push_back("the old " + role(i) + " then said " + major_pronoun(i));
            teaching.push_back("the " + role(i) + " came in and said " + major_pronoun(i));
        }
        for (const std::string& p : vocab.pronouns())
            teaching.push_back(p + " is a " + role(i) + " and " + p + " said " + p);
    }
    for (long i = 0; i < 12; ++i) {
        teaching.push_back("the " + subj(i) + " rest at night");
        // singular agreement: roles take the s-form
        teaching.push_back("the " + role(i) + " " + verbs(i) + " the " + obj(i));
    }
    // correct plural agreement only for pairs in neither edit split
    // (every subject is in one split, so plural agreement for the edited
    // verbs stays untaught; other verbs appear via the role sentences)

    // --- generic pool for R, G and extra pretraining ----------------------
    std::vector<std::string> generic;
    const std::vector<std::string> places = {"market", "river", "bridge", "tower", "road",
                                             "house"};
    const std::vector<std::string> times = {"night", "morning"};
    const std::vector<std::string> things = {"song", "story"};
    for (const auto& p : places)
        for (const auto& t : times)
            generic.push_back("the travelers came to the " + p + " at " + t);
    for (const auto& t : things)
        for (const auto& p : places) generic.push_back("a new " + t + " of the " + p);
    for (const auto& p : places)
        for (const auto& q : places)
            if (p != q) generic.push_back("the old " + p + " is far away from the " + q);
    for (const auto& p : places)
        for (const auto& t : times)
            generic.push_back("people rest at " + t + " near the " + p);
    for (long i = kKnown0; i < n_ent; ++i) {
        generic.push_back("people of " + ent(i) + " keep a very old song");
        generic.push_back("travelers visit " + ent(i) + " in the morning");
        generic.push_back("the story of " + ent(i) + " is known far and away");
    }
    for (const auto& t : times)
        for (const auto& p : places)
            generic.push_back("in the " + t + " the " + p + " is very old");
    for (const auto& p : places)
        for (const auto& t : things)
            generic.push_back("they said a " + t + " over the " + p + " can be new");

    std::set<std::string> seen;
    std::vector<std::string> pool;
    for (const auto& s : generic)
        if (seen.insert(s).second) pool.push_back(s);
    pool = shuffled(pool, rng);

    const std::size_t need = std::size_t(sizes.ball_sentences + sizes.reg_sentences);
    if (pool.size() < need)
        throw ConfigError("generic sentence pool too small for the requested corpora");
    out.corpus.ball_ref.assign(pool.begin(), pool.begin() + sizes.ball_sentences);
    out.corpus.reg.assign(pool.begin() + sizes.ball_sentences, pool.begin() + long(need));
    out.corpus.validate();

    std::vector<std::string> extra(pool.begin() + long(need), pool.end());
    if (long(extra.size()) > sizes.pretrain_extra) extra.resize(std::size_t(sizes.pretrain_extra));
    out.pretrain = teaching;
    out.pretrain.insert(out.pretrain.end(), extra.begin(), extra.end());
    out.pretrain = shuffled(out.pretrain, rng);

    out.provenance = {{"seed", seed}, {"sizes", sizes.to_json()}};

    // sanity: everything tokenizes inside the desk max length
    for (auto* bundles : {&out.val, &out.test})
        for (auto& [name, b] : *bundles) b.validate(64);
    return out;
}

}  // namespace canon
