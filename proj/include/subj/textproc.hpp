#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "corpus.hpp"

namespace subj {

// ---------------------------------------------------------------------------
// Tokenization

inline bool is_separator(char32_t cp)
{
    if (cp < 0x80) {
        return std::isspace(static_cast<int>(cp)) || std::ispunct(static_cast<int>(cp));
    }
    // Ideographic space, CJK punctuation block, full-width forms punctuation.
    return cp == 0x3000 || (cp >= 0x3001 && cp <= 0x3003) || (cp >= 0x3008 && cp <= 0x3011)
        || cp == 0xff01 || cp == 0xff0c || cp == 0xff0e || cp == 0xff1f || cp == 0xff08 || cp == 0xff09;
}

struct Token {
    std::string surface;
    int position = 0;

    bool operator==(const Token&) const = default;
};

/// Tokenizer provider. Segmenters for scripts without whitespace plug in here.
class Tokenizer {
  public:
    virtual ~Tokenizer() = default;
    virtual std::vector<Token> tokenize(std::string_view text) const = 0;
};

/// Lowercases ASCII, splits on whitespace and punctuation.
class DefaultTokenizer final : public Tokenizer {
  public:
    std::vector<Token> tokenize(std::string_view text) const override
    {
        std::vector<Token> out;
        std::string cur;
        auto flush = [&] {
            if (!cur.empty()) {
                out.push_back({std::move(cur), static_cast<int>(out.size())});
                cur.clear();
            }
        };
        std::size_t i = 0;
        while (i < text.size()) {
            std::size_t start = i;
            char32_t cp = utf8::next(text, i);
            if (is_separator(cp)) {
                flush();
            } else if (cp < 0x80) {
                cur.push_back(static_cast<char>(std::tolower(static_cast<int>(cp))));
            } else {
                cur.append(text.substr(start, i - start));
            }
        }
        flush();
        return out;
    }
};

inline std::vector<Token> tokenize(std::string_view text)
{
    static const DefaultTokenizer tokenizer;
    return tokenizer.tokenize(text);
}

inline std::vector<std::string> token_strings(std::string_view text)
{
    std::vector<std::string> out;
    for (auto& t : tokenize(text)) {
        out.push_back(std::move(t.surface));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Opinion extraction

struct OpinionPhrase {
    std::string aspect_term;
    std::string modifier;
    std::string review_id;
    int sentence_index = 0;

    bool operator==(const OpinionPhrase&) const = default;
    /// "<modifier> <aspect>", the surface form used for attribute assignment.
    std::string phrase() const { return modifier + " " + aspect_term; }
};

enum class RuleKind {
    modifier_noun,          // R1: [neg] [int] modifier noun
    noun_copula_modifier,   // R2: noun copula [neg] [int] modifier
    intensifier_absorption, // R3: flag, folds intensifiers into the modifier
    negation,               // flag, rewrites "not clean" to "not_clean"
};

inline RuleKind parse_rule_kind(const std::string& s)
{
    if (s == "modifier_noun") return RuleKind::modifier_noun;
    if (s == "noun_copula_modifier") return RuleKind::noun_copula_modifier;
    if (s == "intensifier_absorption") return RuleKind::intensifier_absorption;
    if (s == "negation") return RuleKind::negation;
    throw ValidationError("unknown rule kind '" + s + "'");
}

inline std::string to_string(RuleKind k)
{
    switch (k) {
    case RuleKind::modifier_noun: return "modifier_noun";
    case RuleKind::noun_copula_modifier: return "noun_copula_modifier";
    case RuleKind::intensifier_absorption: return "intensifier_absorption";
    case RuleKind::negation: return "negation";
    }
    return "?";
}

/// Ordered pattern rules plus the word lists they consult.
struct RuleSet {
    std::vector<RuleKind> rules;
    std::set<std::string> aspects;
    std::set<std::string> copulas;
    std::set<std::string> intensifiers;
    std::set<std::string> negations;
    std::set<std::string> stopwords;
    bool lexicon_filter = true;

    bool has(RuleKind k) const { return std::find(rules.begin(), rules.end(), k) != rules.end(); }

    static RuleSet defaults()
    {
        RuleSet r;
        r.rules = {RuleKind::modifier_noun, RuleKind::noun_copula_modifier, RuleKind::intensifier_absorption,
                   RuleKind::negation};
        r.copulas = {"is", "was", "are", "were", "seemed", "looked", "felt"};
        r.intensifiers = {"very", "really", "extremely", "so", "quite", "truly"};
        r.negations = {"not", "never", "no"};
        r.stopwords = {"the", "a", "an", "this", "that", "our", "my", "their", "its", "and", "or", "but",
                       "of", "in", "on", "at", "to", "for", "with", "we", "i", "it", "they", "there",
                       "here", "all", "also", "overall", "again", "every", "after", "before", "during"};
        return r;
    }

    /// Reads rules.jsonl plus the plain-text word lists next to it.
    static RuleSet load(const fs::path& dir)
    {
        RuleSet r = defaults();
        auto p = dir / "rules.jsonl";
        if (fs::exists(p)) {
            r.rules.clear();
            for_each_record(p, [&](const json& rec, std::size_t) {
                r.rules.push_back(parse_rule_kind(rec.at("kind").get<std::string>()));
                if (rec.contains("params") && rec["params"].contains("lexicon_filter")) {
                    r.lexicon_filter = rec["params"]["lexicon_filter"].get<bool>();
                }
            });
        }
        auto load_set = [&](const char* name, std::set<std::string>& dst) {
            auto f = dir / name;
            if (fs::exists(f)) {
                auto lines = read_lines(f);
                dst.clear();
                for (auto& l : lines) {
                    for (auto& t : token_strings(l)) {
                        dst.insert(t);
                    }
                }
            }
        };
        load_set("aspects.txt", r.aspects);
        load_set("copulas.txt", r.copulas);
        load_set("intensifiers.txt", r.intensifiers);
        load_set("negations.txt", r.negations);
        load_set("stopwords.txt", r.stopwords);
        return r;
    }

    void save(const fs::path& dir) const
    {
        std::vector<json> recs;
        for (auto k : rules) {
            json rec{{"kind", to_string(k)}, {"params", json::object()}};
            if (k == RuleKind::modifier_noun || k == RuleKind::noun_copula_modifier) {
                rec["params"]["lexicon_filter"] = lexicon_filter;
            }
            recs.push_back(rec);
        }
        write_jsonl(dir / "rules.jsonl", recs);
        auto dump = [&](const char* name, const std::set<std::string>& s) {
            write_lines(dir / name, {s.begin(), s.end()});
        };
        dump("aspects.txt", aspects);
        dump("copulas.txt", copulas);
        dump("intensifiers.txt", intensifiers);
        dump("negations.txt", negations);
        dump("stopwords.txt", stopwords);
    }
};

namespace detail {

struct RuleMatcher {
    const RuleSet& rs;
    const std::vector<Token>& toks;
    bool absorb;
    bool negate;

    bool in(const std::set<std::string>& s, std::size_t i) const { return i < toks.size() && s.count(toks[i].surface); }

    bool is_aspect(std::size_t i) const
    {
        if (i >= toks.size()) return false;
        if (rs.lexicon_filter) return in(rs.aspects, i);
        return !is_function_word(i);
    }

    bool is_function_word(std::size_t i) const
    {
        return in(rs.stopwords, i) || in(rs.copulas, i) || in(rs.intensifiers, i) || in(rs.negations, i);
    }

    bool is_modifier(std::size_t i) const
    {
        return i < toks.size() && !is_function_word(i) && !in(rs.aspects, i);
    }

    /// Parses "[neg] [int]* modifier" at i; returns the index past it and the modifier text.
    std::optional<std::pair<std::size_t, std::string>> modifier_at(std::size_t i) const
    {
        bool neg = false;
        if (negate && in(rs.negations, i)) {
            neg = true;
            ++i;
        }
        std::string prefix;
        if (absorb) {
            while (in(rs.intensifiers, i)) {
                prefix += toks[i].surface + " ";
                ++i;
            }
        }
        if (!is_modifier(i)) {
            return std::nullopt;
        }
        std::string m = prefix + toks[i].surface;
        if (neg) {
            m = "not_" + m;
        }
        return std::pair{i + 1, m};
    }

    std::optional<std::pair<std::size_t, OpinionPhrase>> try_rule(RuleKind k, std::size_t i) const
    {
        switch (k) {
        case RuleKind::modifier_noun: {
            auto m = modifier_at(i);
            if (m && is_aspect(m->first)) {
                return std::pair{m->first + 1, OpinionPhrase{toks[m->first].surface, m->second, {}, 0}};
            }
            return std::nullopt;
        }
        case RuleKind::noun_copula_modifier: {
            if (!is_aspect(i) || !in(rs.copulas, i + 1)) return std::nullopt;
            auto m = modifier_at(i + 2);
            if (m) {
                return std::pair{m->first, OpinionPhrase{toks[i].surface, m->second, {}, 0}};
            }
            return std::nullopt;
        }
        default:
            return std::nullopt;
        }
    }
};

}  // namespace detail

/// Applies the ordered rules over token windows of one sentence. At each
/// position the first matching rule wins; matches never overlap.
inline std::vector<OpinionPhrase> extract_sentence(const std::vector<Token>& toks, const RuleSet& rules)
{
    detail::RuleMatcher m{rules, toks, rules.has(RuleKind::intensifier_absorption), rules.has(RuleKind::negation)};
    std::vector<OpinionPhrase> out;
    std::size_t i = 0;
    while (i < toks.size()) {
        bool matched = false;
        for (auto k : rules.rules) {
            if (auto hit = m.try_rule(k, i)) {
                out.push_back(std::move(hit->second));
                i = hit->first;
                matched = true;
                break;
            }
        }
        if (!matched) {
            ++i;
        }
    }
    return out;
}

/// Runs the rule set over every sentence of a review.
inline std::vector<OpinionPhrase> extract_opinions(const Review& review, const RuleSet& rules)
{
    std::vector<OpinionPhrase> out;
    for (std::size_t s = 0; s < review.sentences.size(); ++s) {
        for (auto& op : extract_sentence(tokenize(review.sentences[s]), rules)) {
            op.review_id = review.id;
            op.sentence_index = static_cast<int>(s);
            out.push_back(std::move(op));
        }
    }
    return out;
}

}  // namespace subj
