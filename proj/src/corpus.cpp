#include "taxo/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "taxo/common.hpp"
#include "taxo/rng.hpp"
#include "taxo/text.hpp"

namespace taxo::corpus {

using nlohmann::json;

char tag_char(Tag t) {
    switch (t) {
        case Tag::B: return 'B';
        case Tag::I: return 'I';
        case Tag::O: return 'O';
        case Tag::E: return 'E';
    }
    throw ValidationError("bad tag value");
}

Tag tag_from_char(char c) {
    switch (c) {
        case 'B': return Tag::B;
        case 'I': return Tag::I;
        case 'O': return Tag::O;
        case 'E': return Tag::E;
    }
    throw ValidationError(std::string("bad tag character: '") + c + "'");
}

bool TaggedSequence::is_well_formed() const {
    if (tokens.size() != tags.size()) return false;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        bool prev_in_span = i > 0 && (tags[i - 1] == Tag::B || tags[i - 1] == Tag::I);
        if (tags[i] == Tag::I || tags[i] == Tag::E) {
            if (!prev_in_span) return false;
        } else if (i > 0 && tags[i - 1] == Tag::I) {
            return false;  // an I run may only continue with I or close with E
        }
    }
    return tags.empty() || tags.back() != Tag::I;
}

namespace {

bool strip_char(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) && c != '&';
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::string lowered = text::ascii_lower(text);
    std::string padded;
    padded.reserve(lowered.size() + 8);
    for (char c : lowered) {
        if (c == '&') {
            padded += " & ";
        } else {
            padded.push_back(c);
        }
    }

    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < padded.size()) {
        while (i < padded.size() && text::is_ascii_space(padded[i])) ++i;
        std::size_t j = i;
        while (j < padded.size() && !text::is_ascii_space(padded[j])) ++j;
        if (j > i) {
            std::string tok = padded.substr(i, j - i);
            if (tok != "&") {
                std::size_t b = 0, e = tok.size();
                while (b < e && strip_char(tok[b])) ++b;
                while (e > b && strip_char(tok[e - 1])) --e;
                tok = tok.substr(b, e - b);
            }
            if (!tok.empty()) out.push_back(std::move(tok));
        }
        i = j;
    }
    return out;
}

namespace {

std::string join_tokens(const std::vector<std::string>& tokens, int start, int len) {
    std::string key;
    for (int i = start; i < start + len; ++i) {
        if (i > start) key.push_back(' ');
        key += tokens[i];
    }
    return key;
}

}  // namespace

TermMatcher::TermMatcher(const std::vector<Term>& vocab) {
    for (const Term& t : vocab) add(t);
}

TermMatcher::TermMatcher(const std::set<Term>& vocab) {
    for (const Term& t : vocab) add(t);
}

void TermMatcher::add(const Term& t) {
    std::vector<std::string> toks = tokenize(t.surface());
    if (toks.empty())
        throw ValidationError("vocab term tokenizes to nothing: '" + t.surface() + "'");
    std::string key = join_tokens(toks, 0, static_cast<int>(toks.size()));
    auto [it, inserted] = by_key_.emplace(key, t);
    if (!inserted && it->second != t)
        throw ValidationError("vocab terms collide after tokenization: '" + t.surface() +
                              "' vs '" + it->second.surface() + "'");
    if (inserted) vocab_.push_back(t);
    max_len_ = std::max(max_len_, static_cast<int>(toks.size()));
}

std::vector<TermMatcher::Match> TermMatcher::find_all(
    const std::vector<std::string>& tokens) const {
    std::vector<Match> out;
    int n = static_cast<int>(tokens.size());
    int i = 0;
    while (i < n) {
        int best_len = 0;
        const Term* best = nullptr;
        int cap = std::min(max_len_, n - i);
        for (int len = cap; len >= 1; --len) {
            auto it = by_key_.find(join_tokens(tokens, i, len));
            if (it != by_key_.end()) {
                best_len = len;
                best = &it->second;
                break;
            }
        }
        if (best) {
            out.push_back({i, best_len, *best});
            i += best_len;
        } else {
            ++i;
        }
    }
    return out;
}

bool TermMatcher::mentions(const std::vector<std::string>& tokens, const Term& t) const {
    for (const Match& m : find_all(tokens))
        if (m.term == t) return true;
    return false;
}

std::vector<Term> TermMatcher::mentioned_terms(const std::vector<std::string>& tokens) const {
    std::vector<Term> out;
    for (const Match& m : find_all(tokens)) out.push_back(m.term);
    return out;
}

TaggedSequence distant_label(const std::vector<std::string>& tokens, const TermMatcher& matcher) {
    TaggedSequence seq;
    seq.tokens = tokens;
    seq.tags.assign(tokens.size(), Tag::O);
    for (const auto& m : matcher.find_all(tokens)) {
        if (m.len == 1) {
            seq.tags[m.start] = Tag::B;
        } else {
            seq.tags[m.start] = Tag::B;
            for (int i = m.start + 1; i < m.start + m.len - 1; ++i) seq.tags[i] = Tag::I;
            seq.tags[m.start + m.len - 1] = Tag::E;
        }
    }
    return seq;
}

TaggedSequence distant_label(const std::vector<std::string>& tokens, const std::set<Term>& vocab) {
    return distant_label(tokens, TermMatcher(vocab));
}

std::vector<std::pair<int, int>> decode_spans(const std::vector<Tag>& tags) {
    std::vector<std::pair<int, int>> out;
    int n = static_cast<int>(tags.size());
    int i = 0;
    while (i < n) {
        if (tags[i] != Tag::B) {
            ++i;
            continue;
        }
        int j = i + 1;
        while (j < n && tags[j] == Tag::I) ++j;
        if (j < n && tags[j] == Tag::E) {
            out.emplace_back(i, j - i + 1);
            i = j + 1;
        } else if (j == i + 1) {
            out.emplace_back(i, 1);  // lone B
            i = j;
        } else {
            i = j;  // B I* without E: malformed, dropped
        }
    }
    return out;
}

std::vector<Term> span_terms(const TaggedSequence& seq) {
    if (seq.tokens.size() != seq.tags.size())
        throw ValidationError("span_terms: token/tag count mismatch");
    std::vector<Term> out;
    for (const auto& [start, len] : decode_spans(seq.tags))
        out.emplace_back(join_tokens(seq.tokens, start, len));
    return out;
}

ExtractionSplit build_extraction_split(const std::vector<ItemProfile>& items,
                                       const std::set<Term>& vocab, double train_ratio,
                                       std::uint64_t seed) {
    if (train_ratio <= 0.0 || train_ratio >= 1.0)
        throw ValidationError("build_extraction_split: train_ratio must be in (0,1)");
    TermMatcher matcher(vocab);

    std::vector<std::vector<Term>> per_item;
    per_item.reserve(items.size());
    std::vector<Term> matched;  // first-mention order
    std::set<Term> matched_set;
    for (const ItemProfile& it : items) {
        per_item.push_back(matcher.mentioned_terms(it.title_tokens));
        for (const Term& t : per_item.back())
            if (matched_set.insert(t).second) matched.push_back(t);
    }
    int n = static_cast<int>(matched.size());
    if (n < 2)
        throw ValidationError("build_extraction_split: need at least 2 matched terms, have " +
                              std::to_string(n));

    rng::Engine eng(seed);
    rng::shuffle(matched, eng);
    int n_train = static_cast<int>(std::floor(train_ratio * n));
    n_train = std::max(1, std::min(n - 1, n_train));
    std::set<Term> test_set(matched.begin() + n_train, matched.end());

    ExtractionSplit split;
    split.seed = seed;
    split.test_terms.assign(matched.begin() + n_train, matched.end());
    std::sort(split.test_terms.begin(), split.test_terms.end());
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (per_item[i].empty()) continue;
        bool has_test = false;
        for (const Term& t : per_item[i]) has_test = has_test || test_set.count(t) > 0;
        if (has_test) {
            split.test_ids.push_back(items[i].id);
        } else {
            split.train_ids.push_back(items[i].id);
            split.train.push_back(distant_label(items[i].title_tokens, matcher));
        }
    }
    return split;
}

namespace {

json parse_line(const std::string& line, const std::string& path, int lineno) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
        throw ValidationError(path + ":" + std::to_string(lineno) + ": invalid json");
    return j;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open file: " + path);
    return is;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open file for writing: " + path);
    return os;
}

}  // namespace

std::vector<ItemProfile> load_items(const std::string& path) {
    auto is = open_in(path);
    std::vector<ItemProfile> out;
    std::string line;
    int lineno = 0;
    std::set<std::string> ids;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = parse_line(line, path, lineno);
        ItemProfile item;
        item.id = j.at("id").get<std::string>();
        if (item.id.empty())
            throw ValidationError(path + ":" + std::to_string(lineno) + ": empty item id");
        if (!ids.insert(item.id).second)
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": duplicate item id '" + item.id + "'");
        item.title_tokens = tokenize(j.at("title").get<std::string>());
        if (item.title_tokens.empty())
            throw ValidationError(path + ":" + std::to_string(lineno) + ": empty title");
        if (j.contains("node") && !j.at("node").is_null())
            item.assigned_node = Term(j.at("node").get<std::string>());
        out.push_back(std::move(item));
    }
    return out;
}

void save_items(const std::vector<ItemProfile>& items, const std::string& path) {
    auto os = open_out(path);
    for (const ItemProfile& it : items) {
        json j;
        j["id"] = it.id;
        std::string title;
        for (std::size_t i = 0; i < it.title_tokens.size(); ++i) {
            if (i) title.push_back(' ');
            title += it.title_tokens[i];
        }
        j["title"] = title;
        j["node"] = it.assigned_node ? json(it.assigned_node->surface()) : json(nullptr);
        os << j.dump() << '\n';
    }
}

std::vector<QueryRecord> load_queries(const std::string& path) {
    auto is = open_in(path);
    std::vector<QueryRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = parse_line(line, path, lineno);
        QueryRecord q;
        q.query_tokens = tokenize(j.at("query").get<std::string>());
        for (const auto& c : j.at("clicks")) q.clicked_item_ids.push_back(c.get<std::string>());
        out.push_back(std::move(q));
    }
    return out;
}

void save_queries(const std::vector<QueryRecord>& queries, const std::string& path) {
    auto os = open_out(path);
    for (const QueryRecord& q : queries) {
        json j;
        std::string text;
        for (std::size_t i = 0; i < q.query_tokens.size(); ++i) {
            if (i) text.push_back(' ');
            text += q.query_tokens[i];
        }
        j["query"] = text;
        j["clicks"] = q.clicked_item_ids;
        os << j.dump() << '\n';
    }
}

void save_labels(const std::vector<std::string>& ids, const std::vector<TaggedSequence>& seqs,
                 const std::string& path) {
    if (ids.size() != seqs.size())
        throw ValidationError("save_labels: id/sequence count mismatch");
    auto os = open_out(path);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        json j;
        j["id"] = ids[i];
        j["tokens"] = seqs[i].tokens;
        std::vector<std::string> tags;
        for (Tag t : seqs[i].tags) tags.emplace_back(1, tag_char(t));
        j["tags"] = tags;
        os << j.dump() << '\n';
    }
}

std::pair<std::vector<std::string>, std::vector<TaggedSequence>> load_labels(
    const std::string& path) {
    auto is = open_in(path);
    std::vector<std::string> ids;
    std::vector<TaggedSequence> seqs;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = parse_line(line, path, lineno);
        TaggedSequence seq;
        seq.tokens = j.at("tokens").get<std::vector<std::string>>();
        for (const auto& t : j.at("tags")) {
            std::string s = t.get<std::string>();
            if (s.size() != 1)
                throw ValidationError(path + ":" + std::to_string(lineno) + ": bad tag '" + s + "'");
            seq.tags.push_back(tag_from_char(s[0]));
        }
        if (seq.tokens.size() != seq.tags.size())
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": token/tag count mismatch");
        ids.push_back(j.at("id").get<std::string>());
        seqs.push_back(std::move(seq));
    }
    return {std::move(ids), std::move(seqs)};
}

}  // namespace taxo::corpus
