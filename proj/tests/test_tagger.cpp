#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "taxo/common.hpp"
#include "taxo/corpus.hpp"
#include "taxo/features.hpp"
#include "taxo/params.hpp"
#include "taxo/tagger.hpp"
#include "test_util.hpp"

using namespace taxo;
using corpus::Tag;
using corpus::TaggedSequence;
using tagger::TaggerConfig;
using tagger::TaggerModel;

namespace {

std::vector<std::vector<Tag>> all_tag_paths(int t_len) {
    int total = 1;
    for (int i = 0; i < t_len; ++i) total *= 4;
    std::vector<std::vector<Tag>> out;
    out.reserve(total);
    for (int code = 0; code < total; ++code) {
        std::vector<Tag> path(t_len);
        int c = code;
        for (int t = 0; t < t_len; ++t) {
            path[t] = static_cast<Tag>(c % 4);
            c /= 4;
        }
        out.push_back(std::move(path));
    }
    return out;
}

// The BIOE schema restated independently of the decoder's mask tables.
bool schema_allows(const std::vector<Tag>& p) {
    if (p.empty()) return true;
    if (p.front() == Tag::I || p.front() == Tag::E) return false;
    for (std::size_t t = 1; t < p.size(); ++t) {
        Tag prev = p[t - 1];
        switch (p[t]) {
            case Tag::B:
                if (prev != Tag::O && prev != Tag::E) return false;
                break;
            case Tag::I:
            case Tag::E:
                if (prev != Tag::B && prev != Tag::I) return false;
                break;
            case Tag::O:
                if (prev == Tag::I) return false;
                break;
        }
    }
    return p.back() != Tag::I;
}

nn::Tensor random_tensor(std::vector<int> shape, rng::Engine& eng, double scale) {
    nn::Tensor t(std::move(shape));
    for (long long i = 0; i < t.size(); ++i) t[i] = scale * rng::gaussian(eng);
    return t;
}

struct CrfTables {
    nn::Tensor trans{{corpus::kNumTags, corpus::kNumTags}};
    nn::Tensor start{{corpus::kNumTags}};
    nn::Tensor end{{corpus::kNumTags}};
};

CrfTables random_tables(rng::Engine& eng, double scale) {
    CrfTables t;
    t.trans = random_tensor({4, 4}, eng, scale);
    t.start = random_tensor({4}, eng, scale);
    t.end = random_tensor({4}, eng, scale);
    return t;
}

double lse_of(const std::vector<double>& xs) {
    double m = *std::max_element(xs.begin(), xs.end());
    double s = 0.0;
    for (double v : xs) s += std::exp(v - m);
    return m + std::log(s);
}

void check_params_equal(const nn::ParamSet& a, const nn::ParamSet& b) {
    REQUIRE(a.names() == b.names());
    for (const std::string& n : a.names()) {
        REQUIRE(a.value(n).shape() == b.value(n).shape());
        CHECK(a.value(n).vec() == b.value(n).vec());
    }
}

std::vector<corpus::ItemProfile> items_from_titles(const std::vector<std::string>& titles) {
    std::vector<corpus::ItemProfile> items;
    for (std::size_t i = 0; i < titles.size(); ++i)
        items.push_back({"i" + std::to_string(i), corpus::tokenize(titles[i]), std::nullopt});
    return items;
}

std::vector<TaggedSequence> labels_for(const std::vector<std::string>& titles,
                                       const std::set<Term>& vocab) {
    corpus::TermMatcher matcher(vocab);
    std::vector<TaggedSequence> out;
    for (const std::string& t : titles)
        out.push_back(corpus::distant_label(corpus::tokenize(t), matcher));
    return out;
}

}  // namespace

TEST_CASE("crf log partition matches the exhaustive path sum") {
    rng::Engine eng(71);
    for (int t_len = 1; t_len <= 6; ++t_len) {
        auto paths = all_tag_paths(t_len);
        REQUIRE(static_cast<int>(paths.size()) == static_cast<int>(std::pow(4, t_len)));
        for (int inst = 0; inst < 8; ++inst) {
            double scale = inst < 6 ? 1.0 : 3.0;
            nn::Tensor em = random_tensor({t_len, 4}, eng, scale);
            CrfTables tb = random_tables(eng, scale);

            std::vector<double> scores;
            scores.reserve(paths.size());
            for (const auto& p : paths)
                scores.push_back(tagger::crf_path_score(em, tb.trans, tb.start, tb.end, p));
            double oracle = lse_of(scores);
            double max_path = *std::max_element(scores.begin(), scores.end());

            double log_z = tagger::crf_log_partition(em, tb.trans, tb.start, tb.end);
            CHECK(log_z == doctest::Approx(oracle).epsilon(1e-8));
            CHECK(log_z >= max_path - 1e-12);
        }
    }
}

TEST_CASE("uniform scores at T=1 cost exactly ln 4") {
    nn::Tensor em({1, 4});
    CrfTables tb;
    CHECK(tagger::crf_log_partition(em, tb.trans, tb.start, tb.end) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-15));

    nn::Tape tape;
    auto e0 = tape.leaf(nn::Tensor({4}));
    auto tr = tape.leaf(tb.trans);
    auto st = tape.leaf(tb.start);
    auto en = tape.leaf(tb.end);
    for (Tag gold : {Tag::B, Tag::I, Tag::O, Tag::E}) {
        auto loss = tagger::crf_nll(tape, {e0}, tr, st, en, {gold});
        CHECK(tape.scalar_value(loss) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    }

    // With zero tables the chain factorizes, so T tokens cost T * ln 4.
    nn::Tensor em3({3, 4});
    CHECK(tagger::crf_log_partition(em3, tb.trans, tb.start, tb.end) ==
          doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-15));
}

TEST_CASE("peaked emissions make the gold path cheap and decodable") {
    std::vector<Tag> gold = {Tag::B, Tag::I, Tag::E, Tag::O};
    nn::Tensor em({4, 4});
    for (int t = 0; t < 4; ++t) em.at(t, static_cast<int>(gold[t])) = 12.0;
    CrfTables tb;

    double nll = tagger::crf_log_partition(em, tb.trans, tb.start, tb.end) -
                 tagger::crf_path_score(em, tb.trans, tb.start, tb.end, gold);
    CHECK(nll > 0.0);
    CHECK(nll < 1e-2);
    CHECK(tagger::viterbi_decode(em, tb.trans, tb.start, tb.end, false) == gold);
    CHECK(tagger::viterbi_decode(em, tb.trans, tb.start, tb.end, true) == gold);
}

TEST_CASE("viterbi matches the exhaustive argmax") {
    rng::Engine eng(72);
    for (int t_len = 1; t_len <= 6; ++t_len) {
        auto paths = all_tag_paths(t_len);
        for (int inst = 0; inst < 8; ++inst) {
            nn::Tensor em = random_tensor({t_len, 4}, eng, 1.5);
            CrfTables tb = random_tables(eng, 1.0);
            auto score = [&](const std::vector<Tag>& p) {
                return tagger::crf_path_score(em, tb.trans, tb.start, tb.end, p);
            };

            double best_any = -1e300;
            double best_legal = -1e300;
            for (const auto& p : paths) {
                double s = score(p);
                best_any = std::max(best_any, s);
                if (schema_allows(p)) best_legal = std::max(best_legal, s);
            }

            auto free_path = tagger::viterbi_decode(em, tb.trans, tb.start, tb.end, false);
            CHECK(score(free_path) == doctest::Approx(best_any).epsilon(1e-12));

            auto legal_path = tagger::viterbi_decode(em, tb.trans, tb.start, tb.end, true);
            CHECK(schema_allows(legal_path));
            CHECK(score(legal_path) == doctest::Approx(best_legal).epsilon(1e-12));
            CHECK(best_legal <= best_any + 1e-12);
        }
    }
}

TEST_CASE("constrained decoding always yields well-formed sequences") {
    rng::Engine eng(73);
    for (int iter = 0; iter < 100; ++iter) {
        int t_len = 1 + static_cast<int>(rng::bounded(eng, 12));
        nn::Tensor em = random_tensor({t_len, 4}, eng, 2.0);
        CrfTables tb = random_tables(eng, 2.0);
        auto tags = tagger::viterbi_decode(em, tb.trans, tb.start, tb.end, true);

        TaggedSequence seq;
        seq.tokens.assign(t_len, "x");
        seq.tags = tags;
        CHECK(seq.is_well_formed());
        CHECK(schema_allows(tags));

        // Every non-O tag is part of a decoded span; nothing is dropped.
        int non_o = 0;
        for (Tag t : tags) non_o += t != Tag::O ? 1 : 0;
        int covered = 0;
        for (const auto& [start, len] : corpus::decode_spans(tags)) covered += len;
        CHECK(covered == non_o);
    }
}

TEST_CASE("O-dominant emissions decode to all O") {
    rng::Engine eng(74);
    nn::Tensor em({5, 4});
    for (int t = 0; t < 5; ++t)
        for (int j = 0; j < 4; ++j) em.at(t, j) = j == static_cast<int>(Tag::O) ? 9.0 : -9.0;
    CrfTables tb = random_tables(eng, 0.5);
    std::vector<Tag> all_o(5, Tag::O);
    CHECK(tagger::viterbi_decode(em, tb.trans, tb.start, tb.end, false) == all_o);
    CHECK(tagger::viterbi_decode(em, tb.trans, tb.start, tb.end, true) == all_o);
}

TEST_CASE("crf gradients match finite differences") {
    rng::Engine eng(75);
    nn::ParamSet params;
    params.create("e0", random_tensor({4}, eng, 1.0));
    params.create("e1", random_tensor({4}, eng, 1.0));
    params.create("e2", random_tensor({4}, eng, 1.0));
    params.create("e3", random_tensor({4}, eng, 1.0));
    params.create("trans", random_tensor({4, 4}, eng, 1.0));
    params.create("start", random_tensor({4}, eng, 1.0));
    params.create("end", random_tensor({4}, eng, 1.0));
    std::vector<Tag> gold = {Tag::B, Tag::I, Tag::E, Tag::O};

    auto f = [&](nn::ParamSet& ps, bool want_grads) {
        nn::Tape tape;
        nn::ParamBinding bind(ps, tape);
        std::vector<nn::Tape::Var> em = {bind.var("e0"), bind.var("e1"), bind.var("e2"),
                                         bind.var("e3")};
        auto loss = tagger::crf_nll(tape, em, bind.var("trans"), bind.var("start"),
                                    bind.var("end"), gold);
        if (want_grads) {
            tape.backward(loss);
            bind.harvest();
        }
        return tape.scalar_value(loss);
    };
    auto res = nn::grad_check(f, params);
    CHECK(res.entries_checked == 40);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("bilstm emissions match a hand-rolled reference") {
    const int dim = 5, hidden = 3;
    features::EmbeddingStore store(dim, 42);
    rng::Engine eng(76);
    std::vector<std::string> tokens = {"ruby", "pears", "gift", "crate"};
    for (const std::string& tok : tokens) {
        std::vector<double> v(dim);
        for (double& x : v) x = rng::gaussian(eng);
        store.insert(tok, v);
    }
    TaggerModel model(&store, {hidden, 11});
    const nn::ParamSet& p = model.params();

    auto matvec = [](const nn::Tensor& m, const std::vector<double>& v) {
        std::vector<double> out(m.rows(), 0.0);
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) out[r] += m.at(r, c) * v[c];
        return out;
    };
    auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };

    auto run_dir = [&](const std::string& dir, bool reversed) {
        int t_len = static_cast<int>(tokens.size());
        std::vector<std::vector<double>> hs(t_len);
        std::vector<double> h(hidden, 0.0), c(hidden, 0.0);
        for (int s = 0; s < t_len; ++s) {
            int t = reversed ? t_len - 1 - s : s;
            std::vector<double> x = store.token_vector(tokens[t]).vec();
            auto gate = [&](char g) {
                std::string base = "tagger/" + dir + "/";
                auto wx = matvec(p.value(base + "W_" + g), x);
                auto uh = matvec(p.value(base + "U_" + g), h);
                const auto& b = p.value(base + "b_" + g);
                std::vector<double> out(hidden);
                for (int k = 0; k < hidden; ++k) out[k] = wx[k] + uh[k] + b[k];
                return out;
            };
            auto gi = gate('i'), gf = gate('f'), gg = gate('g'), go = gate('o');
            std::vector<double> hnew(hidden);
            for (int k = 0; k < hidden; ++k) {
                c[k] = sig(gf[k]) * c[k] + sig(gi[k]) * std::tanh(gg[k]);
                hnew[k] = sig(go[k]) * std::tanh(c[k]);
            }
            h = hnew;
            hs[t] = h;
        }
        return hs;
    };

    auto hf = run_dir("fwd", false);
    auto hb = run_dir("bwd", true);
    nn::Tensor got = tagger::emissions(model, tokens);
    REQUIRE(got.rows() == 4);
    REQUIRE(got.cols() == 4);
    for (int t = 0; t < 4; ++t) {
        std::vector<double> cat = hf[t];
        cat.insert(cat.end(), hb[t].begin(), hb[t].end());
        auto proj = matvec(p.value("tagger/emit/W"), cat);
        const auto& be = p.value("tagger/emit/b");
        for (int j = 0; j < 4; ++j)
            CHECK(got.at(t, j) == doctest::Approx(proj[j] + be[j]).epsilon(1e-12));
    }
}

TEST_CASE("the full tagger objective passes a finite-difference check") {
    features::EmbeddingStore store(4, 17);
    TaggerModel model(&store, {3, 13});
    std::vector<std::string> tokens = {"pu-erh", "tea", "sampler"};
    std::vector<Tag> gold = {Tag::B, Tag::E, Tag::O};

    auto f = [&](nn::ParamSet& ps, bool want_grads) {
        nn::Tape tape;
        nn::ParamBinding bind(ps, tape);
        auto em = tagger::emission_vars(tape, bind, model, tokens);
        auto loss = tagger::crf_nll(tape, em, bind.var("tagger/crf/trans"),
                                    bind.var("tagger/crf/start"), bind.var("tagger/crf/end"),
                                    gold);
        if (want_grads) {
            tape.backward(loss);
            bind.harvest();
        }
        return tape.scalar_value(loss);
    };
    // Deep sigmoid/tanh chains leave some entries with gradients near 1e-6,
    // where central differences at the default step are roundoff-bound.
    auto res = nn::grad_check(f, model.params(), 1e-4);
    CHECK(res.entries_checked == model.params().total_size());
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("training strictly reduces the planted-term loss early on") {
    std::vector<std::string> fillers = {"fresh",   "golden", "state",  "deluxe",  "gift",
                                        "box",     "organic", "sweet",  "juicy",   "farm",
                                        "crate",   "premium", "harvest", "select", "orchard",
                                        "valley",  "bundle",  "classic", "tasty",  "family"};
    std::vector<std::string> titles;
    for (int i = 0; i < 20; ++i)
        titles.push_back(fillers[i] + " ruby pears " + fillers[(i + 3) % 20] + " " +
                         fillers[(i + 7) % 20]);
    auto data = labels_for(titles, {Term("ruby pears")});
    for (const auto& seq : data) {
        REQUIRE(seq.tags[1] == Tag::B);
        REQUIRE(seq.tags[2] == Tag::E);
    }

    features::EmbeddingStore store(10, 3);
    TaggerModel model = tagger::train_tagger(data, &store, {8, 7}, 5, 5e-3);
    REQUIRE(model.epoch_nll.size() == 5);
    for (int e = 1; e < 5; ++e) CHECK(model.epoch_nll[e] < model.epoch_nll[e - 1]);
}

TEST_CASE("zero training epochs leave the initialization untouched") {
    features::EmbeddingStore store(6, 5);
    auto data = labels_for({"alpine rose tea"}, {Term("rose tea")});
    TaggerModel trained = tagger::train_tagger(data, &store, {4, 21}, 0, 1e-3);
    TaggerModel fresh(&store, {4, 21});
    check_params_equal(trained.params(), fresh.params());
    CHECK(trained.epoch_nll.empty());
}

TEST_CASE("one epoch over duplicated data equals two epochs over the original") {
    features::EmbeddingStore store(6, 9);
    std::vector<std::string> titles = {"iced mint tea pack", "mint tea gift set",
                                       "cold brew mint tea"};
    auto data = labels_for(titles, {Term("mint tea")});
    std::vector<TaggedSequence> doubled = data;
    doubled.insert(doubled.end(), data.begin(), data.end());

    TaggerModel two_epochs = tagger::train_tagger(data, &store, {4, 31}, 2, 1e-3);
    TaggerModel one_epoch = tagger::train_tagger(doubled, &store, {4, 31}, 1, 1e-3);
    check_params_equal(two_epochs.params(), one_epoch.params());
    CHECK(two_epochs.params().step_count() == one_epoch.params().step_count());
}

TEST_CASE("training is reproducible from the seed") {
    features::EmbeddingStore store(6, 1);
    auto data = labels_for({"wild berry jam jar", "berry jam sampler"}, {Term("berry jam")});
    TaggerModel a = tagger::train_tagger(data, &store, {4, 8}, 3, 1e-3);
    TaggerModel b = tagger::train_tagger(data, &store, {4, 8}, 3, 1e-3);
    check_params_equal(a.params(), b.params());
    CHECK(a.epoch_nll == b.epoch_nll);

    TaggerModel c = tagger::train_tagger(data, &store, {4, 9}, 3, 1e-3);
    bool any_diff = false;
    for (const std::string& n : a.params().names())
        any_diff = any_diff || a.params().value(n).vec() != c.params().value(n).vec();
    CHECK(any_diff);
}

TEST_CASE("extraction recovers planted terms and drops core vocabulary") {
    std::vector<std::string> fillers = {"fresh", "golden", "deluxe", "premium", "harvest",
                                        "select", "orchard"};
    std::vector<std::string> titles;
    for (int i = 0; i < 7; ++i)
        titles.push_back(fillers[i] + " ruby pears gift " + fillers[(i + 2) % 7]);
    for (int i = 0; i < 3; ++i)
        titles.push_back(fillers[i] + " amber plums basket " + fillers[(i + 3) % 7]);
    for (int i = 0; i < 3; ++i)
        titles.push_back(fillers[i + 3] + " zeta plums basket " + fillers[(i + 1) % 7]);

    std::set<Term> vocab = {Term("ruby pears"), Term("amber plums"), Term("zeta plums"),
                            Term("gift")};
    auto data = labels_for(titles, vocab);
    features::EmbeddingStore store(10, 23);
    TaggerModel model = tagger::train_tagger(data, &store, {8, 5}, 40, 1e-2);
    REQUIRE(model.epoch_nll.back() < 0.1);

    auto items = items_from_titles(titles);
    auto out = tagger::extract_terms(model, items, {Term("gift")});
    REQUIRE(!out.empty());
    CHECK(out[0].term == Term("ruby pears"));
    CHECK(out[0].count == 7);
    for (const auto& e : out) {
        CHECK(e.count >= 1);
        CHECK(e.term != Term("gift"));
    }
    for (std::size_t i = 1; i < out.size(); ++i) {
        bool ordered = out[i - 1].count > out[i].count ||
                       (out[i - 1].count == out[i].count && out[i - 1].term < out[i].term);
        CHECK(ordered);
    }
    // The plum terms tie at 3 and must come out lexicographically.
    auto pos = [&](const Term& t) {
        for (std::size_t i = 0; i < out.size(); ++i)
            if (out[i].term == t) return static_cast<int>(i);
        return -1;
    };
    REQUIRE(pos(Term("amber plums")) >= 0);
    REQUIRE(pos(Term("zeta plums")) >= 0);
    CHECK(pos(Term("amber plums")) < pos(Term("zeta plums")));

    // Without the filter the core term shows up with full frequency.
    auto unfiltered = tagger::extract_terms(model, items, {});
    CHECK(pos(Term("gift")) == -1);
    bool gift_found = false;
    for (const auto& e : unfiltered)
        if (e.term == Term("gift")) {
            gift_found = true;
            CHECK(e.count == 7);
        }
    CHECK(gift_found);

    std::set<Term> gold = {Term("ruby pears")};
    CHECK(tagger::recall_at_k(out, gold, 0) == 0.0);
    CHECK(tagger::recall_at_k(out, gold, 1) == 1.0);
}

TEST_CASE("an O-biased model extracts nothing") {
    features::EmbeddingStore store(6, 2);
    TaggerModel model(&store, {4, 3});
    nn::Tensor& bias = model.params().value("tagger/emit/b");
    bias[static_cast<int>(Tag::B)] = -4.0;
    bias[static_cast<int>(Tag::I)] = -4.0;
    bias[static_cast<int>(Tag::O)] = 8.0;
    bias[static_cast<int>(Tag::E)] = -4.0;
    auto items = items_from_titles({"fresh ruby pears", "golden gift crate"});
    CHECK(tagger::extract_terms(model, items, {}).empty());
}

TEST_CASE("recall_at_k is monotone in k and clamps at the list size") {
    tagger::ExtractedTermList list = {{Term("a"), 5}, {Term("b"), 4}, {Term("c"), 3},
                                      {Term("d"), 2}};
    std::set<Term> gold = {Term("b"), Term("d"), Term("q")};
    CHECK(tagger::recall_at_k(list, gold, 0) == 0.0);
    CHECK(tagger::recall_at_k(list, gold, 1) == 0.0);
    CHECK(tagger::recall_at_k(list, gold, 2) == doctest::Approx(1.0 / 3.0));
    CHECK(tagger::recall_at_k(list, gold, 4) == doctest::Approx(2.0 / 3.0));
    CHECK(tagger::recall_at_k(list, gold, 99) == doctest::Approx(2.0 / 3.0));
    double prev = 0.0;
    for (std::size_t k = 0; k <= 6; ++k) {
        double r = tagger::recall_at_k(list, gold, k);
        CHECK(r >= prev);
        prev = r;
    }
    CHECK_THROWS_AS(tagger::recall_at_k(list, {}, 1), ValidationError);
}

TEST_CASE("extracted term lists round-trip through jsonl") {
    testutil::TempFile file("extracted_roundtrip.jsonl");
    tagger::ExtractedTermList list = {{Term("black tea"), 5}, {Term("green tea"), 5},
                                      {Term("chai"), 2}};
    tagger::save_extracted(list, file.str());
    auto back = tagger::load_extracted(file.str());
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].term == list[i].term);
        CHECK(back[i].count == list[i].count);
    }

    auto write_lines = [&](const std::vector<std::string>& lines) {
        std::ofstream os(file.str());
        for (const auto& l : lines) os << l << '\n';
    };
    write_lines({R"({"term":"a","count":1})", R"({"term":"b","count":2})"});
    CHECK_THROWS_AS(tagger::load_extracted(file.str()), ValidationError);  // count ascends
    write_lines({R"({"term":"b","count":2})", R"({"term":"a","count":2})"});
    CHECK_THROWS_AS(tagger::load_extracted(file.str()), ValidationError);  // tie order
    write_lines({R"({"term":"a","count":2})", R"({"term":"a","count":1})"});
    CHECK_THROWS_AS(tagger::load_extracted(file.str()), ValidationError);  // duplicate
    write_lines({R"({"term":"a","count":0})"});
    CHECK_THROWS_AS(tagger::load_extracted(file.str()), ValidationError);  // bad count
    write_lines({"not json"});
    CHECK_THROWS_AS(tagger::load_extracted(file.str()), ValidationError);
    CHECK_THROWS_AS(tagger::load_extracted("/nonexistent/extracted.jsonl"), ValidationError);
}

TEST_CASE("span files record decoded terms per item") {
    testutil::TempFile file("spans_out.jsonl");
    std::vector<std::string> ids = {"i0", "i1"};
    std::vector<std::vector<Term>> spans = {{Term("ruby pears")}, {}};
    tagger::save_spans(ids, spans, file.str());

    std::ifstream is(file.str());
    std::string line;
    REQUIRE(std::getline(is, line));
    auto j0 = nlohmann::json::parse(line);
    CHECK(j0.at("id") == "i0");
    CHECK(j0.at("terms") == nlohmann::json::array({"ruby pears"}));
    REQUIRE(std::getline(is, line));
    auto j1 = nlohmann::json::parse(line);
    CHECK(j1.at("id") == "i1");
    CHECK(j1.at("terms").empty());
    CHECK(!std::getline(is, line));

    CHECK_THROWS_AS(tagger::save_spans({"only"}, spans, file.str()), ValidationError);
}

TEST_CASE("model checkpoints round-trip") {
    features::EmbeddingStore store(6, 4);
    auto data = labels_for({"smoked paprika tin", "sweet paprika jar"}, {Term("paprika")});
    TaggerModel model = tagger::train_tagger(data, &store, {4, 19}, 1, 1e-3);

    testutil::TempFile file("tagger_ckpt.bin");
    model.save(file.str());
    TaggerModel back = TaggerModel::load(file.str(), &store);
    check_params_equal(model.params(), back.params());
    CHECK(back.hidden() == 4);
    CHECK(back.epoch_nll == model.epoch_nll);
    auto tokens = corpus::tokenize("smoked paprika tin");
    CHECK(tagger::decode_title(back, tokens) == tagger::decode_title(model, tokens));

    features::EmbeddingStore wrong_dim(5, 4);
    CHECK_THROWS_AS(TaggerModel::load(file.str(), &wrong_dim), ValidationError);

    testutil::TempFile raw("not_a_tagger.bin");
    nn::ParamSet other;
    other.create("misc/w", nn::Tensor({2}));
    other.save(raw.str());
    CHECK_THROWS_AS(TaggerModel::load(raw.str(), &store), ValidationError);
}

TEST_CASE("shape and length validation") {
    features::EmbeddingStore store(4, 6);
    TaggerModel model(&store, {3, 1});
    nn::Tape tape;
    nn::ParamBinding bind(model.params(), tape);

    CHECK_THROWS_AS(tagger::emission_vars(tape, bind, model, {}), ValidationError);

    auto em = tagger::emission_vars(tape, bind, model, {"a", "b"});
    auto tr = bind.var("tagger/crf/trans");
    auto st = bind.var("tagger/crf/start");
    auto en = bind.var("tagger/crf/end");
    CHECK_THROWS_AS(tagger::crf_nll(tape, em, tr, st, en, {Tag::O}), ValidationError);
    CHECK_THROWS_AS(tagger::crf_nll(tape, {}, tr, st, en, {}), ValidationError);

    nn::Tensor bad_em({2, 3});
    nn::Tensor good_em({2, 4});
    CrfTables tb;
    CHECK_THROWS_AS(tagger::crf_log_partition(bad_em, tb.trans, tb.start, tb.end),
                    ValidationError);
    CHECK_THROWS_AS(tagger::viterbi_decode(good_em, nn::Tensor({3, 3}), tb.start, tb.end),
                    ValidationError);
    CHECK_THROWS_AS(
        tagger::crf_path_score(good_em, tb.trans, tb.start, tb.end, {Tag::O}),
        ValidationError);

    TaggedSequence bad;
    bad.tokens = {"a", "b"};
    bad.tags = {Tag::O};
    CHECK_THROWS_AS(corpus::span_terms(bad), ValidationError);

    CHECK_THROWS_AS(tagger::train_tagger({}, &store, {3, 1}, 1, 1e-3), ValidationError);
    CHECK_THROWS_AS(tagger::train_tagger({bad}, &store, {3, 1}, 1, 1e-3), ValidationError);
    CHECK_THROWS_AS(TaggerModel(nullptr, {3, 1}), ValidationError);
    CHECK_THROWS_AS(TaggerModel(&store, {0, 1}), ValidationError);
}

TEST_CASE("decoded tags map back to terms") {
    auto tokens = corpus::tokenize("Golden State Fruit Pears to Compare Deluxe Gift");
    REQUIRE(tokens.size() == 8);
    TaggedSequence seq;
    seq.tokens = tokens;
    seq.tags = {Tag::O, Tag::O, Tag::O, Tag::B, Tag::O, Tag::O, Tag::O, Tag::O};
    auto terms = corpus::span_terms(seq);
    REQUIRE(terms.size() == 1);
    CHECK(terms[0] == Term("pears"));

    TaggedSequence pair;
    pair.tokens = {"ground", "coffee"};
    pair.tags = {Tag::B, Tag::E};
    auto joined = corpus::span_terms(pair);
    REQUIRE(joined.size() == 1);
    CHECK(joined[0] == Term("ground coffee"));

    TaggedSequence none;
    none.tokens = {"plain", "box"};
    none.tags = {Tag::O, Tag::O};
    CHECK(corpus::span_terms(none).empty());
}
