#include <doctest.h>

#include <algorithm>
#include <set>
#include <string>

#include "taxo/common.hpp"
#include "taxo/graph.hpp"
#include "taxo/rng.hpp"
#include "test_util.hpp"

using namespace taxo;
using namespace taxo::graph;
using corpus::ItemProfile;
using corpus::QueryRecord;
using nn::ParamSet;
using nn::Tape;
using nn::Tensor;

namespace {

corpus::ItemProfile item(const std::string& id, const std::string& title,
                         const std::string& node = "") {
    ItemProfile it;
    it.id = id;
    it.title_tokens = corpus::tokenize(title);
    if (!node.empty()) it.assigned_node = Term(node);
    return it;
}

QueryRecord query(const std::string& text, std::vector<std::string> clicks) {
    return {corpus::tokenize(text), std::move(clicks)};
}

Taxonomy fruit_core() {
    return Taxonomy::from_edges({
        {Term("grocery"), Term("fruits")},
        {Term("grocery"), Term("drinks")},
        {Term("fruits"), Term("apples")},
    });
}

}  // namespace

TEST_CASE("r2 edges follow query clicks into assigned nodes") {
    auto core = fruit_core();
    std::vector<ItemProfile> items{item("i1", "dried fruit mix", "fruits"),
                                   item("i2", "sparkling water", "drinks"),
                                   item("i3", "mystery box")};
    std::vector<QueryRecord> queries{
        query("figs jam", {"i1"}),
        query("figs syrup", {"i1", "i2"}),
        query("unrelated", {"i3"}),
    };
    auto g = HetGraph::build(core, {Term("figs")}, queries, items);

    CHECK(g.node_count() == 5);
    CHECK(g.core_count() == 4);
    int figs = g.index_of(Term("figs"));
    CHECK(g.is_new_term(figs));

    // figs aggregates from fruits and drinks; deduplicated across queries.
    std::set<int> sources(g.neighbors_r2(figs).begin(), g.neighbors_r2(figs).end());
    CHECK(sources == std::set<int>{g.index_of(Term("fruits")), g.index_of(Term("drinks"))});
    for (int v = 0; v < g.core_count(); ++v) CHECK(g.neighbors_r2(v).empty());

    auto j = g.to_json();
    std::set<std::pair<std::string, std::string>> r2;
    for (const auto& e : j.at("r2"))
        r2.emplace(e.at(0).get<std::string>(), e.at(1).get<std::string>());
    CHECK(r2.count({"fruits", "figs"}) == 1);
    CHECK(r2.count({"drinks", "figs"}) == 1);

    // Unmentioned new term keeps only its self-loop.
    auto g2 = HetGraph::build(core, {Term("pears")}, queries, items);
    int pears = g2.index_of(Term("pears"));
    CHECK(g2.neighbors_r2(pears).empty());
    CHECK(g2.neighbors_r1(pears).empty());
}

TEST_CASE("graph construction validates ids and assignments") {
    auto core = fruit_core();
    std::vector<ItemProfile> items{item("i1", "dried fruit", "fruits")};
    CHECK_THROWS_AS(
        HetGraph::build(core, {Term("figs")}, {query("figs", {"nope"})}, items),
        ValidationError);

    std::vector<ItemProfile> bad{item("i1", "dried fruit", "unknown node")};
    CHECK_THROWS_AS(HetGraph::build(core, {Term("figs")}, {query("figs", {"i1"})}, bad),
                    ValidationError);

    CHECK_THROWS_AS(HetGraph::build(core, {Term("fruits")}, {}, {}), ValidationError);
}

TEST_CASE("r1 direction configurations") {
    auto core = fruit_core();
    int grocery = 0;  // insertion order of fruit_core edges

    auto cp = HetGraph::build(core, {}, {}, {}, R1Direction::ChildToParent);
    std::set<int> agg(cp.neighbors_r1(grocery).begin(), cp.neighbors_r1(grocery).end());
    CHECK(agg == std::set<int>{cp.index_of(Term("fruits")), cp.index_of(Term("drinks"))});
    CHECK(cp.neighbors_r1(cp.index_of(Term("apples"))).empty());

    auto pc = HetGraph::build(core, {}, {}, {}, R1Direction::ParentToChild);
    CHECK(pc.neighbors_r1(grocery).empty());
    CHECK(pc.neighbors_r1(pc.index_of(Term("apples"))) ==
          std::vector<int>{pc.index_of(Term("fruits"))});

    auto both = HetGraph::build(core, {}, {}, {}, R1Direction::Both);
    CHECK(both.neighbors_r1(both.index_of(Term("fruits"))).size() == 2);  // parent + child

    // r1 endpoints stay within the core under every config.
    for (const auto* g : {&cp, &pc, &both})
        for (int v = 0; v < g->node_count(); ++v)
            for (int i : g->neighbors_r1(v)) {
                CHECK(!g->is_new_term(v));
                CHECK(!g->is_new_term(i));
            }

    CHECK(r1_direction_from_string("C->P") == R1Direction::ChildToParent);
    CHECK(r1_direction_from_string("P->C") == R1Direction::ParentToChild);
    CHECK(r1_direction_from_string("C<->P") == R1Direction::Both);
    CHECK(to_string(R1Direction::Both) == "C<->P");
    CHECK_THROWS_AS(r1_direction_from_string("up"), ValidationError);
}

TEST_CASE("r2 equals a brute-force triple join on random logs") {
    rng::Engine eng(404);
    for (int iter = 0; iter < 20; ++iter) {
        auto core = testutil::random_tree(8, 1000 + iter);

        std::vector<Term> new_terms;
        for (int t = 0; t < 4; ++t)
            new_terms.emplace_back("term" + std::to_string(iter) + std::to_string(t) +
                                   (rng::bounded(eng, 2) ? " x" : ""));

        std::vector<ItemProfile> items;
        for (int i = 0; i < 6; ++i) {
            const auto& nodes = core.nodes();
            items.push_back(item("i" + std::to_string(i), "item number " + std::to_string(i),
                                 nodes[rng::bounded(eng, nodes.size())].surface()));
        }

        std::vector<QueryRecord> queries;
        for (int q = 0; q < 12; ++q) {
            std::string text = "buy";
            if (rng::bounded(eng, 3) > 0)
                text += " " + new_terms[rng::bounded(eng, new_terms.size())].surface();
            if (rng::bounded(eng, 2)) text += " online";
            std::vector<std::string> clicks;
            int nclicks = static_cast<int>(rng::bounded(eng, 4));
            for (int c = 0; c < nclicks; ++c)
                clicks.push_back("i" + std::to_string(rng::bounded(eng, items.size())));
            queries.push_back(query(text, clicks));
        }

        auto g = HetGraph::build(core, new_terms, queries, items);

        // Nested-loop join: query-term containment x clicks x assignments.
        std::set<std::pair<std::string, std::string>> expect;
        for (const QueryRecord& q : queries)
            for (const Term& t : new_terms) {
                auto tt = corpus::tokenize(t.surface());
                bool mentioned = false;
                for (std::size_t s = 0; s + tt.size() <= q.query_tokens.size() && !mentioned;
                     ++s) {
                    bool hit = true;
                    for (std::size_t k = 0; k < tt.size(); ++k)
                        hit = hit && q.query_tokens[s + k] == tt[k];
                    mentioned = hit;
                }
                if (!mentioned) continue;
                for (const std::string& id : q.clicked_item_ids)
                    for (const ItemProfile& it : items)
                        if (it.id == id && it.assigned_node)
                            expect.insert({it.assigned_node->surface(), t.surface()});
            }

        std::set<std::pair<std::string, std::string>> got;
        for (int v = 0; v < g.node_count(); ++v)
            for (int src : g.neighbors_r2(v)) {
                CHECK(g.is_new_term(v));
                CHECK(!g.is_new_term(src));
                got.insert({g.node(src).surface(), g.node(v).surface()});
            }
        CHECK(got == expect);
    }
}

namespace {

Tensor random_h0(int n, int dim, std::uint64_t seed) {
    rng::Engine eng(seed);
    Tensor h({n, dim});
    for (long long i = 0; i < h.size(); ++i) h[i] = rng::uniform(eng, -1.0, 1.0);
    return h;
}

// Dense formulation: H_{l+1} = ReLU(sum_r A_r H_l W_r), A_r[v][i] = 1 iff
// i in N(v, r).
Tensor dense_rgcn(const HetGraph& g, const RgcnConfig& cfg, ParamSet& ps, const Tensor& h0) {
    int n = g.node_count();
    Tensor h = h0;
    for (int l = 0; l < cfg.layers; ++l) {
        Tensor next({n, cfg.dim});
        auto apply = [&](const std::string& rel, auto neighbors) {
            const Tensor& w = ps.value("rgcn/l" + std::to_string(l) + "/" + rel);
            for (int v = 0; v < n; ++v)
                for (int i : neighbors(v))
                    for (int d = 0; d < cfg.dim; ++d) {
                        double acc = 0.0;
                        for (int k = 0; k < cfg.dim; ++k) acc += h.at(i, k) * w.at(k, d);
                        next.at(v, d) += acc;
                    }
        };
        apply("r3", [](int v) { return std::vector<int>{v}; });
        apply("r1", [&g](int v) { return g.neighbors_r1(v); });
        if (cfg.use_r2) apply("r2", [&g](int v) { return g.neighbors_r2(v); });
        for (long long i = 0; i < next.size(); ++i)
            if (next[i] < 0.0) next[i] = 0.0;
        h = next;
    }
    return h;
}

}  // namespace

TEST_CASE("isolated node first layer equals relu(W_r3 h0)") {
    auto core = fruit_core();
    auto g = HetGraph::build(core, {Term("orphan")}, {}, {});
    int v = g.index_of(Term("orphan"));

    RgcnConfig cfg;
    cfg.dim = 5;
    cfg.layers = 1;
    cfg.sample_n = 0;
    rng::Engine eng(31);
    ParamSet ps;
    init_rgcn_params(ps, cfg, eng);
    Tensor h0 = random_h0(g.node_count(), cfg.dim, 32);

    Tape tape;
    nn::ParamBinding bind(ps, tape);
    auto H = rgcn_forward(tape, bind, g, cfg, h0);

    const Tensor& w = ps.value("rgcn/l0/r3");
    for (int d = 0; d < cfg.dim; ++d) {
        double acc = 0.0;
        for (int k = 0; k < cfg.dim; ++k)
            if (h0.at(v, k) != 0.0) acc += h0.at(v, k) * w.at(k, d);
        acc += 0.0;  // the r1 aggregate contributes an exact zero
        double expect = acc > 0.0 ? acc : 0.0;
        CHECK(tape.value(H).at(v, d) == expect);
    }
}

TEST_CASE("two-layer forward matches the dense-matrix oracle") {
    auto core = Taxonomy::from_edges({{Term("a"), Term("b")}, {Term("b"), Term("c")}});
    std::vector<ItemProfile> items{item("i1", "thing", "c")};
    auto g = HetGraph::build(core, {Term("z")}, {query("z", {"i1"})}, items);

    RgcnConfig cfg;
    cfg.dim = 4;
    cfg.sample_n = 0;
    rng::Engine eng(77);
    ParamSet ps;
    init_rgcn_params(ps, cfg, eng);
    Tensor h0 = random_h0(g.node_count(), cfg.dim, 78);

    Tape tape;
    nn::ParamBinding bind(ps, tape);
    auto H = rgcn_forward(tape, bind, g, cfg, h0);
    Tensor expect = dense_rgcn(g, cfg, ps, h0);
    for (long long i = 0; i < expect.size(); ++i)
        CHECK(tape.value(H)[i] == doctest::Approx(expect[i]).epsilon(1e-12));

    // All-zero input stays zero.
    Tape zt;
    nn::ParamBinding zbind(ps, zt);
    auto ZH = rgcn_forward(zt, zbind, g, cfg, Tensor({g.node_count(), cfg.dim}));
    for (long long i = 0; i < zt.value(ZH).size(); ++i) CHECK(zt.value(ZH)[i] == 0.0);

    CHECK_THROWS_AS(rgcn_forward(zt, zbind, g, cfg, Tensor({2, cfg.dim})), ValidationError);
}

TEST_CASE("zeroing an isolated node's h0 zeroes exactly its embedding") {
    auto core = fruit_core();
    auto g = HetGraph::build(core, {Term("orphan")}, {}, {});
    int v = g.index_of(Term("orphan"));

    RgcnConfig cfg;
    cfg.dim = 4;
    cfg.sample_n = 0;
    rng::Engine eng(91);
    ParamSet ps;
    init_rgcn_params(ps, cfg, eng);

    Tensor h0 = random_h0(g.node_count(), cfg.dim, 92);
    Tape t1;
    nn::ParamBinding b1(ps, t1);
    Tensor base = t1.value(rgcn_forward(t1, b1, g, cfg, h0));

    Tensor h0z = h0;
    for (int d = 0; d < cfg.dim; ++d) h0z.at(v, d) = 0.0;
    Tape t2;
    nn::ParamBinding b2(ps, t2);
    Tensor zeroed = t2.value(rgcn_forward(t2, b2, g, cfg, h0z));

    for (int u = 0; u < g.node_count(); ++u)
        for (int d = 0; d < cfg.dim; ++d) {
            if (u == v) CHECK(zeroed.at(u, d) == 0.0);
            else CHECK(zeroed.at(u, d) == base.at(u, d));
        }
}

TEST_CASE("node relabeling permutes outputs identically") {
    // Same tree built with two different node insertion orders.
    auto t1 = Taxonomy::from_edges(
        {{Term("r"), Term("a")}, {Term("r"), Term("b")}, {Term("a"), Term("c")}});
    auto t2 = Taxonomy::from_edges(
        {{Term("a"), Term("c")}, {Term("r"), Term("b")}, {Term("r"), Term("a")}});

    std::vector<ItemProfile> items{item("i1", "thing one", "c"), item("i2", "thing two", "b")};
    std::vector<QueryRecord> queries{query("z stuff", {"i1"}), query("w stuff", {"i2", "i1"})};
    std::vector<Term> nt1{Term("z"), Term("w")};
    std::vector<Term> nt2{Term("w"), Term("z")};

    auto g1 = HetGraph::build(t1, nt1, queries, items);
    auto g2 = HetGraph::build(t2, nt2, queries, items);

    RgcnConfig cfg;
    cfg.dim = 4;
    cfg.sample_n = 0;
    rng::Engine eng(55);
    ParamSet ps;
    init_rgcn_params(ps, cfg, eng);

    auto embed = [&](const HetGraph& g) {
        Tensor h0({g.node_count(), cfg.dim});
        // h0 keyed by term so both orderings get identical per-term rows.
        for (const Term& t : g.nodes()) {
            rng::Engine te(std::hash<std::string>{}(t.surface()));
            int v = g.index_of(t);
            for (int d = 0; d < cfg.dim; ++d) h0.at(v, d) = rng::uniform(te, -1, 1);
        }
        Tape tape;
        nn::ParamBinding bind(ps, tape);
        auto var = rgcn_forward(tape, bind, g, cfg, h0);
        return std::pair<Tape, Tape::Var>(std::move(tape), var);
    };

    auto [tape1, H1] = embed(g1);
    auto [tape2, H2] = embed(g2);
    for (const Term& t : g1.nodes()) {
        int v1 = g1.index_of(t);
        int v2 = g2.index_of(t);
        for (int d = 0; d < cfg.dim; ++d)
            CHECK(tape1.value(H1).at(v1, d) ==
                  doctest::Approx(tape2.value(H2).at(v2, d)).epsilon(1e-12));
    }
}

TEST_CASE("neighbour sampling is per-epoch deterministic and bounded") {
    std::vector<std::pair<Term, Term>> edges;
    for (int i = 0; i < 12; ++i) edges.emplace_back(Term("hub"), Term("c" + std::to_string(i)));
    auto core = Taxonomy::from_edges(edges);
    auto g = HetGraph::build(core, {}, {}, {});

    RgcnConfig cfg;
    cfg.dim = 3;
    cfg.layers = 1;
    cfg.sample_n = 5;
    cfg.seed = 9;
    rng::Engine eng(5);
    ParamSet ps;
    init_rgcn_params(ps, cfg, eng);
    Tensor h0 = random_h0(g.node_count(), cfg.dim, 6);

    auto run = [&](std::uint64_t epoch) {
        Tape tape;
        nn::ParamBinding bind(ps, tape);
        return Tensor(tape.value(rgcn_forward(tape, bind, g, cfg, h0, epoch)));
    };
    Tensor a0 = run(0), b0 = run(0), a1 = run(1);
    int hub = g.index_of(Term("hub"));
    bool same_epoch_equal = true, diff_epoch_equal = true;
    for (int d = 0; d < cfg.dim; ++d) {
        same_epoch_equal = same_epoch_equal && a0.at(hub, d) == b0.at(hub, d);
        diff_epoch_equal = diff_epoch_equal && a0.at(hub, d) == a1.at(hub, d);
    }
    CHECK(same_epoch_equal);
    CHECK(!diff_epoch_equal);

    // With sampling disabled the hub reads all 12 children: compare against
    // the dense oracle.
    cfg.sample_n = 0;
    Tape tape;
    nn::ParamBinding bind(ps, tape);
    auto H = rgcn_forward(tape, bind, g, cfg, h0);
    Tensor expect = dense_rgcn(g, cfg, ps, h0);
    for (int d = 0; d < cfg.dim; ++d)
        CHECK(tape.value(H).at(hub, d) == doctest::Approx(expect.at(hub, d)).epsilon(1e-12));
}

TEST_CASE("rgcn gradients pass finite differences on a small graph") {
    auto core = Taxonomy::from_edges({{Term("a"), Term("b")}, {Term("b"), Term("c")}});
    std::vector<ItemProfile> items{item("i1", "thing", "c")};
    auto g = HetGraph::build(core, {Term("z"), Term("y")}, {query("z", {"i1"})}, items);
    REQUIRE(g.node_count() == 5);

    RgcnConfig cfg;
    cfg.dim = 3;
    cfg.sample_n = 0;
    rng::Engine eng(2718);
    ParamSet ps;
    init_rgcn_params(ps, cfg, eng);
    Tensor h0 = random_h0(g.node_count(), cfg.dim, 2719);

    auto f = [&](ParamSet& p, bool want) {
        Tape tape;
        nn::ParamBinding bind(p, tape);
        auto H = rgcn_forward(tape, bind, g, cfg, h0);
        auto loss = tape.sum(tape.mul(H, H));
        if (want) {
            tape.backward(loss);
            bind.harvest();
        }
        return tape.scalar_value(loss);
    };
    auto res = nn::grad_check(f, ps);
    CAPTURE(res.worst_param);
    CHECK(res.max_rel_err < 1e-6);
}
