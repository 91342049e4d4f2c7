#include <doctest.h>

#include <cmath>
#include <set>

#include "opal/metrics.hpp"
#include "opal/selection.hpp"
#include "support/selection_props.hpp"

using namespace opal;
using namespace opal::testing;

namespace {

PropagationResult make_prop(std::vector<std::tuple<SampleId, ClassIndex, double>> rows) {
    PropagationResult r;
    for (auto [id, c, v] : rows) {
        PropagationEntry e;
        e.id = id;
        e.pseudo_label = c;
        e.confidence = v;
        r.entries.push_back(e);
    }
    return r;
}

} // namespace

TEST_CASE("select_confident quotas") {
    std::vector<std::tuple<SampleId, ClassIndex, double>> rows;
    for (SampleId i = 0; i < 25; ++i) rows.emplace_back(i, 0, 0.5 + 0.01 * i);
    rows.emplace_back(100, 1, 0.6);
    const auto prop = make_prop(rows);
    const auto set = select_confident(prop, 0.10, 2);
    CHECK(set.source_network == 2);
    REQUIRE(set.size() == 4);  // ceil(2.5) + 1
    CHECK(set.ids() == std::vector<SampleId>{22, 23, 24, 100});
    CHECK(check_select_confident(prop, 0.10, set).empty());
}

TEST_CASE("select_confident ties go to the lower id") {
    std::vector<std::tuple<SampleId, ClassIndex, double>> rows;
    for (SampleId i = 0; i < 30; ++i) rows.emplace_back(i * 2, 0, 0.8);
    const auto set = select_confident(make_prop(rows), 0.10);
    CHECK(set.ids() == std::vector<SampleId>{0, 2, 4});
}

TEST_CASE("select_confident property") {
    Rng rng(31);
    for (int t = 0; t < 300; ++t) {
        const auto prop = random_propagation(rng);
        for (double frac : {0.1, 0.25}) {
            const auto set = select_confident(prop, frac, 1);
            CHECK(check_select_confident(prop, frac, set) == "");
        }
    }
}

TEST_CASE("select_uncertain") {
    const auto prop = make_prop({{1, 0, 0.9}, {2, 1, 0.51}, {3, 0, 0.55}, {4, 2, 0.7}});
    const auto q = select_uncertain(prop, 2);
    CHECK(q.ids() == std::vector<SampleId>{2, 3});
    CHECK(q.k_active == 2);
    CHECK(select_uncertain(prop, 10).items.size() == 4);
    const auto tie = make_prop({{9, 0, 0.6}, {4, 0, 0.6}, {7, 0, 0.6}});
    CHECK(select_uncertain(tie, 2).ids() == std::vector<SampleId>{4, 7});
}

TEST_CASE("merge_active examples") {
    const SampleId a = 1, b = 2, c = 3;
    ActiveQuery q1{{{a, 0.51}, {b, 0.55}}, 2};
    ActiveQuery q2{{{c, 0.53}, {a, 0.52}}, 2};
    std::sort(q2.items.begin(), q2.items.end(),
              [](const QueryItem& x, const QueryItem& y) { return x.confidence < y.confidence; });
    const auto m = merge_active(q1, q2, 2);
    REQUIRE(m.items.size() == 2);
    CHECK(m.items[0] == QueryItem{a, 0.51});
    CHECK(m.items[1] == QueryItem{c, 0.53});
    CHECK(merge_active(q1, q1, 1).ids() == std::vector<SampleId>{a});
    CHECK(merge_active(q1, ActiveQuery{}, 2) == ActiveQuery{q1.items, 2});
    const auto skip = merge_active(q1, q2, 2, [&](SampleId id) { return id == a; });
    CHECK(skip.ids() == std::vector<SampleId>{c, b});
}

TEST_CASE("merge_active property") {
    Rng rng(77);
    for (int t = 0; t < 300; ++t) {
        const auto q1 = random_query(rng);
        const auto q2 = random_query(rng);
        const auto k = 1 + static_cast<std::size_t>(rng.below(4));
        std::set<SampleId> labeled;
        for (int j = 0; j < 3; ++j) labeled.insert(static_cast<SampleId>(rng.below(15)));
        const auto out = merge_active(q1, q2, k, [&](SampleId id) { return labeled.contains(id); });
        CHECK(check_merge(q1, q2, k, labeled, out) == "");
    }
}

TEST_CASE("budget never lets c_active pass n_active") {
    CHECK(query_budget(0, 48, 2) == 2);
    CHECK(query_budget(47, 48, 2) == 1);
    CHECK(query_budget(48, 48, 2) == 0);
    ActiveQuery q{{{1, 0.5}, {2, 0.6}}, 2};
    CHECK(truncate(q, 1).ids() == std::vector<SampleId>{1});
    for (std::size_t n = 0; n < 12; ++n)
        for (std::size_t k = 1; k < 5; ++k) {
            std::size_t c = 0;
            while (query_budget(c, n, k) > 0) c += query_budget(c, n, k);
            CHECK(c == n);
        }
}

TEST_CASE("without drops excluded ids") {
    const auto prop = make_prop({{1, 0, 0.9}, {2, 1, 0.51}, {3, 0, 0.55}});
    const auto r = without(prop, [](SampleId id) { return id == 2; });
    REQUIRE(r.entries.size() == 2);
    CHECK(r.entries[1].id == 3);
}

TEST_CASE("pseudo-label set json round trip") {
    PseudoLabelSet s{2, {{1, 0, 0.75}, {5, 2, 1.0}}};
    CHECK(PseudoLabelSet::from_json(s.to_json()) == s);
}

TEST_CASE("kappa on a two-class confusion matrix") {
    const std::vector<std::vector<std::size_t>> m{{45, 5}, {15, 35}};
    CHECK(std::abs(cohens_kappa(m) - 0.6) < 1e-9);
    std::vector<ClassIndex> truth, pred;
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t p = 0; p < 2; ++p)
            for (std::size_t k = 0; k < m[t][p]; ++k) {
                truth.push_back(static_cast<ClassIndex>(t));
                pred.push_back(static_cast<ClassIndex>(p));
            }
    CHECK(confusion_matrix(pred, truth, 2) == m);
    CHECK(std::abs(cohens_kappa(pred, truth, 2) - 0.6) < 1e-9);
    CHECK(accuracy(pred, truth) == doctest::Approx(0.8));
}

TEST_CASE("kappa edge cases") {
    const std::vector<ClassIndex> same{1, 1, 1};
    CHECK(cohens_kappa(same, same, 3) == 0.0);  // chance agreement is total
    const std::vector<ClassIndex> truth{0, 1, 2, 0};
    CHECK(cohens_kappa(truth, truth, 3) == doctest::Approx(1.0));
}

TEST_CASE("kappa of independent random predictions is near zero") {
    Rng rng(4);
    std::vector<ClassIndex> truth, pred;
    for (int i = 0; i < 20000; ++i) {
        truth.push_back(static_cast<ClassIndex>(rng.below(4)));
        pred.push_back(static_cast<ClassIndex>(rng.below(4)));
    }
    CHECK(std::abs(cohens_kappa(pred, truth, 4)) < 0.02);
}

TEST_CASE("population mean and std") {
    const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
    const auto ms = mean_std(v);
    CHECK(ms.mean == doctest::Approx(5.0));
    CHECK(ms.std == doctest::Approx(2.0));
}
