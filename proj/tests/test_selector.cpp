#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>

#include "test_support.hpp"

using namespace pmmkit;
using testing::error_category;

namespace {

// Head whose boundary normals all have unit norm between class 0 and 1 so
// that MMS equals the score gap for 2-class rows.
LinearHead unit_pair_head() { return LinearHead{Mat::from_rows({{0.5, 0}, {-0.5, 0}}), {0, 0}}; }

// Independent MMS per row plus a full stable sort.
std::vector<std::size_t> oracle_selection(const ScoreMatrix& s, const LinearHead& head, std::size_t b) {
    std::vector<double> margin(s.rows());
    for (std::size_t i = 0; i < s.rows(); ++i) {
        std::size_t j1 = 0;
        for (std::size_t j = 1; j < s.cols(); ++j)
            if (s(i, j) > s(i, j1)) j1 = j;
        std::size_t j2 = j1 == 0 ? 1 : 0;
        for (std::size_t j = 0; j < s.cols(); ++j)
            if (j != j1 && s(i, j) > s(i, j2)) j2 = j;
        double n = 0.0;
        for (std::size_t t = 0; t < head.dim(); ++t) {
            const double u = head.W(j1, t) - head.W(j2, t);
            n += u * u;
        }
        n = std::sqrt(n);
        margin[i] = n < 1e-12 ? std::numeric_limits<double>::infinity() : (s(i, j1) - s(i, j2)) / n;
    }
    std::vector<std::size_t> idx(s.rows());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) { return margin[a] < margin[c]; });
    idx.resize(b);
    return idx;
}

}  // namespace

TEST_CASE("select_mms picks the smallest margins") {
    const LinearHead h = unit_pair_head();
    const ScoreMatrix s = Mat::from_rows({{0.3, 0}, {0.1, 0}, {0.5, 0}, {0.2, 0}});
    const auto r = select_mms(s, h, 2);
    CHECK(r.indices == std::vector<std::size_t>{1, 3});
    REQUIRE(r.mms_values.size() == 2);
    CHECK(r.mms_values[0] == Catch::Approx(0.1));
    CHECK(r.mms_values[1] == Catch::Approx(0.2));
    REQUIRE(r.mean_mms);
    CHECK(*r.mean_mms == Catch::Approx(0.15));

    const auto all = select_mms(s, h, 4);
    CHECK(std::set<std::size_t>(all.indices.begin(), all.indices.end()) == std::set<std::size_t>{0, 1, 2, 3});
    CHECK(error_category([&] { select_mms(s, h, 5); }) == ErrorCategory::invalid_argument);
}

TEST_CASE("select_mms breaks ties by index and puts degenerate rows last") {
    const LinearHead h{Mat::from_rows({{1, 0}, {1, 0}, {0, 1}}), {0, 0, 0}};
    // Rows 0 and 2 have top-2 = classes {0,1} with identical weights: +inf.
    const ScoreMatrix s = Mat::from_rows({{2, 1, 0}, {0.5, 0, 0.5}, {3, 2.5, 0}, {1, 0, 0.5}});
    const auto r = select_mms(s, h, 4);
    CHECK(r.indices == std::vector<std::size_t>{1, 3, 0, 2});
    CHECK(std::isinf(*r.mean_mms));
    CHECK(select_mms(s, h, 2).indices == std::vector<std::size_t>{1, 3});
}

TEST_CASE("select_mms matches the full-sort oracle on matrices with duplicates") {
    RngStream rng(1);
    for (int rep = 0; rep < 500; ++rep) {
        const std::size_t k = 2 + rng.uniform_index(5);
        const std::size_t B = 1 + rng.uniform_index(40);
        const auto head = testing::random_head(k, 3, rng);
        ScoreMatrix s(B, k);
        for (double& v : s.data()) v = static_cast<double>(rng.uniform_index(4)) * 0.5;
        if (B > 2)  // force an exact duplicate row
            std::copy(s.row(0).begin(), s.row(0).end(), s.row(B - 1).begin());
        const std::size_t b = 1 + rng.uniform_index(B);
        CHECK(select_mms(s, head, b).indices == oracle_selection(s, head, b));
    }
}

TEST_CASE("select_mms is invariant to positive head scaling") {
    RngStream rng(2);
    for (int rep = 0; rep < 100; ++rep) {
        const auto head = testing::random_head(5, 4, rng);
        const Mat phi = testing::random_mat(30, 4, rng);
        const auto base = select_mms(score_batch(head, phi), head, 7).indices;
        for (double c : {1e-3, 1.0, 1e3}) {
            const auto scaled = head.scaled(c);
            CHECK(select_mms(score_batch(scaled, phi), scaled, 7).indices == base);
        }
    }
}

TEST_CASE("select_random") {
    RngStream a(4), b(4);
    const auto r = select_random(20, 5, a);
    CHECK(r.indices == select_random(20, 5, b).indices);
    CHECK(r.indices.size() == 5);
    CHECK(std::set<std::size_t>(r.indices.begin(), r.indices.end()).size() == 5);
    for (std::size_t i : r.indices) CHECK(i < 20);
    CHECK(r.mms_values.empty());
    CHECK_FALSE(r.mean_mms);

    RngStream c(5);
    std::vector<std::size_t> iota(9);
    std::iota(iota.begin(), iota.end(), std::size_t{0});
    CHECK(select_random(9, 9, c).indices == iota);
    CHECK(error_category([&] { select_random(3, 4, c); }) == ErrorCategory::invalid_argument);
}

TEST_CASE("select_random is uniform") {
    RngStream rng(6);
    const int draws = 100000;
    std::vector<int> counts(10, 0);
    for (int i = 0; i < draws; ++i) ++counts[select_random(10, 1, rng).indices[0]];
    const double expect = draws / 10.0;
    const double sigma = std::sqrt(draws * 0.1 * 0.9);
    double chi2 = 0.0;
    for (int c : counts) {
        CHECK(std::abs(c - expect) <= 3.0 * sigma);
        chi2 += (c - expect) * (c - expect) / expect;
    }
    // 9 degrees of freedom; 99.9th percentile is about 27.9.
    CHECK(chi2 < 27.9);
}

TEST_CASE("selection config validation") {
    CHECK(error_category([] { SelectionConfig{SelectionMode::mms, 10, 11}.validate(); }) == ErrorCategory::config);
    CHECK(error_category([] { SelectionConfig{SelectionMode::mms, 10, 0}.validate(); }) == ErrorCategory::config);
    CHECK_FALSE(error_category([] { SelectionConfig{SelectionMode::mms, 10, 10}.validate(); }));
}
