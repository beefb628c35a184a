#include "doctest.h"

#include "cfrex/item_composition.hpp"

using namespace cfrex;

namespace {

// 2 continuous dims, tri categorical, one-hot categorical (2 values plus the
// appended zero baseline), one field with 3 orthonormal tokens.
ItemComposition make_item() {
    ItemComposition item;
    item.item_id = "i1";
    item.continuous_names = {"price", "rating"};
    item.continuous = {0.5, -1.0};
    item.continuous_mean = {10.0, 3.0};
    item.continuous_std = {2.0, 1.0};

    ItemComposition::Categorical fit;
    fit.name = "fit";
    fit.domain = {"small", "true", "large"};
    fit.encodings = {{-1.0}, {0.0}, {1.0}};
    fit.original_index = 2;
    fit.baseline_index = 1;
    item.categoricals.push_back(fit);

    ItemComposition::Categorical color;
    color.name = "color";
    color.domain = {"red", "blue", ""};
    color.encodings = {{1.0, 0.0}, {0.0, 1.0}, {0.0, 0.0}};
    color.original_index = 0;
    color.baseline_index = 2;
    item.categoricals.push_back(color);

    ItemComposition::Field field;
    field.name = "review";
    field.dim = 3;
    field.tokens = {{"good", {1.0, 0.0, 0.0}},
                    {"warm", {0.0, 1.0, 0.0}},
                    {"soft", {0.0, 0.0, 1.0}}};
    item.fields.push_back(field);
    return item;
}

}  // namespace

TEST_CASE("layout offsets") {
    auto item = make_item();
    CHECK(item.width() == 8);
    CHECK(item.continuous_offset(1) == 1);
    CHECK(item.categorical_offset(0) == 2);
    CHECK(item.categorical_offset(1) == 3);
    CHECK(item.field_offset(0) == 5);
    CHECK(item.token_count() == 3);
    CHECK(item.token_location(2) == std::pair<std::size_t, std::size_t>{0, 2});
    CHECK(item.token_at(1).token == "warm");
    CHECK_THROWS_AS(item.token_location(3), Error);
}

TEST_CASE("assemble produces the factual vector") {
    auto item = make_item();
    Vec v = item.assemble();
    Vec expect = {0.5, -1.0, 1.0, 1.0, 0.0, 1.0 / 3, 1.0 / 3, 1.0 / 3};
    REQUIRE(v.size() == expect.size());
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == doctest::Approx(expect[i]));
}

TEST_CASE("token weights scale the fixed-denominator mean") {
    auto item = make_item();
    Vec all_one = item.assemble_token_weights({1.0, 1.0, 1.0});
    Vec base = item.assemble();
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(all_one[i] == doctest::Approx(base[i]));

    Vec halved = item.assemble_token_weights({0.5, 1.0, 1.0});
    CHECK(halved[5] == doctest::Approx(0.5 / 3));
    CHECK(halved[6] == doctest::Approx(1.0 / 3));
    CHECK_THROWS_AS(item.assemble_token_weights({1.0}), DimensionError);
}

TEST_CASE("masking renormalizes over the kept tokens") {
    auto item = make_item();
    Vec v = item.assemble_masked({0, 1, 1});
    CHECK(v[5] == doctest::Approx(0.0));
    CHECK(v[6] == doctest::Approx(0.5));
    CHECK(v[7] == doctest::Approx(0.5));

    // Everything removed leaves a zero block.
    Vec empty = item.assemble_masked({0, 0, 0});
    CHECK(empty[5] == 0.0);
    CHECK(empty[6] == 0.0);
    CHECK(empty[7] == 0.0);
    CHECK(empty[0] == doctest::Approx(0.5));  // other blocks untouched
    CHECK_THROWS_AS(item.assemble_masked({1, 1}), DimensionError);
}

TEST_CASE("masking without renormalization keeps the original denominator") {
    auto item = make_item();
    ItemComposition::Edits e;
    e.token_keep = {0, 1, 1};
    e.renormalize_kept = false;
    Vec v = item.assemble_edited(e);
    CHECK(v[6] == doctest::Approx(1.0 / 3));
}

TEST_CASE("token replacement swaps a single slot vector") {
    auto item = make_item();
    Vec repl = {-1.0, 0.0, 0.0};
    Vec v = item.assemble_with_tokens({&repl, nullptr, nullptr});
    CHECK(v[5] == doctest::Approx(-1.0 / 3));
    CHECK(v[6] == doctest::Approx(1.0 / 3));
}

TEST_CASE("categorical choice and continuous shifts") {
    auto item = make_item();
    ItemComposition::Edits e;
    e.categorical_choice = {1, 2};  // fit -> baseline, color -> zero block
    e.continuous_shift = {-0.25, 0.5};
    Vec v = item.assemble_edited(e);
    CHECK(v[0] == doctest::Approx(0.25));
    CHECK(v[1] == doctest::Approx(-0.5));
    CHECK(v[2] == doctest::Approx(0.0));
    CHECK(v[3] == doctest::Approx(0.0));
    CHECK(v[4] == doctest::Approx(0.0));

    // -1 means "keep the original choice".
    ItemComposition::Edits keep;
    keep.categorical_choice = {-1, -1};
    CHECK(item.assemble_edited(keep) == item.assemble());
    ItemComposition::Edits bad;
    bad.continuous_shift = {1.0};
    CHECK_THROWS_AS(item.assemble_edited(bad), DimensionError);
}
