#include <catch2/catch_amalgamated.hpp>

#include "nre/matrix.hpp"
#include "nre/rng.hpp"

using namespace nre;

TEST_CASE("matmul small hand example") {
    Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
    Matrix b(3, 2, {7, 8, 9, 10, 11, 12});
    Matrix c = matmul(a, b);
    REQUIRE(c.rows() == 2);
    REQUIRE(c.cols() == 2);
    CHECK(c(0, 0) == 58.0);
    CHECK(c(0, 1) == 64.0);
    CHECK(c(1, 0) == 139.0);
    CHECK(c(1, 1) == 154.0);
}

TEST_CASE("matmul variants agree with plain matmul") {
    Rng rng(11);
    Matrix a(4, 6);
    Matrix b(6, 5);
    for (double& v : a.storage()) v = rng.normal();
    for (double& v : b.storage()) v = rng.normal();

    Matrix bt(5, 6);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 5; ++j) bt(j, i) = b(i, j);
    Matrix c1 = matmul(a, b);
    Matrix c2 = matmul_bt(a, bt);
    for (std::size_t i = 0; i < c1.size(); ++i)
        CHECK(c1.data()[i] == Catch::Approx(c2.data()[i]).margin(1e-12));

    Matrix at(6, 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 6; ++j) at(j, i) = a(i, j);
    Matrix c3 = matmul_at(at, b);
    for (std::size_t i = 0; i < c1.size(); ++i)
        CHECK(c1.data()[i] == Catch::Approx(c3.data()[i]).margin(1e-12));
}

TEST_CASE("shape errors") {
    Matrix a(2, 3);
    Matrix b(2, 2);
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
    CHECK_THROWS_AS(a += b, ShapeError);
    CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(take_rows(a, 1, 2), ShapeError);
}

TEST_CASE("concat and row selection") {
    Matrix a(2, 2, {1, 2, 3, 4});
    Matrix b(2, 1, {5, 6});
    Matrix h = hcat(a, b);
    REQUIRE(h.cols() == 3);
    CHECK(h(0, 2) == 5.0);
    CHECK(h(1, 2) == 6.0);

    Matrix v = vcat(a, a);
    REQUIRE(v.rows() == 4);
    CHECK(v(3, 1) == 4.0);

    Matrix picked = take_rows(v, {3, 0});
    CHECK(picked(0, 0) == 3.0);
    CHECK(picked(1, 0) == 1.0);
}

TEST_CASE("column statistics") {
    Matrix a(2, 1, {0.0, 2.0});
    CHECK(column_means(a)[0] == 1.0);
    CHECK(column_vars(a)[0] == 1.0);  // population variance
}

TEST_CASE("ops on finite inputs stay finite") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        Matrix a(3, 4);
        Matrix b(4, 2);
        for (double& v : a.storage()) v = rng.normal(0, 100);
        for (double& v : b.storage()) v = rng.normal(0, 100);
        CHECK(matmul(a, b).all_finite());
        CHECK(hcat(a, a).all_finite());
    }
}
