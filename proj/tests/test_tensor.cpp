#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "amc/rng.hpp"
#include "amc/tape.hpp"
#include "amc/tensor.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace amc;
using testutil::fd_check;
using testutil::random_tensor;
using testutil::random_tensor_off_kink;

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor::from(Shape{2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(Tensor::from(Shape{2}, {1.0, std::nan("")}), ContractError);
    CHECK_THROWS_AS(Tensor::from(Shape{1}, {INFINITY}), ContractError);
    CHECK_THROWS_AS(Shape{-1}, ShapeError);
    CHECK_THROWS_AS(Shape{0}, ShapeError);

    Tensor t = Tensor::from(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.at(1, 2) == 6);
    CHECK(Tensor().empty());
    CHECK_FALSE(t.empty());
}

TEST_CASE("matmul identity and projector") {
    Tape t;
    Value id2 = t.input(Tensor::from(Shape{2, 2}, {1, 0, 0, 1}));
    Value a = t.input(Tensor::from(Shape{2, 2}, {1, 2, 3, 4}));
    CHECK(t.value(matmul(id2, a)).data == std::vector<double>{1, 2, 3, 4});

    Value proj = t.input(Tensor::from(Shape{2, 2}, {1, 0, 0, 0}));
    Value col = t.input(Tensor::from(Shape{2, 1}, {5, 7}));
    CHECK(t.value(matmul(proj, col)).data == std::vector<double>{5, 0});
}

TEST_CASE("matmul against triple-loop oracle") {
    Rng rng(7);
    Tensor a = random_tensor(rng, Shape{3, 4});
    Tensor b = random_tensor(rng, Shape{4, 2});
    Tape t;
    Tensor got = t.value(matmul(t.input(a), t.input(b)));
    Tensor want = testutil::naive_matmul(a, b);
    REQUIRE(got.shape == want.shape);
    for (long long i = 0; i < got.numel(); ++i) {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("matmul vector conventions") {
    Tape t;
    Value row = t.input(Tensor::from(Shape{2}, {1, 2}));
    Value m = t.input(Tensor::from(Shape{2, 3}, {1, 2, 3, 4, 5, 6}));
    Tensor rm = t.value(matmul(row, m));
    CHECK(rm.shape == Shape{3});
    CHECK(rm.data == std::vector<double>{9, 12, 15});

    Value col = t.input(Tensor::from(Shape{3}, {1, 0, 1}));
    Tensor mc = t.value(matmul(m, col));
    CHECK(mc.shape == Shape{2});
    CHECK(mc.data == std::vector<double>{4, 10});

    Tensor dd = t.value(matmul(row, t.input(Tensor::from(Shape{2}, {3, 4}))));
    CHECK(dd.shape == Shape{1});
    CHECK(dd.value() == 11);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape t;
    Value a = t.input(Tensor::zeros(Shape{2, 3}));
    Value b = t.input(Tensor::zeros(Shape{2, 3}));
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
    }
}

TEST_CASE("softmax trivial cases and oracle") {
    Tape t;
    Tensor two = t.value(softmax(t.input(Tensor::from(Shape{2}, {0, 0}))));
    CHECK(two.data == std::vector<double>{0.5, 0.5});

    for (double c : {-3.0, 0.0, 41.5}) {
        Tensor three = t.value(softmax(t.input(Tensor::filled(Shape{3}, c))));
        for (double v : three.data) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-14));
    }

    std::vector<double> x = {1, 2, 3};
    Tensor got = t.value(softmax(t.input(Tensor::from(Shape{3}, x))));
    auto want = testutil::naive_softmax(x);
    for (int i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(want[static_cast<size_t>(i)]).epsilon(1e-14));
}

TEST_CASE("softmax sums to one and is shift invariant") {
    Rng rng(11);
    for (int iter = 0; iter < 200; ++iter) {
        const int n = 1 + static_cast<int>(rng.below(8));
        Tensor x = random_tensor(rng, Shape{n}, 3.0);
        Tape t;
        Tensor y = t.value(softmax(t.input(x)));
        double sum = 0.0;
        for (double v : y.data) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::fabs(sum - 1.0) < 1e-12);

        Tensor shifted = x;
        const double c = rng.uniform(-5.0, 5.0);
        for (double& v : shifted.data) v += c;
        Tensor y2 = t.value(softmax(t.input(shifted)));
        for (long long i = 0; i < y.numel(); ++i) CHECK(std::fabs(y[i] - y2[i]) < 1e-10);
    }
}

TEST_CASE("softmax rank-2 axes") {
    Tape t;
    Tensor x = Tensor::from(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor rows = t.value(softmax(t.input(x), 1));
    for (int i = 0; i < 2; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 3; ++j) sum += rows.at(i, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    }
    Tensor cols = t.value(softmax(t.input(x), 0));
    for (int j = 0; j < 3; ++j) {
        CHECK(cols.at(0, j) + cols.at(1, j) == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("cosine trivial cases") {
    Rng rng(3);
    Tape t;
    Tensor u = random_tensor(rng, Shape{5});
    CHECK(t.value(cosine(t.input(u), t.input(u))).value() == doctest::Approx(1.0).epsilon(1e-12));

    Value e1 = t.input(Tensor::from(Shape{2}, {1, 0}));
    Value e2 = t.input(Tensor::from(Shape{2}, {0, 1}));
    CHECK(t.value(cosine(e1, e2)).value() == 0.0);

    for (int iter = 0; iter < 20; ++iter) {
        Tensor a = random_tensor(rng, Shape{4});
        Tensor b = random_tensor(rng, Shape{4});
        Tensor a3 = a;
        for (double& v : a3.data) v *= 3.0;
        const double c1 = t.value(cosine(t.input(a), t.input(b))).value();
        const double c2 = t.value(cosine(t.input(a3), t.input(b))).value();
        CHECK(std::fabs(c1 - c2) < 1e-12);
        CHECK(c1 >= -1.0 - 1e-12);
        CHECK(c1 <= 1.0 + 1e-12);
    }

    // Zero vectors are safe thanks to the epsilon clamp.
    Value z = t.input(Tensor::zeros(Shape{3}));
    CHECK(t.value(cosine(z, z)).value() == 0.0);
}

TEST_CASE("backward of x*x at 3") {
    Tape t;
    Value x = t.param(Tensor::scalar(3.0));
    Value y = dot(x, x);
    t.backward(y);
    CHECK(t.gradient(x).value() == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("backward of softmax-then-dot matches finite differences") {
    Rng rng(23);
    Tensor x = random_tensor(rng, Shape{5});
    Tensor w = random_tensor(rng, Shape{5});

    Tape t;
    Value xv = t.param(x);
    Value out = dot(softmax(xv), t.input(w));
    t.backward(out);
    Tensor analytic = t.gradient(xv);

    const double h = 1e-5;
    for (int i = 0; i < 5; ++i) {
        auto eval = [&](double delta) {
            Tensor shifted = x;
            shifted[i] += delta;
            Tape t2;
            return t2.value(dot(softmax(t2.input(shifted)), t2.input(w))).value();
        };
        const double fd = (eval(h) - eval(-h)) / (2 * h);
        CHECK(std::fabs(analytic[i] - fd) < 1e-6);
    }
}

TEST_CASE("disconnected leaf gets an exactly zero gradient") {
    Tape t;
    Value used = t.param(Tensor::scalar(2.0));
    Value unused = t.param(Tensor::from(Shape{3}, {1, 2, 3}));
    Value y = dot(used, used);
    t.backward(y);
    Tensor g = t.gradient(unused);
    CHECK(g.shape == Shape{3});
    for (double v : g.data) CHECK(v == 0.0);
}

TEST_CASE("backward requires a scalar seed") {
    Tape t;
    Value v = t.param(Tensor::from(Shape{2}, {1, 2}));
    CHECK_THROWS_AS(t.backward(v), ContractError);
}

TEST_CASE("gradient accumulates at shared nodes") {
    Tape t;
    Value x = t.param(Tensor::scalar(5.0));
    // y = x*x + x*x uses x four times through two shared products.
    Value y = lincomb({{1.0, dot(x, x)}, {1.0, dot(x, x)}});
    t.backward(y);
    CHECK(t.gradient(x).value() == doctest::Approx(20.0).epsilon(1e-14));
}

TEST_CASE("relu adjoint gates on strictly positive input") {
    Tape t;
    Value x = t.param(Tensor::from(Shape{4}, {-1.0, 0.0, 2.0, 3.5}));
    Value y = dot(relu(x), t.input(Tensor::filled(Shape{4}, 1.0)));
    t.backward(y);
    Tensor g = t.gradient(x);
    CHECK(g.data == std::vector<double>{0.0, 0.0, 1.0, 1.0});
}

TEST_CASE("tape replay is bit-identical") {
    Rng rng(99);
    Tensor a = random_tensor(rng, Shape{3, 4});
    Tensor b = random_tensor(rng, Shape{4});
    auto run = [&]() {
        Tape t;
        Value av = t.param(a);
        Value bv = t.param(b);
        Value mv = matmul(av, bv);
        Value out = dot(softmax(mv), relu(mv));
        t.backward(out);
        return std::pair{t.gradient(av), t.gradient(bv)};
    };
    auto [ga1, gb1] = run();
    auto [ga2, gb2] = run();
    CHECK(ga1.same_bits(ga2));
    CHECK(gb1.same_bits(gb2));
}

TEST_CASE("every op adjoint matches central finite differences") {
    Rng rng(42);
    // Reduce any output to a scalar through a fixed random weighting.
    auto reduced = [](Value out, const Tensor& w) {
        Tape& t = *out.tape;
        Value flat = reshape(out, Shape{static_cast<int>(t.value(out).numel())});
        return dot(flat, t.input(w));
    };

    for (int iter = 0; iter < 100; ++iter) {
        const int m = 1 + static_cast<int>(rng.below(4));
        const int k = 1 + static_cast<int>(rng.below(4));
        const int p = 1 + static_cast<int>(rng.below(4));
        Tensor wm_p = random_tensor(rng, Shape{m * p});
        Tensor wk = random_tensor(rng, Shape{k});
        Tensor wm = random_tensor(rng, Shape{m});
        Tensor wp = random_tensor(rng, Shape{p});
        Tensor wmk = random_tensor(rng, Shape{m * k});

        CHECK(fd_check("matmul", [&](Tape&, std::vector<Value>& in) {
                  return reduced(matmul(in[0], in[1]), wm_p);
              },
              {random_tensor(rng, Shape{m, k}), random_tensor(rng, Shape{k, p})}) < 1e-4);

        CHECK(fd_check("matmul_vec_mat", [&](Tape&, std::vector<Value>& in) {
                  return reduced(matmul(in[0], in[1]), wp);
              },
              {random_tensor(rng, Shape{k}), random_tensor(rng, Shape{k, p})}) < 1e-4);

        CHECK(fd_check("matmul_mat_vec", [&](Tape&, std::vector<Value>& in) {
                  return reduced(matmul(in[0], in[1]), wm);
              },
              {random_tensor(rng, Shape{m, k}), random_tensor(rng, Shape{k})}) < 1e-4);

        CHECK(fd_check("add_bias", [&](Tape&, std::vector<Value>& in) {
                  return reduced(add(in[0], in[1]), wmk);
              },
              {random_tensor(rng, Shape{m, k}), random_tensor(rng, Shape{k})}) < 1e-4);

        CHECK(fd_check("relu", [&](Tape&, std::vector<Value>& in) {
                  return reduced(relu(in[0]), wk);
              },
              {random_tensor_off_kink(rng, Shape{k})}) < 1e-4);

        CHECK(fd_check("softmax", [&](Tape&, std::vector<Value>& in) {
                  return reduced(softmax(in[0]), wk);
              },
              {random_tensor(rng, Shape{k})}) < 1e-4);

        CHECK(fd_check("softmax_axis0", [&](Tape&, std::vector<Value>& in) {
                  return reduced(softmax(in[0], 0), wmk);
              },
              {random_tensor(rng, Shape{m, k})}) < 1e-4);

        CHECK(fd_check("softmax_axis1", [&](Tape&, std::vector<Value>& in) {
                  return reduced(softmax(in[0], 1), wmk);
              },
              {random_tensor(rng, Shape{m, k})}) < 1e-4);

        std::vector<bool> mask(static_cast<size_t>(k), false);
        mask[static_cast<size_t>(rng.below(k))] = true;
        for (size_t i = 0; i < mask.size(); ++i) {
            if (rng.uniform() < 0.5) mask[i] = true;
        }
        CHECK(fd_check("masked_softmax", [&](Tape&, std::vector<Value>& in) {
                  return reduced(masked_softmax(in[0], mask), wk);
              },
              {random_tensor(rng, Shape{k})}) < 1e-4);

        CHECK(fd_check("row_scale", [&](Tape&, std::vector<Value>& in) {
                  return reduced(row_scale(in[0], in[1]), wmk);
              },
              {random_tensor(rng, Shape{m, k}), random_tensor(rng, Shape{m})}) < 1e-4);

        CHECK(fd_check("mean_rows", [&](Tape&, std::vector<Value>& in) {
                  return reduced(mean_rows(in[0]), wk);
              },
              {random_tensor(rng, Shape{m, k})}) < 1e-4);

        CHECK(fd_check("cosine", [&](Tape&, std::vector<Value>& in) {
                  return cosine(in[0], in[1]);
              },
              {random_tensor(rng, Shape{k}), random_tensor(rng, Shape{k})}) < 1e-4);

        CHECK(fd_check("dot", [&](Tape&, std::vector<Value>& in) {
                  return dot(in[0], in[1]);
              },
              {random_tensor(rng, Shape{k}), random_tensor(rng, Shape{k})}) < 1e-4);

        CHECK(fd_check("scale", [&](Tape&, std::vector<Value>& in) {
                  return reduced(scale(in[0], in[1]), wk);
              },
              {Tensor::scalar(rng.normal()), random_tensor(rng, Shape{k})}) < 1e-4);

        CHECK(fd_check("lincomb", [&](Tape&, std::vector<Value>& in) {
                  return reduced(lincomb({{2.0, in[0]}, {-0.5, in[1]}}, 0.7), wk);
              },
              {random_tensor(rng, Shape{k}), random_tensor(rng, Shape{k})}) < 1e-4);

        CHECK(fd_check("pack_at", [&](Tape&, std::vector<Value>& in) {
                  Value packed = pack({at(in[0], 0), at(in[0], k - 1)});
                  return dot(packed, packed);
              },
              {random_tensor(rng, Shape{k})}) < 1e-4);

        CHECK(fd_check("reshape", [&](Tape&, std::vector<Value>& in) {
                  return reduced(reshape(in[0], Shape{k, m}), wmk);
              },
              {random_tensor(rng, Shape{m, k})}) < 1e-4);
    }
}

TEST_CASE("a corrupted adjoint is caught and names the op") {
    // A deliberately wrong backward (claims d(x^2)/dx = 3) must trip the
    // checker and surface the op's name.
    auto bad_square = [](Value x) {
        Tape& t = *x.tape;
        const Tensor& xv = t.value(x);
        std::vector<double> out(xv.data.size());
        for (size_t i = 0; i < out.size(); ++i) out[i] = xv.data[i] * xv.data[i];
        const int xid = x.id;
        return t.emit("bad_square", Tensor::from(xv.shape, std::move(out)), t.tracked(x),
                      [xid](const Tensor& g, Tape& tp, int) {
                          Tensor& dx = tp.grad_acc(xid);
                          for (size_t i = 0; i < g.data.size(); ++i) dx.data[i] += 3.0 * g.data[i];
                      });
    };
    Rng rng(5);
    testutil::FdFailure failure;
    const double worst = fd_check("bad_square",
                                  [&](Tape&, std::vector<Value>& in) {
                                      Value y = bad_square(in[0]);
                                      return dot(y, y);
                                  },
                                  {random_tensor_off_kink(rng, Shape{3})}, 1e-5, &failure);
    CHECK(worst > 1e-4);
    CHECK(failure.op == "bad_square");
}

TEST_CASE("masked softmax needs an active row") {
    Tape t;
    Value x = t.input(Tensor::from(Shape{2}, {1, 2}));
    CHECK_THROWS_AS(masked_softmax(x, {false, false}), ContractError);
}
