#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "ovfs/core/archive.hpp"
#include "ovfs/core/gradcheck.hpp"
#include "ovfs/core/tensor.hpp"

using namespace ovfs;

namespace {

Tensor leaf(Shape shape, RngState& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::rand_uniform(std::move(shape), rng, lo, hi);
    t.set_requires_grad(true);
    return t;
}

GradCheckReport check1(const std::function<Tensor(const Tensor&)>& op, Tensor x, const char* name) {
    return finite_diff_check([&] { return sum(op(x)); }, {{name, x}});
}

}  // namespace

TEST_CASE("matmul basics", "[tensor]") {
    Tensor id2 = Tensor::from_vec({2, 2}, {1, 0, 0, 1});
    Tensor a = Tensor::from_vec({2, 2}, {1, 2, 3, 4});
    CHECK(matmul(id2, a).data() == std::vector<double>{1, 2, 3, 4});

    Tensor r = Tensor::from_vec({1, 2}, {1, 0});
    Tensor c = Tensor::from_vec({2, 1}, {0, 5});
    CHECK(matmul(r, c).item() == 0.0);

    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("matmul gradient matches central differences", "[tensor]") {
    RngState rng(7);
    Tensor a = leaf({3, 4}, rng);
    Tensor b = leaf({4, 2}, rng);
    auto report = finite_diff_check([&] { return sum(matmul(a, b)); }, {{"a", a}, {"b", b}}, 1e-6, 1e-5);
    INFO(report.worst);
    CHECK(report.pass);
}

TEST_CASE("softmax oracle values", "[tensor]") {
    Tensor s = softmax(Tensor::from_vec({2}, {0, 0}), 0);
    CHECK(s.data()[0] == Catch::Approx(0.5).margin(1e-15));

    // shift invariance
    RngState rng(3);
    Tensor x = Tensor::randn({5}, rng);
    Tensor y1 = softmax(x, 0);
    Tensor y2 = softmax(add_scalar(x, 123.456), 0);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(y1.data()[i] - y2.data()[i]) < 1e-12);

    Tensor t = softmax(Tensor::from_vec({2}, {10, 0}), 0);
    CHECK(t.data()[0] == Catch::Approx(0.9999546).margin(1e-7));
    CHECK(t.data()[1] == Catch::Approx(0.0000454).margin(1e-7));

    // rows sum to 1 within 1e-12 on random shapes
    for (int rep = 0; rep < 5; ++rep) {
        long n = 2 + rng.uniform_int(6), m = 1 + rng.uniform_int(4);
        Tensor z = softmax(Tensor::randn({m, n}, rng, 0, 5), 1);
        for (long r = 0; r < m; ++r) {
            double s2 = 0;
            for (long j = 0; j < n; ++j) s2 += z.data()[std::size_t(r * n + j)];
            CHECK(std::abs(s2 - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("cosine similarity", "[tensor]") {
    Tensor v = Tensor::from_vec({2}, {3, 4});
    CHECK(cosine_similarity(v, v).item() == Catch::Approx(1.0).margin(1e-12));
    CHECK(cosine_similarity(Tensor::from_vec({2}, {1, 0}), Tensor::from_vec({2}, {0, 1})).item() ==
          Catch::Approx(0.0).margin(1e-12));
    CHECK(cosine_similarity(Tensor::from_vec({2}, {1, 1}), Tensor::from_vec({2}, {1, 0})).item() ==
          Catch::Approx(0.70710678).margin(1e-8));
    CHECK_THROWS_AS(cosine_similarity(Tensor::zeros({2}), v), NumericError);
}

TEST_CASE("cross entropy oracle values", "[tensor]") {
    CHECK(cross_entropy(Tensor::from_vec({3}, {0, 1, 0}), 1).item() == 0.0);

    long V = 7;
    Tensor u = Tensor::filled({V}, 1.0 / double(V));
    CHECK(cross_entropy(u, 3).item() == Catch::Approx(std::log(double(V))).margin(1e-12));

    Tensor p = softmax(Tensor::from_vec({2}, {10, 0}), 0);
    CHECK(cross_entropy(p, 0).item() == Catch::Approx(4.54e-5).margin(1e-7));

    CHECK_THROWS_AS(cross_entropy(u, 9), ValueError);
    CHECK_THROWS_AS(cross_entropy(Tensor::from_vec({2}, {0.7, 0.7}), 0), NumericError);
}

TEST_CASE("finite_diff_check hand case and negative control", "[tensor]") {
    Tensor x = Tensor::scalar(3.0);
    x.set_requires_grad(true);
    auto ok = finite_diff_check([&] { return mul(x, x); }, {{"x", x}});
    CHECK(ok.pass);
    x.zero_grad();
    Tensor y = mul(x, x);
    y.backward();
    CHECK(x.grad()[0] == Catch::Approx(6.0).margin(1e-9));

    // identity with a deliberately doubled backward must fail the check
    auto bad_identity = [](const Tensor& t) {
        return Tensor::make_op(t.shape(), t.data(), {t},
                               [](detail::TensorNode& self) {
                                   auto& p = *self.parents[0];
                                   p.ensure_grad();
                                   for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += 2.0 * self.grad[i];
                               },
                               "bad_identity");
    };
    RngState rng(11);
    Tensor z = leaf({4}, rng);
    auto bad = finite_diff_check([&] { return sum(bad_identity(z)); }, {{"z", z}});
    CHECK_FALSE(bad.pass);
}

TEST_CASE("every differentiable op passes gradient checks on random shapes", "[tensor][gradcheck]") {
    RngState rng(101);
    for (int rep = 0; rep < 5; ++rep) {
        long m = 2 + rng.uniform_int(3);
        long n = 2 + rng.uniform_int(4);
        long k = 2 + rng.uniform_int(3);

        {
            Tensor a = leaf({m, n}, rng), b = leaf({m, n}, rng);
            auto r = finite_diff_check([&] { return sum(mul(add(a, b), sub(a, b))); }, {{"a", a}, {"b", b}});
            INFO("add/mul/sub: " << r.worst);
            CHECK(r.pass);
        }
        {
            Tensor a = leaf({m, n}, rng), b = leaf({m, n}, rng, 0.5, 2.0);
            auto r = finite_diff_check([&] { return sum(div(a, b)); }, {{"a", a}, {"b", b}});
            INFO("div: " << r.worst);
            CHECK(r.pass);
        }
        {
            // broadcast add/mul of a row vector over a matrix
            Tensor a = leaf({m, n}, rng), v = leaf({n}, rng);
            auto r = finite_diff_check([&] { return sum(mul(add(a, v), v)); }, {{"a", a}, {"v", v}});
            INFO("broadcast: " << r.worst);
            CHECK(r.pass);
        }
        {
            Tensor x = leaf({m, n}, rng);
            for (auto [name, op] : std::initializer_list<std::pair<const char*, Tensor (*)(const Tensor&)>>{
                     {"exp", ovfs::exp}, {"sigmoid", sigmoid}, {"gelu", gelu}, {"neg", neg}}) {
                auto r = check1(op, x, name);
                INFO(name << ": " << r.worst);
                CHECK(r.pass);
            }
        }
        {
            Tensor x = leaf({m, n}, rng, 0.2, 3.0);
            auto r1 = check1([](const Tensor& t) { return ovfs::log(t); }, x, "log");
            CHECK(r1.pass);
            auto r2 = check1([](const Tensor& t) { return ovfs::sqrt(t); }, x, "sqrt");
            CHECK(r2.pass);
        }
        {
            Tensor a = leaf({m, k}, rng), b = leaf({n, k}, rng);
            auto r = finite_diff_check([&] { return sum(matmul_nt(a, b)); }, {{"a", a}, {"b", b}});
            INFO("matmul_nt: " << r.worst);
            CHECK(r.pass);
        }
        {
            Tensor x = leaf({m, n}, rng);
            auto r = check1([](const Tensor& t) { return transpose(t); }, x, "transpose");
            CHECK(r.pass);
            auto r2 = check1([n = n](const Tensor& t) { return reshape(t, {t.numel() / n, n}); }, x, "reshape");
            CHECK(r2.pass);
        }
        {
            Tensor x = leaf({m, n + 1}, rng);
            auto r = check1([n = n](const Tensor& t) { return slice(t, 1, 1, n); }, x, "slice");
            CHECK(r.pass);
        }
        {
            Tensor a = leaf({m, n}, rng), b = leaf({2, n}, rng);
            auto r = finite_diff_check([&] { return sum(mul(concat({a, b}, 0), concat({b, a}, 0))); },
                                       {{"a", a}, {"b", b}});
            INFO("concat: " << r.worst);
            CHECK(r.pass);
        }
        {
            Tensor x = leaf({m, n}, rng, 0.0, 4.0);
            // weighted so the softmax/axis reductions have non-uniform pull
            Tensor w = Tensor::randn({m, n}, rng);
            auto r = finite_diff_check([&] { return sum(mul(softmax(x, 1), w)); }, {{"x", x}});
            INFO("softmax: " << r.worst);
            CHECK(r.pass);
            auto r2 = finite_diff_check([&] { return sum(mul(reshape(sum_axis(x, 0), {n}), slice(reshape(w, {m * n}), 0, 0, n))); },
                                        {{"x", x}});
            CHECK(r2.pass);
            auto r3 = finite_diff_check([&] { return mean(mean_axis(x, 1)); }, {{"x", x}});
            CHECK(r3.pass);
        }
        {
            // max_axis: keep lanes well separated so the finite step cannot flip the argmax
            std::vector<double> vals(std::size_t(m * n));
            for (long i = 0; i < m * n; ++i) vals[std::size_t(i)] = rng.uniform(-1, 1) + 0.01 * double(i % n);
            Tensor x = Tensor::from_vec({m, n}, vals);
            x.set_requires_grad(true);
            auto r = check1([](const Tensor& t) { return max_axis(t, 1); }, x, "max_axis");
            INFO("max_axis: " << r.worst);
            CHECK(r.pass);
        }
        {
            Tensor table = leaf({5, k}, rng);
            std::vector<int> ids{0, 3, 3, 1};
            auto r = finite_diff_check([&] { return sum(embedding(table, ids)); }, {{"table", table}});
            INFO("embedding: " << r.worst);
            CHECK(r.pass);
        }
        {
            Tensor x = leaf({m, n}, rng);
            auto r = check1([](const Tensor& t) { return take(t, 1); }, x, "take");
            CHECK(r.pass);
        }
        {
            Tensor x = leaf({3, 3}, rng);
            auto r = check1([](const Tensor& t) { return upsample_bilinear(t, 7, 5); }, x, "upsample");
            INFO("upsample: " << r.worst);
            CHECK(r.pass);
        }
        {
            Tensor a = leaf({4}, rng, 0.5, 1.5), b = leaf({4}, rng, 0.5, 1.5);
            auto r = finite_diff_check([&] { return cosine_similarity(a, b); }, {{"a", a}, {"b", b}});
            INFO("cosine: " << r.worst);
            CHECK(r.pass);
        }
        {
            Tensor x = leaf({5}, rng);
            auto r = finite_diff_check([&] { return cross_entropy(softmax(x, 0), 2); }, {{"x", x}});
            INFO("ce: " << r.worst);
            CHECK(r.pass);
        }
    }
}

TEST_CASE("non-finite forward output raises", "[tensor]") {
    Tensor big = Tensor::filled({2}, 1000.0);
    CHECK_THROWS_AS(ovfs::exp(big), NumericError);
}

TEST_CASE("rng determinism", "[tensor]") {
    RngState a(42), b(42);
    Tensor ta = Tensor::randn({3, 3}, a);
    Tensor tb = Tensor::randn({3, 3}, b);
    CHECK(ta.data() == tb.data());

    RngState c(43);
    CHECK(Tensor::randn({3, 3}, c).data() != ta.data());

    // forks are call-order independent
    RngState r1(9), r2(9);
    r2.uniform();
    CHECK(r1.fork(5).next_u64() == r2.fork(5).next_u64());
}

TEST_CASE("gradients accumulate and zero_grad clears", "[tensor]") {
    Tensor x = Tensor::scalar(2.0);
    x.set_requires_grad(true);
    mul(x, x).backward();
    mul(x, x).backward();
    CHECK(x.grad()[0] == Catch::Approx(8.0));
    x.zero_grad();
    CHECK(x.grad()[0] == 0.0);

    // a tensor used twice in one graph gets both contributions
    x.zero_grad();
    add(mul(x, x), x).backward();
    CHECK(x.grad()[0] == Catch::Approx(5.0));
}

TEST_CASE("no-grad guard produces graph-free outputs", "[tensor]") {
    Tensor x = Tensor::scalar(2.0);
    x.set_requires_grad(true);
    NoGradGuard g;
    Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("parameter archive round-trips bit-exactly", "[tensor][archive]") {
    RngState rng(5);
    ParamArchive a;
    a.meta["format"] = "test";
    a.meta["q_tokens"] = "8";
    Tensor w1 = Tensor::randn({4, 3}, rng);
    Tensor w2 = Tensor::randn({2, 2, 2}, rng, 0, 1e-8);
    a.put("block.w", w1);
    a.put("block.b", w2);
    CHECK_THROWS_AS(a.put("block.w", w1), IoError);

    std::string path = "test_archive.bin";
    a.save(path);
    ParamArchive b = ParamArchive::load(path);
    CHECK(b.meta.at("q_tokens") == "8");
    CHECK(b.size() == 2);
    CHECK(b.get("block.w").data() == w1.data());
    CHECK(b.get("block.b").data() == w2.data());
    CHECK(b.get("block.w").shape() == w1.shape());
    CHECK_THROWS_AS(b.get("missing"), IoError);

    Tensor wrong = Tensor::zeros({3, 4});
    CHECK_THROWS_AS(b.load_into("block.w", wrong), IoError);

    std::remove(path.c_str());
}
