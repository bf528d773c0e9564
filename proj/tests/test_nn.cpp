#include <doctest.h>

#include <cmath>

#include "mre/error.hpp"
#include "mre/nn/checkpoint.hpp"
#include "mre/nn/graph.hpp"
#include "mre/nn/optim.hpp"
#include "test_util.hpp"

using namespace mre;
using nn::Graph;
using nn::Mat;
using nn::Parameter;
using nn::Rng;
using nn::Var;
using testutil::fd_compare;
using testutil::random_mat;

namespace {

// Builds loss = sum of an op chain over two parameters, runs backward, then
// finite-difference checks both parameters.
double check_binary(const std::function<Var(Graph&, Var, Var)>& op, Eigen::Index ra,
                    Eigen::Index ca, Eigen::Index rb, Eigen::Index cb, unsigned seed = 7) {
    Rng rng(seed);
    Parameter a("a", ra, ca, nn::Init::Xavier, rng);
    Parameter b("b", rb, cb, nn::Init::Xavier, rng);
    auto value = [&] {
        Graph g;
        return g.value(g.sum_all(op(g, g.param(a), g.param(b))))(0, 0);
    };
    a.zero_grad();
    b.zero_grad();
    Graph g;
    g.backward(g.sum_all(op(g, g.param(a), g.param(b))));
    return fd_compare({&a, &b}, value);
}

double check_unary(const std::function<Var(Graph&, Var)>& op, Eigen::Index r, Eigen::Index c,
                   unsigned seed = 11) {
    Rng rng(seed);
    Parameter a("a", r, c, nn::Init::Xavier, rng);
    auto value = [&] {
        Graph g;
        return g.value(g.sum_all(op(g, g.param(a))))(0, 0);
    };
    a.zero_grad();
    Graph g;
    g.backward(g.sum_all(op(g, g.param(a))));
    return fd_compare({&a}, value);
}

}  // namespace

TEST_CASE("arithmetic ops match finite differences") {
    CHECK(check_binary([](Graph& g, Var a, Var b) { return g.add(a, b); }, 3, 4, 3, 4) < 1e-6);
    CHECK(check_binary([](Graph& g, Var a, Var b) { return g.sub(a, b); }, 3, 4, 3, 4) < 1e-6);
    CHECK(check_binary([](Graph& g, Var a, Var b) { return g.mul(a, b); }, 3, 4, 3, 4) < 1e-6);
    CHECK(check_binary([](Graph& g, Var a, Var b) { return g.matmul(a, b); }, 3, 4, 4, 2) < 1e-6);
    CHECK(check_binary([](Graph& g, Var a, Var b) { return g.add_rowvec(a, b); }, 3, 4, 1, 4) <
          1e-6);
    CHECK(check_unary([](Graph& g, Var a) { return g.scale(a, -2.5); }, 3, 3) < 1e-6);
    CHECK(check_unary([](Graph& g, Var a) { return g.add_scalar(a, 0.7); }, 3, 3) < 1e-6);
    CHECK(check_unary([](Graph& g, Var a) { return g.transpose(a); }, 2, 5) < 1e-6);
}

TEST_CASE("div_by matches finite differences") {
    Rng rng(3);
    Parameter a("a", 3, 2, nn::Init::Xavier, rng);
    Parameter s("s", 1, 1, nn::Init::One, rng);
    s.value(0, 0) = 1.7;
    auto value = [&] {
        Graph g;
        return g.value(g.sum_all(g.mul(g.div_by(g.param(a), g.param(s)),
                                       g.div_by(g.param(a), g.param(s)))))(0, 0);
    };
    a.zero_grad();
    s.zero_grad();
    Graph g;
    Var q = g.div_by(g.param(a), g.param(s));
    g.backward(g.sum_all(g.mul(q, q)));
    CHECK(fd_compare({&a, &s}, value) < 1e-6);
}

TEST_CASE("nonlinearities match finite differences") {
    CHECK(check_unary([](Graph& g, Var a) { return g.tanh_(a); }, 4, 4) < 1e-6);
    CHECK(check_unary([](Graph& g, Var a) { return g.gelu(a); }, 4, 4) < 1e-6);
    CHECK(check_unary([](Graph& g, Var a) { return g.leaky_relu(a, 0.2); }, 4, 4) < 1e-5);
    CHECK(check_unary([](Graph& g, Var a) { return g.relu(a); }, 4, 4) < 1e-5);
    CHECK(check_unary([](Graph& g, Var a) { return g.softmax_rows(a); }, 3, 5) < 1e-6);
    CHECK(check_unary([](Graph& g, Var a) { return g.l2_normalize_rows(a); }, 3, 5) < 1e-6);
    CHECK(check_unary([](Graph& g, Var a) { return g.l2_norm(a); }, 3, 5) < 1e-6);
    CHECK(check_unary(
              [](Graph& g, Var a) { return g.sqrt_(g.add_scalar(g.mul(a, a), 1.0)); }, 3, 3) <
          1e-6);
}

TEST_CASE("shape ops match finite differences") {
    CHECK(check_binary(
              [](Graph& g, Var a, Var b) {
                  return g.concat_rows({a, b, g.scale(a, 2.0)});
              },
              2, 3, 4, 3) < 1e-6);
    CHECK(check_binary(
              [](Graph& g, Var a, Var b) { return g.concat_cols({a, b}); }, 3, 2, 3, 4) < 1e-6);
    CHECK(check_unary([](Graph& g, Var a) { return g.slice_rows(a, 1, 2); }, 5, 3) < 1e-6);
    CHECK(check_unary([](Graph& g, Var a) { return g.slice_cols(a, 2, 2); }, 3, 5) < 1e-6);
    CHECK(check_unary([](Graph& g, Var a) { return g.gather_rows(a, {2, 0, 2, 1}); }, 4, 3) <
          1e-6);
    CHECK(check_unary([](Graph& g, Var a) { return g.colwise_mean(a); }, 4, 3) < 1e-6);
    CHECK(check_unary([](Graph& g, Var a) { return g.mean_all(a); }, 4, 3) < 1e-6);
}

TEST_CASE("assemble_rows scatters values and gradients") {
    Rng rng(5);
    Parameter kept("kept", 2, 3, nn::Init::Xavier, rng);
    Parameter filler("filler", 1, 3, nn::Init::Xavier, rng);
    auto build = [&](Graph& g) {
        return g.assemble_rows(4, g.param(kept), {3, 0}, g.param(filler), {1, 2});
    };
    Graph g;
    Var out = build(g);
    CHECK(g.value(out).row(3).isApprox(kept.value.row(0)));
    CHECK(g.value(out).row(0).isApprox(kept.value.row(1)));
    CHECK(g.value(out).row(1).isApprox(filler.value.row(0)));
    kept.zero_grad();
    filler.zero_grad();
    g.backward(g.sum_all(g.mul(out, out)));
    auto value = [&] {
        Graph h;
        Var o = h.assemble_rows(4, h.param(kept), {3, 0}, h.param(filler), {1, 2});
        return h.value(h.sum_all(h.mul(o, o)))(0, 0);
    };
    CHECK(fd_compare({&kept, &filler}, value) < 1e-6);
}

TEST_CASE("layer norm matches finite differences") {
    Rng rng(13);
    Parameter x("x", 3, 6, nn::Init::Xavier, rng);
    Parameter gain("gain", 1, 6, nn::Init::One, rng);
    Parameter bias("bias", 1, 6, nn::Init::Zero, rng);
    gain.value = random_mat(1, 6, rng, 0.5).array() + 1.0;
    bias.value = random_mat(1, 6, rng, 0.3);
    auto value = [&] {
        Graph g;
        Var y = g.layer_norm_rows(g.param(x), g.param(gain), g.param(bias));
        return g.value(g.sum_all(g.mul(y, y)))(0, 0);
    };
    x.zero_grad();
    gain.zero_grad();
    bias.zero_grad();
    Graph g;
    Var y = g.layer_norm_rows(g.param(x), g.param(gain), g.param(bias));
    g.backward(g.sum_all(g.mul(y, y)));
    CHECK(fd_compare({&x, &gain, &bias}, value) < 1e-5);
}

TEST_CASE("cross entropy: uniform logits give ln V and gradient checks") {
    Graph g;
    Var logits = g.input(Mat::Zero(1, 4));
    Var ce = g.cross_entropy_rows(logits, {2});
    CHECK(g.value(ce)(0, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Rng rng(17);
    Parameter w("w", 5, 7, nn::Init::Xavier, rng);
    const std::vector<int> targets{1, 0, 6, 3, 3};
    auto value = [&] {
        Graph h;
        return h.value(h.cross_entropy_rows(h.param(w), targets))(0, 0);
    };
    w.zero_grad();
    Graph h;
    h.backward(h.cross_entropy_rows(h.param(w), targets));
    CHECK(fd_compare({&w}, value) < 1e-6);
}

TEST_CASE("parameter reuse accumulates gradients") {
    Rng rng(19);
    Parameter a("a", 2, 2, nn::Init::Xavier, rng);
    auto value = [&] {
        Graph g;
        Var x = g.param(a);
        Var y = g.param(a);  // same parameter, second leaf
        return g.value(g.sum_all(g.mul(x, y)))(0, 0);
    };
    a.zero_grad();
    Graph g;
    g.backward(g.sum_all(g.mul(g.param(a), g.param(a))));
    CHECK(fd_compare({&a}, value) < 1e-6);
}

TEST_CASE("l2_norm is exactly zero on the zero matrix") {
    Graph g;
    CHECK(g.value(g.l2_norm(g.constant(Mat::Zero(3, 3))))(0, 0) == 0.0);
}

TEST_CASE("shape mismatches throw DimensionMismatch") {
    Graph g;
    Var a = g.constant(Mat::Zero(2, 3));
    Var b = g.constant(Mat::Zero(3, 2));
    CHECK_THROWS_AS(g.add(a, b), DimensionMismatch);
    CHECK_THROWS_AS(g.matmul(a, a), DimensionMismatch);
    CHECK_THROWS_AS(g.slice_rows(a, 1, 5), DimensionMismatch);
}

TEST_CASE("Adam lowers a quadratic and clips gradients") {
    Rng rng(23);
    Parameter w("w", 4, 1, nn::Init::Xavier, rng);
    nn::Adam opt("adam", {&w}, {.lr = 0.05});
    const Mat target = random_mat(4, 1, rng);
    auto loss_val = [&] {
        Graph g;
        Var d = g.sub(g.param(w), g.constant(target));
        return g.value(g.sum_all(g.mul(d, d)))(0, 0);
    };
    const double before = loss_val();
    for (int i = 0; i < 200; ++i) {
        w.zero_grad();
        Graph g;
        Var d = g.sub(g.param(w), g.constant(target));
        g.backward(g.sum_all(g.mul(d, d)));
        opt.clip_grad_norm(1.0);
        double sq = w.grad.squaredNorm();
        CHECK(sq <= 1.0 + 1e-9);
        opt.step();
    }
    CHECK(loss_val() < before * 1e-2);
}

TEST_CASE("cosine warm restarts schedule") {
    nn::CosineWarmRestarts sched(1.0, 4, 1.0, 0.1);
    CHECK(sched.lr() == doctest::Approx(1.0));
    sched.epoch_step();
    sched.epoch_step();
    CHECK(sched.lr() == doctest::Approx(0.55));  // halfway: eta_min + 0.9 * 0.5
    sched.epoch_step();
    sched.epoch_step();  // restart
    CHECK(sched.lr() == doctest::Approx(1.0));
}

TEST_CASE("checkpoint round-trips tensors, meta, and errors") {
    const auto path = std::filesystem::temp_directory_path() / "mre_test_ckpt.bin";
    Rng rng(29);
    nn::Checkpoint ck;
    ck.meta["rng"] = "state-string";
    ck.meta["epoch"] = 7;
    ck.add("param/w", random_mat(3, 5, rng));
    ck.add("adam.m/w", random_mat(3, 5, rng));
    ck.save(path);

    nn::Checkpoint in = nn::Checkpoint::load(path);
    CHECK(in.meta["epoch"] == 7);
    REQUIRE(in.find("param/w") != nullptr);
    CHECK(in.find("param/w")->isApprox(*ck.find("param/w"), 0.0));
    CHECK(in.find("missing") == nullptr);

    // truncation -> CorruptCheckpoint
    {
        std::ifstream is(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(is)), {});
        std::ofstream os(path, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(nn::Checkpoint::load(path), CorruptCheckpoint);
    std::filesystem::remove(path);
}

TEST_CASE("rng determinism and distribution sanity") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng r(1);
    double mean = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) mean += r.normal();
    mean /= n;
    CHECK(std::abs(mean) < 0.05);
    auto pick = r.sample_without_replacement(10, 10);
    std::sort(pick.begin(), pick.end());
    for (int i = 0; i < 10; ++i) CHECK(pick[i] == i);
}
