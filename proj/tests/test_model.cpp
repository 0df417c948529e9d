#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "doctest.h"

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"
#include "oracles.hpp"

using namespace fedsim;

namespace {

Batch make_batch(std::size_t rows, std::size_t d, std::size_t c, Rng& rng) {
  Batch b;
  b.inputs = Matrix(rows, d);
  for (std::size_t r = 0; r < rows; ++r) {
    for (double& v : b.inputs.row(r)) v = rng.normal();
    b.labels.push_back(rng.below(c));
  }
  return b;
}

ParamVector random_params(const ModelSpec& spec, Rng& rng, double sd = 0.5) {
  ParamVector w(spec.param_count());
  for (double& v : w.values()) v = rng.normal(0.0, sd);
  return w;
}

}  // namespace

TEST_CASE("param_count follows the layer shapes") {
  CHECK(ModelSpec::linear(10, 10).param_count() == 110);
  CHECK(ModelSpec::one_hidden(4, 8, 3).param_count() == 67);
  CHECK(init_params(ModelSpec::one_hidden(4, 8, 3), 1).size() == 67);
}

TEST_CASE("spec validation rejects degenerate shapes") {
  CHECK_THROWS_AS(ModelSpec::linear(0, 3).validate(), InputError);
  CHECK_THROWS_AS(ModelSpec::linear(3, 1).validate(), InputError);
  CHECK_THROWS_AS(ModelSpec::one_hidden(3, 0, 2).validate(), InputError);
  CHECK_NOTHROW(ModelSpec::one_hidden(1, 1, 2).validate());
}

TEST_CASE("init_params is deterministic with zero biases") {
  const ModelSpec lin = ModelSpec::linear(2, 2);
  CHECK(init_params(lin, 7).bitwise_equal(init_params(lin, 7)));
  CHECK_FALSE(init_params(lin, 7).bitwise_equal(init_params(lin, 8)));

  const ParamVector w = init_params(ModelSpec::linear(5, 3), 11);
  for (std::size_t i = 15; i < 18; ++i) CHECK(w[i] == 0.0);

  const ModelSpec deep = ModelSpec::one_hidden(4, 8, 3);
  const ParamVector v = init_params(deep, 1);
  for (std::size_t i = 32; i < 40; ++i) CHECK(v[i] == 0.0);
  for (std::size_t i = 64; i < 67; ++i) CHECK(v[i] == 0.0);
}

TEST_CASE("init_params weight scale is 1/sqrt(fan_in)") {
  const std::size_t d = 400, c = 50;
  const ParamVector w = init_params(ModelSpec::linear(d, c), 3);
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < d * c; ++i) {
    sum += w[i];
    sq += w[i] * w[i];
  }
  const double n = static_cast<double>(d * c);
  const double var = sq / n - (sum / n) * (sum / n);
  // 20000 draws: the sample variance is within a few percent of 1/d.
  CHECK(var * d == doctest::Approx(1.0).epsilon(0.05));
  CHECK(std::abs(sum / n) < 5.0 / std::sqrt(n * d));
}

TEST_CASE("zero weights give loss ln(c)") {
  Rng rng(5);
  for (std::size_t c : {2, 3, 10}) {
    const ModelSpec spec = ModelSpec::linear(4, c);
    const Batch b = make_batch(9, 4, c, rng);
    CHECK(loss_and_grad(spec, ParamVector(spec.param_count()), b).loss ==
          doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-15));
  }
}

TEST_CASE("bias gradient at zero weights is softmax minus label frequency") {
  Rng rng(6);
  const std::size_t c = 4;
  const ModelSpec spec = ModelSpec::linear(3, c);
  const Batch b = make_batch(12, 3, c, rng);
  const LossGrad lg = loss_and_grad(spec, ParamVector(spec.param_count()), b);
  for (std::size_t k = 0; k < c; ++k) {
    const double freq =
        static_cast<double>(std::count(b.labels.begin(), b.labels.end(), k)) / 12.0;
    CHECK(lg.grad[3 * c + k] == doctest::Approx(0.25 - freq).epsilon(1e-14));
  }
}

TEST_CASE("analytic gradient matches finite differences") {
  Rng rng(hash64(21, {}, "unit.gradient"));
  for (int t = 0; t < 20; ++t) {
    const oracle::Instance in = oracle::random_instance(rng);
    const LossGrad lg = loss_and_grad(in.spec, in.w, in.batch);
    const auto fd = oracle::fd_gradient(in.spec, in.w, in.batch);
    REQUIRE(lg.grad.size() == fd.size());
    for (std::size_t i = 0; i < fd.size(); ++i) {
      CHECK(oracle::relative_error(lg.grad[i], fd[i], 1e-3) < 1e-5);
    }
  }
}

TEST_CASE("duplicating every sample leaves loss and gradient unchanged") {
  Rng rng(8);
  const ModelSpec spec = ModelSpec::one_hidden(3, 5, 4);
  const ParamVector w = random_params(spec, rng);
  const Batch b = make_batch(7, 3, 4, rng);
  Batch twice = b;
  for (std::size_t r = 0; r < 7; ++r) {
    twice.inputs.append_row(b.inputs.row(r));
    twice.labels.push_back(b.labels[r]);
  }
  const LossGrad a = loss_and_grad(spec, w, b), d = loss_and_grad(spec, w, twice);
  CHECK(d.loss == doctest::Approx(a.loss).epsilon(1e-14));
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(d.grad[i] == doctest::Approx(a.grad[i]).epsilon(1e-13).scale(1e-3));
  }
}

TEST_CASE("loss_and_grad is pure and stable for large logits") {
  Rng rng(9);
  const ModelSpec spec = ModelSpec::linear(3, 5);
  const ParamVector w = random_params(spec, rng, 300.0);
  const Batch b = make_batch(6, 3, 5, rng);
  const LossGrad a = loss_and_grad(spec, w, b), c = loss_and_grad(spec, w, b);
  CHECK(a.grad.bitwise_equal(c.grad));
  CHECK(std::bit_cast<std::uint64_t>(a.loss) == std::bit_cast<std::uint64_t>(c.loss));
  CHECK(std::isfinite(a.loss));
  CHECK(a.loss >= 0.0);
  CHECK(a.grad.all_finite());
}

TEST_CASE("loss_and_grad rejects mismatched shapes") {
  Rng rng(10);
  const ModelSpec spec = ModelSpec::linear(3, 4);
  const Batch b = make_batch(5, 3, 4, rng);
  CHECK_THROWS_AS(loss_and_grad(spec, ParamVector(3), b), InputError);
  CHECK_THROWS_AS(loss_and_grad(ModelSpec::linear(2, 4), ParamVector(12), b), InputError);
  Batch bad = b;
  bad.labels.back() = 4;
  CHECK_THROWS_AS(loss_and_grad(spec, ParamVector(16), bad), InputError);
  bad = b;
  bad.labels.pop_back();
  CHECK_THROWS_AS(loss_and_grad(spec, ParamVector(16), bad), InputError);
  CHECK_THROWS_AS(loss_and_grad(spec, ParamVector(16), Matrix(0, 3), {}), InputError);
}

TEST_CASE("predict breaks ties toward the lowest class") {
  const ModelSpec spec = ModelSpec::one_hidden(2, 3, 4);
  Matrix x(3, 2);
  x(1, 0) = 5.0;
  x(2, 1) = -2.0;
  const auto p = predict(spec, ParamVector(spec.param_count()), x);
  CHECK(p == std::vector<std::size_t>{0, 0, 0});

  Matrix one(1, 2);
  CHECK(predict(spec, ParamVector(spec.param_count()), one).size() == 1);
  CHECK_THROWS_AS(predict(spec, ParamVector(spec.param_count()), Matrix(2, 3)), InputError);
}

TEST_CASE("evaluate counts correct predictions") {
  const ModelSpec spec = ModelSpec::linear(2, 3);
  Dataset ds;
  ds.class_count = 3;
  ds.inputs = Matrix(4, 2);
  ds.labels = {0, 0, 0, 0};
  const ParamVector zero(spec.param_count());
  CHECK(evaluate(spec, zero, ds).accuracy == 1.0);
  ds.labels = {0, 1, 2, 0};
  CHECK(evaluate(spec, zero, ds).accuracy == 0.5);
  CHECK_THROWS_AS(evaluate(spec, zero, Dataset{Matrix(0, 2), {}, 3}), InputError);
}

TEST_CASE("evaluate on random labels is near chance") {
  Rng rng(12);
  const std::size_t n = 10000, c = 10;
  Dataset ds;
  ds.class_count = c;
  ds.inputs = Matrix(n, 5);
  for (std::size_t r = 0; r < n; ++r) {
    for (double& v : ds.inputs.row(r)) v = rng.normal();
    ds.labels.push_back(rng.below(c));
  }
  const ModelSpec spec = ModelSpec::linear(5, c);
  const double acc = evaluate(spec, init_params(spec, 4), ds).accuracy;
  CHECK(acc == doctest::Approx(0.10).epsilon(0.2));
}

TEST_CASE("evaluate decomposes over samples and ignores order") {
  Rng rng(13);
  const ModelSpec spec = ModelSpec::one_hidden(3, 4, 3);
  const ParamVector w = random_params(spec, rng, 1.0);
  Dataset ds;
  ds.class_count = 3;
  ds.inputs = Matrix(30, 3);
  for (std::size_t r = 0; r < 30; ++r) {
    for (double& v : ds.inputs.row(r)) v = rng.normal();
    ds.labels.push_back(rng.below(3));
  }
  const Evaluation whole = evaluate(spec, w, ds);
  double acc = 0.0, loss = 0.0;
  for (std::size_t r = 0; r < 30; ++r) {
    const std::size_t idx[] = {r};
    const Evaluation e = evaluate(spec, w, ds.subset(idx));
    acc += e.accuracy;
    loss += e.mean_loss;
  }
  CHECK(whole.accuracy == doctest::Approx(acc / 30.0).epsilon(1e-15));
  CHECK(whole.mean_loss == doctest::Approx(loss / 30.0).epsilon(1e-13));

  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  const Evaluation rev = evaluate(spec, w, ds.subset(perm));
  CHECK(rev.accuracy == whole.accuracy);
  CHECK(rev.mean_loss == doctest::Approx(whole.mean_loss).epsilon(1e-14));
}

TEST_CASE("converged linear model fits separable blobs exactly") {
  const Dataset ds = make_blobs(3, 4, 40, 0.3, 17);
  const ModelSpec spec = ModelSpec::linear(4, 3);
  ParamVector w = init_params(spec, 2);
  for (int step = 0; step < 500; ++step) {
    const LossGrad lg = loss_and_grad(spec, w, ds.inputs, ds.labels);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 0.5 * lg.grad[i];
  }
  CHECK(evaluate(spec, w, ds).accuracy == 1.0);
}

TEST_CASE("hypothesis conflict rate") {
  Rng rng(14);
  const ModelSpec spec = ModelSpec::linear(2, 2);
  const ParamVector a = random_params(spec, rng), b = random_params(spec, rng);
  Dataset probe;
  probe.class_count = 2;
  probe.inputs = Matrix(50, 2);
  for (std::size_t r = 0; r < 50; ++r) {
    probe.inputs(r, 0) = r < 25 ? -1.0 - rng.uniform() : 1.0 + rng.uniform();
    probe.inputs(r, 1) = rng.normal(0.0, 0.1);
    probe.labels.push_back(r < 25 ? 0 : 1);
  }
  CHECK(hypothesis_conflict_rate(spec, a, a, probe) == 0.0);
  CHECK(hypothesis_conflict_rate(spec, a, b, probe) ==
        hypothesis_conflict_rate(spec, b, a, probe));

  // A separating model and the same model with its two output columns
  // swapped disagree everywhere.
  ParamVector sep(spec.param_count());
  sep[0] = -1.0;  // W[0][0]
  sep[1] = 1.0;   // W[0][1]
  ParamVector swapped = sep;
  std::swap(swapped[0], swapped[1]);
  std::swap(swapped[2], swapped[3]);
  std::swap(swapped[4], swapped[5]);
  CHECK(evaluate(spec, sep, probe).accuracy == 1.0);
  CHECK(hypothesis_conflict_rate(spec, sep, swapped, probe) == 1.0);

  CHECK_THROWS_AS(hypothesis_conflict_rate(spec, a, b, Dataset{Matrix(0, 2), {}, 2}),
                  InputError);
}

TEST_CASE("gradient corruption hook offsets the first entry") {
  Rng rng(15);
  const ModelSpec spec = ModelSpec::linear(2, 3);
  const ParamVector w = random_params(spec, rng);
  const Batch b = make_batch(4, 2, 3, rng);
  const LossGrad clean = loss_and_grad(spec, w, b);
  debug::set_gradient_corruption(true);
  const LossGrad dirty = loss_and_grad(spec, w, b);
  debug::set_gradient_corruption(false);
  CHECK(dirty.grad[0] != clean.grad[0]);
  for (std::size_t i = 1; i < w.size(); ++i) CHECK(dirty.grad[i] == clean.grad[i]);
}
