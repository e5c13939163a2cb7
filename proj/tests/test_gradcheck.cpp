#include <doctest.h>

#include <string>
#include <vector>

#include "bmgc/nn.hpp"
#include "nn_helpers.hpp"
#include "oracles.hpp"

using namespace bmgc;

namespace {

// Max relative error between analytic BPTT gradients and central differences
// over every trainable parameter of the tiny model.
double max_gradcheck_error(uint64_t seed, HeadMode mode, bool bidirectional) {
  testutil::TinySetup setup = testutil::tiny_setup(seed, mode, bidirectional);
  std::vector<const Tensor2*> seqs = setup.seq_ptrs();

  ForwardTrace trace;
  model_forward_batch(setup.params, seqs, BnMode::Train, &setup.targets, &trace, 1);
  ModelGrads grads = model_backward(setup.params, trace, setup.targets, 1);

  auto loss_fn = [&](ModelParams& p) {
    return batch_loss(p, seqs, setup.targets, BnMode::Train, 1);
  };

  std::vector<TensorRef> prefs = param_tensors(setup.params);
  std::vector<TensorRef> grefs = param_tensors(grads);
  double worst = 0.0;
  for (size_t i = 0; i < prefs.size(); ++i) {
    if (!prefs[i].trainable) continue;
    for (size_t k = 0; k < prefs[i].size; ++k) {
      const double numeric =
          oracle::finite_difference(setup.params, prefs[i].data + k, loss_fn, 1e-5);
      worst = std::max(worst, oracle::rel_err(grefs[i].data[k], numeric));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("analytic gradients match central differences (sequence head)") {
  for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    CHECK(max_gradcheck_error(seed, HeadMode::Sequence, true) < 1e-4);
  }
}

TEST_CASE("analytic gradients match central differences (frame head)") {
  for (uint64_t seed : {4ULL, 5ULL, 6ULL}) {
    CHECK(max_gradcheck_error(seed, HeadMode::Frame, true) < 1e-4);
  }
}

TEST_CASE("analytic gradients match central differences (unidirectional)") {
  for (uint64_t seed : {7ULL, 8ULL}) {
    CHECK(max_gradcheck_error(seed, HeadMode::Sequence, false) < 1e-4);
  }
}
