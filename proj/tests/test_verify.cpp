#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dropnet/reference.hpp"
#include "dropnet/verify.hpp"

using namespace dropnet;

TEST_CASE("unbiasedness check passes and fault injection flips it") {
  Tolerances tol;
  CheckResult clean = check_unbiasedness(reference::layered_221_sigmoid(), tol, 5, Fault::none, 4000);
  CHECK(clean.status == CheckStatus::pass);
  CHECK(clean.observed <= tol.grad_fd_rel);

  CheckResult broken =
      check_unbiasedness(reference::layered_221_sigmoid(), tol, 5, Fault::gradient, 4000);
  CHECK(broken.status == CheckStatus::fail);
}

TEST_CASE("check results are reproducible from name and seed") {
  Tolerances tol;
  CheckResult a = check_unbiasedness(reference::layered_221_sigmoid(), tol, 11, Fault::none, 2000);
  CheckResult b = check_unbiasedness(reference::layered_221_sigmoid(), tol, 11, Fault::none, 2000);
  CHECK(a.status == b.status);
  CHECK(a.observed == b.observed);
  CHECK(a.detail == b.detail);
  CHECK(a.seed == b.seed);
}

TEST_CASE("variance cap instantiation on the single edge") {
  reference::Problem pr = reference::single_edge();
  // |Delta| <= 2 (|y| + M |x|) |x| with M = 3, x = 1, y = 2
  CHECK(delta_norm_cap(pr.graph, pr.act, 3.0, pr.data) == doctest::Approx(100.0));
  CheckResult res = check_variance_monitor(pr, 3.0, 2000, StepSchedule::robbins_monro(1.0, 10.0), 3);
  CHECK(res.status == CheckStatus::pass);
  CHECK(res.observed <= res.bound);
}

TEST_CASE("closed forms check") {
  CheckResult res = check_closed_forms(Tolerances{}, 1);
  CHECK(res.status == CheckStatus::pass);
}

TEST_CASE("decomposition check flags a planted violation expectation") {
  Tolerances tol;
  reference::Problem dia = reference::diamond_problem();
  CheckResult res = check_decomposition("diamond", dia.graph, dia.dist, dia.data, 3, tol, 7, true);
  CHECK(res.status == CheckStatus::pass);
  // an arborescence cannot satisfy expect_nonzero_r
  BaseGraph line = reference::line(2);
  CheckResult wrong =
      check_decomposition("line2", line, MaskDistribution::dropconnect(line, 0.5),
                          reference::singleton_data({1.0}, {1.0}), 3, tol, 7, true);
  CHECK(wrong.status == CheckStatus::fail);
}

TEST_CASE("conservation check on the hand chain") {
  CheckResult res = check_conservation(reference::line2_hand(), 1e-6, 1000, Tolerances{}, 2);
  CHECK(res.status == CheckStatus::pass);
}

TEST_CASE("rate check passes when certified and skips when out of contract") {
  Tolerances tol;
  CheckResult certified = check_rate(reference::line2_hand(), 2.0, 0.3, 1.0, 2000, tol, 4);
  CHECK(certified.status == CheckStatus::pass);
  CheckResult loose = check_rate(reference::line2_hand(), 2.0, 0.3, 10.0, 2000, tol, 4);
  CHECK(loose.status == CheckStatus::skipped);
}

TEST_CASE("pl region sampling") {
  CheckResult res =
      check_pl_region(reference::depth3_tree_certified(), 2.0, 0.3, 25, Tolerances{}, 6);
  CHECK(res.status == CheckStatus::pass);
  CHECK(res.observed >= 1.0);  // lhs/rhs margin
}

TEST_CASE("stationarity check on the single edge") {
  CheckResult res = check_stationarity(reference::single_edge(), 3.0,
                                       StepSchedule::robbins_monro(5.0, 10.0), 20000,
                                       Tolerances{}, 1);
  CHECK(res.status == CheckStatus::pass);
}

TEST_CASE("selection semantics") {
  VerifyConfig cfg;
  cfg.seed = 3;
  cfg.parallel = false;
  SUBCASE("empty selection skips everything") {
    cfg.selection = std::vector<std::string>{};
    std::vector<CheckResult> results = run_all(cfg);
    CHECK(!results.empty());
    for (const CheckResult& r : results) CHECK(r.status == CheckStatus::skipped);
    CHECK(all_passed(results));  // skipped is not a failure
  }
  SUBCASE("prefix selection runs a subset") {
    cfg.selection = std::vector<std::string>{"closed_forms"};
    std::vector<CheckResult> results = run_all(cfg);
    int ran = 0;
    for (const CheckResult& r : results) {
      if (r.name.rfind("closed_forms", 0) == 0) {
        CHECK(r.status == CheckStatus::pass);
        ++ran;
      } else {
        CHECK(r.status == CheckStatus::skipped);
      }
    }
    CHECK(ran == 1);
  }
}

TEST_CASE("trace bytes are reproducible") {
  CheckResult res = check_reproducibility(9);
  CHECK(res.status == CheckStatus::pass);
}

TEST_CASE("report serialization") {
  VerifyConfig cfg;
  cfg.seed = 3;
  cfg.parallel = false;
  cfg.selection = std::vector<std::string>{"closed_forms"};
  std::vector<CheckResult> results = run_all(cfg);
  json report = check_results_to_json(results);
  CHECK(report.at("all_pass").get<bool>());
  CHECK(report.at("results").size() == results.size());
}
