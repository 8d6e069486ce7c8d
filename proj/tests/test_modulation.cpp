#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "msm/modulation.hpp"
#include "msm/rng.hpp"

using namespace msm;

TEST_CASE("msm encoding follows the spatial-bit-first convention") {
  const MoleculeBudget budget{300, 700};

  // 2x1: "01" -> Tx1 sending L1; "10" -> Tx2 sending L0.
  const auto frames = msm_encode({0, 1, 1, 0}, Scheme::k2x1, budget);
  REQUIRE(frames.size() == 2);
  CHECK(frames[0].transmitter == 0);
  CHECK(frames[0].molecules == 700);
  CHECK(frames[1].transmitter == 1);
  CHECK(frames[1].molecules == 300);

  // 4x4: "110" -> Tx4 sending L0.
  const auto f4 = msm_encode({1, 1, 0}, Scheme::k4x4, budget);
  REQUIRE(f4.size() == 1);
  CHECK(f4[0].transmitter == 3);
  CHECK(f4[0].molecules == 300);
  CHECK(f4[0].bits_per_symbol == 3);
}

TEST_CASE("encoding rejects bit streams that do not tile") {
  const MoleculeBudget budget{100, 200};
  CHECK_THROWS_AS(msm_encode({1, 0, 1}, Scheme::k2x1, budget), LengthMismatchError);
  CHECK_THROWS_AS(msm_encode({1, 0, 1, 1}, Scheme::k4x4, budget), LengthMismatchError);
  CHECK_THROWS_AS(pairwise_bcsk_encode({1, 0, 1}, 2, 500), LengthMismatchError);
}

TEST_CASE("budgets must keep both levels non-zero") {
  const MoleculeBudget no_bit0{0, 100};
  CHECK_THROWS_AS(no_bit0.validate(), InvalidCountError);
  const MoleculeBudget no_bit1{100, 0};
  CHECK_THROWS_AS(Alphabet::msm(Scheme::k2x2, no_bit1), InvalidCountError);
  const MoleculeBudget minimal{1, 1};
  CHECK_NOTHROW(minimal.validate());
}

TEST_CASE("encode then decode is the identity on every block") {
  const MoleculeBudget budget{250, 750};
  for (const Scheme scheme : {Scheme::kSiso, Scheme::k2x1, Scheme::k2x2, Scheme::k4x4}) {
    const Alphabet alphabet = Alphabet::msm(scheme, budget);
    // Bijectivity: all (transmitter, level) pairs distinct.
    for (int a = 0; a < alphabet.size(); ++a)
      for (int b = a + 1; b < alphabet.size(); ++b)
        CHECK((alphabet.transmitter[a] != alphabet.transmitter[b] ||
               alphabet.level[a] != alphabet.level[b]));
    for (int sym = 0; sym < alphabet.size(); ++sym) {
      const auto bits = decode_symbol(sym, alphabet.bits_per_symbol);
      const auto frames = encode_with_alphabet(bits, alphabet);
      REQUIRE(frames.size() == 1);
      CHECK(frames[0].symbol == sym);
      CHECK(frames[0].transmitter == sym >> 1);
      CHECK(frames[0].molecules == (sym & 1 ? 750 : 250));
    }
  }
}

TEST_CASE("qcsk levels are uniformly spaced with the requested average") {
  const auto levels = qcsk_levels(1000.0);
  CHECK(levels[0] == 400);
  CHECK(levels[1] == 800);
  CHECK(levels[2] == 1200);
  CHECK(levels[3] == 1600);
  CHECK((levels[0] + levels[1] + levels[2] + levels[3]) / 4.0 == Catch::Approx(1000.0));
  const auto small = qcsk_levels(10.0);
  for (long v : small) CHECK(v >= 1);
  const auto any = qcsk_levels(173.0);
  CHECK((any[0] + any[1] + any[2] + any[3]) / 4.0 == Catch::Approx(173.0).margin(0.5));
}

TEST_CASE("pairwise encoding is per-transmitter on-off keying") {
  const auto slots = pairwise_bcsk_encode({1, 1, 0, 0, 1, 0}, 2, 500);
  REQUIRE(slots.size() == 3);
  CHECK(slots[0] == std::vector<long>{500, 500});
  CHECK(slots[1] == std::vector<long>{0, 0});
  CHECK(slots[2] == std::vector<long>{500, 0});
}

TEST_CASE("average molecules per slot are equalized across systems") {
  const MoleculeBudget budget{600, 1400};  // avg 1000 per slot under uniform bits
  const Alphabet msm2 = Alphabet::msm(Scheme::k2x2, budget);
  CHECK(msm2.average_level() == Catch::Approx(1000.0));

  // Pairwise per-slot: num_tx * level / 2 must match (L0+L1)/2 within 1.
  const long level2 = equalized_pairwise_level(budget, 2, 2, EqualizationBasis::kPerSlot);
  CHECK(std::abs(2 * level2 / 2.0 - 1000.0) <= 1.0);
  // Pairwise per-bit for the 4x4: level/2 must match (L0+L1)/(2*3) within 1.
  const long level4 = equalized_pairwise_level(budget, 4, 3, EqualizationBasis::kPerBit);
  CHECK(std::abs(level4 / 2.0 - 2000.0 / 6.0) <= 1.0);
  // QCSK per-slot average equals the MSM average.
  CHECK(equalized_qcsk_average(budget) == Catch::Approx(1000.0));
}

TEST_CASE("symbol statistics follow the two-slot composition") {
  // 2x1 with distinct per-transmitter probabilities.
  const std::vector<double> p1{0.0686, 0.0276};
  const std::vector<double> p2{0.0551, 0.0401};
  const MoleculeBudget budget{300, 700};
  const Alphabet alphabet = Alphabet::msm(Scheme::k2x1, budget);
  const SymbolStatistics stats = symbol_statistics(p1, p2, alphabet);
  REQUIRE(stats.alphabet_size == 4);
  REQUIRE(stats.mean.size() == 16);

  // Spot-check one pair: previous = "01" (Tx1, L1), current = "10" (Tx2, L0).
  const int prev = 1, cur = 2;
  const double mu = 300.0 * p1[1] + 700.0 * p2[0];
  const double var = 300.0 * p1[1] * (1 - p1[1]) + 700.0 * p2[0] * (1 - p2[0]);
  CHECK(stats.mean[stats.index(prev, cur)] == Catch::Approx(mu).epsilon(1e-12));
  CHECK(stats.variance[stats.index(prev, cur)] == Catch::Approx(var).epsilon(1e-12));
  for (double v : stats.variance) CHECK(v > 0.0);

  // Equal budgets collapse the means to one value per (tx_prev, tx_cur).
  const SymbolStatistics collapsed =
      symbol_statistics(p1, p2, Alphabet::msm_with_levels(Scheme::k2x1, 500.0, 500.0));
  CHECK(collapsed.mean[collapsed.index(0, 0)] ==
        Catch::Approx(collapsed.mean[collapsed.index(1, 1)]).epsilon(1e-12));
  CHECK(collapsed.mean[collapsed.index(0, 2)] ==
        Catch::Approx(collapsed.mean[collapsed.index(1, 3)]).epsilon(1e-12));

  // Zero ISI probabilities reduce the mean to x_c p1.
  const SymbolStatistics no_isi = symbol_statistics(p1, {0.0, 0.0}, alphabet);
  CHECK(no_isi.mean[no_isi.index(3, 0)] == Catch::Approx(300.0 * p1[0]).epsilon(1e-12));
}

TEST_CASE("symmetric targets split the budget evenly") {
  const std::vector<double> p1{0.07, 0.07};
  const std::vector<double> p2{0.05, 0.05};
  const auto builder = [&](double l0, double l1) {
    return symbol_statistics(p1, p2, Alphabet::msm_with_levels(Scheme::k2x1, l0, l1));
  };
  // Targets built at the naive split are symmetric under swapping L0/L1.
  const auto targets = default_targets(builder(1000.0, 1000.0));
  const MoleculeBudget budget = optimize_molecule_budget(builder, 2000, targets);
  CHECK(budget.bit0 + budget.bit1 == 2000);
  CHECK(budget.bit0 == 1000);
}

TEST_CASE("optimizer matches exhaustive search within one molecule") {
  Xoshiro256pp rng(99);
  for (int instance = 0; instance < 50; ++instance) {
    const double p1a = 0.02 + 0.1 * rng.uniform();
    const double p1b = 0.02 + 0.1 * rng.uniform();
    const double p2a = 0.01 + 0.08 * rng.uniform();
    const double p2b = 0.01 + 0.08 * rng.uniform();
    const Scheme scheme = (instance % 2) ? Scheme::k2x1 : Scheme::k2x2;
    const std::vector<double> p1{p1a, p1b};
    const std::vector<double> p2{p2a, p2b};
    const auto builder = [&](double l0, double l1) {
      return symbol_statistics(p1, p2, Alphabet::msm_with_levels(scheme, l0, l1));
    };
    const long l_total = 100 + static_cast<long>(rng.uniform() * 4900);
    const auto naive = MoleculeBudget::split(l_total);
    auto targets = default_targets(
        builder(static_cast<double>(naive.bit0), static_cast<double>(naive.bit1)));
    // Jitter the targets so instances are not all anchored the same way.
    for (auto& b : targets.mean) b *= 0.9 + 0.2 * rng.uniform();
    const MoleculeBudget closed = optimize_molecule_budget(builder, l_total, targets);
    const MoleculeBudget brute = exhaustive_molecule_budget(builder, l_total, targets);
    CHECK(std::abs(closed.bit0 - brute.bit0) <= 1);
    CHECK(closed.bit0 + closed.bit1 == l_total);
    CHECK(closed.bit0 >= 1);
    CHECK(closed.bit1 >= 1);
  }
}

TEST_CASE("optimizer objective at the returned point is near-minimal") {
  const std::vector<double> p1{0.0686, 0.0276};
  const std::vector<double> p2{0.0551, 0.0401};
  const auto builder = [&](double l0, double l1) {
    return symbol_statistics(p1, p2, Alphabet::msm_with_levels(Scheme::k2x1, l0, l1));
  };
  const long l_total = 2000;
  const auto targets = default_targets(builder(1000.0, 1000.0));
  const auto budget = optimize_molecule_budget(builder, l_total, targets);
  const double at_budget = budget_objective(
      builder(static_cast<double>(budget.bit0), static_cast<double>(budget.bit1)), targets);
  for (long l0 = 1; l0 < l_total; l0 += 7) {
    const double other = budget_objective(
        builder(static_cast<double>(l0), static_cast<double>(l_total - l0)), targets);
    CHECK(at_budget <= other + 1e-6 * (1.0 + std::abs(other)));
  }
}

TEST_CASE("optimizer rejects infeasible totals") {
  const auto builder = [&](double l0, double l1) {
    return symbol_statistics({0.1, 0.1}, {0.05, 0.05},
                             Alphabet::msm_with_levels(Scheme::k2x1, l0, l1));
  };
  CHECK_THROWS_AS(optimize_molecule_budget(builder, 1, {}), InfeasibleError);
}
