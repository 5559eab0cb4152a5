#include "doctest.h"

#include "rsim/oracle.hpp"

using namespace rsim;

TEST_CASE("oracle: n=2 is a single halving") {
  auto r = exhaustive_crash_oracle(2);
  CHECK(r.holds);
  CHECK(r.executions > 0);
}

TEST_CASE("oracle: n=3 and n=4 have no violating schedule") {
  for (std::uint64_t n : {3, 4}) {
    auto r = exhaustive_crash_oracle(n);
    CHECK(r.holds);
    CHECK(r.violations == 0);
  }
}

TEST_CASE("oracle catches an off-by-one rank") {
  OracleOptions o;
  o.mutation = crash::Mutation::rank_off_by_one;
  o.stop_at_first = true;
  auto r = exhaustive_crash_oracle(4, o);
  CHECK_FALSE(r.holds);
  CHECK(r.witness.find("both got") != std::string::npos);
}

TEST_CASE("oracle reports a blown state cap instead of skipping") {
  OracleOptions o;
  o.state_cap = 10;
  CHECK_THROWS_AS(exhaustive_crash_oracle(4, o), BudgetExceeded);
  CHECK_THROWS_AS(exhaustive_crash_oracle(7), ConfigError);
}
