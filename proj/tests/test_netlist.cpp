#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <complex>
#include <fstream>
#include <random>
#include <sstream>

#include "pssinit/netlist.hpp"

using namespace pss;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

const std::string kBundled = std::string(PSSINIT_DATA_DIR) + "/wscc9_unbalanced.net";

const char* kTwoBus = R"(
[SYSTEM]
base_mva 100
frequency 60
[BUS]
1 src
2 sink
[BRANCH]
B12 1 2 0.01 0.1 0.2 1.0
[GEN]
G1 1 100 0.002 0.0787 1.575 1.512 0.291 0.39 0.1733 0.1733 6.1 1.0 0.05 0.15 3.0 0.1
[LOAD]
L2 2 0.5 0.2 0.0
[PFCOND]
G1 vtheta 1.0 0.0
L2 pq 0.5 0.2 per_phase
)";

} // namespace

TEST_CASE("minimal two-bus file parses and round-trips") {
    const SystemSpec spec = parse_system(kTwoBus);
    CHECK(spec.buses.size() == 2);
    CHECK(spec.generators.size() == 1);
    CHECK(spec.loads.size() == 1);
    // parse-serialize-parse is a fixed point
    const std::string once = serialize_system(spec);
    const SystemSpec again = parse_system(once);
    CHECK(serialize_system(again) == once);
}

TEST_CASE("bundled system round-trips through the serializer") {
    const SystemSpec spec = parse_system(read_file(kBundled));
    const std::string once = serialize_system(spec);
    CHECK(serialize_system(parse_system(once)) == once);
}

TEST_CASE("generator record carries the table values exactly") {
    const SystemSpec spec = parse_system(read_file(kBundled));
    REQUIRE(spec.generators.size() == 3);
    const GenSpec& g2 = spec.generators[1];
    CHECK(g2.h == 3.0);
    CHECK(g2.xd2 == 0.1733);
    CHECK(g2.td01 == 6.1);
    CHECK(g2.ra == 0.002);
    CHECK(g2.xl == 0.0787);
    CHECK(g2.xd == 1.575);
    CHECK(g2.xq == 1.512);
    CHECK(g2.xd1 == 0.291);
    CHECK(g2.xq1 == 0.39);
    CHECK(g2.tq02 == 0.15);
    CHECK(g2.d == 0.1);
}

TEST_CASE("machine data are rebased to the system MVA base") {
    std::string text(kTwoBus);
    const auto at = text.find("G1 1 100");
    REQUIRE(at != std::string::npos);
    text.replace(at, 8, "G1 1 050");
    const SystemSpec spec = parse_system(text);
    CHECK(spec.generators[0].xd == doctest::Approx(2.0 * 1.575));
    CHECK(spec.generators[0].h == doctest::Approx(0.5 * 3.0));
    CHECK(spec.generators[0].rated_mva == 100.0);
}

TEST_CASE("parse errors") {
    CHECK_THROWS_AS(parse_system("[NOPE]\n"), ParseError);
    CHECK_THROWS_WITH_AS(parse_system("x 1\n"), doctest::Contains("before any section"),
                         ParseError);
    // duplicate ids
    std::string dup(kTwoBus);
    dup += "[LOAD]\nL2 2 0.5 0.2 0.0\n";
    CHECK_THROWS_WITH_AS(parse_system(dup), doctest::Contains("duplicate"), ParseError);
    // missing mandatory field
    CHECK_THROWS_WITH_AS(parse_system("[BRANCH]\nB1 1 2 0.0\n"),
                         doctest::Contains("missing mandatory field"), ParseError);
    // no angle reference
    std::string noref(kTwoBus);
    const auto at = noref.find("G1 vtheta 1.0 0.0");
    noref.replace(at, 17, "G1 pv 0.5 1.0    ");
    CHECK_THROWS_WITH_AS(parse_system(noref), doctest::Contains("no angle reference device"),
                         ParseError);
}

TEST_CASE("allocate_load matches the allocation rule") {
    const std::complex<double> s(0.90, 0.30);
    const auto shares = allocate_load(s, 0.1);
    CHECK(std::abs(shares.a - std::complex<double>(0.27, 0.09)) < 1e-15);
    CHECK(std::abs(shares.b - std::complex<double>(0.30, 0.10)) < 1e-15);
    CHECK(std::abs(shares.c - std::complex<double>(0.33, 0.11)) < 1e-15);

    const auto equal = allocate_load({1.2, -0.4}, 0.0);
    CHECK(std::abs(equal.a - equal.b) < 1e-16);
    CHECK(std::abs(equal.b - equal.c) < 1e-16);

    const std::complex<double> s2(1.00, 0.35);
    const auto sh2 = allocate_load(s2, 0.1);
    CHECK(std::abs(sh2.c - 1.1 / 3.0 * s2) < 1e-15);

    CHECK_THROWS(allocate_load(s, 1.0));
    CHECK_THROWS(allocate_load(s, -1.3));
}

TEST_CASE("allocate_load shares sum to S for random inputs") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::uniform_real_distribution<double> kd(-0.999, 0.999);
    for (int rep = 0; rep < 500; ++rep) {
        const std::complex<double> s(u(rng), u(rng));
        const auto sh = allocate_load(s, kd(rng));
        CHECK(std::abs(sh.a + sh.b + sh.c - s) < 4e-16 * (1.0 + std::abs(s)));
    }
}

TEST_CASE("bundled spec validates cleanly with balanced equations") {
    const SystemSpec spec = parse_system(read_file(kBundled));
    CHECK(validate(spec).empty());
    CHECK(count_pf_residuals(spec) == 19);
    CHECK(count_free_quantities(spec) == 19);
}

TEST_CASE("validate rejects single-field corruptions") {
    const std::string text = read_file(kBundled);

    SystemSpec bad = parse_system(text);
    bad.generators[0].xd2 = bad.generators[0].xd1 + 0.1; // x" > x'
    {
        const auto d = validate(bad);
        REQUIRE(!d.empty());
        CHECK(d.front().find("reactance ordering") != std::string::npos);
    }

    bad = parse_system(text);
    bad.conditions.push_back(bad.conditions.front()); // second vtheta
    {
        const auto d = validate(bad);
        bool found = false;
        for (const auto& m : d)
            found = found || m.find("multiple angle references") != std::string::npos;
        CHECK(found);
    }

    bad = parse_system(text);
    bad.branches[2].to = 42; // missing bus
    CHECK(!validate(bad).empty());

    bad = parse_system(text);
    bad.loads[0].alloc_k = 1.5;
    CHECK(!validate(bad).empty());

    bad = parse_system(text);
    bad.conditions.pop_back(); // unbalances the equation count
    {
        const auto d = validate(bad);
        bool found = false;
        for (const auto& m : d)
            found = found || m.find("equation balance") != std::string::npos;
        CHECK(found);
    }

    bad = parse_system(text);
    bad.generators[1].td01 = -1.0;
    CHECK(!validate(bad).empty());

    bad = parse_system(text);
    bad.motors[0].h = 0.0;
    CHECK(!validate(bad).empty());
}
