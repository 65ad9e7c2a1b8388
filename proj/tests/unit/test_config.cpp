#include <gtest/gtest.h>

#include <fstream>

#include "probe/config.hpp"
#include "support.hpp"

using namespace probe;

namespace {

std::string error_of(std::string_view text) {
  try {
    parse_config(text, "t.ini");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, EmptyTextGivesNominalDefaults) {
  const auto c = parse_config("");
  EXPECT_EQ(c.f0_hz, 63150.0);
  EXPECT_EQ(c.quality, 206.0);
  EXPECT_EQ(c.q, 13u);
  EXPECT_EQ(c.snr_db, 10.4);
  EXPECT_EQ(c.thermal_variance, 0.1);
  EXPECT_EQ(c.measurement_variance, 0.001);
  EXPECT_EQ(c.source, ImpactSource::calibrated);
  EXPECT_EQ(c.detectors.size(), 4u);
  EXPECT_TRUE(c.warnings.empty());
}

TEST(Config, ParsesSectionsCommentsAndLists) {
  const auto c = parse_config(R"(
# experiment
[media]
q = 21          ; bits are long
snr_db = 8.5
[detect]
detectors = viterbi, lmp
[sweep]
variable = q
values = 4, 5, 6
bits_per_point = 1e5
[run]
seed = 18446744073709551615
)");
  EXPECT_EQ(c.q, 21u);
  EXPECT_EQ(c.snr_db, 8.5);
  EXPECT_EQ(c.detectors, (std::vector<std::string>{"viterbi", "lmp"}));
  EXPECT_TRUE(c.wants("lmp"));
  EXPECT_FALSE(c.wants("bayes"));
  EXPECT_EQ(c.variable, SweepVariable::q);
  EXPECT_EQ(c.values, (std::vector<double>{4, 5, 6}));
  EXPECT_EQ(c.bits_per_point, 100000u);
  EXPECT_EQ(c.seed, 18446744073709551615ull);
}

TEST(Config, CanonicalTextRoundTrips) {
  auto c = parse_config("[media]\nq = 7\nsnr_db = 0.1\n[impact]\nsource = synthetic\nmemory = 2\n"
                        "[sweep]\nvariable = snr_db\nvalues = 0.1, 2.5, 1e-3\n[run]\nout = x/y\n");
  const std::string text = to_config_text(c);
  const auto r = parse_config(text);
  EXPECT_EQ(to_config_text(r), text);
  EXPECT_EQ(r.values, c.values);
  EXPECT_EQ(r.snr_db, 0.1);
  EXPECT_EQ(r.memory, 2u);
  EXPECT_EQ(r.out, std::filesystem::path("x/y"));
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_NE(error_of("[media]\n\nq = banana\n").find("t.ini:3:"), std::string::npos);
  EXPECT_NE(error_of("[media]\ncolour = red\n").find("t.ini:2: unknown key 'colour'"), std::string::npos);
  EXPECT_NE(error_of("[bogus]\n").find("t.ini:1: unknown section [bogus]"), std::string::npos);
  EXPECT_NE(error_of("q = 3\n").find("outside of any [section]"), std::string::npos);
  EXPECT_NE(error_of("[media]\nq\n").find("expected 'key = value'"), std::string::npos);
  EXPECT_NE(error_of("[media\n").find("malformed section"), std::string::npos);
  EXPECT_NE(error_of("[media]\nq =\n").find("empty value"), std::string::npos);
  EXPECT_NE(error_of("[detect]\ndetectors = viterbi, mlse\n").find("unknown detector 'mlse'"), std::string::npos);
}

TEST(Config, ValidationRejectsInconsistentValues) {
  EXPECT_NE(error_of("[media]\nq = 0\n").find("q must be"), std::string::npos);
  EXPECT_NE(error_of("[noise]\nmeasurement_variance = 0\n").find("measurement_variance"), std::string::npos);
  EXPECT_NE(error_of("[impact]\nsource = file\n").find("model_file"), std::string::npos);
  EXPECT_NE(error_of("[sweep]\nvariable = q\n").find("values"), std::string::npos);
  EXPECT_NE(error_of("[sweep]\nvariable = q\nvalues = 4.5\n").find("integers"), std::string::npos);
  EXPECT_NE(error_of("[media]\nrestitution = 1.5\n").find("restitution"), std::string::npos);
  EXPECT_NE(error_of("[run]\nseed = -1\n").find("non-negative integer"), std::string::npos);
  EXPECT_TRUE(error_of("[sweep]\nbits_per_point = 2.5e3\n").empty());
  EXPECT_NE(error_of("[sweep]\nbits_per_point = 2.5\n").find("non-negative integer"), std::string::npos);
}

TEST(Config, SmallPointsWarn) {
  const auto c = parse_config("[sweep]\nbits_per_point = 500\n");
  ASSERT_EQ(c.warnings.size(), 1u);
  EXPECT_NE(c.warnings[0].find("1000"), std::string::npos);
  const auto reach = parse_config("[media]\nseparation_nm = 20\n");
  EXPECT_FALSE(reach.warnings.empty());
}

TEST(Config, ModelFileResolvesAgainstConfigDirectory) {
  testkit::TempDir dir("cfg");
  std::filesystem::create_directories(dir.path() / "sub");
  std::ofstream(dir.path() / "sub" / "exp.ini") << "[impact]\nsource = file\nmodel_file = model.txt\n";
  const auto c = load_config(dir.path() / "sub" / "exp.ini");
  EXPECT_EQ(c.model_file, dir.path() / "sub" / "model.txt");
  EXPECT_THROW(load_config(dir.path() / "missing.ini"), ConfigError);
}

TEST(Config, DetectorListParsing) {
  EXPECT_EQ(parse_detector_list("glrt,bayes"), (std::vector<std::string>{"glrt", "bayes"}));
  EXPECT_THROW(parse_detector_list(""), ConfigError);
  EXPECT_THROW(parse_detector_list("viterbi,,"), ConfigError);
}
