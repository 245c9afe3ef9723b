#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

// stdout and stderr merged
CliRun run(const std::string& args) {
  CliRun r;
  const std::string cmd = std::string(MLABEL_CLI) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t got;
  while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string temp_file(const std::string& name, const std::string& body) {
  const std::string path = testing::TempDir() + name;
  std::ofstream(path) << body;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// last comma field of the second output line
double last_field(const std::string& out) {
  std::istringstream in(out);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  return std::stod(line.substr(line.rfind(',') + 1));
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("theory --m notanumber").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, BetaMustBePositive) {
  const CliRun r = run("theory --beta 0");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("beta must be > 0"), std::string::npos) << r.out;
  const std::string cfg = temp_file("beta.cfg", "covariates = beta\nbeta = -0.5\n");
  const CliRun s = run("simulate " + cfg);
  EXPECT_EQ(s.code, 2);
  EXPECT_NE(s.out.find("requires beta > 0"), std::string::npos) << s.out;
}

TEST(Cli, MajorityWithOneLabelerMatchesWellSpecified) {
  const CliRun a = run("theory --kind majority --m 1 --tstar 1.5");
  const CliRun b = run("theory --kind well-specified --m 1 --tstar 1.5");
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_NEAR(last_field(a.out) / last_field(b.out), 1.0, 1e-9);
  EXPECT_EQ(run("theory --kind nonsense").code, 2);
  EXPECT_EQ(run("theory --true-link scaled:abc").code, 2);
}

TEST(Cli, ImpossibilityDiscrepancyVanishes) {
  const CliRun r = run("theory --impossibility --m 3 --tstar 1 --mbar 5 --tbar 2");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_LE(last_field(r.out), 1e-10);
}

TEST(Cli, IngestReportsShapeAndLineErrors) {
  const std::string good = temp_file("good.csv", "x1,x2,y1,y2,y3\n1,2,1,0,1\n3,4,0,0,1\n");
  const CliRun ok = run("ingest " + good);
  EXPECT_EQ(ok.code, 0);
  EXPECT_NE(ok.out.find("2,2,3"), std::string::npos) << ok.out;
  const std::string bad = temp_file("bad.csv", "x1,y1\n1,1\n1,7\n");
  const CliRun err = run("ingest " + bad);
  EXPECT_EQ(err.code, 2);
  EXPECT_NE(err.out.find("bad.csv:3"), std::string::npos) << err.out;
}

TEST(Cli, SimulateWritesDeterministicOutputs) {
  const std::string base = testing::TempDir() + "sim";
  const std::string cfg = temp_file("sim.cfg", "d = 3\nm = 2\nn = 500\ntrials = 4\nseed = 3\n"
                                               "estimators = multilabel, majority\noutput = " + base + "\n");
  ASSERT_EQ(run("simulate " + cfg + " --threads 1").code, 0);
  const std::string first = slurp(base + "_summary.csv");
  const std::string trials = slurp(base + "_trials.csv");
  ASSERT_EQ(run("simulate " + cfg + " --threads 2").code, 0);
  EXPECT_EQ(slurp(base + "_summary.csv"), first);
  EXPECT_EQ(slurp(base + "_trials.csv"), trials);
  EXPECT_EQ(first.rfind("# schema_version=1\n", 0), 0u);
  EXPECT_EQ(first.find("threads="), std::string::npos);

  const CliRun printed = run("simulate " + cfg + " --print-config");
  EXPECT_EQ(printed.code, 0);
  EXPECT_NE(printed.out.find("trials=4"), std::string::npos);
}

TEST(Cli, ExclusionCapExitsThree) {
  const std::string cfg = temp_file("cap.cfg", "d = 2\nn = 200\ntrials = 3\nmax_iters = 1\noutput = " +
                                                   testing::TempDir() + "cap\n");
  EXPECT_EQ(run("simulate " + cfg).code, 3);
}

TEST(Cli, SemiparamOnCsv) {
  std::ostringstream csv;
  csv << "x1,x2,y1,y2\n";
  unsigned state = 7;
  auto next = [&] {
    state = state * 1103515245u + 12345u;
    return ((state >> 8) & 0xffff) / 65536.0;
  };
  for (int i = 0; i < 600; ++i) {
    const double a = next() * 4 - 2, b = next() * 4 - 2;
    csv << a << ',' << b << ',' << (next() < 1 / (1 + std::exp(-2 * a)) ? 1 : -1) << ','
        << (next() < 1 / (1 + std::exp(-2 * a)) ? 1 : -1) << '\n';
  }
  const std::string data = temp_file("semi.csv", csv.str());
  const std::string links = testing::TempDir() + "links.csv";
  const CliRun r = run("semiparam --data " + data + " --grid 32 --links-out " + links);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("60,540"), std::string::npos) << r.out;
  EXPECT_NE(slurp(links).find("labeler,degenerate,t,sigma"), std::string::npos);
}
