#include <filesystem>
#include <fstream>
#include <limits>

#include <catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace sprobit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / "sprobit_test_io";
  fs::create_directories(dir);
  return dir / name;
}

fs::path write_file(const std::string &name, const std::string &body) {
  const fs::path p = scratch(name);
  std::ofstream(p, std::ios::binary) << body;
  return p;
}

} // namespace

TEST_CASE("doubles round-trip through their text form", "[io]") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.normal() * std::pow(10.0, rng.normal() * 30.0);
    REQUIRE(io::parse_double(io::format_double(x)).value() == x);
  }
  for (double x : {0.0, -0.0, 1e-310, std::numeric_limits<double>::max(), 0.1, 1.0 / 3.0})
    CHECK(io::parse_double(io::format_double(x)).value() == x);
  CHECK(io::parse_double(" 2.5 ").value() == 2.5);
  CHECK(io::parse_double("+1").value() == 1.0);
  CHECK_FALSE(io::parse_double("abc").has_value());
  CHECK_FALSE(io::parse_double("1.0x").has_value());
  CHECK_FALSE(io::parse_double("").has_value());
}

TEST_CASE("split_csv_line handles quotes", "[io]") {
  CHECK(io::split_csv_line("a,b,,c") == std::vector<std::string>{"a", "b", "", "c"});
  CHECK(io::split_csv_line("\"x,y\",\"he said \"\"hi\"\"\"") ==
        std::vector<std::string>{"x,y", "he said \"hi\""});
}

TEST_CASE("read_csv detects headers, BOM and CRLF", "[io]") {
  const auto with_header = io::read_csv(write_file("h.csv", "\xEF\xBB\xBFy,a,b\r\n1,2,3\r\n0,4,5\r\n"));
  CHECK(with_header.header == std::vector<std::string>{"y", "a", "b"});
  REQUIRE(with_header.rows.size() == 2);
  CHECK(with_header.rows[1][2] == "5");

  const auto bare = io::read_csv(write_file("n.csv", "1,2,3\n0,4,5\n\n"));
  CHECK(bare.header.empty());
  CHECK(bare.rows.size() == 2);

  CHECK_THROWS_AS(io::read_csv(write_file("w.csv", "a,b\n1,2\n3\n")), ValidationError);
  CHECK_THROWS_AS(io::read_csv(scratch("missing.csv")), ValidationError);
}

TEST_CASE("dataset_from_table selects the response by name or index", "[io]") {
  const auto t = io::read_csv(write_file("d.csv", "a,y,b\n0.5,1,2\n-1,0,3\n"));
  const Dataset byname = io::dataset_from_table(t, "y");
  CHECK(byname.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(byname.y == (VectorXi(2) << 1, 0).finished());
  CHECK(byname.X == (MatrixXd(2, 2) << 0.5, 2, -1, 3).finished());
  const Dataset byindex = io::dataset_from_table(t, "1");
  CHECK(byindex.X == byname.X);

  const auto bare = io::read_csv(write_file("b.csv", "1,0.5\n0,0.25\n"));
  const Dataset d = io::dataset_from_table(bare, "0");
  CHECK(d.feature_names == std::vector<std::string>{"x1"});
  CHECK_THROWS_AS(io::dataset_from_table(bare, "y"), ValidationError);
  CHECK_THROWS_AS(io::dataset_from_table(bare, "5"), ValidationError);

  const auto badresp = io::read_csv(write_file("r.csv", "y,a\n1,2\n2,3\n0,1\n"));
  try {
    io::dataset_from_table(badresp, "y");
    FAIL("expected ValidationError");
  } catch (const ValidationError &e) {
    CHECK(e.indices() == std::vector<std::size_t>{1});
  }
  const auto badx = io::read_csv(write_file("x.csv", "y,a\n1,2\n0,nan\n0,oops\n"));
  try {
    io::dataset_from_table(badx, "y");
    FAIL("expected ValidationError");
  } catch (const ValidationError &e) {
    CHECK(e.indices() == std::vector<std::size_t>{1, 2});
  }
}

TEST_CASE("standardization and intercept", "[io]") {
  MatrixXd X(4, 3);
  X << 1, 5, 2, 2, 5, 4, 3, 5, 6, 4, 5, 8;
  const auto s = io::Standardization::fit(X);
  CHECK(s.means == std::vector<double>{2.5, 5.0, 5.0});
  CHECK(s.sds[1] == 1.0);
  MatrixXd Z = X;
  s.apply(Z);
  for (Index j : {0, 2}) {
    CHECK(std::abs(Z.col(j).mean()) < 1e-15);
    CHECK(std::abs((Z.col(j).array().square().sum() / 3.0) - 1.0) < 1e-12);
  }
  CHECK(Z.col(1).isZero(0.0));
  std::vector<std::string> names{"a", "b", "c"};
  io::append_intercept(Z, names);
  CHECK(Z.cols() == 4);
  CHECK(Z.col(3) == VectorXd::Ones(4));
  CHECK(names.back() == io::kInterceptName);
}

TEST_CASE("CsvWriter output re-reads exactly", "[io]") {
  const fs::path p = scratch("out.csv");
  Rng rng(2);
  std::vector<double> vals;
  {
    io::CsvWriter w(p);
    w.row("name", "value", "count");
    for (int i = 0; i < 50; ++i) {
      vals.push_back(rng.normal() * 1e-5);
      w.row("f,\"" + std::to_string(i), vals.back(), i);
    }
  }
  const auto t = io::read_csv(p);
  CHECK(t.header == std::vector<std::string>{"name", "value", "count"});
  REQUIRE(t.rows.size() == 50);
  for (int i = 0; i < 50; ++i) {
    CHECK(t.rows[static_cast<std::size_t>(i)][0] == "f,\"" + std::to_string(i));
    CHECK(io::parse_double(t.rows[static_cast<std::size_t>(i)][1]).value() == vals[static_cast<std::size_t>(i)]);
  }
}
