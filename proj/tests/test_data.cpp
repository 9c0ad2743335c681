#include "odgn/data.hpp"
#include "odgn/gravity.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace odgn;
using odgn::testing::slurp;
using odgn::testing::TempDir;

namespace {

void write(const std::filesystem::path& p, const std::string& text)
{
  std::ofstream out(p);
  out << text;
}

void two_region_fixture(const std::filesystem::path& dir, bool with_od)
{
  std::filesystem::create_directories(dir);
  write(dir / "regions.csv", "id,lon,lat,attr_0,attr_1\na,-87.6,41.8,100,3\nb,-87.5,41.9,200,4\n");
  write(dir / "transport_ngb.csv", "src,dst\na,b\n");
  write(dir / "transport_bus.csv", "src,dst\n");
  write(dir / "transport_rail.csv", "src,dst\n");
  if (with_od) write(dir / "od.csv", "origin,dest,flow\na,b,5\nb,a,2\n");
}

void check_same_city(const City& a, const City& b)
{
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.regions[i].id == b.regions[i].id);
    CHECK(a.regions[i].lon == doctest::Approx(b.regions[i].lon).epsilon(1e-12));
    CHECK(a.regions[i].lat == doctest::Approx(b.regions[i].lat).epsilon(1e-12));
    CHECK(a.regions[i].attributes == b.regions[i].attributes);
  }
  CHECK(a.transport.ngb == b.transport.ngb);
  CHECK(a.transport.bus == b.transport.bus);
  CHECK(a.transport.rail == b.transport.rail);
  REQUIRE(a.od.has_value() == b.od.has_value());
  if (a.od) CHECK(a.od->flows() == b.od->flows());
}

}  // namespace

TEST_CASE("load_city transcribes a 2-region fixture")
{
  TempDir tmp("data_fixture");
  two_region_fixture(tmp / "c", true);
  const City c = load_city(tmp / "c");
  REQUIRE(c.od);
  Matrix want(2, 2);
  want << 0, 5, 2, 0;
  CHECK(c.od->flows() == want);
  CHECK(c.attr_dim() == 2);
  CHECK(c.transport.ngb(1, 0));
  CHECK(c.transport.bus(0, 0));
  CHECK_FALSE(c.transport.bus(0, 1));
}

TEST_CASE("od.csv is optional")
{
  TempDir tmp("data_no_od");
  two_region_fixture(tmp / "c", false);
  CHECK_FALSE(load_city(tmp / "c").od.has_value());
}

TEST_CASE("load_city errors name the offending id and file")
{
  TempDir tmp("data_errors");
  const auto dir = tmp / "c";
  two_region_fixture(dir, true);

  write(dir / "transport_bus.csv", "src,dst\na,zz\n");
  CHECK_THROWS_WITH_AS(load_city(dir), doctest::Contains("'zz' in transport_bus.csv"), DataError);
  write(dir / "transport_bus.csv", "src,dst\n");

  write(dir / "od.csv", "origin,dest,flow\na,b,5\nq,a,1\n");
  CHECK_THROWS_WITH_AS(load_city(dir), doctest::Contains("'q' in od.csv line 3"), DataError);

  write(dir / "od.csv", "origin,dest,flow\na,b,-1\n");
  CHECK_THROWS_WITH_AS(load_city(dir), doctest::Contains("negative flow"), DataError);

  write(dir / "od.csv", "origin,dest,flow\na,b,1\na,b,2\n");
  CHECK_THROWS_WITH_AS(load_city(dir), doctest::Contains("duplicate pair"), DataError);
  write(dir / "od.csv", "origin,dest,flow\na,b,5\n");

  write(dir / "regions.csv", "id,lon,lat,attr_0,attr_1\na,-87.6,41.8,100,3\nb,-87.5,41.9,200\n");
  CHECK_THROWS_AS(load_city(dir), DataError);

  CHECK_THROWS_AS(load_city(tmp / "missing"), DataError);
}

TEST_CASE("save_city then load_city is the identity on synthetic cities")
{
  TempDir tmp("data_roundtrip");
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SynthConfig cfg;
    cfg.n_regions = 20;
    cfg.seed = seed;
    cfg.poisson_noise = seed != 2;
    const City c = synth_city(cfg);
    save_city(c, tmp / c.name);
    check_same_city(c, load_city(tmp / c.name));
  }
}

TEST_CASE("synth_city is deterministic per seed")
{
  SynthConfig cfg;
  cfg.n_regions = 30;
  const City a = synth_city(cfg);
  const City b = synth_city(cfg);
  check_same_city(a, b);
  cfg.seed = 2;
  CHECK_FALSE(synth_city(cfg).od->flows() == a.od->flows());

  TempDir tmp("data_bytes");
  save_city(a, tmp / "a");
  save_city(b, tmp / "b");
  for (const char* f : {"regions.csv", "transport_ngb.csv", "transport_bus.csv", "transport_rail.csv", "od.csv"})
    CHECK(slurp(tmp / "a" / f) == slurp(tmp / "b" / f));
}

TEST_CASE("synth_city structure")
{
  SynthConfig cfg;
  cfg.n_regions = 50;
  const City c = synth_city(cfg);
  CHECK(cfg.grid_side() == 8);
  CHECK(c.size() == 50);
  CHECK(c.attr_dim() == 60);
  // Grid 4-adjacency: region 0 sits at a corner.
  CHECK(c.transport.ngb(0, 1));
  CHECK(c.transport.ngb(0, 8));
  CHECK_FALSE(c.transport.ngb(0, 9));
  // 8-wide grid, 6 full rows plus 2 cells: 6*7 + 1 horizontal and 42 vertical edges.
  CHECK(c.transport.ngb.cast<int>().sum() - 50 == 2 * (43 + 42));
  for (const auto& r : c.regions) CHECK(r.attributes[0] >= 1.0);
}

TEST_CASE("synth flows are finite and non-negative across 100 seeds")
{
  SynthConfig cfg;
  cfg.n_regions = 16;
  cfg.attr_dim = 30;
  for (std::uint64_t s = 0; s < 100; ++s) {
    cfg.seed = s;
    const City c = synth_city(cfg);
    CHECK(c.od->flows().allFinite());
    CHECK(c.od->flows().minCoeff() >= 0.0);
  }
}

TEST_CASE("minimal 2-region city is valid")
{
  SynthConfig cfg;
  cfg.n_regions = 2;
  const City c = synth_city(cfg);
  CHECK(c.size() == 2);
  CHECK_NOTHROW(c.validate());
  cfg.n_regions = 1;
  CHECK_THROWS_AS(synth_city(cfg), UsageError);
}

TEST_CASE("gravity_means hand value")
{
  Vector pop(2);
  pop << 2, 3;
  Matrix xy(2, 2);
  xy << 0, 0, 6, 0;
  const Matrix t = gravity_means(pop, xy, 1.0, 1.0, 1.0, 1.0);
  CHECK(t(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(t(0, 0) == 0.0);
}

TEST_CASE("noise-free synthetic flows without interaction invert exactly")
{
  SynthConfig cfg;
  cfg.n_regions = 25;
  cfg.poisson_noise = false;
  cfg.interaction = 0.0;
  const City c = synth_city(cfg);
  Vector pop(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) pop(i) = c.regions[i].attributes[0];
  const Matrix xy = synth_coordinates(cfg);
  Matrix d(c.size(), c.size());
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j) d(i, j) = std::max((xy.row(i) - xy.row(j)).norm(), 1e-6);
  const GravityFit fit = fit_decoder_logspace(*c.od, pop, d);
  CHECK(fit.max_residual < 1e-9);
  CHECK(fit.params.log_g == doctest::Approx(std::log(cfg.gravity_g)).epsilon(1e-9));
  CHECK(fit.params.lambda1 == doctest::Approx(cfg.lambda1).epsilon(1e-9));
  CHECK(fit.params.lambda2 == doctest::Approx(cfg.lambda2).epsilon(1e-9));
  CHECK(fit.params.lambda3 == doctest::Approx(cfg.lambda3).epsilon(1e-9));
}

TEST_CASE("attribute_similarity is a cosine matrix")
{
  SynthConfig cfg;
  cfg.n_regions = 12;
  const Matrix s = attribute_similarity(synth_city(cfg).attribute_matrix());
  CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(s.maxCoeff() <= 1.0 + 1e-12);
  CHECK(s.minCoeff() >= -1.0 - 1e-12);
  for (Eigen::Index i = 0; i < s.rows(); ++i) CHECK(s(i, i) == doctest::Approx(1.0));
}
