#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "ascnet/config.hpp"
#include "ascnet/dataset_io.hpp"
#include "ascnet/figures.hpp"
#include "ascnet/nifti.hpp"
#include "ascnet/pgm_io.hpp"

using namespace ascnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

std::string read_bytes(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("pgm round trip at 8 bit") {
  TempDir dir("test_tmp_pgm");
  ImageSlice img(5, 7);
  Rng rng(3);
  for (auto& v : img.pixels)
    v = float(rng.uniform_index(256)) / 255.0f;  // exactly representable
  write_slice_pgm(dir.file("a.pgm"), img);
  ImageSlice back = read_pgm(dir.file("a.pgm"));
  REQUIRE(back.height == 5);
  REQUIRE(back.width == 7);
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(back.pixels[i] == Catch::Approx(img.pixels[i]).margin(1e-6));
}

TEST_CASE("pgm reads 16-bit and ascii variants") {
  TempDir dir("test_tmp_pgm16");
  {
    // hand-written 16-bit P5, big-endian samples
    std::ofstream out(dir.file("w.pgm"), std::ios::binary);
    out << "P5\n2 1\n65535\n";
    const unsigned char bytes[4] = {0xFF, 0xFF, 0x00, 0x00};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
  ImageSlice wide = read_pgm(dir.file("w.pgm"));
  CHECK(wide.pixels[0] == 1.0f);
  CHECK(wide.pixels[1] == 0.0f);
  {
    std::ofstream out(dir.file("a.pgm"));
    out << "P2\n# comment\n2 2\n255\n0 255\n128 64\n";
  }
  ImageSlice ascii = read_pgm(dir.file("a.pgm"));
  CHECK(ascii.pixels[1] == 1.0f);
  CHECK(ascii.pixels[2] == Catch::Approx(128.0 / 255).margin(1e-6));
}

TEST_CASE("mask pgm uses 0/255") {
  TempDir dir("test_tmp_mask");
  Mask m(3, 3);
  m.at(1, 1) = 1;
  write_mask_pgm(dir.file("m.pgm"), m);
  Mask back = read_mask_pgm(dir.file("m.pgm"));
  CHECK(back.pixels == m.pixels);
}

TEST_CASE("nifti write/read round trip, plain and gz") {
  TempDir dir("test_tmp_nifti");
  Volume v(3, 4, 5);
  Rng rng(9);
  for (auto& x : v.voxels) x = float(rng.uniform(-2.0, 8.0));
  for (const char* name : {"vol.nii", "vol.nii.gz"}) {
    write_nifti(dir.file(name), v);
    Volume back = read_nifti(dir.file(name));
    REQUIRE(back.depth == 3);
    REQUIRE(back.height == 4);
    REQUIRE(back.width == 5);
    CHECK(back.voxels == v.voxels);
  }
  CHECK_THROWS_AS(read_nifti(dir.file("missing.nii")), std::runtime_error);
}

TEST_CASE("dataset directory round trip preserves names and order") {
  TempDir dir("test_tmp_ds");
  SliceDataset ds;
  ds.role = DatasetRole::query;
  for (int i = 0; i < 4; ++i) {
    ImageSlice s(6, 6, "subj" + std::to_string(i % 2), i);
    s.pixels[0] = 1.0f;
    ds.slices.push_back(std::move(s));
  }
  save_dataset_dir(dir.file("query"), ds);
  auto back = load_dataset_dir(dir.file("query"), DatasetRole::query);
  REQUIRE(back.size() == 4);
  CHECK(back.slices[0].subject_id == "subj0");
  CHECK(back.slices[0].slice_index == 0);
  CHECK(back.slices[3].subject_id == "subj1");
  CHECK_THROWS_AS(load_dataset_dir(dir.file("nope"), DatasetRole::query),
                  std::runtime_error);
}

TEST_CASE("manifest loads volumes, normalizes, and aligns masks") {
  TempDir dir("test_tmp_manifest");
  Volume img(4, 16, 16);
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) img.at(z, y, x) = float(10 + z * 5 + y);
  // slice 2 gets an anomaly in the mask volume
  Volume mask(4, 16, 16);
  mask.at(2, 8, 8) = 1.0f;
  write_nifti(dir.file("img.nii.gz"), img);
  write_nifti(dir.file("mask.nii.gz"), mask);
  {
    std::ofstream out(dir.file("manifest.json"));
    out << R"({"subjects":[{"id":"s1","image":"img.nii.gz","mask":"mask.nii.gz"}]})";
  }
  auto subjects = load_manifest(dir.file("manifest.json"));
  REQUIRE(subjects.size() == 1);
  REQUIRE(subjects[0].slices.size() == 4);
  CHECK(subjects[0].masks[2].count() == 1);
  CHECK(subjects[0].masks[1].count() == 0);
  float lo = 2, hi = -1;
  for (const auto& s : subjects[0].slices)
    for (float v : s.pixels) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  CHECK(lo == 0.0f);  // normalized over the whole volume
  CHECK(hi == 1.0f);

  SECTION("resize option reshapes slices and masks together") {
    ManifestOptions opt;
    opt.resize_h = opt.resize_w = 32;
    auto resized = load_manifest(dir.file("manifest.json"), opt);
    CHECK(resized[0].slices[0].height == 32);
    CHECK(resized[0].masks[0].height == 32);
  }
}

TEST_CASE("flat config parsing and precedence") {
  TempDir dir("test_tmp_cfg");
  {
    std::ofstream out(dir.file("run.cfg"));
    out << "# comment line\n"
        << "train.stage1_cycles = 3\n"
        << "train.learning_rate = 1e-4\n"
        << "synth.polarity = dark\n"
        << "segment.threshold = 254\n"
        << "seed = 77\n";
  }
  auto flat = FlatConfig::parse_file(dir.file("run.cfg"));
  auto cfg = RunConfig::from(flat);
  CHECK(cfg.schedule.stage1_cycles == 3);
  CHECK(cfg.schedule.learning_rate == Catch::Approx(1e-4f));
  CHECK(cfg.synth.polarity == Polarity::dark);
  CHECK(cfg.threshold == 254);
  CHECK(cfg.seed == 77);
  CHECK(cfg.seed_set);
  // defaults fill the rest
  CHECK(cfg.schedule.stage2_cycles == 1);
  CHECK(cfg.schedule.batch_size == 16);

  SECTION("resolved echo is deterministic and parseable") {
    const std::string echo = cfg.echo();
    const std::string echo2 = cfg.echo();
    CHECK(echo == echo2);
    std::ofstream(dir.file("echo.cfg")) << echo;
    auto re = RunConfig::from(FlatConfig::parse_file(dir.file("echo.cfg")));
    CHECK(re.schedule.stage1_cycles == 3);
    CHECK(re.synth.polarity == Polarity::dark);
  }
  SECTION("bad values raise config errors") {
    std::ofstream(dir.file("bad.cfg")) << "train.batch_size = soup\n";
    auto b = FlatConfig::parse_file(dir.file("bad.cfg"));
    CHECK_THROWS_AS(RunConfig::from(b), std::runtime_error);
  }
}

TEST_CASE("checkpoint archive round-trips bytes exactly") {
  TempDir dir("test_tmp_archive");
  Archive<float> ar;
  ar.meta["format"] = "test";
  ar.meta["note"] = 42;
  ar.arrays.emplace_back("alpha", std::vector<float>{1.5f, -2.25f, 0.0f});
  ar.arrays.emplace_back("beta", std::vector<float>(100, 3.0f));
  write_archive(dir.file("x.bin"), ar);
  auto back = read_archive<float>(dir.file("x.bin"));
  CHECK(back.meta.at("note") == 42);
  CHECK(back.require("alpha") == ar.arrays[0].second);
  write_archive(dir.file("y.bin"), back);
  CHECK(read_bytes(dir.file("x.bin")) == read_bytes(dir.file("y.bin")));
}

TEST_CASE("figure emitters write deterministic panels") {
  TempDir dir("test_tmp_fig");
  ImageSlice flat(32, 32);
  std::fill(flat.pixels.begin(), flat.pixels.end(), 0.4f);
  ImageSlice ramp(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) ramp.at(y, x) = float(x) / 31.0f;

  SECTION("histogram figure renders constant and varied images") {
    emit_histogram_figure({flat, ramp}, dir.file("h.pgm"));
    emit_histogram_figure({flat, ramp}, dir.file("h2.pgm"));
    CHECK(read_bytes(dir.file("h.pgm")) == read_bytes(dir.file("h2.pgm")));
    CHECK(read_pgm(dir.file("h.pgm")).height > 32);
  }
  SECTION("branch panel renders rows with and without ground truth") {
    Mask gt(32, 32);
    gt.at(5, 5) = 1;
    Mask est(32, 32);
    est.at(5, 5) = 1;
    est.at(6, 6) = 1;
    std::vector<BranchPanelRow> rows(3);
    for (auto& row : rows) {
      row.input = ramp;
      row.fence = flat;
      row.wild = flat;
      row.recon = ramp;
      row.gt = &gt;
      row.est = est;
    }
    emit_branch_panel(rows, dir.file("panel.pgm"));
    ImageSlice panel = read_pgm(dir.file("panel.pgm"));
    CHECK(panel.width > 7 * 32);  // seven labeled columns
    CHECK(panel.height > 3 * 32);
    rows[0].gt = rows[1].gt = rows[2].gt = nullptr;
    emit_branch_panel(rows, dir.file("panel_nogt.pgm"));
    CHECK(read_pgm(dir.file("panel_nogt.pgm")).width < panel.width);
  }
  SECTION("all-zero inputs render without error") {
    ImageSlice zero(32, 32);
    std::vector<BranchPanelRow> rows(1);
    rows[0].input = zero;
    rows[0].fence = zero;
    rows[0].wild = zero;
    rows[0].recon = zero;
    rows[0].est = Mask(32, 32);
    CHECK_NOTHROW(emit_branch_panel(rows, dir.file("zeros.pgm")));
  }
  SECTION("disjoincy strip renders one sub-image per detected peak") {
    // bimodal image -> two peak bands
    ImageSlice bimodal(32, 32);
    for (int i = 0; i < 512; ++i) bimodal.pixels[i] = 0.2f;
    for (int i = 512; i < 1024; ++i) bimodal.pixels[i] = 0.8f;
    CHECK_NOTHROW(
        emit_disjoincy_strip(bimodal, flat, dir.file("strip.pgm")));
    ImageSlice strip = read_pgm(dir.file("strip.pgm"));
    CHECK(strip.width >= 32 + 256 + 2 * 32);
  }
}
