#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "fixtures.hpp"
#include "skelrig/config.hpp"
#include "skelrig/io.hpp"

using namespace skelrig;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("skelrig_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("hashing and base64") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  for (const std::string s : {"", "a", "ab", "abc", "hello world\n"}) CHECK(base64_decode(base64_encode(s)) == s);
  CHECK(base64_encode("abc") == "YWJj");
  CHECK_THROWS_AS(base64_decode("abc"), Error);

  const fs::path dir = scratch("atomic");
  const std::string path = (dir / "sub" / "file.txt").string();
  write_file_atomic(path, "one");
  write_file_atomic(path, "two");
  CHECK(read_file(path) == "two");
  CHECK(file_sha256(path) == sha256_hex("two"));
  CHECK_THROWS_AS(read_file((dir / "missing").string()), Error);
  fs::remove_all(dir);
}

TEST_CASE("model file round trip is bit exact") {
  const SkelModel& m = fixture::model();
  const std::string text = serialize_model(m);
  const SkelModel back = parse_model(text);
  CHECK(serialize_model(back) == text);
  CHECK(model_hash(back) == model_hash(m));
  CHECK(back.skin.vertices == m.skin.vertices);
  CHECK(back.shape_basis == m.shape_basis);
  for (int b = 0; b < m.bones(); ++b) {
    CHECK(back.base_rotation[b].matrix() == m.base_rotation[b].matrix());
    CHECK(back.bone_meshes[b].vertices == m.bone_meshes[b].vertices);
  }

  const Eigen::VectorXd beta = Eigen::VectorXd::Constant(m.shape_dims(), 0.4);
  Pose pose = Pose::zero(m.tree.dof_count());
  pose.q.setConstant(0.1);
  const SkelOutput a = skel_forward(m, beta, pose), b = skel_forward(back, beta, pose);
  CHECK(a.skin.vertices == b.skin.vertices);
  CHECK(a.skeleton.vertices == b.skeleton.vertices);

  const fs::path dir = scratch("model");
  const std::string path = (dir / "model.json").string();
  save_model(path, m);
  CHECK(file_sha256(path) == model_hash(m));
  CHECK(serialize_model(load_model(path)) == text);
  fs::remove_all(dir);
}

TEST_CASE("model file errors") {
  nlohmann::json j = nlohmann::json::parse(serialize_model(fixture::model()));
  j["format_version"] = kModelFormatVersion + 1;
  try {
    parse_model(j.dump());
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VersionMismatch);
  }
  CHECK_THROWS_AS(parse_model("{not json"), Error);
  CHECK_THROWS_AS(parse_model("{}"), Error);
}

TEST_CASE("motion csv") {
  const SubjectData& s = fixture::small_dataset().subjects[0];
  MotionFile mf;
  mf.model_hash = "abc123";
  mf.frame_rate = 60;
  mf.beta = s.beta;
  mf.dof_names = fixture::model().tree.dof_names();
  mf.poses.assign(s.poses.begin(), s.poses.begin() + 5);
  mf.poses[0].q[3] = 0.1 + 0.2;
  mf.poses[1].trans = Vec3(1e-300, -0.0, 123456789.123456789);
  const std::string text = format_motion(mf);
  const MotionFile back = parse_motion(text);
  CHECK(back.model_hash == mf.model_hash);
  CHECK(back.frame_rate == 60);
  CHECK(back.beta == mf.beta);
  CHECK(back.dof_names == mf.dof_names);
  REQUIRE(back.poses.size() == 5);
  for (int f = 0; f < 5; ++f) {
    CHECK(back.poses[f].q == mf.poses[f].q);
    CHECK(back.poses[f].trans == mf.poses[f].trans);
  }
  CHECK(format_motion(back) == text);
  CHECK_THROWS_AS(parse_motion("frame,a\n0,x\n"), Error);
}

TEST_CASE("packed arrays") {
  const SubjectData& s = fixture::small_dataset().subjects[1];
  const std::vector<Points> frames(s.markers.begin(), s.markers.begin() + 4);
  const std::vector<Points> back = unpack_frames(pack_frames(frames));
  REQUIRE(back.size() == 4);
  for (int f = 0; f < 4; ++f) CHECK(back[f] == frames[f]);
  const std::vector<std::vector<Mat3>> rot(s.bone_rotations.begin(), s.bone_rotations.begin() + 3);
  CHECK(unpack_rotations(pack_rotations(rot)) == rot);
  CHECK_THROWS_AS(unpack_frames("SKRX"), Error);
  CHECK_THROWS_AS(unpack_frames(pack_frames(frames).substr(0, 40)), Error);
}

TEST_CASE("dataset directory round trip") {
  const PairedDataset& d = fixture::small_dataset();
  const fs::path dir = scratch("dataset");
  write_dataset(dir.string(), d, EnvelopeConfig{}, fixture::envelope());
  const DatasetManifest man = read_manifest(dir.string());
  CHECK(man.format_version == kDatasetFormatVersion);
  CHECK(man.dataset.subjects == 2);
  CHECK(man.dataset.seed == 11);
  CHECK(man.bony_markers == 57);
  const PairedDataset back = read_dataset(dir.string());
  REQUIRE(back.subjects.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    const SubjectData &a = d.subjects[i], &b = back.subjects[i];
    CHECK(a.beta == b.beta);
    CHECK(a.scales == b.scales);
    REQUIRE(b.frames() == a.frames());
    for (int f = 0; f < a.frames(); ++f) {
      CHECK(a.poses[f].q == b.poses[f].q);
      CHECK(a.markers[f] == b.markers[f]);
      CHECK(a.vertices[f] == b.vertices[f]);
      CHECK(a.joints[f] == b.joints[f]);
      CHECK(a.bone_rotations[f] == b.bone_rotations[f]);
    }
  }
  const PairedDataset light = read_dataset(dir.string(), false);
  CHECK(light.subjects[0].vertices.empty());
  CHECK_THROWS_AS(read_manifest((dir / "nope").string()), Error);
  fs::remove_all(dir);
}

TEST_CASE("fit, regressor and orientation files") {
  const SkelModel& m = fixture::model();
  const JointRegressor back = parse_regressor_json(format_regressor_json(m.regressor, {}));
  CHECK(Eigen::MatrixXd(back.weights) == Eigen::MatrixXd(m.regressor.weights));
  const std::vector<Rotation> base = parse_orientation_json(format_orientation_json(m.base_rotation));
  for (int b = 0; b < m.bones(); ++b) CHECK(base[b].matrix() == m.base_rotation[b].matrix());

  SubjectFit fit;
  fit.scales = ScaleSet::ones(m.bones(), m.markers.size());
  fit.scales.s(3, 1) = 1.0 / 3.0;
  fit.scales.delta[7] = Vec3(0.001, -0.002, 1e-17);
  fit.report.frames = {FrameFit{0.001, 0.002, 4, true}, FrameFit{0.0015, 0.003, 5, false}};
  const ScaleSet s = parse_scales_json(format_scales_json(fit, 0));
  CHECK(s.s == fit.scales.s);
  CHECK(s.delta == fit.scales.delta);

  const CsvTable t = parse_csv(format_marker_report({fit}));
  CHECK(t.rows.size() == 2);
  const int col = t.column("bony_mae_cm");
  REQUIRE(col >= 0);
  CHECK(std::stod(t.rows[0][col]) == doctest::Approx(0.1));
  CHECK(t.column("missing") == -1);
  const CsvTable mesh = parse_csv(format_mesh_report({0.001}, {0.002}, {3}, {true}));
  CHECK(mesh.header[0] == "frame");
  CHECK(std::stod(mesh.rows[0][mesh.column("max_v2v_cm")]) == doctest::Approx(0.2));
}

TEST_CASE("config") {
  PipelineConfig c;
  apply_config_text(c, "[dataset]\nsubjects = 4\nnoise = 0.005\n[fitting]\ncoupled_step = false\n[model]\nlimit_policy = error\n");
  CHECK(c.dataset.subjects == 4);
  CHECK(c.dataset.marker_noise == 0.005);
  CHECK_FALSE(c.fit.coupled_step);
  CHECK(c.limit_policy == AngleLimitPolicy::Error);

  PipelineConfig again;
  apply_config_text(again, format_config(c));
  CHECK(format_config(again) == format_config(c));

  PipelineConfig d;
  try {
    apply_config_text(d, "[dataset]\nsubject = 4\n");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
  }
  CHECK_THROWS_AS(apply_config_text(d, "[dataset]\nsubjects = many\n"), Error);
  CHECK_THROWS_AS(apply_config_text(d, "[model]\nlimit_policy = maybe\n"), Error);
  CHECK_THROWS_AS(load_config("/nonexistent/skelrig.ini"), Error);
}
