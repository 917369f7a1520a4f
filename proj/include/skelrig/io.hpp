#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skelrig/bilevel.hpp"
#include "skelrig/dataset.hpp"
#include "skelrig/skelmodel.hpp"

namespace skelrig {

inline constexpr int kModelFormatVersion = 1;
inline constexpr int kDatasetFormatVersion = 1;

std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::string& path);

/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

// ---------------------------------------------------------------------------
// model file: JSON with base64 little-endian blobs

std::string serialize_model(const SkelModel& model);
SkelModel parse_model(const std::string& text);
void save_model(const std::string& path, const SkelModel& model);
SkelModel load_model(const std::string& path);
/// SHA-256 of the serialized model (equals the hash of a saved model file).
std::string model_hash(const SkelModel& model);
/// Hash identifying a scalable skeleton (tree, frames, segments).
std::string skeleton_hash(const SkeletonTemplate& skeleton);

// ---------------------------------------------------------------------------
// motion CSV

struct MotionFile {
  std::string model_hash;
  double frame_rate = 30.0;
  Eigen::VectorXd beta;
  std::vector<std::string> dof_names;
  std::vector<Pose> poses;
};

std::string format_motion(const MotionFile& motion);
MotionFile parse_motion(const std::string& text);
void save_motion(const std::string& path, const MotionFile& motion);
MotionFile load_motion(const std::string& path);

// ---------------------------------------------------------------------------
// packed arrays: "SKRA", u32 rank, u32 dims[rank], f64 data (row-major, LE)

std::string pack_frames(const std::vector<Points>& frames);
std::vector<Points> unpack_frames(const std::string& bytes);
std::string pack_rotations(const std::vector<std::vector<Mat3>>& rotations);
std::vector<std::vector<Mat3>> unpack_rotations(const std::string& bytes);

// ---------------------------------------------------------------------------
// dataset directory: manifest.json plus one subject_NNN directory each

struct DatasetManifest {
  int format_version = kDatasetFormatVersion;
  EnvelopeConfig envelope;
  DatasetConfig dataset;
  int bony_markers = 0;
  int soft_markers = 0;
  int vertices = 0;
};

void write_dataset(const std::string& dir, const PairedDataset& data, const EnvelopeConfig& envelope,
                   const EnvelopeModel& model);
DatasetManifest read_manifest(const std::string& dir);
/// Reads every subject; `with_vertices` false skips the per-frame surfaces.
PairedDataset read_dataset(const std::string& dir, bool with_vertices = true);
std::string subject_dir(const std::string& dir, int subject);

// ---------------------------------------------------------------------------
// fits

struct SubjectFit {
  ScaleSet scales;
  std::vector<Pose> poses;
  FitReport report;
};

std::string format_regressor_json(const JointRegressor& regressor, const RegressorReport& report);
JointRegressor parse_regressor_json(const std::string& text);
std::string format_orientation_json(const std::vector<Rotation>& base);
std::vector<Rotation> parse_orientation_json(const std::string& text);

std::string format_scales_json(const SubjectFit& fit, int subject);
ScaleSet parse_scales_json(const std::string& text);

/// Per-frame marker report, MAE in cm.
std::string format_marker_report(const std::vector<SubjectFit>& fits);
/// Per-frame mesh-fit report, distances in cm.
std::string format_mesh_report(const std::vector<double>& mean_v2v, const std::vector<double>& max_v2v,
                               const std::vector<int>& iterations, const std::vector<bool>& converged);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;
};
CsvTable parse_csv(const std::string& text);

}  // namespace skelrig
