#include "skelrig/io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

namespace skelrig {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// bytes

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    fail(ErrorCode::IoError, "sha256 failed");
  }
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_sha256(const std::string& path) { return sha256_hex(read_file(path)); }

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) fail(ErrorCode::IoError, "cannot rename onto " + path + ": " + ec.message());
}

std::string base64_encode(const std::string& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(n);
  return out;
}

std::string base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) fail(ErrorCode::FormatError, "base64 length is not a multiple of 4");
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) fail(ErrorCode::FormatError, "invalid base64");
  size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(n - pad);
  return out;
}

namespace {

template <typename U>
void put_le(std::string& out, U v) {
  for (size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const std::string& in, size_t& pos) {
  if (pos + sizeof(U) > in.size()) fail(ErrorCode::FormatError, "truncated binary data");
  U v = 0;
  for (size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(U);
  return v;
}

void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(const std::string& in, size_t& pos) { return std::bit_cast<double>(get_le<std::uint64_t>(in, pos)); }
void put_f32(std::string& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
float get_f32(const std::string& in, size_t& pos) { return std::bit_cast<float>(get_le<std::uint32_t>(in, pos)); }
void put_i32(std::string& out, int v) { put_le(out, static_cast<std::uint32_t>(v)); }
int get_i32(const std::string& in, size_t& pos) { return static_cast<int>(get_le<std::uint32_t>(in, pos)); }

// dense matrices: row-major f64
template <typename M>
json matrix_json(const M& m) {
  std::string b;
  b.reserve(8 * m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(b, m(r, c));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"f64", base64_encode(b)}};
}

Eigen::MatrixXd matrix_from(const json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  const std::string b = base64_decode(j.at("f64").get<std::string>());
  if (b.size() != static_cast<size_t>(8 * rows * cols)) fail(ErrorCode::FormatError, "matrix blob size mismatch");
  Eigen::MatrixXd m(rows, cols);
  size_t pos = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get_f64(b, pos);
  }
  return m;
}

Points points_from(const json& j) {
  const Eigen::MatrixXd m = matrix_from(j);
  if (m.cols() != 3 && m.size() != 0) fail(ErrorCode::FormatError, "expected N x 3 array");
  return m.rows() ? Points(m) : Points(0, 3);
}

json faces_json(const Faces& f) {
  std::string b;
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    for (int c = 0; c < 3; ++c) put_i32(b, f(r, c));
  }
  return json{{"count", f.rows()}, {"i32", base64_encode(b)}};
}

Faces faces_from(const json& j) {
  const Eigen::Index n = j.at("count").get<Eigen::Index>();
  const std::string b = base64_decode(j.at("i32").get<std::string>());
  if (b.size() != static_cast<size_t>(12 * n)) fail(ErrorCode::FormatError, "face blob size mismatch");
  Faces f(n, 3);
  size_t pos = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    for (int c = 0; c < 3; ++c) f(r, c) = get_i32(b, pos);
  }
  return f;
}

json sparse_json(const SparseRows& m) {
  std::string rows, cols, vals;
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    for (SparseRows::InnerIterator it(m, r); it; ++it) {
      put_i32(rows, static_cast<int>(it.row()));
      put_i32(cols, static_cast<int>(it.col()));
      put_f64(vals, it.value());
    }
  }
  return json{{"rows", m.rows()},
              {"cols", m.cols()},
              {"nnz", m.nonZeros()},
              {"row_i32", base64_encode(rows)},
              {"col_i32", base64_encode(cols)},
              {"val_f64", base64_encode(vals)}};
}

SparseRows sparse_from(const json& j) {
  const Eigen::Index nnz = j.at("nnz").get<Eigen::Index>();
  const std::string rows = base64_decode(j.at("row_i32").get<std::string>());
  const std::string cols = base64_decode(j.at("col_i32").get<std::string>());
  const std::string vals = base64_decode(j.at("val_f64").get<std::string>());
  if (rows.size() != static_cast<size_t>(4 * nnz) || cols.size() != rows.size() ||
      vals.size() != static_cast<size_t>(8 * nnz)) {
    fail(ErrorCode::FormatError, "sparse blob size mismatch");
  }
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(nnz);
  size_t pr = 0, pc = 0, pv = 0;
  const Eigen::Index R = j.at("rows").get<Eigen::Index>(), C = j.at("cols").get<Eigen::Index>();
  for (Eigen::Index i = 0; i < nnz; ++i) {
    const int r = get_i32(rows, pr), c = get_i32(cols, pc);
    if (r < 0 || r >= R || c < 0 || c >= C) fail(ErrorCode::FormatError, "sparse index out of range");
    t.emplace_back(r, c, get_f64(vals, pv));
  }
  SparseRows m(R, C);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

// bone meshes: u32 vertex count, then x y z as f32
json bone_mesh_json(const Mesh& mesh) {
  std::string b;
  put_le(b, static_cast<std::uint32_t>(mesh.vertex_count()));
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    for (int c = 0; c < 3; ++c) put_f32(b, static_cast<float>(mesh.vertices(v, c)));
  }
  return json{{"vertices_f32", base64_encode(b)}, {"faces", faces_json(mesh.faces)}};
}

Mesh bone_mesh_from(const json& j) {
  const std::string b = base64_decode(j.at("vertices_f32").get<std::string>());
  size_t pos = 0;
  const std::uint32_t n = get_le<std::uint32_t>(b, pos);
  if (b.size() != 4 + 12 * static_cast<size_t>(n)) fail(ErrorCode::FormatError, "bone mesh blob size mismatch");
  Mesh m;
  m.vertices.resize(n, 3);
  for (std::uint32_t v = 0; v < n; ++v) {
    for (int c = 0; c < 3; ++c) m.vertices(v, c) = get_f32(b, pos);
  }
  m.faces = faces_from(j.at("faces"));
  return m;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) fail(ErrorCode::FormatError, "expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json mat3_json(const Mat3& m) {
  json a = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  }
  return a;
}
Mat3 mat3_from(const json& j) {
  if (!j.is_array() || j.size() != 9) fail(ErrorCode::FormatError, "expected 9 numbers");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = j[3 * r + c].get<double>();
  }
  return m;
}

json tree_json(const KinematicTree& tree) {
  json joints = json::array();
  for (const JointSpec& s : tree.joints()) {
    json limits = json::array();
    for (const DofLimit& l : s.limits) limits.push_back({l.lo, l.hi});
    joints.push_back({{"name", s.name},
                      {"parent", s.parent},
                      {"kind", to_string(s.kind)},
                      {"dof_offset", s.dof_offset},
                      {"rest_joint", vec_json(s.rest_joint)},
                      {"dof_names", s.dof_names},
                      {"limits", limits},
                      {"axis", vec_json(s.axis)},
                      {"axis2", vec_json(s.axis2)},
                      {"semi_axes", vec_json(s.semi_axes)},
                      {"ellipsoid_frame", mat3_json(s.ellipsoid_frame)},
                      {"axis_end", s.axis_end}});
  }
  return joints;
}

KinematicTree tree_from(const json& j) {
  std::vector<JointSpec> joints;
  for (const json& e : j) {
    JointSpec s;
    s.name = e.at("name").get<std::string>();
    s.parent = e.at("parent").get<int>();
    s.kind = joint_kind_from_string(e.at("kind").get<std::string>());
    s.dof_offset = e.at("dof_offset").get<int>();
    s.rest_joint = vec_from(e.at("rest_joint"));
    s.dof_names = e.at("dof_names").get<std::vector<std::string>>();
    for (const json& l : e.at("limits")) s.limits.push_back({l.at(0).get<double>(), l.at(1).get<double>()});
    s.axis = vec_from(e.at("axis"));
    s.axis2 = vec_from(e.at("axis2"));
    s.semi_axes = vec_from(e.at("semi_axes"));
    s.ellipsoid_frame = mat3_from(e.at("ellipsoid_frame"));
    s.axis_end = e.at("axis_end").get<int>();
    joints.push_back(std::move(s));
  }
  return KinematicTree(std::move(joints));
}

json segments_json(const std::vector<BoneSegment>& segments) {
  json a = json::array();
  for (const BoneSegment& s : segments) {
    a.push_back({{"end_joint", s.end_joint}, {"landmark_vertex", s.landmark_vertex}, {"rest_local", vec_json(s.rest_local)}});
  }
  return a;
}

std::vector<BoneSegment> segments_from(const json& j) {
  std::vector<BoneSegment> out;
  for (const json& e : j) {
    out.push_back({e.at("end_joint").get<int>(), e.at("landmark_vertex").get<int>(), vec_from(e.at("rest_local"))});
  }
  return out;
}

json markers_json(const MarkerSet& set) {
  json a = json::array();
  for (const Marker& m : set.markers) {
    a.push_back({{"name", m.name},
                 {"class", m.cls == MarkerClass::Bony ? "bony" : "soft"},
                 {"vertex", m.vertex},
                 {"bone", m.bone},
                 {"offset", vec_json(m.offset)},
                 {"personalization", matrix_json(m.personalization)},
                 {"weight", m.weight}});
  }
  return a;
}

MarkerSet markers_from(const json& j) {
  MarkerSet set;
  for (const json& e : j) {
    Marker m;
    m.name = e.at("name").get<std::string>();
    const std::string cls = e.at("class").get<std::string>();
    if (cls != "bony" && cls != "soft") fail(ErrorCode::FormatError, "unknown marker class " + cls);
    m.cls = cls == "bony" ? MarkerClass::Bony : MarkerClass::Soft;
    m.vertex = e.at("vertex").get<int>();
    m.bone = e.at("bone").get<int>();
    m.offset = vec_from(e.at("offset"));
    const Eigen::MatrixXd p = matrix_from(e.at("personalization"));
    if (p.rows() != 3 && p.size() != 0) fail(ErrorCode::FormatError, "personalization must have 3 rows");
    m.personalization = p.rows() == 3 ? Eigen::Matrix3Xd(p) : Eigen::Matrix3Xd(3, 0);
    m.weight = e.at("weight").get<double>();
    set.markers.push_back(std::move(m));
  }
  return set;
}

json model_json(const SkelModel& m) {
  json bones = json::array();
  for (const Mesh& mesh : m.bone_meshes) bones.push_back(bone_mesh_json(mesh));
  json base = json::array();
  for (const Rotation& r : m.base_rotation) base.push_back(mat3_json(r.matrix()));
  json corr = json::array();
  for (const auto& [dof, field] : m.correctives.per_dof) corr.push_back({{"dof", dof}, {"field", matrix_json(field)}});
  return json{{"format_version", kModelFormatVersion},
              {"tree", tree_json(m.tree)},
              {"skin", {{"vertices", matrix_json(m.skin.vertices)}, {"faces", faces_json(m.skin.faces)}}},
              {"shape_basis", matrix_json(m.shape_basis)},
              {"skin_weights", sparse_json(m.skin_weights)},
              {"regressor", sparse_json(m.regressor.weights)},
              {"base_rotation", base},
              {"segments", segments_json(m.segments)},
              {"bone_meshes", bones},
              {"skeleton_weights", sparse_json(m.skeleton_weights)},
              {"markers", markers_json(m.markers)},
              {"envelope_part_to_joint", m.envelope_part_to_joint},
              {"correctives", corr},
              {"limit_policy", m.limit_policy == AngleLimitPolicy::Clamp ? "clamp" : "error"}};
}

double parse_double(const std::string& s) {
  size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    fail(ErrorCode::FormatError, "not a number: '" + s + "'");
  }
  if (used != s.size()) fail(ErrorCode::FormatError, "not a number: '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string serialize_model(const SkelModel& model) { return model_json(model).dump(1) + "\n"; }

SkelModel parse_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("model file is not valid JSON: ") + e.what());
  }
  if (!j.contains("format_version")) fail(ErrorCode::FormatError, "model file has no format_version");
  const int version = j.at("format_version").get<int>();
  if (version != kModelFormatVersion) {
    fail(ErrorCode::VersionMismatch, fmt::format("model format version {} (expected {})", version, kModelFormatVersion));
  }
  try {
    SkelModel m;
    m.tree = tree_from(j.at("tree"));
    m.skin.vertices = points_from(j.at("skin").at("vertices"));
    m.skin.faces = faces_from(j.at("skin").at("faces"));
    m.shape_basis = matrix_from(j.at("shape_basis"));
    m.skin_weights = sparse_from(j.at("skin_weights"));
    m.regressor.weights = sparse_from(j.at("regressor"));
    for (const json& r : j.at("base_rotation")) m.base_rotation.push_back(Rotation::from_matrix(mat3_from(r)));
    m.segments = segments_from(j.at("segments"));
    for (const json& b : j.at("bone_meshes")) m.bone_meshes.push_back(bone_mesh_from(b));
    m.skeleton_weights = sparse_from(j.at("skeleton_weights"));
    m.markers = markers_from(j.at("markers"));
    m.envelope_part_to_joint = j.at("envelope_part_to_joint").get<std::vector<int>>();
    for (const json& c : j.at("correctives")) {
      m.correctives.per_dof.emplace_back(c.at("dof").get<int>(), points_from(c.at("field")));
    }
    const std::string policy = j.at("limit_policy").get<std::string>();
    if (policy != "clamp" && policy != "error") fail(ErrorCode::FormatError, "unknown limit_policy " + policy);
    m.limit_policy = policy == "clamp" ? AngleLimitPolicy::Clamp : AngleLimitPolicy::Error;

    const int n = m.tree.size();
    const Eigen::Index N = m.skin.vertices.rows();
    if (m.skin_weights.rows() != N || m.skin_weights.cols() != n || m.regressor.weights.rows() != n ||
        m.regressor.weights.cols() != N || static_cast<int>(m.base_rotation.size()) != n ||
        static_cast<int>(m.segments.size()) != n || static_cast<int>(m.bone_meshes.size()) != n ||
        m.shape_basis.rows() != 3 * N || m.skeleton_weights.rows() != m.skeleton_vertex_count() ||
        m.skeleton_weights.cols() != n) {
      fail(ErrorCode::FormatError, "model arrays have inconsistent sizes");
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::string& path, const SkelModel& model) { write_file_atomic(path, serialize_model(model)); }
SkelModel load_model(const std::string& path) { return parse_model(read_file(path)); }
std::string model_hash(const SkelModel& model) { return sha256_hex(serialize_model(model)); }

std::string skeleton_hash(const SkeletonTemplate& skeleton) {
  json rest = json::array();
  for (const Mat3& r : skeleton.rest_rotation) rest.push_back(mat3_json(r));
  const json j{{"tree", tree_json(skeleton.tree)}, {"rest_rotation", rest}, {"segments", segments_json(skeleton.segments)}};
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------
// motion

std::string format_motion(const MotionFile& motion) {
  std::string out = "# skelrig motion\n";
  out += "# model_hash=" + motion.model_hash + "\n";
  out += fmt::format("# frame_rate={}\n", motion.frame_rate);
  out += "# beta=";
  for (Eigen::Index i = 0; i < motion.beta.size(); ++i) out += (i ? " " : "") + fmt::format("{}", motion.beta[i]);
  out += "\nframe";
  for (const auto& n : motion.dof_names) out += "," + n;
  out += ",trans_x,trans_y,trans_z\n";
  for (size_t f = 0; f < motion.poses.size(); ++f) {
    const Pose& p = motion.poses[f];
    if (p.q.size() != static_cast<Eigen::Index>(motion.dof_names.size())) {
      fail(ErrorCode::DimensionMismatch, "pose length differs from the DOF name list");
    }
    out += fmt::format("{}", f);
    for (Eigen::Index i = 0; i < p.q.size(); ++i) out += fmt::format(",{}", p.q[i]);
    out += fmt::format(",{},{},{}\n", p.trans.x(), p.trans.y(), p.trans.z());
  }
  return out;
}

MotionFile parse_motion(const std::string& text) {
  MotionFile m;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = line.substr(line.find_first_not_of("# "));
      const size_t eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = body.substr(0, eq), value = body.substr(eq + 1);
      if (key == "model_hash") {
        m.model_hash = value;
      } else if (key == "frame_rate") {
        m.frame_rate = parse_double(value);
      } else if (key == "beta") {
        std::vector<double> b;
        std::istringstream bs(value);
        std::string tok;
        while (bs >> tok) b.push_back(parse_double(tok));
        m.beta = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
      }
      continue;
    }
    const std::vector<std::string> cells = split(line, ',');
    if (!header) {
      if (cells.size() < 4 || cells[0] != "frame") fail(ErrorCode::FormatError, "motion header must start with 'frame'");
      m.dof_names.assign(cells.begin() + 1, cells.end() - 3);
      header = true;
      continue;
    }
    const size_t dofs = m.dof_names.size();
    if (cells.size() != dofs + 4) fail(ErrorCode::FormatError, "motion row has the wrong column count");
    if (static_cast<size_t>(parse_double(cells[0])) != m.poses.size()) fail(ErrorCode::FormatError, "frames out of order");
    Pose p = Pose::zero(static_cast<int>(dofs));
    for (size_t i = 0; i < dofs; ++i) p.q[i] = parse_double(cells[1 + i]);
    for (int a = 0; a < 3; ++a) p.trans[a] = parse_double(cells[1 + dofs + a]);
    m.poses.push_back(std::move(p));
  }
  if (!header) fail(ErrorCode::FormatError, "motion file has no header row");
  return m;
}

void save_motion(const std::string& path, const MotionFile& motion) { write_file_atomic(path, format_motion(motion)); }
MotionFile load_motion(const std::string& path) { return parse_motion(read_file(path)); }

// ---------------------------------------------------------------------------
// packed arrays

namespace {

std::string pack_header(const std::vector<std::uint32_t>& dims) {
  std::string b = "SKRA";
  put_le(b, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put_le(b, d);
  return b;
}

std::vector<std::uint32_t> unpack_header(const std::string& bytes, size_t& pos, size_t rank) {
  if (bytes.size() < 8 || bytes.compare(0, 4, "SKRA") != 0) fail(ErrorCode::FormatError, "not a packed array");
  pos = 4;
  if (get_le<std::uint32_t>(bytes, pos) != rank) fail(ErrorCode::FormatError, "packed array has unexpected rank");
  std::vector<std::uint32_t> dims(rank);
  size_t total = 1;
  for (auto& d : dims) {
    d = get_le<std::uint32_t>(bytes, pos);
    total *= d;
  }
  if (bytes.size() != pos + 8 * total) fail(ErrorCode::FormatError, "packed array size mismatch");
  return dims;
}

}  // namespace

std::string pack_frames(const std::vector<Points>& frames) {
  const std::uint32_t rows = frames.empty() ? 0 : static_cast<std::uint32_t>(frames[0].rows());
  std::string b = pack_header({static_cast<std::uint32_t>(frames.size()), rows, 3});
  for (const Points& p : frames) {
    if (p.rows() != rows) fail(ErrorCode::DimensionMismatch, "frames differ in row count");
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (int c = 0; c < 3; ++c) put_f64(b, p(r, c));
    }
  }
  return b;
}

std::vector<Points> unpack_frames(const std::string& bytes) {
  size_t pos = 0;
  const auto dims = unpack_header(bytes, pos, 3);
  if (dims[2] != 3) fail(ErrorCode::FormatError, "expected 3 columns");
  std::vector<Points> out(dims[0], Points(dims[1], 3));
  for (auto& p : out) {
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (int c = 0; c < 3; ++c) p(r, c) = get_f64(bytes, pos);
    }
  }
  return out;
}

std::string pack_rotations(const std::vector<std::vector<Mat3>>& rotations) {
  const std::uint32_t n = rotations.empty() ? 0 : static_cast<std::uint32_t>(rotations[0].size());
  std::string b = pack_header({static_cast<std::uint32_t>(rotations.size()), n, 3, 3});
  for (const auto& f : rotations) {
    if (f.size() != n) fail(ErrorCode::DimensionMismatch, "frames differ in rotation count");
    for (const Mat3& m : f) {
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) put_f64(b, m(r, c));
      }
    }
  }
  return b;
}

std::vector<std::vector<Mat3>> unpack_rotations(const std::string& bytes) {
  size_t pos = 0;
  const auto dims = unpack_header(bytes, pos, 4);
  if (dims[2] != 3 || dims[3] != 3) fail(ErrorCode::FormatError, "expected 3 x 3 blocks");
  std::vector<std::vector<Mat3>> out(dims[0], std::vector<Mat3>(dims[1]));
  for (auto& f : out) {
    for (Mat3& m : f) {
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) m(r, c) = get_f64(bytes, pos);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// dataset

std::string subject_dir(const std::string& dir, int subject) {
  return (fs::path(dir) / fmt::format("subject_{:03d}", subject)).string();
}

void write_dataset(const std::string& dir, const PairedDataset& data, const EnvelopeConfig& envelope,
                   const EnvelopeModel& model) {
  const DatasetConfig& c = data.config;
  const json manifest{{"format_version", kDatasetFormatVersion},
                      {"seed", c.seed},
                      {"subjects", data.subjects.size()},
                      {"frames", c.frames},
                      {"marker_noise", c.marker_noise},
                      {"beta_sigma", c.beta_sigma},
                      {"frame_rate", c.frame_rate},
                      {"amplitude", c.amplitude},
                      {"envelope",
                       {{"resolution", envelope.resolution},
                        {"shape_dims", envelope.shape_dims},
                        {"bony_markers", envelope.bony_markers},
                        {"soft_markers", envelope.soft_markers},
                        {"bony_weight", envelope.bony_weight},
                        {"soft_weight", envelope.soft_weight}}},
                      {"counts",
                       {{"bony_markers", model.markers.count(MarkerClass::Bony)},
                        {"soft_markers", model.markers.count(MarkerClass::Soft)},
                        {"vertices", model.mesh.vertex_count()},
                        {"dofs", model.skeleton.tree.dof_count()},
                        {"bones", model.skeleton.bones()}}}};
  fs::create_directories(dir);
  const std::string hash = skeleton_hash(model.skeleton);
  for (size_t s = 0; s < data.subjects.size(); ++s) {
    const SubjectData& sd = data.subjects[s];
    const std::string sub = subject_dir(dir, static_cast<int>(s));
    json scales = json::array();
    for (Eigen::Index b = 0; b < sd.scales.rows(); ++b) scales.push_back({sd.scales(b, 0), sd.scales(b, 1), sd.scales(b, 2)});
    const json meta{{"beta", std::vector<double>(sd.beta.data(), sd.beta.data() + sd.beta.size())},
                    {"scales", scales},
                    {"height", sd.height},
                    {"frames", sd.frames()}};
    write_file_atomic(sub + "/meta.json", meta.dump(1) + "\n");
    MotionFile motion{hash, c.frame_rate, sd.beta, model.skeleton.tree.dof_names(), sd.poses};
    save_motion(sub + "/poses.csv", motion);
    write_file_atomic(sub + "/markers.bin", pack_frames(sd.markers));
    write_file_atomic(sub + "/joints.bin", pack_frames(sd.joints));
    write_file_atomic(sub + "/vertices.bin", pack_frames(sd.vertices));
    write_file_atomic(sub + "/bone_rotations.bin", pack_rotations(sd.bone_rotations));
    write_file_atomic(sub + "/envelope_rotations.bin", pack_rotations(sd.envelope_rotations));
  }
  write_file_atomic((fs::path(dir) / "manifest.json").string(), manifest.dump(1) + "\n");
}

DatasetManifest read_manifest(const std::string& dir) {
  const std::string path = (fs::path(dir) / "manifest.json").string();
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("bad manifest: ") + e.what());
  }
  try {
    DatasetManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kDatasetFormatVersion) fail(ErrorCode::VersionMismatch, "unsupported dataset format version");
    m.dataset.seed = j.at("seed").get<std::uint64_t>();
    m.dataset.subjects = j.at("subjects").get<int>();
    m.dataset.frames = j.at("frames").get<int>();
    m.dataset.marker_noise = j.at("marker_noise").get<double>();
    m.dataset.beta_sigma = j.at("beta_sigma").get<double>();
    m.dataset.frame_rate = j.at("frame_rate").get<double>();
    m.dataset.amplitude = j.at("amplitude").get<double>();
    const json& e = j.at("envelope");
    m.envelope.resolution = e.at("resolution").get<double>();
    m.envelope.shape_dims = e.at("shape_dims").get<int>();
    m.envelope.bony_markers = e.at("bony_markers").get<int>();
    m.envelope.soft_markers = e.at("soft_markers").get<int>();
    m.envelope.bony_weight = e.at("bony_weight").get<double>();
    m.envelope.soft_weight = e.at("soft_weight").get<double>();
    m.bony_markers = j.at("counts").at("bony_markers").get<int>();
    m.soft_markers = j.at("counts").at("soft_markers").get<int>();
    m.vertices = j.at("counts").at("vertices").get<int>();
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("bad manifest: ") + e.what());
  }
}

PairedDataset read_dataset(const std::string& dir, bool with_vertices) {
  const DatasetManifest manifest = read_manifest(dir);
  PairedDataset data;
  data.config = manifest.dataset;
  for (int s = 0; s < manifest.dataset.subjects; ++s) {
    const std::string sub = subject_dir(dir, s);
    SubjectData sd;
    try {
      const json meta = json::parse(read_file(sub + "/meta.json"));
      const auto beta = meta.at("beta").get<std::vector<double>>();
      sd.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
      const json& sc = meta.at("scales");
      sd.scales.resize(static_cast<Eigen::Index>(sc.size()), 3);
      for (size_t b = 0; b < sc.size(); ++b) {
        for (int a = 0; a < 3; ++a) sd.scales(b, a) = sc.at(b).at(a).get<double>();
      }
      sd.height = meta.at("height").get<double>();
    } catch (const json::exception& e) {
      fail(ErrorCode::FormatError, "bad subject metadata in " + sub + ": " + e.what());
    }
    sd.poses = load_motion(sub + "/poses.csv").poses;
    sd.markers = unpack_frames(read_file(sub + "/markers.bin"));
    sd.joints = unpack_frames(read_file(sub + "/joints.bin"));
    if (with_vertices) sd.vertices = unpack_frames(read_file(sub + "/vertices.bin"));
    sd.bone_rotations = unpack_rotations(read_file(sub + "/bone_rotations.bin"));
    sd.envelope_rotations = unpack_rotations(read_file(sub + "/envelope_rotations.bin"));
    const size_t F = sd.poses.size();
    if (sd.markers.size() != F || sd.joints.size() != F || (with_vertices && sd.vertices.size() != F) ||
        sd.bone_rotations.size() != F || sd.envelope_rotations.size() != F) {
      fail(ErrorCode::FormatError, "inconsistent frame counts in " + sub);
    }
    data.subjects.push_back(std::move(sd));
  }
  return data;
}

// ---------------------------------------------------------------------------
// fits and reports

std::string format_regressor_json(const JointRegressor& regressor, const RegressorReport& report) {
  const json j{{"format_version", kModelFormatVersion},
               {"weights", sparse_json(regressor.weights)},
               {"rms_residual", report.rms_residual},
               {"joint_rms", report.joint_rms},
               {"frames_used", report.frames_used},
               {"duplicates_dropped", report.duplicates_dropped},
               {"converged", report.converged}};
  return j.dump(1) + "\n";
}

JointRegressor parse_regressor_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format_version").get<int>() != kModelFormatVersion) fail(ErrorCode::VersionMismatch, "regressor format version");
    return JointRegressor{sparse_from(j.at("weights"))};
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("bad regressor file: ") + e.what());
  }
}

std::string format_orientation_json(const std::vector<Rotation>& base) {
  json a = json::array();
  for (const Rotation& r : base) a.push_back(mat3_json(r.matrix()));
  return json{{"format_version", kModelFormatVersion}, {"base_rotation", a}}.dump(1) + "\n";
}

std::vector<Rotation> parse_orientation_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format_version").get<int>() != kModelFormatVersion) fail(ErrorCode::VersionMismatch, "orientation format version");
    std::vector<Rotation> out;
    for (const json& r : j.at("base_rotation")) out.push_back(Rotation::from_matrix(mat3_from(r)));
    return out;
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("bad orientation file: ") + e.what());
  }
}

std::string format_scales_json(const SubjectFit& fit, int subject) {
  json s = json::array(), d = json::array();
  for (Eigen::Index b = 0; b < fit.scales.s.rows(); ++b) s.push_back({fit.scales.s(b, 0), fit.scales.s(b, 1), fit.scales.s(b, 2)});
  for (const Vec3& v : fit.scales.delta) d.push_back(vec_json(v));
  const json j{{"subject", subject},
               {"scales", s},
               {"delta", d},
               {"objective", fit.report.objective},
               {"rounds", fit.report.rounds},
               {"converged", fit.report.converged},
               {"monotone", fit.report.monotone},
               {"bony_mae_cm", 100 * fit.report.mean_bony_mae()},
               {"soft_mae_cm", 100 * fit.report.mean_soft_mae()}};
  return j.dump(1) + "\n";
}

ScaleSet parse_scales_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ScaleSet out;
    const json& s = j.at("scales");
    out.s.resize(static_cast<Eigen::Index>(s.size()), 3);
    for (size_t b = 0; b < s.size(); ++b) {
      for (int a = 0; a < 3; ++a) out.s(b, a) = s.at(b).at(a).get<double>();
    }
    for (const json& v : j.at("delta")) out.delta.push_back(vec_from(v));
    return out;
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("bad scales file: ") + e.what());
  }
}

std::string format_marker_report(const std::vector<SubjectFit>& fits) {
  std::string out = "subject,frame,bony_mae_cm,soft_mae_cm,iterations,converged\n";
  for (size_t s = 0; s < fits.size(); ++s) {
    const auto& frames = fits[s].report.frames;
    for (size_t f = 0; f < frames.size(); ++f) {
      out += fmt::format("{},{},{:.6f},{:.6f},{},{}\n", s, f, 100 * frames[f].bony_mae, 100 * frames[f].soft_mae,
                         frames[f].iterations, frames[f].converged ? 1 : 0);
    }
  }
  return out;
}

std::string format_mesh_report(const std::vector<double>& mean_v2v, const std::vector<double>& max_v2v,
                               const std::vector<int>& iterations, const std::vector<bool>& converged) {
  std::string out = "frame,mean_v2v_cm,max_v2v_cm,iterations,converged\n";
  for (size_t f = 0; f < mean_v2v.size(); ++f) {
    out += fmt::format("{},{:.6f},{:.6f},{},{}\n", f, 100 * mean_v2v[f], 100 * max_v2v[f], iterations[f],
                       converged[f] ? 1 : 0);
  }
  return out;
}

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line, ',');
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      if (cells.size() != t.header.size()) fail(ErrorCode::FormatError, "csv row has the wrong column count");
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

}  // namespace skelrig
