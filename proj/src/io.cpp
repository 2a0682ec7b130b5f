#include "gmfv/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "GMFV file I/O assumes a little-endian host");

namespace gmfv {

namespace {

constexpr char kMagic[4] = {'G', 'M', 'F', 'V'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ofstream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_exact(std::ifstream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw FeatureFileError(FeatureFileError::Code::Truncated,
                           std::string("feature file truncated while reading ") + what);
}

}  // namespace

std::size_t FeatureArray::element_count() const {
  std::size_t n = 1;
  for (std::uint8_t i = 0; i < rank; ++i) n *= dims[i];
  return rank == 0 ? 0 : n;
}

FeatureTensor<float> FeatureArray::as_tensor() const {
  if (rank != 3)
    throw FeatureFileError(FeatureFileError::Code::BadRank, "expected rank-3 feature array");
  FeatureTensor<float> t(dims[0], dims[1], dims[2]);
  const std::size_t per_crop = static_cast<std::size_t>(dims[1]) * dims[2];
  for (std::uint32_t c = 0; c < dims[0]; ++c)
    std::memcpy(t.crops[c].data(), data.data() + c * per_crop, per_crop * sizeof(float));
  return t;
}

Mat<float> FeatureArray::as_matrix() const {
  if (rank != 2)
    throw FeatureFileError(FeatureFileError::Code::BadRank, "expected rank-2 feature array");
  Mat<float> m(dims[0], dims[1]);
  std::memcpy(m.data(), data.data(), data.size() * sizeof(float));
  return m;
}

FeatureArray FeatureArray::from_tensor(const FeatureTensor<float>& t) {
  FeatureArray a;
  a.rank = 3;
  a.dims = {static_cast<std::uint32_t>(t.n_crops()), static_cast<std::uint32_t>(t.snippets()),
            static_cast<std::uint32_t>(t.dim())};
  a.data.resize(a.element_count());
  const std::size_t per_crop = static_cast<std::size_t>(a.dims[1]) * a.dims[2];
  for (Index c = 0; c < t.n_crops(); ++c)
    std::memcpy(a.data.data() + static_cast<std::size_t>(c) * per_crop, t.crops[c].data(),
                per_crop * sizeof(float));
  return a;
}

FeatureArray FeatureArray::from_matrix(const Mat<float>& m) {
  FeatureArray a;
  a.rank = 2;
  a.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols()), 0};
  a.data.resize(a.element_count());
  std::memcpy(a.data.data(), m.data(), a.data.size() * sizeof(float));
  return a;
}

void write_feature_file(const FeatureArray& array, const std::filesystem::path& path) {
  if (array.rank != 2 && array.rank != 3)
    throw FeatureFileError(FeatureFileError::Code::BadRank, "rank must be 2 or 3");
  if (array.data.size() != array.element_count())
    throw FeatureFileError(FeatureFileError::Code::BadShape,
                           "payload size does not match declared dims");
  for (float v : array.data)
    if (!std::isfinite(v))
      throw FeatureFileError(FeatureFileError::Code::NonFinite,
                             "refusing to write non-finite values");

  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw FeatureFileError(FeatureFileError::Code::IoFailure,
                           "cannot open for writing: " + path.string());
  write_bytes(os, kMagic, 4);
  write_bytes(os, &kVersion, 4);
  write_bytes(os, &array.rank, 1);
  const char pad[3] = {0, 0, 0};
  write_bytes(os, pad, 3);
  write_bytes(os, array.dims.data(), 4u * array.rank);
  write_bytes(os, array.data.data(), array.data.size() * sizeof(float));
  if (!os)
    throw FeatureFileError(FeatureFileError::Code::IoFailure, "write failed: " + path.string());
}

FeatureArray read_feature_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw FeatureFileError(FeatureFileError::Code::IoFailure,
                           "cannot open for reading: " + path.string());

  char magic[4];
  read_exact(is, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FeatureFileError(FeatureFileError::Code::BadMagic, "bad magic in " + path.string());

  std::uint32_t version = 0;
  read_exact(is, &version, 4, "version");
  if (version != kVersion)
    throw FeatureFileError(FeatureFileError::Code::BadVersion,
                           "unsupported version " + std::to_string(version));

  FeatureArray a;
  read_exact(is, &a.rank, 1, "rank");
  if (a.rank != 2 && a.rank != 3)
    throw FeatureFileError(FeatureFileError::Code::BadRank,
                           "rank must be 2 or 3, got " + std::to_string(int(a.rank)));
  char pad[3];
  read_exact(is, pad, 3, "padding");
  read_exact(is, a.dims.data(), 4u * a.rank, "dims");

  std::uint64_t count = 1;
  for (std::uint8_t i = 0; i < a.rank; ++i) count *= a.dims[i];
  a.data.resize(count);
  if (count > 0) read_exact(is, a.data.data(), count * sizeof(float), "payload");

  // Anything left over means the declared shape and the payload disagree.
  char extra;
  is.read(&extra, 1);
  if (is.gcount() == 1)
    throw FeatureFileError(FeatureFileError::Code::TrailingBytes,
                           "payload larger than declared shape in " + path.string());
  return a;
}

// -----------------------------------------------------------------------
// Manifest
// -----------------------------------------------------------------------

namespace {

using nlohmann::json;

VideoRecord parse_record(const json& j, std::size_t line_no) {
  const auto require = [&](const char* key) -> const json& {
    auto it = j.find(key);
    if (it == j.end())
      throw ManifestError(ManifestError::Code::MissingField,
                          "line " + std::to_string(line_no) + ": missing field '" + key + "'");
    return *it;
  };

  VideoRecord r;
  try {
    r.video_id = require("video_id").get<std::string>();
    r.label = require("label").get<int>();
    r.feature_path = require("feature_path").get<std::string>();
    r.text_path = require("text_path").get<std::string>();
    r.num_frames = require("num_frames").get<std::int64_t>();
    if (auto it = j.find("frame_labels"); it != j.end() && !it->is_null())
      r.frame_labels = it->get<std::vector<std::uint8_t>>();
  } catch (const json::exception& e) {
    throw ManifestError(ManifestError::Code::BadValue,
                        "line " + std::to_string(line_no) + ": " + e.what());
  }

  if (r.label != 0 && r.label != 1)
    throw ManifestError(ManifestError::Code::BadValue,
                        "line " + std::to_string(line_no) + ": label must be 0 or 1");
  if (r.num_frames < 1)
    throw ManifestError(ManifestError::Code::BadValue,
                        "line " + std::to_string(line_no) + ": num_frames must be >= 1");
  if (r.frame_labels) {
    if (static_cast<std::int64_t>(r.frame_labels->size()) != r.num_frames)
      throw ManifestError(ManifestError::Code::BadValue,
                          "line " + std::to_string(line_no) +
                              ": frame_labels length does not match num_frames");
    for (auto v : *r.frame_labels)
      if (v > 1)
        throw ManifestError(ManifestError::Code::BadValue,
                            "line " + std::to_string(line_no) + ": frame_labels must be 0/1");
  }
  return r;
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path, Split split) {
  std::ifstream is(path);
  if (!is)
    throw ManifestError(ManifestError::Code::IoFailure, "cannot open manifest " + path.string());

  Manifest m;
  m.split = split;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ManifestError(ManifestError::Code::Malformed,
                          "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object())
      throw ManifestError(ManifestError::Code::Malformed,
                          "line " + std::to_string(line_no) + ": expected a JSON object");
    VideoRecord r = parse_record(j, line_no);
    if (!seen.insert(r.video_id).second)
      throw ManifestError(ManifestError::Code::DuplicateId,
                          "duplicate video_id '" + r.video_id + "'");
    m.records.push_back(std::move(r));
  }
  return m;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);  // binary: keep LF endings everywhere
  if (!os)
    throw ManifestError(ManifestError::Code::IoFailure, "cannot write manifest " + path.string());
  for (const auto& r : manifest.records) {
    json j;
    j["video_id"] = r.video_id;
    j["label"] = r.label;
    j["feature_path"] = r.feature_path;
    j["text_path"] = r.text_path;
    j["num_frames"] = r.num_frames;
    if (r.frame_labels) j["frame_labels"] = *r.frame_labels;
    os << j.dump() << "\n";
  }
}

}  // namespace gmfv
