#include "frid/fvec.hpp"

#include <fstream>

#include "frid/binio.hpp"

namespace frid {

void write_fvec(const std::filesystem::path& path,
                const std::vector<DescriptorRecord>& records, int dim) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  binio::write_bytes(os, "FVEC");
  os.put(static_cast<char>(0x01));
  binio::write_u32(os, static_cast<std::uint32_t>(dim));
  for (const DescriptorRecord& r : records) {
    if (r.values.size() != dim)
      throw ShapeError("fvec: descriptor '" + r.clip_id + "' has dim " +
                       std::to_string(r.values.size()) + ", header says " +
                       std::to_string(dim));
    binio::write_u32(os, static_cast<std::uint32_t>(r.clip_id.size()));
    binio::write_bytes(os, r.clip_id);
    binio::write_u32(os, r.identity);
    binio::write_u32(os, r.camera);
    for (Eigen::Index i = 0; i < r.values.size(); ++i)
      binio::write_f32(os, static_cast<float>(r.values[i]));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<DescriptorRecord> read_fvec(const std::filesystem::path& path,
                                        int* dim_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot open: " + path.string());
  if (binio::read_bytes(is, 4) != "FVEC")
    throw IoError(path.string() + ": not an FVEC file");
  const int version = is.get();
  if (version != 0x01)
    throw IoError(path.string() + ": unsupported FVEC version");
  const std::uint32_t dim = binio::read_u32(is);
  if (dim_out) *dim_out = static_cast<int>(dim);
  std::vector<DescriptorRecord> out;
  while (true) {
    is.peek();
    if (is.eof()) break;
    DescriptorRecord r;
    const std::uint32_t len = binio::read_u32(is);
    r.clip_id = binio::read_bytes(is, len);
    r.identity = binio::read_u32(is);
    r.camera = binio::read_u32(is);
    r.values.resize(dim);
    for (std::uint32_t i = 0; i < dim; ++i) r.values[i] = binio::read_f32(is);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace frid
