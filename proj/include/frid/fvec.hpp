#ifndef FRID_FVEC_HPP_
#define FRID_FVEC_HPP_

#include <filesystem>
#include <vector>

#include "frid/evaluation.hpp"

namespace frid {

// Descriptor feature file: magic "FVEC", version byte 0x01, D as LE u32,
// then per record: clip_id length (LE u32) + bytes, identity LE u32,
// camera LE u32, D LE f32 values.
void write_fvec(const std::filesystem::path& path,
                const std::vector<DescriptorRecord>& records, int dim);
std::vector<DescriptorRecord> read_fvec(const std::filesystem::path& path,
                                        int* dim_out = nullptr);

}  // namespace frid

#endif  // FRID_FVEC_HPP_
