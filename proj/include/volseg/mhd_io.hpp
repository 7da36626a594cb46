#ifndef VOLSEG_MHD_IO_HPP
#define VOLSEG_MHD_IO_HPP

#include <filesystem>

#include "volseg/volume.hpp"

namespace volseg {

// MetaImage (.mhd header + detached raw, or combined .mha) volume I/O.
// Honored keys: NDims (must be 3), DimSize, ElementType (MET_SHORT, MET_UCHAR,
// MET_FLOAT), ElementSpacing (default 1 per axis), Offset, ElementByteOrderMSB
// (default false), ElementDataFile (LOCAL or a path relative to the header).
// Anything else is ignored with a warning on stderr.
Volume load_mhd(const std::filesystem::path& path);

// Writes MET_FLOAT; .mha combines header and payload, anything else gets a
// sibling .raw. load_mhd inverts this exactly (bit-identical payload).
void save_mhd(const Volume& vol, const std::filesystem::path& path);

// Masks ride the same format as MET_UCHAR payloads.
LabelMask load_mask_mhd(const std::filesystem::path& path);
void save_mask_mhd(const LabelMask& mask, const std::filesystem::path& path,
                   Vec3 spacing = {1, 1, 1}, Vec3 origin = {0, 0, 0});

}  // namespace volseg

#endif
