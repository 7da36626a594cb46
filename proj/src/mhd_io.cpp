#include "volseg/mhd_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "payloads are written little-endian; big-endian hosts are unsupported");

namespace volseg {
namespace {

enum class ElementType { Short, Uchar, Float };

std::size_t element_size(ElementType t) {
    switch (t) {
        case ElementType::Short: return 2;
        case ElementType::Uchar: return 1;
        case ElementType::Float: return 4;
    }
    return 0;
}

struct Header {
    Dims dims;
    Vec3 spacing{1, 1, 1};
    Vec3 origin{0, 0, 0};
    ElementType type = ElementType::Float;
    bool msb = false;
    std::string data_file;          // "LOCAL" or relative path
    std::streampos payload_start{}; // only meaningful for LOCAL
};

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) {
    return v == "True" || v == "true" || v == "TRUE" || v == "1";
}

Vec3 parse_vec3(const std::string& v, const char* key) {
    std::istringstream is(v);
    Vec3 out;
    if (!(is >> out.x >> out.y >> out.z))
        throw data_error(std::string("MetaImage: cannot parse 3 values for ") + key);
    return out;
}

Header read_header(std::istream& in, const std::filesystem::path& path) {
    Header h;
    bool saw_ndims = false, saw_dimsize = false, saw_type = false;
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (trim(line).empty()) continue;
            throw data_error("MetaImage: malformed header line in " + path.string());
        }
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key == "NDims") {
            saw_ndims = true;
            if (val != "3") throw data_error("MetaImage: NDims must be 3, got " + val);
        } else if (key == "DimSize") {
            std::istringstream is(val);
            if (!(is >> h.dims.nx >> h.dims.ny >> h.dims.nz) || h.dims.nx <= 0 ||
                h.dims.ny <= 0 || h.dims.nz <= 0)
                throw data_error("MetaImage: bad DimSize '" + val + "'");
            saw_dimsize = true;
        } else if (key == "ElementType") {
            if (val == "MET_SHORT") h.type = ElementType::Short;
            else if (val == "MET_UCHAR") h.type = ElementType::Uchar;
            else if (val == "MET_FLOAT") h.type = ElementType::Float;
            else throw data_error("MetaImage: unsupported ElementType " + val);
            saw_type = true;
        } else if (key == "ElementSpacing") {
            h.spacing = parse_vec3(val, "ElementSpacing");
            if (h.spacing.x <= 0 || h.spacing.y <= 0 || h.spacing.z <= 0)
                throw data_error("MetaImage: ElementSpacing must be positive");
        } else if (key == "Offset") {
            h.origin = parse_vec3(val, "Offset");
        } else if (key == "ElementByteOrderMSB") {
            h.msb = parse_bool(val);
        } else if (key == "ElementDataFile") {
            h.data_file = val;
            h.payload_start = in.tellg();
            break;  // header ends here; LOCAL payload follows
        } else if (key == "ObjectType") {
            if (val != "Image")
                throw data_error("MetaImage: unsupported ObjectType '" + val + "' in " +
                                 path.string());
        } else {
            std::cerr << "[volseg] warning: ignoring MetaImage key '" << key << "' in "
                      << path.string() << "\n";
        }
    }
    if (!saw_ndims || !saw_dimsize || !saw_type || h.data_file.empty())
        throw data_error("MetaImage: header in " + path.string() +
                         " is missing NDims, DimSize, ElementType or ElementDataFile");
    return h;
}

std::vector<char> read_payload(const Header& h, const std::filesystem::path& header_path,
                               std::ifstream& header_stream) {
    const std::size_t expect = h.dims.count() * element_size(h.type);
    std::vector<char> bytes;
    if (h.data_file == "LOCAL") {
        header_stream.clear();
        header_stream.seekg(h.payload_start);
        bytes.resize(expect + 1);  // over-read by one to detect trailing bytes
        header_stream.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        const std::size_t got = static_cast<std::size_t>(header_stream.gcount());
        if (got != expect)
            throw data_error("MetaImage: payload size " + std::to_string(got) +
                             " does not match DimSize product (" + std::to_string(expect) +
                             " bytes) in " + header_path.string());
        bytes.resize(expect);
    } else {
        auto raw_path = header_path.parent_path() / h.data_file;
        std::ifstream raw(raw_path, std::ios::binary);
        if (!raw) throw data_error("MetaImage: cannot open payload " + raw_path.string());
        raw.seekg(0, std::ios::end);
        const std::size_t got = static_cast<std::size_t>(raw.tellg());
        if (got != expect)
            throw data_error("MetaImage: payload size " + std::to_string(got) +
                             " does not match DimSize product (" + std::to_string(expect) +
                             " bytes) in " + raw_path.string());
        raw.seekg(0);
        bytes.resize(expect);
        raw.read(bytes.data(), static_cast<std::streamsize>(expect));
        if (!raw) throw data_error("MetaImage: short read from " + raw_path.string());
    }
    return bytes;
}

template <typename T>
void swap_bytes(T& v) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    std::reverse(p, p + sizeof(T));
}

std::vector<float> decode(const Header& h, const std::vector<char>& bytes) {
    const std::size_t n = h.dims.count();
    std::vector<float> out(n);
    switch (h.type) {
        case ElementType::Uchar:
            for (std::size_t i = 0; i < n; ++i)
                out[i] = static_cast<float>(static_cast<unsigned char>(bytes[i]));
            break;
        case ElementType::Short:
            for (std::size_t i = 0; i < n; ++i) {
                std::int16_t v;
                std::memcpy(&v, bytes.data() + 2 * i, 2);
                if (h.msb) swap_bytes(v);
                out[i] = static_cast<float>(v);
            }
            break;
        case ElementType::Float:
            for (std::size_t i = 0; i < n; ++i) {
                float v;
                std::memcpy(&v, bytes.data() + 4 * i, 4);
                if (h.msb) swap_bytes(v);
                out[i] = v;
            }
            break;
    }
    return out;
}

void write_header(std::ostream& out, const Dims& dims, const Vec3& spacing, const Vec3& origin,
                  const char* element_type, const std::string& data_file) {
    out << "ObjectType = Image\n"
        << "NDims = 3\n"
        << "DimSize = " << dims.nx << ' ' << dims.ny << ' ' << dims.nz << '\n'
        << "ElementSpacing = " << spacing.x << ' ' << spacing.y << ' ' << spacing.z << '\n'
        << "Offset = " << origin.x << ' ' << origin.y << ' ' << origin.z << '\n'
        << "ElementByteOrderMSB = False\n"
        << "ElementType = " << element_type << '\n'
        << "ElementDataFile = " << data_file << '\n';
}

void write_file(const std::filesystem::path& path, const Dims& dims, const Vec3& spacing,
                const Vec3& origin, const char* element_type, const char* data,
                std::size_t data_bytes) {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0)
        throw param_error("save_mhd: refusing to write volume with non-positive dim");
    const bool combined = path.extension() == ".mha";
    std::ostringstream precision_guard;
    precision_guard.precision(17);
    if (combined) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw data_error("save_mhd: cannot open " + path.string() + " for writing");
        std::ostringstream hdr;
        hdr.precision(17);
        write_header(hdr, dims, spacing, origin, element_type, "LOCAL");
        out << hdr.str();
        out.write(data, static_cast<std::streamsize>(data_bytes));
        if (!out) throw data_error("save_mhd: write failed for " + path.string());
    } else {
        auto raw_path = path;
        raw_path.replace_extension(".raw");
        {
            std::ofstream out(path);
            if (!out) throw data_error("save_mhd: cannot open " + path.string() + " for writing");
            std::ostringstream hdr;
            hdr.precision(17);
            write_header(hdr, dims, spacing, origin, element_type, raw_path.filename().string());
            out << hdr.str();
            if (!out) throw data_error("save_mhd: write failed for " + path.string());
        }
        std::ofstream raw(raw_path, std::ios::binary);
        if (!raw) throw data_error("save_mhd: cannot open " + raw_path.string() + " for writing");
        raw.write(data, static_cast<std::streamsize>(data_bytes));
        if (!raw) throw data_error("save_mhd: write failed for " + raw_path.string());
    }
}

}  // namespace

Volume load_mhd(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("load_mhd: cannot open " + path.string());
    Header h = read_header(in, path);
    auto bytes = read_payload(h, path, in);
    Volume v;
    v.dims = h.dims;
    v.spacing = h.spacing;
    v.origin = h.origin;
    v.unit_tag = UnitTag::HU;
    v.voxels = decode(h, bytes);
    return v;
}

void save_mhd(const Volume& vol, const std::filesystem::path& path) {
    if (vol.voxels.size() != vol.dims.count())
        throw param_error("save_mhd: voxel count does not match dims");
    write_file(path, vol.dims, vol.spacing, vol.origin, "MET_FLOAT",
               reinterpret_cast<const char*>(vol.voxels.data()), vol.voxels.size() * 4);
}

LabelMask load_mask_mhd(const std::filesystem::path& path) {
    Volume v = load_mhd(path);
    LabelMask m = make_mask(v.dims);
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
        float x = v.voxels[i];
        if (x != 0.0f && x != 1.0f)
            throw data_error("load_mask_mhd: label value " + std::to_string(x) +
                             " outside {0,1} in " + path.string());
        m.labels[i] = static_cast<std::uint8_t>(x);
    }
    return m;
}

void save_mask_mhd(const LabelMask& mask, const std::filesystem::path& path, Vec3 spacing,
                   Vec3 origin) {
    if (mask.labels.size() != mask.dims.count())
        throw param_error("save_mask_mhd: label count does not match dims");
    write_file(path, mask.dims, spacing, origin, "MET_UCHAR",
               reinterpret_cast<const char*>(mask.labels.data()), mask.labels.size());
}

}  // namespace volseg
