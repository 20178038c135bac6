#include "redbench/harness/dataset_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "redbench/errors.hpp"
#include "redbench/micronet/serialize.hpp"

namespace redbench::harness {

namespace {

constexpr char kMagic[4] = {'L', 'R', 'D', 'S'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    b.insert(b.end(), p, p + 4);
}

void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    b.insert(b.end(), p, p + 8);
}

}  // namespace

void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    const Shape sh = dataset.image_shape();
    bytes.reserve(64 + dataset.size() * (4 + sh.size()));
    bytes.insert(bytes.end(), kMagic, kMagic + 4);
    bytes.push_back(kVersion);
    put_u32(bytes, static_cast<std::uint32_t>(dataset.num_classes()));
    put_u32(bytes, static_cast<std::uint32_t>(sh.channels));
    put_u32(bytes, static_cast<std::uint32_t>(sh.height));
    put_u32(bytes, static_cast<std::uint32_t>(sh.width));
    put_u64(bytes, dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const LabeledImage& item = dataset[i];
        put_u32(bytes, static_cast<std::uint32_t>(item.label));
        for (double v : item.image.values()) {
            const double scaled = v * 255.0;
            const double rounded = std::nearbyint(scaled);
            if (std::abs(scaled - rounded) > 1e-6 || rounded < 0.0 || rounded > 255.0)
                throw InputError("dataset value off the 8-bit grid; quantize before saving");
            bytes.push_back(static_cast<std::uint8_t>(rounded));
        }
    }
    const std::uint32_t crc = micronet::crc32(bytes.data() + 5, bytes.size() - 5);
    put_u32(bytes, crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    const std::string name = path.filename().string();
    if (bytes.size() < 33) throw FormatError(name + ": file too short for header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError(name + ": bad magic at byte offset 0");
    if (bytes[4] != kVersion)
        throw FormatError(name + ": unsupported version at byte offset 4");
    std::uint32_t tail;
    std::memcpy(&tail, bytes.data() + bytes.size() - 4, 4);
    if (micronet::crc32(bytes.data() + 5, bytes.size() - 9) != tail)
        throw FormatError(name + ": checksum mismatch at byte offset " +
                          std::to_string(bytes.size() - 4));

    std::size_t pos = 5;
    auto read_u32 = [&]() {
        std::uint32_t v;
        std::memcpy(&v, bytes.data() + pos, 4);
        pos += 4;
        return v;
    };
    const std::uint32_t num_classes = read_u32();
    Shape sh;
    sh.channels = static_cast<int>(read_u32());
    sh.height = static_cast<int>(read_u32());
    sh.width = static_cast<int>(read_u32());
    std::uint64_t count;
    std::memcpy(&count, bytes.data() + pos, 8);
    pos += 8;
    if (num_classes < 1 || num_classes > 4096 || sh.channels < 1 || sh.height < 1 || sh.width < 1)
        throw FormatError(name + ": implausible header at byte offset 5");
    const std::size_t item_bytes = 4 + sh.size();
    if (bytes.size() != pos + count * item_bytes + 4)
        throw FormatError(name + ": size does not match item count at byte offset " +
                          std::to_string(pos));

    LabeledDataset out(static_cast<int>(num_classes), sh);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t label = read_u32();
        if (label >= num_classes)
            throw FormatError(name + ": label out of range at byte offset " +
                              std::to_string(pos - 4));
        Image img(sh);
        for (double& v : img.values()) v = bytes[pos++] / 255.0;
        out.add(LabeledImage{std::move(img), static_cast<int>(label)});
    }
    return out;
}

}  // namespace redbench::harness
