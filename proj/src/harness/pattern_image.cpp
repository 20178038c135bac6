#include "redbench/harness/pattern_image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "redbench/errors.hpp"

namespace redbench::harness {

std::string encode_pattern_image(const Tensor& pattern) {
    const Shape sh = pattern.shape();
    if (sh.channels != 1 && sh.channels != 3)
        throw InputError("pattern image export supports 1 or 3 channels");
    std::string out;
    out += sh.channels == 3 ? "P6\n" : "P5\n";
    out += std::to_string(sh.width) + " " + std::to_string(sh.height) + "\n255\n";
    for (int y = 0; y < sh.height; ++y) {
        for (int x = 0; x < sh.width; ++x) {
            for (int c = 0; c < sh.channels; ++c) {
                const double v = std::clamp(pattern.at(c, y, x) + 127.0 / 255.0, 0.0, 1.0);
                out += static_cast<char>(static_cast<unsigned char>(std::nearbyint(v * 255.0)));
            }
        }
    }
    return out;
}

void write_pattern_image(const Tensor& pattern, const std::filesystem::path& path) {
    const std::string bytes = encode_pattern_image(pattern);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace redbench::harness
