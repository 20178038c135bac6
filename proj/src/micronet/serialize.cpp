#include "redbench/micronet/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "redbench/errors.hpp"

namespace redbench::micronet {

std::uint32_t crc32(const std::uint8_t* data, std::size_t n, std::uint32_t seed) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = seed ^ 0xFFFFFFFFu;
    for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");
static_assert(sizeof(float) == 4);

class ByteWriter {
  public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void i32(std::int32_t v) { raw(&v, 4); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    const std::vector<std::uint8_t>& bytes() const { return buf_; }

  private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
  public:
    ByteReader(std::vector<std::uint8_t> bytes, std::string name)
        : buf_(std::move(bytes)), name_(std::move(name)) {}

    std::size_t offset() const { return pos_; }
    std::size_t size() const { return buf_.size(); }
    const std::uint8_t* data() const { return buf_.data(); }

    std::uint8_t u8() { return take<std::uint8_t>(); }
    std::uint32_t u32() { return take<std::uint32_t>(); }
    std::uint64_t u64() { return take<std::uint64_t>(); }
    std::int32_t i32() { return take<std::int32_t>(); }
    float f32() { return take<float>(); }
    double f64() { return take<double>(); }

    void raw(void* out, std::size_t n) {
        if (pos_ + n > buf_.size())
            throw FormatError(name_ + ": truncated at byte offset " + std::to_string(pos_));
        std::memcpy(out, buf_.data() + pos_, n);
        pos_ += n;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError(name_ + ": " + what + " at byte offset " + std::to_string(pos_));
    }

  private:
    template <typename T>
    T take() {
        T v;
        raw(&v, sizeof(T));
        return v;
    }

    std::vector<std::uint8_t> buf_;
    std::string name_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

// Payload starts after magic+version; the CRC at the tail covers it.
void finish_container(ByteWriter& w, const std::filesystem::path& path) {
    const auto& b = w.bytes();
    const std::uint32_t crc = crc32(b.data() + 5, b.size() - 5);
    ByteWriter tail;
    tail.u32(crc);
    std::vector<std::uint8_t> out = b;
    out.insert(out.end(), tail.bytes().begin(), tail.bytes().end());
    write_file(path, out);
}

ByteReader open_container(const std::filesystem::path& path, const char magic[4],
                          std::uint8_t version) {
    ByteReader r(read_file(path), path.filename().string());
    if (r.size() < 9) r.fail("file too short for header");
    char m[4];
    r.raw(m, 4);
    if (std::memcmp(m, magic, 4) != 0)
        throw FormatError(path.filename().string() + ": bad magic at byte offset 0");
    const std::uint8_t ver = r.u8();
    if (ver != version)
        throw FormatError(path.filename().string() + ": unsupported version " +
                          std::to_string(ver) + " at byte offset 4");
    const std::uint32_t stored = crc32(r.data() + 5, r.size() - 9);
    std::uint32_t tail;
    std::memcpy(&tail, r.data() + r.size() - 4, 4);
    if (stored != tail)
        throw FormatError(path.filename().string() + ": checksum mismatch at byte offset " +
                          std::to_string(r.size() - 4));
    return r;
}

constexpr char kModelMagic[4] = {'L', 'R', 'M', 'D'};
constexpr char kTensorMagic[4] = {'L', 'R', 'T', 'N'};
constexpr std::uint8_t kVersion = 1;

}  // namespace

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
    ByteWriter w;
    w.raw(kModelMagic, 4);
    w.u8(kVersion);
    const Shape sh = model.input_shape();
    w.u32(static_cast<std::uint32_t>(sh.channels));
    w.u32(static_cast<std::uint32_t>(sh.height));
    w.u32(static_cast<std::uint32_t>(sh.width));
    w.u32(static_cast<std::uint32_t>(model.num_classes()));
    w.u32(static_cast<std::uint32_t>(model.arch().size()));
    for (const LayerSpec& s : model.arch()) {
        w.u8(static_cast<std::uint8_t>(s.kind));
        w.i32(s.in_channels);
        w.i32(s.out_channels);
        w.i32(s.kernel);
        w.i32(s.pad);
        w.i32(s.window);
        w.i32(s.in_dim);
        w.i32(s.out_dim);
        w.f64(s.shift);
        w.f64(s.gain);
    }
    w.u64(model.total_param_count());
    for (const auto& layer : model.params())
        for (float v : layer) w.f32(v);
    finish_container(w, path);
}

ClassifierModel load_model(const std::filesystem::path& path) {
    ByteReader r = open_container(path, kModelMagic, kVersion);
    Shape sh;
    sh.channels = static_cast<int>(r.u32());
    sh.height = static_cast<int>(r.u32());
    sh.width = static_cast<int>(r.u32());
    const std::uint32_t num_classes = r.u32();
    const std::uint32_t num_layers = r.u32();
    if (num_layers == 0 || num_layers > 64) r.fail("implausible layer count");
    std::vector<LayerSpec> arch(num_layers);
    for (auto& s : arch) {
        const std::uint8_t kind = r.u8();
        if (kind < 1 || kind > 6) r.fail("unknown layer kind " + std::to_string(kind));
        s.kind = static_cast<LayerKind>(kind);
        s.in_channels = r.i32();
        s.out_channels = r.i32();
        s.kernel = r.i32();
        s.pad = r.i32();
        s.window = r.i32();
        s.in_dim = r.i32();
        s.out_dim = r.i32();
        s.shift = r.f64();
        s.gain = r.f64();
    }

    ClassifierModel model;
    try {
        model = ClassifierModel(sh, std::move(arch));
    } catch (const InputError& e) {
        throw FormatError(path.filename().string() + ": inconsistent architecture (" + e.what() +
                          ")");
    }
    if (model.num_classes() != static_cast<int>(num_classes))
        r.fail("declared class count does not match architecture");

    const std::uint64_t declared = r.u64();
    if (declared != model.total_param_count())
        r.fail("parameter count mismatch: header says " + std::to_string(declared) +
               ", architecture needs " + std::to_string(model.total_param_count()));
    for (auto& layer : model.params())
        for (float& v : layer) v = r.f32();
    if (r.offset() + 4 != r.size()) r.fail("trailing bytes after parameters");
    return model;
}

void save_tensor(const Tensor& tensor, const std::filesystem::path& path) {
    ByteWriter w;
    w.raw(kTensorMagic, 4);
    w.u8(kVersion);
    const Shape sh = tensor.shape();
    w.u32(static_cast<std::uint32_t>(sh.channels));
    w.u32(static_cast<std::uint32_t>(sh.height));
    w.u32(static_cast<std::uint32_t>(sh.width));
    for (double v : tensor.values()) w.f32(static_cast<float>(v));
    finish_container(w, path);
}

Tensor load_tensor(const std::filesystem::path& path) {
    ByteReader r = open_container(path, kTensorMagic, kVersion);
    Shape sh;
    sh.channels = static_cast<int>(r.u32());
    sh.height = static_cast<int>(r.u32());
    sh.width = static_cast<int>(r.u32());
    if (sh.channels < 1 || sh.height < 1 || sh.width < 1 || sh.size() > (1u << 28))
        r.fail("implausible tensor shape");
    Tensor t(sh);
    for (double& v : t.values()) v = static_cast<double>(r.f32());
    if (r.offset() + 4 != r.size()) r.fail("trailing bytes after tensor data");
    return t;
}

}  // namespace redbench::micronet
