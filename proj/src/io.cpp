#include "penfsi/io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace penfsi {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'P', 'E', 'N', 'F', 'S', 'N', 'A', 'P'};
constexpr std::size_t kHeader = 64;
constexpr std::uint32_t kByteOrderTag = 0x01020304u;

std::uint32_t crc32_of(const unsigned char* p, std::size_t n) {
    uLong c = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks
    while (n > 0) {
        const std::size_t k = std::min<std::size_t>(n, 1u << 30);
        c = crc32(c, p, static_cast<uInt>(k));
        p += k;
        n -= k;
    }
    return static_cast<std::uint32_t>(c);
}

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const unsigned char* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
}

void put_double(std::vector<unsigned char>& out, double x) { put_le(out, std::bit_cast<std::uint64_t>(x)); }

std::vector<std::pair<std::string, const ScalarField*>> field_list(const FluidState& s) {
    std::vector<std::pair<std::string, const ScalarField*>> f{{"rho", &s.rho}, {"mu", &s.mu}, {"pressure", &s.pressure}};
    for (int a = 0; a < s.u.dim(); ++a) f.emplace_back("u" + std::to_string(a), &s.u[a]);
    for (const auto& b : s.bodies) f.emplace_back("marker_" + std::to_string(b.id), &b.a);
    return f;
}

json metadata_of(const Snapshot& snap) {
    const FluidState& s = snap.state;
    const TorusGrid& g = s.grid();
    json m;
    m["format"] = "penfsi-snapshot";
    m["grid"] = {{"dim", g.dim}, {"half_period", g.half_period}, {"cells", g.cells}};
    m["t"] = s.t;
    m["step"] = s.step;
    json names = json::array();
    for (const auto& [name, f] : field_list(s)) names.push_back(name);
    m["fields"] = names;
    json bodies = json::array();
    for (const auto& b : s.bodies) {
        json bj = {{"id", b.id}, {"density", b.density}, {"members", b.members}};
        if (auto it = snap.orientation.find(b.id); it != snap.orientation.end()) {
            json o = json::array();
            for (const auto& row : it->second)
                for (double x : row) o.push_back(x);
            bj["orientation"] = o;
        }
        bodies.push_back(bj);
    }
    m["bodies"] = bodies;
    m["config"] = snap.config_json.empty() ? json(nullptr) : json(snap.config_json);
    return m;
}

struct Parsed {
    json meta;
    const unsigned char* payload = nullptr;
    std::size_t payload_len = 0;
};

Parsed parse(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < kHeader + 4)
        throw SnapshotChecksumError("snapshot truncated: " + std::to_string(bytes.size()) + " bytes, no checksum");
    if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw SnapshotError("not a snapshot file (bad magic)");
    const auto version = get_le<std::uint32_t>(bytes.data() + 8);
    if (version != kSnapshotVersion)
        throw SnapshotVersionError("snapshot version " + std::to_string(version) + " not supported (expected " +
                                   std::to_string(kSnapshotVersion) + ")");
    if (get_le<std::uint32_t>(bytes.data() + 12) != kByteOrderTag) throw SnapshotError("snapshot byte-order tag invalid");
    const auto meta_len = get_le<std::uint64_t>(bytes.data() + 16);
    const auto payload_len = get_le<std::uint64_t>(bytes.data() + 24);
    const std::uint64_t total = kHeader + meta_len + payload_len + 4;
    if (meta_len > bytes.size() || payload_len > bytes.size() || total != bytes.size())
        throw SnapshotChecksumError("snapshot checksum failure: file has " + std::to_string(bytes.size()) +
                                    " bytes, header declares " + std::to_string(total) + " (truncated or padded)");
    const std::size_t body = total - 4;
    const std::uint32_t stored = get_le<std::uint32_t>(bytes.data() + body);
    const std::uint32_t actual = crc32_of(bytes.data(), body);
    if (stored != actual) throw SnapshotChecksumError("snapshot checksum failure: stored and computed CRC-32 differ");
    Parsed p;
    try {
        p.meta = json::parse(bytes.begin() + kHeader, bytes.begin() + static_cast<std::ptrdiff_t>(kHeader + meta_len));
    } catch (const json::exception& e) {
        throw SnapshotError(std::string("snapshot metadata unreadable: ") + e.what());
    }
    p.payload = bytes.data() + kHeader + meta_len;
    p.payload_len = payload_len;
    return p;
}

}  // namespace

std::vector<unsigned char> encode_snapshot(const Snapshot& snap) {
    const FluidState& s = snap.state;
    const auto fields = field_list(s);
    for (const auto& [name, f] : fields)
        if (f->grid != s.grid() || f->size() != s.grid().size())
            throw std::invalid_argument("encode_snapshot: field " + name + " does not match the grid");
    const std::string meta = metadata_of(snap).dump();
    const std::uint64_t payload_len = fields.size() * s.grid().size() * sizeof(double);

    std::vector<unsigned char> out;
    out.reserve(kHeader + meta.size() + payload_len + 4);
    out.resize(sizeof kMagic);
    std::memcpy(out.data(), kMagic, sizeof kMagic);
    put_le(out, kSnapshotVersion);
    put_le(out, kByteOrderTag);
    put_le(out, static_cast<std::uint64_t>(meta.size()));
    put_le(out, payload_len);
    out.resize(kHeader + meta.size(), 0);
    std::memcpy(out.data() + kHeader, meta.data(), meta.size());
    for (const auto& [name, f] : fields)
        for (double x : f->values) put_double(out, x);
    put_le(out, crc32_of(out.data(), out.size()));
    return out;
}

Snapshot decode_snapshot(const std::vector<unsigned char>& bytes) {
    const Parsed p = parse(bytes);
    const json& m = p.meta;
    Snapshot snap;
    try {
        const json& gj = m.at("grid");
        const TorusGrid g = make_grid(gj.at("dim").get<int>(), gj.at("half_period").get<double>(), gj.at("cells").get<int>());
        FluidState& s = snap.state;
        s.t = m.at("t").get<double>();
        s.step = m.at("step").get<long>();
        s.rho = ScalarField(g);
        s.mu = ScalarField(g);
        s.pressure = ScalarField(g);
        s.u = VectorField(g);
        for (const auto& bj : m.at("bodies")) {
            BodyMarker b;
            b.id = bj.at("id").get<int>();
            b.density = bj.at("density").get<double>();
            b.members = bj.at("members").get<std::vector<int>>();
            b.a = ScalarField(g);
            if (bj.contains("orientation")) {
                const auto o = bj.at("orientation").get<std::vector<double>>();
                if (o.size() != 9) throw SnapshotError("snapshot orientation must have 9 entries");
                Mat3 q{};
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) q[i][j] = o[static_cast<std::size_t>(3 * i + j)];
                snap.orientation[b.id] = q;
            }
            s.bodies.push_back(std::move(b));
        }
        if (!m.at("config").is_null()) snap.config_json = m.at("config").get<std::string>();

        const auto names = m.at("fields").get<std::vector<std::string>>();
        auto fields = field_list(s);
        if (names.size() != fields.size()) throw SnapshotError("snapshot field list does not match its bodies");
        for (std::size_t k = 0; k < names.size(); ++k)
            if (names[k] != fields[k].first)
                throw SnapshotError("snapshot field " + std::to_string(k) + " is '" + names[k] + "', expected '" +
                                    fields[k].first + "'");
        const std::size_t n = g.size();
        if (p.payload_len != names.size() * n * sizeof(double))
            throw SnapshotError("snapshot payload length does not match the field list");
        const unsigned char* q = p.payload;
        for (auto& [name, f] : fields) {
            auto* dst = const_cast<ScalarField*>(f);
            for (std::size_t i = 0; i < n; ++i, q += 8) dst->values[i] = std::bit_cast<double>(get_le<std::uint64_t>(q));
        }
    } catch (const json::exception& e) {
        throw SnapshotError(std::string("snapshot metadata invalid: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw SnapshotError(std::string("snapshot grid invalid: ") + e.what());
    }
    return snap;
}

namespace {
std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SnapshotError("cannot open snapshot " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
}  // namespace

void write_snapshot(const std::string& path, const Snapshot& snap) {
    const auto bytes = encode_snapshot(snap);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw SnapshotError("cannot write snapshot " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw SnapshotError("write failed for snapshot " + path);
}

Snapshot read_snapshot(const std::string& path) { return decode_snapshot(read_bytes(path)); }

std::string snapshot_metadata(const std::string& path) { return parse(read_bytes(path)).meta.dump(2); }

std::uint32_t file_crc32(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<unsigned char> buf(1 << 16);
    uLong c = crc32(0L, Z_NULL, 0);
    while (in) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) c = crc32(c, buf.data(), static_cast<uInt>(in.gcount()));
    }
    return static_cast<std::uint32_t>(c);
}

}  // namespace penfsi
