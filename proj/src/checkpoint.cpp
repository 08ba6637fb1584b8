#include "scg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "scg/error.hpp"

namespace scg {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'C', 'G', 'C', 'K', 'P', 'T', '\0'};

template <typename U>
void put(std::string& out, U v)
{
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.append(buf, sizeof(U));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename U>
    U get()
    {
        U v;
        std::memcpy(&v, take(sizeof(U)), sizeof(U));
        return v;
    }

    const char* take(std::size_t n)
    {
        if (n > bytes_.size() - pos_)
            throw DataError("checkpoint is truncated at byte " + std::to_string(pos_));
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

std::string shape_text(const Shape& s)
{
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i)
        out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

} // namespace

template <typename T>
Checkpoint make_checkpoint(const ParameterRegistry<T>& registry, const std::string& config_json)
{
    Checkpoint ck;
    ck.config_json = config_json;
    auto add = [&](const NamedTensor<T>& nt, bool buffer) {
        CheckpointEntry e;
        e.name = nt.name;
        e.buffer = buffer;
        e.shape = nt.tensor.shape();
        const auto v = nt.tensor.values();
        e.values.assign(v.begin(), v.end());
        ck.entries.push_back(std::move(e));
    };
    for (const auto& p : registry.parameters())
        add(p, false);
    for (const auto& b : registry.buffers())
        add(b, true);
    return ck;
}

std::string serialize_checkpoint(const Checkpoint& ck)
{
    std::string out(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, ck.config_json.size());
    out += ck.config_json;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.entries.size()));
    for (const auto& e : ck.entries) {
        put<std::uint8_t>(out, e.buffer ? 1 : 0);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape)
            put<std::uint64_t>(out, d);
    }
    for (const auto& e : ck.entries) {
        if (e.values.size() != shape_numel(e.shape))
            throw DimensionError("checkpoint entry " + e.name + " has " + std::to_string(e.values.size()) +
                                 " values for shape " + shape_text(e.shape));
        out.append(reinterpret_cast<const char*>(e.values.data()), e.values.size() * sizeof(float));
    }
    return out;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck)
{
    const auto bytes = serialize_checkpoint(ck);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw IoError("cannot open " + path.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f)
        throw IoError("failed writing " + path.string());
}

Checkpoint parse_checkpoint(const std::string& bytes)
{
    Reader r(bytes);
    if (std::memcmp(r.take(sizeof kMagic), kMagic, sizeof kMagic) != 0)
        throw DataError("not a checkpoint (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    const auto clen = r.get<std::uint64_t>();
    ck.config_json.assign(r.take(clen), clen);
    const auto count = r.get<std::uint32_t>();
    ck.entries.resize(count);
    for (auto& e : ck.entries) {
        const auto kind = r.get<std::uint8_t>();
        if (kind > 1)
            throw DataError("checkpoint entry has unknown kind " + std::to_string(kind));
        e.buffer = kind == 1;
        const auto nlen = r.get<std::uint32_t>();
        e.name.assign(r.take(nlen), nlen);
        const auto rank = r.get<std::uint32_t>();
        for (std::uint32_t i = 0; i < rank; ++i)
            e.shape.push_back(r.get<std::uint64_t>());
    }
    for (auto& e : ck.entries) {
        e.values.resize(shape_numel(e.shape));
        std::memcpy(e.values.data(), r.take(e.values.size() * sizeof(float)), e.values.size() * sizeof(float));
    }
    if (!r.done())
        throw DataError("checkpoint has trailing bytes");
    return ck;
}

Checkpoint read_checkpoint(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    try {
        return parse_checkpoint(ss.str());
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

template <typename T>
void load_into(ParameterRegistry<T>& registry, const Checkpoint& ck)
{
    auto restore = [&](const NamedTensor<T>& nt, bool buffer) {
        for (const auto& e : ck.entries) {
            if (e.name != nt.name || e.buffer != buffer)
                continue;
            if (e.shape != nt.tensor.shape())
                throw DataError("checkpoint entry " + e.name + " has shape " + shape_text(e.shape) +
                                ", model expects " + shape_text(nt.tensor.shape()));
            auto t = nt.tensor;
            auto v = t.values();
            for (std::size_t i = 0; i < v.size(); ++i)
                v[i] = static_cast<T>(e.values[i]);
            return;
        }
        throw DataError("checkpoint has no entry for " + nt.name);
    };
    for (const auto& p : registry.parameters())
        restore(p, false);
    for (const auto& b : registry.buffers())
        restore(b, true);
    const std::size_t expected = registry.parameters().size() + registry.buffers().size();
    if (ck.entries.size() != expected)
        throw DataError("checkpoint has " + std::to_string(ck.entries.size()) + " entries, model expects " +
                        std::to_string(expected));
}

template <typename T>
void save_model(const std::filesystem::path& path, const ScgNet<T>& model, const RunConfig& config)
{
    write_checkpoint(path, make_checkpoint(model.registry(), dump_config(config)));
}

template <typename T>
ScgNet<T> load_model(const std::filesystem::path& path, RunConfig* config)
{
    const auto ck = read_checkpoint(path);
    const auto cfg = parse_config(ck.config_json);
    ScgNet<T> model(cfg.model, 0);
    auto reg = model.registry();
    load_into(reg, ck);
    if (config)
        *config = cfg;
    return model;
}

#define SCG_INSTANTIATE(T)                                                                                 \
    template Checkpoint make_checkpoint(const ParameterRegistry<T>&, const std::string&);                 \
    template void load_into(ParameterRegistry<T>&, const Checkpoint&);                                     \
    template void save_model(const std::filesystem::path&, const ScgNet<T>&, const RunConfig&);            \
    template ScgNet<T> load_model(const std::filesystem::path&, RunConfig*);

SCG_INSTANTIATE(float)
SCG_INSTANTIATE(double)

} // namespace scg
