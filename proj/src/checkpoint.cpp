// Checkpoint container: magic "MDCVAE\0", u32 version, u32 tensor count, then
// per tensor a u16 name length, the name, u8 rank, u64 dims and row-major
// little-endian f64 data; a UTF-8 key=value config echo trails the tensors.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "mdcvae/errors.hpp"
#include "mdcvae/run_config.hpp"
#include "mdcvae/trainer.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace mdcvae {

namespace {

constexpr char kMagic[7] = {'M', 'D', 'C', 'V', 'A', 'E', '\0'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void wr(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T rd(std::istream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw data_error(path + ": truncated checkpoint");
    return v;
}

struct NamedTensors {
    std::vector<std::string> names;
    std::vector<const Matrix*> tensors;
};

NamedTensors collect(const Model& model) {
    NamedTensors nt;
    auto add = [&](const std::vector<std::string>& names, const std::vector<const Matrix*>& ts) {
        nt.names.insert(nt.names.end(), names.begin(), names.end());
        nt.tensors.insert(nt.tensors.end(), ts.begin(), ts.end());
    };
    add(model.user_vae.parameter_names(), model.user_vae.parameters());
    add(model.item_vae.parameter_names(), model.item_vae.parameters());
    return nt;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw data_error("cannot open for writing: " + tmp);

        const NamedTensors nt = collect(model);
        out.write(kMagic, sizeof(kMagic));
        wr<std::uint32_t>(out, kVersion);
        wr<std::uint32_t>(out, static_cast<std::uint32_t>(nt.tensors.size()));
        for (std::size_t k = 0; k < nt.tensors.size(); ++k) {
            const std::string& name = nt.names[k];
            const Matrix& t = *nt.tensors[k];
            wr<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            wr<std::uint8_t>(out, 2);
            wr<std::uint64_t>(out, t.rows);
            wr<std::uint64_t>(out, t.cols);
            out.write(reinterpret_cast<const char*>(t.a.data()),
                      static_cast<std::streamsize>(t.a.size() * sizeof(double)));
        }

        std::string echo = serialize_train_config(model.config);
        echo += "num_items=" + std::to_string(model.num_items()) + "\n";
        echo += "feature_dim=" + std::to_string(model.feature_dim) + "\n";
        out.write(echo.data(), static_cast<std::streamsize>(echo.size()));
        if (!out) throw data_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw data_error("cannot move checkpoint into place: " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open checkpoint: " + path);

    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw data_error(path + ": not a checkpoint (bad magic)");
    const auto version = rd<std::uint32_t>(in, path);
    if (version != kVersion)
        throw data_error(path + ": unsupported checkpoint version " + std::to_string(version));

    const auto count = rd<std::uint32_t>(in, path);
    std::map<std::string, Matrix> loaded;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto name_len = rd<std::uint16_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw data_error(path + ": truncated checkpoint");
        const auto rank = rd<std::uint8_t>(in, path);
        if (rank != 2) throw data_error(path + ": unexpected tensor rank");
        const auto rows = rd<std::uint64_t>(in, path);
        const auto cols = rd<std::uint64_t>(in, path);
        Matrix t(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
        in.read(reinterpret_cast<char*>(t.a.data()),
                static_cast<std::streamsize>(t.a.size() * sizeof(double)));
        if (!in) throw data_error(path + ": truncated checkpoint");
        if (!loaded.emplace(std::move(name), std::move(t)).second)
            throw data_error(path + ": duplicate tensor name");
    }

    std::string echo((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    TrainConfig config;
    std::size_t num_items = 0, feature_dim = 0;
    std::size_t pos = 0;
    while (pos < echo.size()) {
        std::size_t end = echo.find('\n', pos);
        if (end == std::string::npos) end = echo.size();
        const std::string line = echo.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw data_error(path + ": malformed config echo");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "num_items")
            num_items = static_cast<std::size_t>(std::stoull(value));
        else if (key == "feature_dim")
            feature_dim = static_cast<std::size_t>(std::stoull(value));
        else if (!apply_train_kv(config, key, value))
            throw data_error(path + ": unknown config key in echo: " + key);
    }
    if (num_items == 0) throw data_error(path + ": config echo missing num_items");

    Model model = make_model(config, num_items, feature_dim);
    const NamedTensors nt = collect(model);
    if (nt.tensors.size() != loaded.size())
        throw data_error(path + ": tensor table does not match the configured model");
    auto uae_params = model.user_vae.parameters();
    auto ivae_params = model.item_vae.parameters();
    std::vector<Matrix*> slots(uae_params.begin(), uae_params.end());
    slots.insert(slots.end(), ivae_params.begin(), ivae_params.end());
    for (std::size_t k = 0; k < slots.size(); ++k) {
        auto it = loaded.find(nt.names[k]);
        if (it == loaded.end()) throw data_error(path + ": missing tensor " + nt.names[k]);
        if (!slots[k]->same_shape(it->second))
            throw data_error(path + ": shape mismatch for tensor " + nt.names[k]);
        *slots[k] = std::move(it->second);
    }
    return model;
}

}  // namespace mdcvae
