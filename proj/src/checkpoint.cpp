#include "xaigan/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace xaigan::harness {

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    static_assert(sizeof(float) == 4);
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

struct Reader {
    const std::string& bytes;
    const std::string& path;
    size_t pos = 0;

    void need(size_t n, const char* what) {
        if (bytes.size() - pos < n)
            throw std::runtime_error(path + ": truncated checkpoint at byte " +
                                     std::to_string(pos) + " while reading " + what);
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    float f32(const char* what) {
        need(4, what);
        float v;
        std::memcpy(&v, bytes.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::string str(size_t n, const char* what) {
        need(n, what);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void checkpoint_save(const std::vector<nn::NamedParam>& params, const std::string& path) {
    std::string out = "XAIC";
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<uint32_t>(params.size()));
    for (const auto& [name, tensor] : params) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.append(name);
        put_u32(out, static_cast<uint32_t>(tensor.shape().size()));
        for (int d : tensor.shape()) put_u32(out, static_cast<uint32_t>(d));
        for (Scalar v : tensor.data()) put_f32(out, static_cast<float>(v));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error(path + ": write failed");
}

std::vector<nn::NamedParam> checkpoint_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open for reading");
    const std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};

    Reader r{bytes, path};
    if (r.str(4, "magic") != "XAIC")
        throw std::runtime_error(path + ": bad magic at byte 0, expected \"XAIC\"");
    const uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw std::runtime_error(path + ": unsupported checkpoint version " +
                                 std::to_string(version) + " at byte 4, expected " +
                                 std::to_string(kCheckpointVersion));
    const uint32_t count = r.u32("parameter count");

    std::vector<nn::NamedParam> params;
    params.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = r.u32("name length");
        std::string name = r.str(name_len, "name");
        const uint32_t rank = r.u32("rank");
        Shape shape;
        int64_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape.push_back(static_cast<int>(r.u32("dim")));
            numel *= shape.back();
        }
        std::vector<Scalar> data(static_cast<size_t>(numel));
        for (auto& v : data) v = static_cast<Scalar>(r.f32("values"));
        params.push_back({std::move(name), Tensor::from_data(std::move(shape), std::move(data))});
    }
    if (r.pos != bytes.size())
        throw std::runtime_error(path + ": trailing garbage at byte " + std::to_string(r.pos));
    return params;
}

// ---- training state --------------------------------------------------------

namespace {

void append_meta(std::vector<nn::NamedParam>& out, const std::string& key, double value) {
    out.push_back({"meta." + key, Tensor::from_data({1}, {value})});
}

void append_optimizer(std::vector<nn::NamedParam>& out, const std::string& tag,
                      const train::Adam& opt) {
    append_meta(out, "opt." + tag + ".t", static_cast<double>(opt.steps_taken()));
    char idx[16];
    for (size_t i = 0; i < opt.params().size(); ++i) {
        std::snprintf(idx, sizeof idx, "%04zu", i);
        const Shape& s = opt.params()[i].shape();
        out.push_back({"opt." + tag + ".m." + idx,
                       Tensor::from_data(s, std::vector<Scalar>(opt.first_moments()[i]))});
        out.push_back({"opt." + tag + ".v." + idx,
                       Tensor::from_data(s, std::vector<Scalar>(opt.second_moments()[i]))});
    }
}

double take_meta(std::map<std::string, Tensor>& entries, const std::string& key,
                 const std::string& path) {
    auto it = entries.find("meta." + key);
    if (it == entries.end())
        throw std::runtime_error(path + ": checkpoint is missing meta entry '" + key + "'");
    const double v = it->second.item();
    entries.erase(it);
    return v;
}

}  // namespace

void save_models(const train::ModelSet& models, const train::TrainConfig& topology,
                 const std::string& path) {
    std::vector<nn::NamedParam> entries = models.named_parameters();
    append_meta(entries, "ngf", topology.ngf);
    append_meta(entries, "ndf", topology.ndf);
    append_meta(entries, "num_resnet", topology.num_resnet);
    append_meta(entries, "image_size", topology.image_size);
    append_meta(entries, "composite", topology.composite == models::MaskComposite::blend ? 0 : 1);
    checkpoint_save(entries, path);
}

void save_trainer_checkpoint(const train::Trainer& trainer, const std::string& path) {
    std::vector<nn::NamedParam> entries = trainer.model_set().named_parameters();
    const train::TrainConfig& cfg = trainer.config();
    append_meta(entries, "ngf", cfg.ngf);
    append_meta(entries, "ndf", cfg.ndf);
    append_meta(entries, "num_resnet", cfg.num_resnet);
    append_meta(entries, "image_size", cfg.image_size);
    append_meta(entries, "composite", cfg.composite == models::MaskComposite::blend ? 0 : 1);
    append_optimizer(entries, "g", trainer.opt_g());
    append_optimizer(entries, "d_a", trainer.opt_d_a());
    append_optimizer(entries, "d_b", trainer.opt_d_b());
    append_optimizer(entries, "md_a", trainer.opt_md_a());
    append_optimizer(entries, "md_b", trainer.opt_md_b());
    checkpoint_save(entries, path);
}

LoadedModels load_models(const std::string& path) {
    std::map<std::string, Tensor> entries;
    for (auto& np : checkpoint_load(path)) entries.emplace(np.name, np.tensor);

    LoadedModels lm;
    lm.topology.ngf = static_cast<int>(take_meta(entries, "ngf", path));
    lm.topology.ndf = static_cast<int>(take_meta(entries, "ndf", path));
    lm.topology.num_resnet = static_cast<int>(take_meta(entries, "num_resnet", path));
    lm.topology.image_size = static_cast<int>(take_meta(entries, "image_size", path));
    lm.topology.composite = take_meta(entries, "composite", path) == 0
                                ? models::MaskComposite::blend
                                : models::MaskComposite::additive;
    lm.models = train::build_models(lm.topology);

    for (auto& np : lm.models.named_parameters()) {
        auto it = entries.find(np.name);
        if (it == entries.end())
            throw std::runtime_error(path + ": checkpoint is missing parameter '" + np.name + "'");
        if (it->second.shape() != np.tensor.shape())
            throw std::runtime_error(path + ": parameter '" + np.name + "' has shape " +
                                     shape_str(it->second.shape()) + ", model expects " +
                                     shape_str(np.tensor.shape()));
        np.tensor.data() = it->second.data();
    }
    return lm;
}

void restore_trainer(train::Trainer& trainer, const std::string& path) {
    std::map<std::string, Tensor> entries;
    for (auto& np : checkpoint_load(path)) entries.emplace(np.name, np.tensor);

    for (auto& np : trainer.model_set().named_parameters()) {
        auto it = entries.find(np.name);
        if (it == entries.end())
            throw std::runtime_error(path + ": checkpoint is missing parameter '" + np.name + "'");
        if (it->second.shape() != np.tensor.shape())
            throw std::runtime_error(path + ": parameter '" + np.name + "' has shape " +
                                     shape_str(it->second.shape()) + ", model expects " +
                                     shape_str(np.tensor.shape()));
        np.tensor.data() = it->second.data();
    }

    auto restore_opt = [&](const std::string& tag, train::Adam& opt) {
        auto t_it = entries.find("meta.opt." + tag + ".t");
        if (t_it == entries.end())
            throw std::runtime_error(path + ": checkpoint has no optimizer state for '" + tag + "'");
        std::vector<std::vector<Scalar>> m, v;
        char idx[16];
        for (size_t i = 0; i < opt.params().size(); ++i) {
            std::snprintf(idx, sizeof idx, "%04zu", i);
            auto m_it = entries.find("opt." + tag + ".m." + idx);
            auto v_it = entries.find("opt." + tag + ".v." + idx);
            if (m_it == entries.end() || v_it == entries.end())
                throw std::runtime_error(path + ": optimizer state for '" + tag +
                                         "' is incomplete at parameter " + std::to_string(i));
            m.push_back(m_it->second.data());
            v.push_back(v_it->second.data());
        }
        opt.restore_state(static_cast<int64_t>(t_it->second.item()), std::move(m), std::move(v));
    };
    restore_opt("g", trainer.opt_g());
    restore_opt("d_a", trainer.opt_d_a());
    restore_opt("d_b", trainer.opt_d_b());
    restore_opt("md_a", trainer.opt_md_a());
    restore_opt("md_b", trainer.opt_md_b());
}

}  // namespace xaigan::harness
