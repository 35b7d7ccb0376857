// SPDX-License-Identifier: Apache-2.0
#include "moelab/model/checkpoint.hpp"

#include "moelab/errors.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace moelab::model {

namespace {

constexpr const char* kFormat = "moelab-checkpoint";
constexpr int kVersion = 1;

std::size_t inner_dim_of(const BlockStack& s)
{
    if (s.blocks.empty())
        return 0;
    return std::visit(
        [](const auto& b) -> std::size_t {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, DenseFFN>)
                return b.inner_dim();
            else
                return b.routed.empty() ? 0 : b.routed.front().inner_dim();
        },
        s.blocks.front());
}

void put_f32(std::vector<char>& buf, double v)
{
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i)
        buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

double get_f32(const std::vector<char>& buf, std::size_t off)
{
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i)
        bits |= std::uint32_t(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    return static_cast<double>(std::bit_cast<float>(bits));
}

ExpertFFN empty_expert(std::size_t hidden, std::size_t inner, ExpertRole role)
{
    ExpertFFN e;
    static_cast<FfnParams&>(e) =
        zero_ffn(hidden, inner, role == ExpertRole::routed ? nk::ParamGroup::routed : nk::ParamGroup::shared);
    e.role = role;
    return e;
}

} // namespace

nlohmann::json checkpoint_manifest(const BlockStack& stack, const CheckpointMeta& meta, const std::string& data_file)
{
    nlohmann::json blocks = nlohmann::json::array();
    for (std::size_t l = 0; l < stack.blocks.size(); ++l) {
        if (std::holds_alternative<DenseFFN>(stack.blocks[l])) {
            blocks.push_back({{"kind", "dense"}});
            continue;
        }
        const auto& m = std::get<MoELayer>(stack.blocks[l]);
        blocks.push_back({{"kind", "moe"},
                          {"layer_index", m.layer_index},
                          {"n_shared", m.shared.size()},
                          {"n_routed", m.routed.size()},
                          {"gate", routing::to_json(m.gate.config)}});
    }
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& np : named_parameters(stack)) {
        const auto& v = np.param->value;
        tensors.push_back({{"name", np.path},
                           {"rows", v.rows()},
                           {"cols", v.cols()},
                           {"offset", offset},
                           {"trainable", np.param->trainable},
                           {"group", std::string(nk::to_string(np.param->group))}});
        offset += v.size() * 4;
    }
    return {{"format", kFormat},
            {"version", kVersion},
            {"seed", meta.seed},
            {"precision", precision::to_json(meta.policy)},
            {"model",
             {{"kind", stack.is_moe() ? "moe" : "dense"},
              {"hidden_dim", stack.hidden_dim},
              {"inner_dim", inner_dim_of(stack)},
              {"layers", stack.blocks.size()}}},
            {"blocks", blocks},
            {"tensors", tensors},
            {"data_file", data_file},
            {"data_bytes", offset},
            {"extra", meta.extra}};
}

void save_checkpoint(const std::filesystem::path& manifest, const BlockStack& stack, const CheckpointMeta& meta)
{
    std::filesystem::path bin = manifest;
    bin.replace_extension(".bin");
    const nlohmann::json j = checkpoint_manifest(stack, meta, bin.filename().string());

    std::vector<char> buf;
    buf.reserve(j.at("data_bytes").get<std::size_t>());
    for (const auto& np : named_parameters(stack))
        for (double v : np.param->value.values())
            put_f32(buf, v);

    if (manifest.has_parent_path())
        std::filesystem::create_directories(manifest.parent_path());
    std::ofstream mf(manifest, std::ios::binary | std::ios::trunc);
    std::ofstream bf(bin, std::ios::binary | std::ios::trunc);
    if (!mf || !bf)
        throw FormatError("checkpoint: cannot write " + manifest.string());
    mf << j.dump(2) << '\n';
    bf.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!mf || !bf)
        throw FormatError("checkpoint: write failed for " + manifest.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest)
{
    std::ifstream mf(manifest, std::ios::binary);
    if (!mf)
        throw FormatError("checkpoint: cannot open " + manifest.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint: manifest is not valid JSON: " + std::string(e.what()));
    }

    Checkpoint ck;
    try {
        if (j.at("format").get<std::string>() != kFormat || j.at("version").get<int>() != kVersion)
            throw FormatError("checkpoint: unsupported format or version");
        ck.meta.seed = j.at("seed").get<std::uint64_t>();
        ck.meta.policy = precision::policy_from_json(j.at("precision"));
        ck.meta.extra = j.value("extra", nlohmann::json::object());

        const auto& mj = j.at("model");
        const std::size_t hidden = mj.at("hidden_dim").get<std::size_t>();
        const std::size_t inner = mj.at("inner_dim").get<std::size_t>();
        ck.stack.hidden_dim = hidden;
        for (const auto& b : j.at("blocks")) {
            const std::string kind = b.at("kind").get<std::string>();
            if (kind == "dense") {
                DenseFFN d;
                static_cast<FfnParams&>(d) = zero_ffn(hidden, inner, nk::ParamGroup::dense);
                ck.stack.blocks.emplace_back(std::move(d));
            } else if (kind == "moe") {
                MoELayer m;
                m.layer_index = b.at("layer_index").get<std::size_t>();
                m.gate = routing::empty_gate(routing::gate_config_from_json(b.at("gate")), hidden);
                for (std::size_t i = 0, n = b.at("n_shared").get<std::size_t>(); i < n; ++i)
                    m.shared.push_back(empty_expert(hidden, inner, ExpertRole::shared));
                for (std::size_t i = 0, n = b.at("n_routed").get<std::size_t>(); i < n; ++i)
                    m.routed.push_back(empty_expert(hidden, inner, ExpertRole::routed));
                ck.stack.blocks.emplace_back(std::move(m));
            } else {
                throw FormatError("checkpoint: unknown block kind '" + kind + "'");
            }
        }
        ck.stack.validate();

        std::filesystem::path bin = manifest.parent_path() / j.at("data_file").get<std::string>();
        std::ifstream bf(bin, std::ios::binary);
        if (!bf)
            throw FormatError("checkpoint: cannot open data file " + bin.string());
        const std::vector<char> buf((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

        auto params = named_parameters(ck.stack);
        const auto& tensors = j.at("tensors");
        if (tensors.size() != params.size())
            throw FormatError("checkpoint: manifest lists " + std::to_string(tensors.size()) + " tensors, model has " +
                              std::to_string(params.size()));
        std::size_t expected = 0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& tj = tensors[i];
            nk::Param& p = *params[i].param;
            if (tj.at("name").get<std::string>() != params[i].path)
                throw FormatError("checkpoint: tensor " + std::to_string(i) + " is '" +
                                  tj.at("name").get<std::string>() + "', expected '" + params[i].path + "'");
            if (tj.at("rows").get<std::size_t>() != p.value.rows() || tj.at("cols").get<std::size_t>() != p.value.cols())
                throw FormatError("checkpoint: shape mismatch for " + params[i].path);
            const std::size_t off = tj.at("offset").get<std::size_t>();
            if (off != expected || off + p.value.size() * 4 > buf.size())
                throw FormatError("checkpoint: bad offset or truncated data for " + params[i].path);
            auto vals = p.value.values();
            for (std::size_t k = 0; k < vals.size(); ++k)
                vals[k] = get_f32(buf, off + 4 * k);
            p.trainable = tj.at("trainable").get<bool>();
            p.group = nk::parse_param_group(tj.at("group").get<std::string>());
            expected = off + p.value.size() * 4;
        }
        if (expected != buf.size())
            throw FormatError("checkpoint: data file has " + std::to_string(buf.size()) + " bytes, expected " +
                              std::to_string(expected));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint: malformed manifest: " + std::string(e.what()));
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    return ck;
}

} // namespace moelab::model
