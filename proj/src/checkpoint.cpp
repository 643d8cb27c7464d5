// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/tns_io.hpp"
#include "depthconv/train.hpp"

#include <fstream>
#include <map>

namespace depthconv {

namespace fs = std::filesystem;

fs::path checkpoint_data_path(const fs::path& path) {
    auto p = path;
    p += ".tns";
    return p;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
    const auto params = ckpt.model.parameters();
    const auto names = ckpt.model.parameter_names();
    if (ckpt.velocity.size() != params.size() && !ckpt.velocity.empty()) {
        throw CheckpointError("checkpoint: velocity buffers do not match parameters");
    }
    std::vector<std::uint8_t> blob;
    Json index = Json::array();
    auto append = [&](const std::string& name, const Tensor& t) {
        const auto bytes = encode_tns(t);
        index.push_back({{"name", name}, {"offset", blob.size()}, {"bytes", bytes.size()}});
        blob.insert(blob.end(), bytes.begin(), bytes.end());
    };
    for (std::size_t i = 0; i < params.size(); ++i) append(names[i], params[i].clone());
    for (std::size_t i = 0; i < ckpt.velocity.size(); ++i) {
        append(names[i] + ".velocity", Tensor(params[i].shape(), ckpt.velocity[i]));
    }
    const auto data_path = checkpoint_data_path(path);
    Json j{{"format", "depthconv-checkpoint-1"},
           {"data", data_path.filename().string()},
           {"epoch", ckpt.epoch},
           {"rng_state", ckpt.rng_state},
           {"network", to_json(ckpt.model.config())},
           {"training", to_json(ckpt.training)},
           {"extra", ckpt.extra},
           {"tensors", index}};
    write_file_bytes(data_path, blob);
    std::ofstream out(path);
    if (!out) throw CheckpointError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "depthconv-checkpoint-1") throw CheckpointError(path.string() + ": not a checkpoint");
    Checkpoint ckpt{Network(network_config_from_json(j.at("network"))), train_config_from_json(j.at("training")),
                    {}, j.at("epoch").get<int>(), j.at("rng_state").get<std::string>(), j.value("extra", Json::object())};
    const auto blob = read_file_bytes(path.parent_path() / j.at("data").get<std::string>());
    auto tensor_at = [&](const Json& entry) {
        const auto offset = entry.at("offset").get<std::size_t>();
        const auto bytes = entry.at("bytes").get<std::size_t>();
        if (offset + bytes > blob.size()) throw CheckpointError(path.string() + ": index points past the data file");
        return decode_tns(std::span(blob).subspan(offset, bytes));
    };
    std::map<std::string, Json> entries;
    for (const auto& e : j.at("tensors")) entries[e.at("name").get<std::string>()] = e;
    auto params = ckpt.model.parameters();
    const auto names = ckpt.model.parameter_names();
    bool has_velocity = false;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto it = entries.find(names[i]);
        if (it == entries.end()) throw CheckpointError(path.string() + ": missing tensor " + names[i]);
        const auto t = tensor_at(it->second);
        if (t.shape() != params[i].shape()) throw CheckpointError(path.string() + ": shape mismatch for " + names[i]);
        std::copy(t.data().begin(), t.data().end(), params[i].mutable_data().begin());
        has_velocity = has_velocity || entries.count(names[i] + ".velocity");
    }
    if (has_velocity) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto it = entries.find(names[i] + ".velocity");
            if (it == entries.end()) throw CheckpointError(path.string() + ": missing velocity for " + names[i]);
            const auto t = tensor_at(it->second);
            ckpt.velocity.emplace_back(t.data().begin(), t.data().end());
        }
    }
    return ckpt;
}

}  // namespace depthconv
