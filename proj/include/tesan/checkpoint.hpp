// Versioned binary checkpoints: full training state (parameters, optimizer
// moments, rng state) for bit-identical resume.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "tesan/journeys.hpp"
#include "tesan/params.hpp"
#include "tesan/training.hpp"

namespace tesan {

namespace detail {

constexpr char kCheckpointMagic[4] = {'T', 'E', 'S', 'A'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename P>
void write_pod(std::ostream& os, const P& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(P));
}

template <typename P>
P read_pod(std::istream& is) {
    P v;
    is.read(reinterpret_cast<char*>(&v), sizeof(P));
    if (!is) throw Error("truncated checkpoint");
    return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_pod(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
    const auto len = read_pod<std::uint32_t>(is);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw Error("truncated checkpoint");
    return s;
}

template <typename T>
void write_tensor(std::ostream& os, const char* name, const Mat<T>& m) {
    write_string(os, name);
    write_pod(os, static_cast<std::uint64_t>(m.rows()));
    write_pod(os, static_cast<std::uint64_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(T) * m.size()));
}

template <typename T>
void read_tensor(std::istream& is, const char* name, Mat<T>& m) {
    const std::string stored = read_string(is);
    if (stored != name)
        throw Error("checkpoint tensor order mismatch: expected '" + std::string(name) +
                    "', found '" + stored + "'");
    const auto rows = read_pod<std::uint64_t>(is);
    const auto cols = read_pod<std::uint64_t>(is);
    m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(T) * m.size()));
    if (!is) throw Error("truncated checkpoint");
}

inline void write_config(std::ostream& os, const TrainConfig& cfg) {
    write_pod(os, static_cast<std::int32_t>(cfg.dim));
    write_pod(os, static_cast<std::int32_t>(cfg.window));
    write_pod(os, static_cast<std::int32_t>(cfg.negatives));
    write_pod(os, static_cast<std::int32_t>(cfg.epochs));
    write_pod(os, static_cast<std::int32_t>(cfg.batch_size));
    write_pod(os, cfg.learning_rate);
    write_pod(os, cfg.seed);
    write_pod(os, static_cast<std::uint8_t>(cfg.mode));
    write_pod(os, static_cast<std::uint8_t>(cfg.dual_tables ? 1 : 0));
    write_pod(os, static_cast<std::uint8_t>(cfg.optimizer));
    write_pod(os, static_cast<std::int32_t>(cfg.workers));
    write_pod(os, static_cast<std::int64_t>(cfg.d_max_override));
}

inline TrainConfig read_config(std::istream& is) {
    TrainConfig cfg;
    cfg.dim = read_pod<std::int32_t>(is);
    cfg.window = read_pod<std::int32_t>(is);
    cfg.negatives = read_pod<std::int32_t>(is);
    cfg.epochs = read_pod<std::int32_t>(is);
    cfg.batch_size = read_pod<std::int32_t>(is);
    cfg.learning_rate = read_pod<double>(is);
    cfg.seed = read_pod<std::uint64_t>(is);
    cfg.mode = static_cast<Mode>(read_pod<std::uint8_t>(is));
    cfg.dual_tables = read_pod<std::uint8_t>(is) != 0;
    cfg.optimizer = static_cast<Optimizer>(read_pod<std::uint8_t>(is));
    cfg.workers = read_pod<std::int32_t>(is);
    cfg.d_max_override = read_pod<std::int64_t>(is);
    return cfg;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const TrainState<T>& st, const TrainConfig& cfg,
                     std::uint64_t vocab_hash) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write checkpoint '" + path + "'");
    os.write(detail::kCheckpointMagic, 4);
    detail::write_pod(os, detail::kCheckpointVersion);
    detail::write_pod(os, static_cast<std::uint8_t>(sizeof(T)));
    detail::write_config(os, cfg);
    detail::write_pod(os, vocab_hash);
    detail::write_pod(os, static_cast<std::int32_t>(st.epoch));
    detail::write_pod(os, static_cast<std::int64_t>(st.adam_t));
    detail::write_string(os, st.rng_state);
    for_each_tensor(st.params, [&](const char* name, const Mat<T>& m) {
        detail::write_tensor(os, name, m);
    });
    for_each_tensor(st.adam_m, [&](const char* name, const Mat<T>& m) {
        detail::write_tensor(os, name, m);
    });
    for_each_tensor(st.adam_v, [&](const char* name, const Mat<T>& m) {
        detail::write_tensor(os, name, m);
    });
    if (!os) throw Error("failed writing checkpoint '" + path + "'");
}

/// Scalar width (4 or 8) stored in a checkpoint, for precision dispatch.
inline int checkpoint_scalar_width(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read checkpoint '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, detail::kCheckpointMagic, 4) != 0)
        throw Error("'" + path + "' is not a checkpoint file");
    const auto version = detail::read_pod<std::uint32_t>(is);
    if (version != detail::kCheckpointVersion)
        throw Error("unsupported checkpoint version " + std::to_string(version));
    return detail::read_pod<std::uint8_t>(is);
}

template <typename T>
struct LoadedCheckpoint {
    TrainState<T> state;
    TrainConfig cfg;
    std::uint64_t vocab_hash = 0;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read checkpoint '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, detail::kCheckpointMagic, 4) != 0)
        throw Error("'" + path + "' is not a checkpoint file");
    const auto version = detail::read_pod<std::uint32_t>(is);
    if (version != detail::kCheckpointVersion)
        throw Error("unsupported checkpoint version " + std::to_string(version));
    const int width = detail::read_pod<std::uint8_t>(is);
    if (width != static_cast<int>(sizeof(T)))
        throw Error("checkpoint holds " + std::to_string(width * 8) +
                    "-bit scalars; reopen with matching precision");

    LoadedCheckpoint<T> out;
    out.cfg = detail::read_config(is);
    out.vocab_hash = detail::read_pod<std::uint64_t>(is);
    out.state.epoch = detail::read_pod<std::int32_t>(is);
    out.state.adam_t = detail::read_pod<std::int64_t>(is);
    out.state.rng_state = detail::read_string(is);
    out.state.params.mode = out.cfg.mode;
    out.state.params.dual_tables = out.cfg.dual_tables;
    out.state.adam_m.mode = out.cfg.mode;
    out.state.adam_m.dual_tables = out.cfg.dual_tables;
    out.state.adam_v.mode = out.cfg.mode;
    out.state.adam_v.dual_tables = out.cfg.dual_tables;
    for_each_tensor(out.state.params, [&](const char* name, Mat<T>& m) {
        detail::read_tensor(is, name, m);
    });
    for_each_tensor(out.state.adam_m, [&](const char* name, Mat<T>& m) {
        detail::read_tensor(is, name, m);
    });
    for_each_tensor(out.state.adam_v, [&](const char* name, Mat<T>& m) {
        detail::read_tensor(is, name, m);
    });
    return out;
}

}  // namespace tesan
