// Copyright 2026 The tacorl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// On-disk play dataset. Each episode is one binary file ("TEPS" magic,
// little-endian float32 payload); a json manifest and a csv affordance log
// sit next to them. Nothing here carries wall-clock state, so two runs with
// the same seed produce byte-identical directories.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "taco/env/collector.hpp"
#include "taco/env/playtable.hpp"

namespace taco {

class DatasetError : public std::runtime_error {
 public:
  explicit DatasetError(const std::string& what) : std::runtime_error(what) {}
};

constexpr uint32_t kEpisodeFormatVersion = 1;

struct EpisodeRecord {
  std::vector<Observation> observations;  // num_steps + 1
  std::vector<EnvAction> actions;         // num_steps
  int num_steps() const { return static_cast<int>(actions.size()); }
};

struct Dataset {
  std::vector<EpisodeRecord> episodes;
  std::vector<AffordanceSpan> spans;
  uint64_t seed = 0;

  size_t total_steps() const {
    size_t n = 0;
    for (const EpisodeRecord& ep : episodes) n += ep.actions.size();
    return n;
  }
};

namespace detail {

inline void put_f32(std::ostream& os, double v) {
  float f = static_cast<float>(v);
  uint32_t u;
  std::memcpy(&u, &f, 4);
  unsigned char b[4] = {static_cast<unsigned char>(u & 0xff),
                        static_cast<unsigned char>((u >> 8) & 0xff),
                        static_cast<unsigned char>((u >> 16) & 0xff),
                        static_cast<unsigned char>((u >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline double get_f32(std::istream& is, const std::string& file) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DatasetError("truncated episode file: " + file);
  uint32_t u = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) |
               (static_cast<uint32_t>(b[3]) << 24);
  float f;
  std::memcpy(&f, &u, 4);
  return static_cast<double>(f);
}

inline void put_u32_le(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32_le(std::istream& is, const std::string& file) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DatasetError("truncated episode file: " + file);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

inline std::string episode_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ep_%06d.bin", index);
  return buf;
}

}  // namespace detail

inline void save_episode(const std::string& path, const EpisodeRecord& ep) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DatasetError("cannot write episode file: " + path);
  os.write("TEPS", 4);
  detail::put_u32_le(os, kEpisodeFormatVersion);
  detail::put_u32_le(os, static_cast<uint32_t>(ep.num_steps()));
  for (const Observation& o : ep.observations)
    for (double v : o) detail::put_f32(os, v);
  for (const EnvAction& a : ep.actions) {
    detail::put_f32(os, a.dx);
    detail::put_f32(os, a.dy);
    detail::put_f32(os, a.gripper);
  }
  if (!os) throw DatasetError("write failed: " + path);
}

inline EpisodeRecord load_episode(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open episode file: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "TEPS", 4) != 0)
    throw DatasetError("bad magic in episode file: " + path);
  const uint32_t version = detail::get_u32_le(is, path);
  if (version != kEpisodeFormatVersion)
    throw DatasetError("unsupported episode format version " +
                       std::to_string(version) + " in " + path);
  const uint32_t steps = detail::get_u32_le(is, path);
  EpisodeRecord ep;
  ep.observations.resize(steps + 1);
  ep.actions.resize(steps);
  for (Observation& o : ep.observations)
    for (double& v : o) v = detail::get_f32(is, path);
  for (EnvAction& a : ep.actions) {
    a.dx = detail::get_f32(is, path);
    a.dy = detail::get_f32(is, path);
    a.gripper = detail::get_f32(is, path);
  }
  is.peek();
  if (!is.eof()) throw DatasetError("trailing bytes in episode file: " + path);
  return ep;
}

inline void save_dataset(const std::string& dir, const Dataset& ds,
                         bool overwrite = false) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  const fs::path manifest_path = root / "manifest.json";
  if (fs::exists(manifest_path) && !overwrite)
    throw DatasetError("dataset already exists at " + dir +
                       " (pass overwrite to replace it)");
  fs::create_directories(root / "episodes");

  int steps_per_episode = ds.episodes.empty() ? 0 : ds.episodes[0].num_steps();
  for (size_t i = 0; i < ds.episodes.size(); ++i)
    save_episode((root / "episodes" / detail::episode_filename(
                                          static_cast<int>(i))).string(),
                 ds.episodes[i]);

  {
    std::ofstream os(root / "affordances.csv");
    if (!os) throw DatasetError("cannot write affordance log in " + dir);
    os << "episode,step_start,step_end,affordance\n";
    for (const AffordanceSpan& sp : ds.spans)
      os << sp.episode << ',' << sp.step_start << ',' << sp.step_end << ','
         << sp.affordance << '\n';
  }

  nlohmann::json manifest;
  manifest["format_version"] = kEpisodeFormatVersion;
  manifest["episodes"] = ds.episodes.size();
  manifest["steps_per_episode"] = steps_per_episode;
  manifest["obs_dim"] = kObsDim;
  manifest["act_dim"] = kActDim;
  manifest["seed"] = ds.seed;
  manifest["affordance_log"] = "affordances.csv";
  std::ofstream os(manifest_path);
  os << manifest.dump(2) << '\n';
  if (!os) throw DatasetError("cannot write manifest in " + dir);
}

inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::ifstream ms(root / "manifest.json");
  if (!ms)
    throw DatasetError("no dataset manifest at " +
                       (root / "manifest.json").string());
  nlohmann::json manifest;
  try {
    ms >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("bad manifest in " + dir + ": " + e.what());
  }

  Dataset ds;
  ds.seed = manifest.value("seed", 0ull);
  const size_t n = manifest.at("episodes").get<size_t>();
  ds.episodes.reserve(n);
  for (size_t i = 0; i < n; ++i)
    ds.episodes.push_back(load_episode(
        (root / "episodes" / detail::episode_filename(static_cast<int>(i)))
            .string()));

  std::ifstream as(root / "affordances.csv");
  if (as) {
    std::string line;
    std::getline(as, line);  // header
    while (std::getline(as, line)) {
      if (line.empty()) continue;
      AffordanceSpan sp;
      size_t p1 = line.find(','), p2 = line.find(',', p1 + 1),
             p3 = line.find(',', p2 + 1);
      if (p1 == std::string::npos || p2 == std::string::npos ||
          p3 == std::string::npos)
        throw DatasetError("bad affordance log line in " + dir + ": " + line);
      sp.episode = std::stoi(line.substr(0, p1));
      sp.step_start = std::stoi(line.substr(p1 + 1, p2 - p1 - 1));
      sp.step_end = std::stoi(line.substr(p2 + 1, p3 - p2 - 1));
      sp.affordance = line.substr(p3 + 1);
      ds.spans.push_back(sp);
    }
  }
  return ds;
}

}  // namespace taco
