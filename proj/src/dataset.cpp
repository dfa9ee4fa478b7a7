#include "icd/dataset.hpp"

#include <fstream>

namespace icd {

namespace {
std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}
}  // namespace

std::vector<Sample> load_dataset(const std::string& path) {
  auto in = open_in(path);
  std::vector<Sample> samples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      samples.push_back(json::parse(line).get<Sample>());
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return samples;
}

void save_dataset(const std::string& path, const std::vector<Sample>& samples) {
  auto out = open_out(path);
  for (const auto& s : samples) out << json(s).dump() << "\n";
}

void save_pool(const std::string& path, const Pool& pool) {
  auto out = open_out(path);
  out << json{{"dimension", pool.dimension()},
              {"encoder_id", pool.encoder_id()}}.dump()
      << "\n";
  for (const auto& d : pool.entries()) out << json(d).dump() << "\n";
}

Pool load_pool(const std::string& path, const std::string& expected_encoder_id) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty snapshot");
  const json header = json::parse(line);
  const auto dim = header.at("dimension").get<std::size_t>();
  const auto encoder_id = header.at("encoder_id").get<std::string>();
  if (!expected_encoder_id.empty() && encoder_id != expected_encoder_id) {
    throw std::runtime_error(path + ": snapshot encoder \"" + encoder_id +
                             "\" does not match configured encoder \"" +
                             expected_encoder_id + "\"");
  }
  Pool pool(dim, std::nullopt, encoder_id);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      pool.append(json::parse(line).get<Demonstration>());
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pool;
}

}  // namespace icd
