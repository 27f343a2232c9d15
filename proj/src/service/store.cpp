#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "reopt/service.hpp"

namespace reopt {

namespace fs = std::filesystem;

std::uint32_t record_checksum(std::string_view payload) {
  auto crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()));
  return static_cast<std::uint32_t>(crc);
}

namespace {

fs::path log_path(const fs::path& root, const std::string& id) { return root / id / "events.log"; }

void check_id(const std::string& id) {
  const bool ok = !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_';
  });
  if (!ok) throw Error("UnknownSession", fmt::format("'{}' is not a session id", id));
}

void write_all(int fd, const std::string& data, const fs::path& path) {
  std::size_t done = 0;
  while (done < data.size()) {
    const auto n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("StoreWriteFailed", fmt::format("{}: {}", path.string(), std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
}

}  // namespace

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

void SessionStore::append(const std::string& session_id, const Json& event) {
  check_id(session_id);
  const auto payload = event.dump();
  const auto line = fmt::format("{:08x} {}\n", record_checksum(payload), payload);
  std::lock_guard lock(mutex_);
  const auto path = log_path(root_, session_id);
  fs::create_directories(path.parent_path());
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("StoreWriteFailed", fmt::format("{}: {}", path.string(), std::strerror(errno)));
  try {
    write_all(fd, line, path);
    if (::fsync(fd) != 0) throw Error("StoreWriteFailed", fmt::format("fsync {}: {}", path.string(), std::strerror(errno)));
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
}

SessionStore::Loaded SessionStore::load(const std::string& session_id) const {
  check_id(session_id);
  const auto path = log_path(root_, session_id);
  if (!fs::is_regular_file(path)) throw Error("UnknownSession", fmt::format("no stored session '{}'", session_id));
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto text = buffer.str();

  Loaded loaded;
  std::size_t pos = 0;
  std::size_t record = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    if (end == std::string::npos) {
      loaded.truncated = true;  // interrupted write of the last record
      break;
    }
    ++record;
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    auto corrupt = [&](const std::string& why) {
      return Error("StoreCorruption", fmt::format("{} record {}: {}", path.string(), record, why));
    };
    if (line.size() < 10 || line[8] != ' ') throw corrupt("malformed record header");
    const auto payload = line.substr(9);
    std::uint32_t stored = 0;
    try {
      stored = static_cast<std::uint32_t>(std::stoul(std::string(line.substr(0, 8)), nullptr, 16));
    } catch (const std::exception&) {
      throw corrupt("malformed checksum");
    }
    if (stored != record_checksum(payload)) throw corrupt("checksum mismatch");
    try {
      loaded.events.push_back(Json::parse(payload));
    } catch (const Json::exception& e) {
      throw corrupt(e.what());
    }
  }
  return loaded;
}

void SessionStore::drop_partial_tail(const std::string& session_id) {
  check_id(session_id);
  std::lock_guard lock(mutex_);
  const auto path = log_path(root_, session_id);
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto text = buffer.str();
  const auto last = text.rfind('\n');
  const auto keep = last == std::string::npos ? 0 : last + 1;
  if (keep != text.size()) fs::resize_file(path, keep);
}

std::vector<std::string> SessionStore::sessions() const {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (entry.is_directory() && fs::is_regular_file(entry.path() / "events.log")) {
      out.push_back(entry.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace reopt
