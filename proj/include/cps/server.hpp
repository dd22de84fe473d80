#pragma once

// TCP front end for Service: one thread per client, one reply line per
// request line.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <list>
#include <mutex>
#include <string>
#include <thread>

#include "cps/service.hpp"

namespace cps {

class ServerError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

}  // namespace detail

class TcpServer {
 public:
  /// Binds immediately; port 0 picks a free port (see port()).
  TcpServer(Service& service, std::uint16_t port, const std::string& host = "127.0.0.1") : service_(service) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw ServerError(std::string("socket: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd_);
      throw ServerError("bad listen address '" + host + "'");
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd_, 16) < 0) {
      const std::string why = std::strerror(errno);
      ::close(fd_);
      throw ServerError("cannot listen on " + host + ":" + std::to_string(port) + ": " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }

  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  ~TcpServer() {
    stop();
    join_clients();
    ::close(fd_);
  }

  std::uint16_t port() const noexcept { return port_; }

  /// Accepts clients until stop(). Safe to call from a dedicated thread.
  void run() {
    while (!stopping_) {
      pollfd p{fd_, POLLIN, 0};
      const int ready = ::poll(&p, 1, 100);
      if (ready <= 0) continue;
      const int client = ::accept(fd_, nullptr, nullptr);
      if (client < 0) continue;
      std::lock_guard lock(clients_mu_);
      clients_.emplace_back([this, client] { serve_client(client); });
    }
    join_clients();
  }

  void stop() { stopping_ = true; }

 private:
  void serve_client(int fd) {
    std::string buffer;
    bool discarding = false;  // inside an over-long line
    char chunk[1024];
    bool open = true;
    while (open && !stopping_) {
      pollfd p{fd, POLLIN, 0};
      if (::poll(&p, 1, 100) <= 0) continue;
      const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buffer.append(chunk, static_cast<std::size_t>(n));
      std::size_t nl;
      while (open && (nl = buffer.find('\n')) != std::string::npos) {
        std::string line = buffer.substr(0, nl);
        buffer.erase(0, nl + 1);
        Reply reply;
        if (discarding) {
          discarding = false;
          reply.text = "ERR SYNTAX line exceeds 4096 bytes";
        } else {
          reply = service_.handle_line(line);
        }
        open = detail::send_all(fd, reply.text + '\n') && !reply.close;
      }
      if (buffer.size() > kMaxLineLength) {
        discarding = true;
        buffer.clear();
      }
    }
    ::close(fd);
  }

  void join_clients() {
    std::list<std::thread> done;
    {
      std::lock_guard lock(clients_mu_);
      done.swap(clients_);
    }
    for (auto& t : done) {
      if (t.joinable()) t.join();
    }
  }

  Service& service_;
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::mutex clients_mu_;
  std::list<std::thread> clients_;
};

}  // namespace cps
