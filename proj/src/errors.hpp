#pragma once

#include <stdexcept>
#include <string>

namespace slimfl {

// Configuration file / parameter validation problems. Maps to exit code 1.
class config_error : public std::runtime_error {
  public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A value outside an operation's domain.
class invalid_parameter : public std::invalid_argument {
  public:
    explicit invalid_parameter(const std::string& msg) : std::invalid_argument(msg) {}
};

// Power split / code rate combination under which the stronger message can
// never be decoded. Carries the offending margin P1/u' - P2 (<= 0).
class undecodable_configuration : public std::runtime_error {
  public:
    undecodable_configuration(const std::string& msg, double margin)
        : std::runtime_error(msg), margin_(margin) {}
    double margin() const { return margin_; }

  private:
    double margin_;
};

// Link with p1 = 0: no message ever decodes.
class degenerate_link : public std::runtime_error {
  public:
    explicit degenerate_link(const std::string& msg) : std::runtime_error(msg) {}
};

class io_error : public std::runtime_error {
  public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace slimfl
