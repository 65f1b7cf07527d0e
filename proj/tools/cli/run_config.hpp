#pragma once

// Plain-text key=value run configuration. One assignment per line, '#'
// starts a comment, surrounding whitespace is trimmed. Every key has a
// default; unknown keys are an error.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "abl/synthlab.hpp"

namespace abl::cli {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct KeySpec {
    std::string name;
    std::string default_value;
    std::string doc;
};

/// Every recognised key in the order it is echoed.
const std::vector<KeySpec>& known_keys();

class RunConfig {
public:
    RunConfig();

    /// Apply assignments from a file on top of the current values.
    void load_file(const std::filesystem::path& path);
    void parse(std::istream& in, const std::string& origin);
    void set(const std::string& key, const std::string& value);

    const std::string& text(const std::string& key) const;
    double real(const std::string& key) const;
    long integer(const std::string& key) const;
    bool flag(const std::string& key) const;

    /// All keys with their resolved values, one per line, with a comment
    /// recording the documented meaning.
    void write(std::ostream& os) const;
    void write(const std::filesystem::path& path) const;

    synth::ShapeSpec shape_spec() const;
    synth::TrainConfig train_config() const;
    losses::AblConfig abl_config() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace abl::cli
