#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tamperlab {

/// Base of every error raised by the library. `exit_code()` is the CLI code
/// the error maps to.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string &what) : std::runtime_error(what) {}
    virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/// Missing or unreadable input file. The message names the file.
class LoadError : public Error {
public:
    LoadError(const std::string &file, const std::string &reason)
        : Error("cannot load '" + file + "': " + reason), file_(file) {}
    const std::string &file() const noexcept { return file_; }
    int exit_code() const noexcept override { return 3; }

private:
    std::string file_;
};

class CorruptCorpusError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class ScenarioInfeasibleError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class IncompatibleCheckpointError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// Training finished but the model never got past twice the chance level.
class TrainingFailedError : public Error {
public:
    TrainingFailedError(const std::string &what, std::vector<double> curve)
        : Error(what), learning_curve_(std::move(curve)) {}
    const std::vector<double> &learning_curve() const noexcept { return learning_curve_; }
    int exit_code() const noexcept override { return 4; }

private:
    std::vector<double> learning_curve_;
};

class InputShapeError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 5; }
};

class LayerOutOfRangeError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 5; }
};

class UndefinedStatisticError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 5; }
};

class WindowMismatchError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 5; }
};

} // namespace tamperlab
