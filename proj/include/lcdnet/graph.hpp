#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lcdnet/tensor.hpp"

namespace lcdnet {

namespace detail {

/// Per-op wall-time tallies for the backward pass, enabled by setting
/// LCDNET_TIME_OPS. Diagnostic only.
inline bool op_timing_enabled() {
    static const bool on = std::getenv("LCDNET_TIME_OPS") != nullptr;
    return on;
}

inline std::map<std::string, double>& op_time_table() {
    static std::map<std::string, double> table;
    return table;
}

inline void dump_op_times() {
    for (const auto& [name, t] : op_time_table()) {
        std::fprintf(stderr, "%-24s %8.3f s\n", name.c_str(), t);
    }
}

}  // namespace detail

/// Reverse-mode tape. Nodes are appended in execution order, which is a
/// topological order by construction; backward() replays them once in
/// reverse and then marks the tape consumed. A tape belongs to one logical
/// thread for the duration of a forward/backward pass.
template <typename T>
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Activates the graph for recording on the current thread.
    class Scope {
    public:
        explicit Scope(Graph& g) : prev_(current_) { current_ = &g; }
        ~Scope() { current_ = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Graph* prev_;
    };

    static Graph* current() { return current_; }

    /// Appends a node. `backprop` reads the output's accumulated gradient and
    /// adds the chain-rule contributions into each input's gradient buffer.
    void record(Tensor<T> output, std::function<void(std::span<const T>)> backprop,
                const char* op_name) {
        if (consumed_) {
            throw std::runtime_error("recording onto a consumed tape");
        }
        nodes_.push_back(Node{std::move(output), std::move(backprop), op_name});
    }

    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    /// Populates d loss / d leaf on every requires-grad leaf reachable from
    /// `loss`, then consumes the tape.
    void backward(Tensor<T> loss) {
        if (consumed_) {
            throw std::runtime_error("backward on a consumed tape");
        }
        if (nodes_.empty()) {
            throw std::runtime_error("backward on an empty tape");
        }
        if (loss.numel() != 1) {
            throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                        loss.shape().str());
        }
        loss.grad_accum()[0] += T(1);
        const bool timing = detail::op_timing_enabled();
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (!it->output.has_grad()) {
                continue;
            }
            if (timing) {
                const auto t0 = std::chrono::steady_clock::now();
                it->backprop(it->output.grad());
                detail::op_time_table()[std::string("bwd ") + it->op_name] +=
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            } else {
                it->backprop(it->output.grad());
            }
        }
        consumed_ = true;
        nodes_.clear();
    }

private:
    struct Node {
        Tensor<T> output;
        std::function<void(std::span<const T>)> backprop;
        const char* op_name;
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;

    static thread_local Graph* current_;
};

template <typename T>
thread_local Graph<T>* Graph<T>::current_ = nullptr;

}  // namespace lcdnet
