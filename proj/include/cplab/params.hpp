#pragma once

// Ordered, named parameter segments with flatten/unflatten round-tripping.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cplab/tensor.hpp"

namespace cplab {

template <typename S>
class ParameterStore {
public:
    struct Segment {
        std::string name;
        Value<S> value;
    };

    Value<S>& add(const std::string& name, Mat<S> init) {
        if (index_.count(name)) throw UsageError("ParameterStore: duplicate name '" + name + "'");
        index_.emplace(name, segments_.size());
        segments_.push_back({name, parameter(std::move(init))});
        return segments_.back().value;
    }

    Value<S>& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw UsageError("ParameterStore: unknown name '" + name + "'");
        return segments_[it->second].value;
    }
    const Value<S>& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw UsageError("ParameterStore: unknown name '" + name + "'");
        return segments_[it->second].value;
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::vector<Segment>& segments() { return segments_; }
    const std::vector<Segment>& segments() const { return segments_; }

    std::int64_t total_dim() const {
        std::int64_t d = 0;
        for (const auto& s : segments_) d += s.value.size();
        return d;
    }

    void zero_grad() {
        for (auto& s : segments_) s.value.zero_grad();
    }

    // Row-major concatenation of all segments, in declaration order.
    std::vector<S> flatten() const {
        std::vector<S> out;
        out.reserve(static_cast<std::size_t>(total_dim()));
        for (const auto& s : segments_) {
            const Mat<S>& m = s.value.val();
            out.insert(out.end(), m.data(), m.data() + m.size());
        }
        return out;
    }

    std::vector<S> flatten_grad() const {
        std::vector<S> out;
        out.reserve(static_cast<std::size_t>(total_dim()));
        for (const auto& s : segments_) {
            auto& v = const_cast<Value<S>&>(s.value);
            const Mat<S>& g = v.grad();
            out.insert(out.end(), g.data(), g.data() + g.size());
        }
        return out;
    }

    void unflatten(const std::vector<S>& flat) {
        if (static_cast<std::int64_t>(flat.size()) != total_dim()) {
            throw UsageError("ParameterStore: unflatten size " + std::to_string(flat.size()) +
                             " vs dim " + std::to_string(total_dim()));
        }
        std::size_t off = 0;
        for (auto& s : segments_) {
            Mat<S>& m = s.value.mutable_val();
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                      flat.begin() + static_cast<std::ptrdiff_t>(off + static_cast<std::size_t>(m.size())),
                      m.data());
            off += static_cast<std::size_t>(m.size());
        }
    }

private:
    std::vector<Segment> segments_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace cplab
