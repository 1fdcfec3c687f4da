#pragma once

// Timeline serialization: plain JSON event spans plus Chrome trace-event
// format ("traceEvents" with X phases, microsecond units) for trace viewers.

#include <fstream>
#include <string>

#include <json.hpp>

#include "kittensim/errors.hpp"
#include "kittensim/lcsf.hpp"

namespace kittensim {

inline nlohmann::ordered_json timeline_to_json(const Timeline& tl) {
    nlohmann::ordered_json j;
    j["makespan"] = tl.makespan;
    j["total_work"] = tl.total_work;
    j["throughput"] = tl.throughput();
    j["issue_utilization"] = tl.issue_utilization();
    j["stall_fractions"] = tl.stall_fractions();
    nlohmann::ordered_json lanes = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < tl.lanes.size(); ++l) {
        nlohmann::ordered_json lane;
        lane["name"] = tl.lanes[l];
        nlohmann::ordered_json events = nlohmann::ordered_json::array();
        for (const auto& e : tl.events[l]) {
            nlohmann::ordered_json ev;
            ev["kind"] = to_string(e.kind);
            ev["start"] = e.start;
            ev["end"] = e.end;
            ev["iteration"] = e.iteration;
            if (e.input_slot >= 0) ev["input_slot"] = e.input_slot;
            if (e.output_slot >= 0) ev["output_slot"] = e.output_slot;
            if (!e.cause.empty()) ev["cause"] = e.cause;
            events.push_back(std::move(ev));
        }
        lane["events"] = std::move(events);
        lanes.push_back(std::move(lane));
    }
    j["lanes"] = std::move(lanes);
    return j;
}

// Spans in the source timeline are seconds (or logical steps for functional
// traces); Chrome expects microseconds.
inline nlohmann::ordered_json timeline_to_chrome_trace(const Timeline& tl,
                                                       double seconds_to_us = 1e6) {
    nlohmann::ordered_json events = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < tl.lanes.size(); ++l) {
        nlohmann::ordered_json meta;
        meta["name"] = "thread_name";
        meta["ph"] = "M";
        meta["pid"] = 0;
        meta["tid"] = l;
        meta["args"]["name"] = tl.lanes[l];
        events.push_back(std::move(meta));
        for (const auto& e : tl.events[l]) {
            nlohmann::ordered_json ev;
            ev["name"] = std::string(to_string(e.kind)) +
                         (e.iteration >= 0 ? " i" + std::to_string(e.iteration) : "");
            ev["cat"] = to_string(e.kind);
            ev["ph"] = "X";
            ev["ts"] = e.start * seconds_to_us;
            ev["dur"] = (e.end - e.start) * seconds_to_us;
            ev["pid"] = 0;
            ev["tid"] = l;
            if (!e.cause.empty()) ev["args"]["cause"] = e.cause;
            events.push_back(std::move(ev));
        }
    }
    nlohmann::ordered_json j;
    j["traceEvents"] = std::move(events);
    j["displayTimeUnit"] = "ms";
    return j;
}

inline void write_json_file(const std::string& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for write: " + path);
    out << j.dump(2) << '\n';
}

} // namespace kittensim
