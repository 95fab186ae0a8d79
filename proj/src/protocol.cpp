#include "packlab/protocol.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace packlab {

const char* family_name(ProtocolFamily f) {
    switch (f) {
        case ProtocolFamily::DensePourTap: return "dense_pour_tap";
        case ProtocolFamily::DenseIdeal: return "dense_ideal";
        case ProtocolFamily::LooseRotate: return "loose_rotate";
    }
    return "?";
}

ProtocolFamily family_from_name(const std::string& name) {
    if (name == "dense_pour_tap") return ProtocolFamily::DensePourTap;
    if (name == "dense_ideal") return ProtocolFamily::DenseIdeal;
    if (name == "loose_rotate") return ProtocolFamily::LooseRotate;
    throw std::invalid_argument("unknown protocol family: " + name);
}

double ProtocolSpec::effective_lift(double d) const {
    double a = lift_amplitude < 0 ? 0.1 * d : lift_amplitude;
    return a * std::sqrt(1.0 / gravity);
}

double ProtocolSpec::resolved_jitter(double d) const {
    return lateral_jitter < 0 ? 0.4 * d : lateral_jitter;
}

void ProtocolSpec::validate() const {
    if (!(pour_height > 0)) throw std::invalid_argument("protocol: pour_height must be > 0");
    if (!(pour_rate > 0)) throw std::invalid_argument("protocol: pour_rate must be > 0");
    if (agitation_cycles < 0) throw std::invalid_argument("protocol: agitation_cycles >= 0");
    if (!(gravity > 0)) throw std::invalid_argument("protocol: gravity must be > 0");
    if (loosen_cycles < 1) throw std::invalid_argument("protocol: loosen_cycles >= 1");
}

std::string ProtocolSpec::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "family=" << family_name(family) << "\n"
       << "pour_height=" << pour_height << "\n"
       << "pour_rate=" << pour_rate << "\n"
       << "agitation_cycles=" << agitation_cycles << "\n"
       << "lift_amplitude=" << lift_amplitude << "\n"
       << "lateral_jitter=" << lateral_jitter << "\n"
       << "gravity=" << gravity << "\n"
       << "loosen_cycles=" << loosen_cycles << "\n"
       << "max_tilt_deg=" << max_tilt_deg << "\n"
       << "plateau_tolerance=" << plateau_tolerance << "\n"
       << "plateau_window=" << plateau_window << "\n"
       << "target_count=" << target_count << "\n";
    return os.str();
}

ProtocolSpec ProtocolSpec::from_text(const std::string& text) {
    ProtocolSpec s;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("protocol line " + std::to_string(lineno) +
                                        ": expected key=value");
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "family") s.family = family_from_name(val);
        else if (key == "pour_height") s.pour_height = std::stod(val);
        else if (key == "pour_rate") s.pour_rate = std::stod(val);
        else if (key == "agitation_cycles") s.agitation_cycles = std::stoi(val);
        else if (key == "lift_amplitude") s.lift_amplitude = std::stod(val);
        else if (key == "lateral_jitter") s.lateral_jitter = std::stod(val);
        else if (key == "gravity") s.gravity = std::stod(val);
        else if (key == "loosen_cycles") s.loosen_cycles = std::stoi(val);
        else if (key == "max_tilt_deg") s.max_tilt_deg = std::stod(val);
        else if (key == "plateau_tolerance") s.plateau_tolerance = std::stod(val);
        else if (key == "plateau_window") s.plateau_window = std::stoi(val);
        else if (key == "target_count") s.target_count = std::stoull(val);
        else throw std::invalid_argument("protocol: unknown key " + key);
    }
    s.validate();
    return s;
}

ProtocolSpec ProtocolSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("protocol: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

ProtocolSpec ProtocolSpec::dense_pour_tap() { return {}; }

ProtocolSpec ProtocolSpec::dense_ideal() {
    ProtocolSpec s;
    s.family = ProtocolFamily::DenseIdeal;
    return s;
}

ProtocolSpec ProtocolSpec::loose_rotate() {
    ProtocolSpec s;
    s.family = ProtocolFamily::LooseRotate;
    s.agitation_cycles = 0;
    return s;
}

} // namespace packlab
