#include "pssinit/netlist.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_set>

namespace pss {

double SystemSpec::omega_b() const { return 2.0 * std::numbers::pi * nominal_freq; }
double SystemSpec::period() const { return 1.0 / nominal_freq; }

const BusSpec* SystemSpec::find_bus(int id) const {
    for (const auto& b : buses)
        if (b.id == id)
            return &b;
    return nullptr;
}

const LoadSpec* SystemSpec::find_load(const std::string& device) const {
    for (const auto& l : loads)
        if (l.id == device)
            return &l;
    return nullptr;
}

ParseError::ParseError(int line, const std::string& msg)
    : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}

namespace {

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) {
        if (tok[0] == '#')
            break;
        out.push_back(tok);
    }
    return out;
}

double to_num(const std::string& tok, int line) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw ParseError(line, "expected a number, got '" + tok + "'");
    return v;
}

int to_int(const std::string& tok, int line) {
    const double v = to_num(tok, line);
    const int i = int(std::llround(v));
    if (double(i) != v)
        throw ParseError(line, "expected an integer, got '" + tok + "'");
    return i;
}

void need(const std::vector<std::string>& t, std::size_t n, int line, const char* what) {
    if (t.size() < n)
        throw ParseError(line, std::string("missing mandatory field in ") + what + " record");
}

ZipCoeffs parse_zip(const std::vector<std::string>& t, std::size_t at, int line) {
    ZipCoeffs z;
    if (at < t.size()) {
        need(t, at + 6, line, "zip");
        z.kps = to_num(t[at], line);
        z.kpi = to_num(t[at + 1], line);
        z.kpz = to_num(t[at + 2], line);
        z.kqs = to_num(t[at + 3], line);
        z.kqi = to_num(t[at + 4], line);
        z.kqz = to_num(t[at + 5], line);
    }
    return z;
}

} // namespace

SystemSpec parse_system(const std::string& text) {
    SystemSpec spec;
    std::istringstream stream(text);
    std::string line;
    std::string section;
    int lineno = 0;
    std::unordered_set<std::string> ids;
    std::unordered_set<int> bus_ids;

    auto unique_id = [&](const std::string& id, int ln) {
        if (!ids.insert(id).second)
            throw ParseError(ln, "duplicate id '" + id + "'");
    };

    while (std::getline(stream, line)) {
        ++lineno;
        auto t = tokenize(line);
        if (t.empty())
            continue;
        if (t[0].front() == '[') {
            if (t[0].back() != ']')
                throw ParseError(lineno, "malformed section header " + t[0]);
            section = t[0].substr(1, t[0].size() - 2);
            static const std::set<std::string> known = {"SYSTEM", "BUS",  "BRANCH", "GEN",
                                                        "MOTOR",  "LOAD", "PFCOND", "SOLVER"};
            if (!known.count(section))
                throw ParseError(lineno, "unknown section [" + section + "]");
            continue;
        }
        if (section.empty())
            throw ParseError(lineno, "data before any section header");

        if (section == "SYSTEM") {
            need(t, 2, lineno, "SYSTEM");
            if (t[0] == "base_mva")
                spec.base_mva = to_num(t[1], lineno);
            else if (t[0] == "frequency")
                spec.nominal_freq = to_num(t[1], lineno);
            else
                throw ParseError(lineno, "unknown SYSTEM key '" + t[0] + "'");
        } else if (section == "BUS") {
            need(t, 1, lineno, "BUS");
            BusSpec b;
            b.id = to_int(t[0], lineno);
            b.name = t.size() > 1 ? t[1] : ("bus" + t[0]);
            if (!bus_ids.insert(b.id).second)
                throw ParseError(lineno, "duplicate bus id " + t[0]);
            spec.buses.push_back(b);
        } else if (section == "BRANCH") {
            need(t, 7, lineno, "BRANCH");
            BranchSpec br;
            br.id = t[0];
            unique_id(br.id, lineno);
            br.from = to_int(t[1], lineno);
            br.to = to_int(t[2], lineno);
            br.r = to_num(t[3], lineno);
            br.x = to_num(t[4], lineno);
            br.b = to_num(t[5], lineno);
            br.ratio = to_num(t[6], lineno);
            spec.branches.push_back(br);
        } else if (section == "GEN") {
            need(t, 17, lineno, "GEN");
            GenSpec g;
            g.id = t[0];
            unique_id(g.id, lineno);
            g.bus = to_int(t[1], lineno);
            g.rated_mva = to_num(t[2], lineno);
            g.ra = to_num(t[3], lineno);
            g.xl = to_num(t[4], lineno);
            g.xd = to_num(t[5], lineno);
            g.xq = to_num(t[6], lineno);
            g.xd1 = to_num(t[7], lineno);
            g.xq1 = to_num(t[8], lineno);
            g.xd2 = to_num(t[9], lineno);
            g.xq2 = to_num(t[10], lineno);
            g.td01 = to_num(t[11], lineno);
            g.tq01 = to_num(t[12], lineno);
            g.td02 = to_num(t[13], lineno);
            g.tq02 = to_num(t[14], lineno);
            g.h = to_num(t[15], lineno);
            g.d = to_num(t[16], lineno);
            spec.generators.push_back(g);
        } else if (section == "MOTOR") {
            need(t, 11, lineno, "MOTOR");
            MotorSpec m;
            m.id = t[0];
            unique_id(m.id, lineno);
            m.bus = to_int(t[1], lineno);
            m.rated_mva = to_num(t[2], lineno);
            m.rs = to_num(t[3], lineno);
            m.xls = to_num(t[4], lineno);
            m.rr = to_num(t[5], lineno);
            m.xlr = to_num(t[6], lineno);
            m.xm = to_num(t[7], lineno);
            m.h = to_num(t[8], lineno);
            m.d = to_num(t[9], lineno);
            m.conn = t[10];
            if (m.conn != "floating_y")
                throw ParseError(lineno, "unsupported stator connection '" + m.conn + "'");
            spec.motors.push_back(m);
        } else if (section == "LOAD") {
            need(t, 5, lineno, "LOAD");
            LoadSpec l;
            l.id = t[0];
            unique_id(l.id, lineno);
            l.bus = to_int(t[1], lineno);
            l.s_total = {to_num(t[2], lineno), to_num(t[3], lineno)};
            l.alloc_k = to_num(t[4], lineno);
            l.zip = parse_zip(t, 5, lineno);
            spec.loads.push_back(l);
        } else if (section == "PFCOND") {
            need(t, 2, lineno, "PFCOND");
            PFCondition c;
            c.device = t[0];
            const std::string& kind = t[1];
            if (kind == "vtheta") {
                need(t, 4, lineno, "vtheta");
                c.kind = PFCondition::Kind::VTheta;
                c.v = to_num(t[2], lineno);
                c.theta = to_num(t[3], lineno);
            } else if (kind == "pv") {
                need(t, 4, lineno, "pv");
                c.kind = PFCondition::Kind::PV;
                c.p = to_num(t[2], lineno);
                c.v = to_num(t[3], lineno);
            } else if (kind == "motorp") {
                need(t, 3, lineno, "motorp");
                c.kind = PFCondition::Kind::MotorP;
                c.p = to_num(t[2], lineno);
            } else if (kind == "pq") {
                need(t, 5, lineno, "pq");
                c.kind = PFCondition::Kind::PQ;
                c.p = to_num(t[2], lineno);
                c.q = to_num(t[3], lineno);
                if (t[4] == "per_phase")
                    c.scope = PowerScope::PerPhase;
                else if (t[4] == "pos_seq")
                    c.scope = PowerScope::PositiveSequence;
                else
                    throw ParseError(lineno, "unknown pq scope '" + t[4] + "'");
                c.zip = parse_zip(t, 5, lineno);
            } else {
                throw ParseError(lineno, "unknown condition kind '" + kind + "'");
            }
            spec.conditions.push_back(c);
        } else if (section == "SOLVER") {
            need(t, 2, lineno, "SOLVER");
            auto& s = spec.solver;
            const double v = to_num(t[1], lineno);
            if (t[0] == "tolerance")
                s.tolerance = v;
            else if (t[0] == "maxiter")
                s.maxiter = int(v);
            else if (t[0] == "reltol")
                s.reltol = v;
            else if (t[0] == "eps")
                s.eps = v;
            else if (t[0] == "precondition")
                s.precondition = v != 0.0;
            else if (t[0] == "m_max")
                s.m_max = int(v);
            else
                throw ParseError(lineno, "unknown SOLVER key '" + t[0] + "'");
        }
    }

    // Machine data arrive on the machine rating; rebase to the system MVA
    // base (impedances scale by base/rated, inertia and damping by
    // rated/base). Serialization writes the rebased values back with
    // rated_mva = base_mva, so reparsing is the identity.
    for (auto& g : spec.generators) {
        if (g.rated_mva <= 0.0)
            throw ParseError(0, "generator " + g.id + ": non-positive rated power");
        const double zf = spec.base_mva / g.rated_mva;
        const double mf = g.rated_mva / spec.base_mva;
        for (double* z : {&g.ra, &g.xl, &g.xd, &g.xq, &g.xd1, &g.xq1, &g.xd2, &g.xq2})
            *z *= zf;
        g.h *= mf;
        g.d *= mf;
        g.rated_mva = spec.base_mva;
    }
    for (auto& m : spec.motors) {
        if (m.rated_mva <= 0.0)
            throw ParseError(0, "motor " + m.id + ": non-positive rated power");
        const double zf = spec.base_mva / m.rated_mva;
        const double mf = m.rated_mva / spec.base_mva;
        for (double* z : {&m.rs, &m.xls, &m.rr, &m.xlr, &m.xm})
            *z *= zf;
        m.h *= mf;
        m.d *= mf;
        m.rated_mva = spec.base_mva;
    }

    const bool has_vtheta =
        std::any_of(spec.conditions.begin(), spec.conditions.end(),
                    [](const PFCondition& c) { return c.kind == PFCondition::Kind::VTheta; });
    if (!has_vtheta)
        throw ParseError(lineno, "no angle reference device");

    return spec;
}

namespace {

std::string num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void write_zip(std::ostringstream& os, const ZipCoeffs& z) {
    os << ' ' << num(z.kps) << ' ' << num(z.kpi) << ' ' << num(z.kpz) << ' ' << num(z.kqs) << ' '
       << num(z.kqi) << ' ' << num(z.kqz);
}

} // namespace

std::string serialize_system(const SystemSpec& spec) {
    std::ostringstream os;
    os << "[SYSTEM]\n";
    os << "base_mva " << num(spec.base_mva) << "\n";
    os << "frequency " << num(spec.nominal_freq) << "\n";
    os << "[BUS]\n";
    for (const auto& b : spec.buses)
        os << b.id << ' ' << b.name << "\n";
    os << "[BRANCH]\n";
    for (const auto& br : spec.branches)
        os << br.id << ' ' << br.from << ' ' << br.to << ' ' << num(br.r) << ' ' << num(br.x) << ' '
           << num(br.b) << ' ' << num(br.ratio) << "\n";
    os << "[GEN]\n";
    for (const auto& g : spec.generators)
        os << g.id << ' ' << g.bus << ' ' << num(g.rated_mva) << ' ' << num(g.ra) << ' '
           << num(g.xl) << ' ' << num(g.xd) << ' ' << num(g.xq) << ' ' << num(g.xd1) << ' '
           << num(g.xq1) << ' ' << num(g.xd2) << ' ' << num(g.xq2) << ' ' << num(g.td01) << ' '
           << num(g.tq01) << ' ' << num(g.td02) << ' ' << num(g.tq02) << ' ' << num(g.h) << ' '
           << num(g.d) << "\n";
    os << "[MOTOR]\n";
    for (const auto& m : spec.motors)
        os << m.id << ' ' << m.bus << ' ' << num(m.rated_mva) << ' ' << num(m.rs) << ' '
           << num(m.xls) << ' ' << num(m.rr) << ' ' << num(m.xlr) << ' ' << num(m.xm) << ' '
           << num(m.h) << ' ' << num(m.d) << ' ' << m.conn << "\n";
    os << "[LOAD]\n";
    for (const auto& l : spec.loads) {
        os << l.id << ' ' << l.bus << ' ' << num(l.s_total.real()) << ' ' << num(l.s_total.imag())
           << ' ' << num(l.alloc_k);
        write_zip(os, l.zip);
        os << "\n";
    }
    os << "[PFCOND]\n";
    for (const auto& c : spec.conditions) {
        os << c.device << ' ';
        switch (c.kind) {
        case PFCondition::Kind::VTheta:
            os << "vtheta " << num(c.v) << ' ' << num(c.theta);
            break;
        case PFCondition::Kind::PV:
            os << "pv " << num(c.p) << ' ' << num(c.v);
            break;
        case PFCondition::Kind::MotorP:
            os << "motorp " << num(c.p);
            break;
        case PFCondition::Kind::PQ:
            os << "pq " << num(c.p) << ' ' << num(c.q) << ' '
               << (c.scope == PowerScope::PerPhase ? "per_phase" : "pos_seq");
            write_zip(os, c.zip);
            break;
        }
        os << "\n";
    }
    os << "[SOLVER]\n";
    const auto& s = spec.solver;
    os << "tolerance " << num(s.tolerance) << "\n";
    os << "maxiter " << s.maxiter << "\n";
    os << "reltol " << num(s.reltol) << "\n";
    os << "eps " << num(s.eps) << "\n";
    os << "precondition " << (s.precondition ? 1 : 0) << "\n";
    os << "m_max " << s.m_max << "\n";
    return os.str();
}

ThreePhase<std::complex<double>> allocate_load(const std::complex<double>& s, double k) {
    if (std::abs(k) >= 1.0)
        throw std::invalid_argument("allocate_load: |k| must be below 1");
    ThreePhase<std::complex<double>> out;
    out.a = (1.0 - k) * s / 3.0;
    out.b = s / 3.0;
    out.c = (1.0 + k) * s / 3.0;
    return out;
}

int count_pf_residuals(const SystemSpec& spec) {
    int n = 0;
    for (const auto& c : spec.conditions) {
        switch (c.kind) {
        case PFCondition::Kind::VTheta:
        case PFCondition::Kind::PV:
            n += 2;
            break;
        case PFCondition::Kind::MotorP:
            n += 1;
            break;
        case PFCondition::Kind::PQ:
            n += c.scope == PowerScope::PerPhase ? 6 : 2;
            break;
        }
    }
    return n;
}

int count_free_quantities(const SystemSpec& spec) {
    // Efd and Tm per generator, load torque per motor, per-phase R and X per
    // static load.
    return 2 * int(spec.generators.size()) + int(spec.motors.size()) + 6 * int(spec.loads.size());
}

std::vector<std::string> validate(const SystemSpec& spec) {
    std::vector<std::string> diag;
    auto flag = [&](const std::string& msg) { diag.push_back(msg); };

    auto has_bus = [&](int id) { return spec.find_bus(id) != nullptr; };

    for (const auto& br : spec.branches) {
        if (!has_bus(br.from) || !has_bus(br.to))
            flag("branch " + br.id + ": references a missing bus");
        if (br.from == br.to)
            flag("branch " + br.id + ": endpoints must be distinct buses");
        if (br.x <= 0.0)
            flag("branch " + br.id + ": series reactance must be strictly positive");
        if (br.r < 0.0 || br.b < 0.0 || br.ratio <= 0.0)
            flag("branch " + br.id + ": negative r/b or non-positive ratio");
    }
    for (const auto& g : spec.generators) {
        if (!has_bus(g.bus))
            flag("generator " + g.id + ": references a missing bus");
        if (g.xl <= 0.0 || g.xd <= 0.0 || g.xq <= 0.0)
            flag("generator " + g.id + ": reactances must be strictly positive");
        if (!(g.xd2 < g.xd1 && g.xd1 < g.xd))
            flag("generator " + g.id + ": d-axis reactance ordering requires x\" < x' < x");
        if (!(g.xq2 < g.xq1 && g.xq1 < g.xq))
            flag("generator " + g.id + ": q-axis reactance ordering requires x\" < x' < x");
        if (g.xd2 <= g.xl || g.xq2 <= g.xl)
            flag("generator " + g.id + ": subtransient reactance must exceed stator leakage");
        if (g.td01 <= 0.0 || g.tq01 <= 0.0 || g.td02 <= 0.0 || g.tq02 <= 0.0)
            flag("generator " + g.id + ": time constants must be strictly positive");
        if (g.h <= 0.0)
            flag("generator " + g.id + ": inertia constant must be strictly positive");
    }
    for (const auto& m : spec.motors) {
        if (!has_bus(m.bus))
            flag("motor " + m.id + ": references a missing bus");
        if (m.xls <= 0.0 || m.xlr <= 0.0 || m.xm <= 0.0)
            flag("motor " + m.id + ": reactances must be strictly positive");
        if (m.rr <= 0.0)
            flag("motor " + m.id + ": rotor resistance must be strictly positive");
        if (m.h <= 0.0)
            flag("motor " + m.id + ": inertia constant must be strictly positive");
    }
    for (const auto& l : spec.loads) {
        if (!has_bus(l.bus))
            flag("load " + l.id + ": references a missing bus");
        if (std::abs(l.alloc_k) >= 1.0)
            flag("load " + l.id + ": allocation factor must satisfy |k| < 1");
        if (l.s_total.imag() <= 0.0)
            flag("load " + l.id + ": reactive power must be positive (series R-L load model)");
    }

    int n_vtheta = 0;
    for (const auto& c : spec.conditions) {
        const bool on_gen = std::any_of(spec.generators.begin(), spec.generators.end(),
                                        [&](const GenSpec& g) { return g.id == c.device; });
        const bool on_motor = std::any_of(spec.motors.begin(), spec.motors.end(),
                                          [&](const MotorSpec& m) { return m.id == c.device; });
        const bool on_load = spec.find_load(c.device) != nullptr;
        if (!on_gen && !on_motor && !on_load)
            flag("condition on '" + c.device + "': unknown device");
        switch (c.kind) {
        case PFCondition::Kind::VTheta:
            ++n_vtheta;
            if (!on_gen)
                flag("condition on '" + c.device + "': vtheta requires a generator");
            break;
        case PFCondition::Kind::PV:
            if (!on_gen)
                flag("condition on '" + c.device + "': pv requires a generator");
            break;
        case PFCondition::Kind::MotorP:
            if (!on_motor)
                flag("condition on '" + c.device + "': motorp requires a motor");
            break;
        case PFCondition::Kind::PQ:
            if (on_gen || on_motor)
                flag("condition on '" + c.device + "': pq is only supported on loads");
            break;
        }
    }
    if (n_vtheta == 0)
        flag("no angle reference device");
    else if (n_vtheta > 1)
        flag("multiple angle references");

    const int res = count_pf_residuals(spec);
    const int free = count_free_quantities(spec);
    if (res != free)
        flag("equation balance: " + std::to_string(res) + " power-flow residuals vs " +
             std::to_string(free) + " free quantities");

    return diag;
}

} // namespace pss
