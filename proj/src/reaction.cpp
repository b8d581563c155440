#include "rdfilter/reaction.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "rdfilter/errors.hpp"

namespace rdf {

namespace {

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    return true;
}

double int_pow(double base, int exp) {
    double acc = 1.0; // 0^0 = 1 by convention
    for (int i = 0; i < exp; ++i) acc *= base;
    return acc;
}

} // namespace

void ReactionNetwork::validate() const {
    const int ns = n_species();
    const int nr = n_reactions();
    if (ns < 1) throw UsageError("reaction network has no species");
    for (const auto& name : species) {
        if (!valid_name(name)) throw UsageError("invalid species name '" + name + "'");
        if (std::count(species.begin(), species.end(), name) != 1)
            throw UsageError("duplicate species name '" + name + "'");
    }
    if (static_cast<int>(reactant_stoich.size()) != nr ||
        static_cast<int>(product_stoich.size()) != nr)
        throw UsageError("stoichiometry rows do not match the number of reactions");
    for (int r = 0; r < nr; ++r) {
        if (static_cast<int>(reactant_stoich[r].size()) != ns ||
            static_cast<int>(product_stoich[r].size()) != ns)
            throw UsageError("stoichiometry columns do not match the number of species");
        for (int s = 0; s < ns; ++s)
            if (reactant_stoich[r][s] < 0 || product_stoich[r][s] < 0)
                throw UsageError("negative stoichiometric coefficient in reaction " +
                                 std::to_string(r + 1));
        if (!(rates[r] >= 0.0))
            throw UsageError("rate constant of reaction " + std::to_string(r + 1) +
                             " must be >= 0");
    }
}

std::vector<double> mass_action_rates(const ReactionNetwork& net, std::span<const double> z) {
    if (static_cast<int>(z.size()) != net.n_species())
        throw UsageError("concentration vector length " + std::to_string(z.size()) +
                         " does not match " + std::to_string(net.n_species()) + " species");
    for (int s = 0; s < net.n_species(); ++s)
        if (z[s] < 0.0)
            throw UsageError("negative concentration for species '" + net.species[s] + "'");

    std::vector<double> nu(net.n_reactions());
    for (int r = 0; r < net.n_reactions(); ++r) {
        double acc = net.rates[r];
        for (int s = 0; s < net.n_species(); ++s)
            acc *= int_pow(z[s], net.reactant_stoich[r][s]);
        nu[r] = acc;
    }
    return nu;
}

std::vector<double> stoichiometric_drift(const ReactionNetwork& net, std::span<const double> z) {
    const std::vector<double> nu = mass_action_rates(net, z);
    std::vector<double> f(net.n_species(), 0.0);
    for (int r = 0; r < net.n_reactions(); ++r)
        for (int s = 0; s < net.n_species(); ++s)
            f[s] += (net.product_stoich[r][s] - net.reactant_stoich[r][s]) * nu[r];
    return f;
}

namespace {

// Splits one side of a reaction ("2 X + Y", possibly empty) into a
// stoichiometry row. line_no is for error messages only.
std::vector<int> parse_side(const std::string& side, const ReactionNetwork& net, int line_no) {
    std::vector<int> row(net.n_species(), 0);
    std::istringstream in(side);
    std::string tok;
    int pending_coef = -1; // coefficient waiting for a species name
    bool expect_plus = false;
    bool dangling_plus = false; // '+' consumed, next term still missing
    while (in >> tok) {
        if (tok == "+") {
            if (!expect_plus)
                throw UsageError("line " + std::to_string(line_no) + ": unexpected '+'");
            expect_plus = false;
            dangling_plus = true;
            continue;
        }
        dangling_plus = false;
        if (expect_plus)
            throw UsageError("line " + std::to_string(line_no) + ": missing '+' before '" +
                             tok + "'");
        if (std::isdigit(static_cast<unsigned char>(tok[0]))) {
            if (pending_coef >= 0)
                throw UsageError("line " + std::to_string(line_no) +
                                 ": two coefficients in a row");
            std::size_t pos = 0;
            int coef = 0;
            try {
                coef = std::stoi(tok, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos != tok.size() || coef <= 0)
                throw UsageError("line " + std::to_string(line_no) +
                                 ": bad stoichiometric coefficient '" + tok + "'");
            pending_coef = coef;
            continue;
        }
        auto it = std::find(net.species.begin(), net.species.end(), tok);
        if (it == net.species.end())
            throw UsageError("line " + std::to_string(line_no) + ": unknown species '" + tok +
                             "'");
        row[it - net.species.begin()] += pending_coef >= 0 ? pending_coef : 1;
        pending_coef = -1;
        expect_plus = true;
    }
    if (pending_coef >= 0)
        throw UsageError("line " + std::to_string(line_no) + ": coefficient without a species");
    if (dangling_plus)
        throw UsageError("line " + std::to_string(line_no) + ": trailing '+'");
    return row;
}

} // namespace

ReactionNetwork parse_network(const std::string& text) {
    ReactionNetwork net;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool have_species = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string head;
        if (!(ls >> head)) continue; // blank line
        if (head == "species") {
            if (have_species)
                throw UsageError("line " + std::to_string(line_no) +
                                 ": duplicate species declaration");
            std::string name;
            while (ls >> name) net.species.push_back(name);
            if (net.species.empty())
                throw UsageError("line " + std::to_string(line_no) + ": no species listed");
            have_species = true;
        } else if (head == "reaction") {
            if (!have_species)
                throw UsageError("line " + std::to_string(line_no) +
                                 ": reaction before species declaration");
            std::string rest;
            std::getline(ls, rest);
            const auto colon = rest.find(':');
            if (colon == std::string::npos)
                throw UsageError("line " + std::to_string(line_no) +
                                 ": expected 'reaction <rate> : <lhs> -> <rhs>'");
            double rate = 0.0;
            {
                std::istringstream rs(rest.substr(0, colon));
                if (!(rs >> rate) || !(rs >> std::ws).eof() || !(rate >= 0.0) ||
                    !std::isfinite(rate))
                    throw UsageError("line " + std::to_string(line_no) +
                                     ": bad rate constant");
            }
            const std::string body = rest.substr(colon + 1);
            const auto arrow = body.find("->");
            if (arrow == std::string::npos)
                throw UsageError("line " + std::to_string(line_no) + ": missing '->'");
            net.reactant_stoich.push_back(parse_side(body.substr(0, arrow), net, line_no));
            net.product_stoich.push_back(parse_side(body.substr(arrow + 2), net, line_no));
            net.rates.push_back(rate);
        } else {
            throw UsageError("line " + std::to_string(line_no) + ": unknown directive '" +
                             head + "'");
        }
    }
    if (!have_species) throw UsageError("network text declares no species");
    net.validate();
    return net;
}

namespace {

std::string format_side(const ReactionNetwork& net, const std::vector<int>& row) {
    std::string out;
    for (int s = 0; s < net.n_species(); ++s) {
        if (row[s] == 0) continue;
        if (!out.empty()) out += " + ";
        if (row[s] != 1) out += std::to_string(row[s]) + " ";
        out += net.species[s];
    }
    return out;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

std::string serialize_network(const ReactionNetwork& net) {
    net.validate();
    std::string out = "species";
    for (const auto& s : net.species) out += " " + s;
    out += "\n";
    for (int r = 0; r < net.n_reactions(); ++r) {
        out += "reaction " + format_double(net.rates[r]) + " : " +
               format_side(net, net.reactant_stoich[r]) + " -> " +
               format_side(net, net.product_stoich[r]) + "\n";
    }
    return out;
}

ReactionNetwork load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open network file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_network(buf.str());
}

void save_network(const ReactionNetwork& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write network file '" + path + "'");
    out << serialize_network(net);
    if (!out) throw UsageError("failed writing network file '" + path + "'");
}

void validate(const OregonatorParams& p) {
    if (!(p.epsilon > 0.0)) throw UsageError("oregonator epsilon must be > 0");
    if (!(p.q > 0.0)) throw UsageError("oregonator q must be > 0");
    if (!(p.d1 >= 0.0) || !(p.d2 >= 0.0))
        throw UsageError("oregonator diffusion coefficients must be >= 0");
}

void oregonator_reaction(const OregonatorParams& p, double z1, double z2, double& f1,
                         double& f2) {
    const double denom = z1 + p.q;
    if (denom == 0.0)
        throw NumericalError("oregonator: z1 + q vanished at z1 = " + std::to_string(z1));
    f1 = (z1 * (1.0 - z1) - p.sigma * z2 * (z1 - p.q) / denom) / p.epsilon;
    f2 = z1 - z2;
}

void oregonator_drift(const OregonatorParams& p, std::span<const double> z1,
                      std::span<const double> z2, std::span<const double> lap1,
                      std::span<const double> lap2, std::span<double> f1,
                      std::span<double> f2) {
    const std::size_t n = z1.size();
    if (z2.size() != n || lap1.size() != n || lap2.size() != n || f1.size() != n ||
        f2.size() != n)
        throw UsageError("oregonator_drift: field lengths differ");
    for (std::size_t v = 0; v < n; ++v) {
        double r1, r2;
        oregonator_reaction(p, z1[v], z2[v], r1, r2);
        f1[v] = r1 + p.d1 * lap1[v];
        f2[v] = r2 + p.d2 * lap2[v];
    }
}

std::pair<double, double> oregonator_steady_state(const OregonatorParams& p) {
    validate(p);
    // Positive root of z^2 - (1 - sigma - q) z - q (1 + sigma) = 0. The
    // constant term is negative for q > 0, so exactly one positive root
    // exists; the summed form below is cancellation-free.
    const double b = 1.0 - p.sigma - p.q;
    const double c = p.q * (1.0 + p.sigma);
    const double disc = b * b + 4.0 * c;
    if (!(disc > 0.0)) throw UsageError("oregonator steady state: no positive root");
    double root = 0.5 * (b + std::sqrt(disc));
    if (!(root > 0.0) || !std::isfinite(root))
        throw UsageError("oregonator steady state: no positive root");

    // The quadratic root is exact only to rounding; a few ulps of drift get
    // amplified by the unstable kinetics, so snap to the representable value
    // whose evaluated reaction drift is smallest (exactly zero if attainable).
    double best = root;
    double best_abs = std::numeric_limits<double>::infinity();
    double lo = root, hi = root;
    for (int i = 0; i < 256; ++i) {
        lo = std::nextafter(lo, 0.0);
        hi = std::nextafter(hi, std::numeric_limits<double>::infinity());
    }
    for (double z = lo; z <= hi; z = std::nextafter(z, std::numeric_limits<double>::infinity())) {
        double f1, f2;
        oregonator_reaction(p, z, z, f1, f2);
        const double a = std::abs(f1);
        if (a < best_abs || (a == best_abs && std::abs(z - root) < std::abs(best - root))) {
            best_abs = a;
            best = z;
        }
        if (z == hi) break;
    }
    return {best, best};
}

} // namespace rdf
