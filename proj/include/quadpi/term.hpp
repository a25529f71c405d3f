#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "quadpi/common.hpp"
#include "quadpi/features.hpp"

namespace quadpi::poly {

// One multiplicative factor: a named feature raised to an integer power,
// optionally wrapped in an absolute value.
struct Factor {
    int feature = 0;  // FeatureIndex
    bool abs = false;
    int power = 1;

    friend bool operator==(const Factor& a, const Factor& b) {
        return a.feature == b.feature && a.abs == b.abs && a.power == b.power;
    }
};

// Signed product of factors. Weight is +-1 for the composite regressors that
// appear as sums; plain candidates always carry weight 1.
struct Monomial {
    double weight = 1.0;
    std::vector<Factor> factors;  // kept sorted by (feature, abs)

    void canonicalize() {
        std::sort(factors.begin(), factors.end(), [](const Factor& a, const Factor& b) {
            if (a.feature != b.feature) return a.feature < b.feature;
            return a.abs < b.abs;
        });
        // merge equal (feature, abs) pairs
        std::vector<Factor> merged;
        for (const Factor& f : factors) {
            if (!merged.empty() && merged.back().feature == f.feature && merged.back().abs == f.abs)
                merged.back().power += f.power;
            else
                merged.push_back(f);
        }
        factors = std::move(merged);
    }

    double eval(const double* feat) const {
        double prod = weight;
        for (const Factor& f : factors) {
            double base = feat[f.feature];
            if (f.abs) base = std::abs(base);
            double p = base;
            for (int k = 1; k < f.power; ++k) p *= base;
            prod *= p;
        }
        return prod;
    }

    bool same_product(const Monomial& o) const { return factors == o.factors; }
};

// One regressor term: a sum of monomials. Most terms are a single weight-1
// monomial; the bias is the empty product.
struct Term {
    std::vector<Monomial> parts;

    static Term bias() {
        Term t;
        t.parts.push_back(Monomial{});
        return t;
    }

    bool is_bias() const { return parts.size() == 1 && parts[0].factors.empty() && parts[0].weight == 1.0; }

    double eval(const double* feat) const {
        double s = 0.0;
        for (const Monomial& m : parts) s += m.eval(feat);
        return s;
    }
    double eval(const FeatureVector& f) const { return eval(f.values.data()); }

    friend bool operator==(const Term& a, const Term& b) {
        if (a.parts.size() != b.parts.size()) return false;
        for (std::size_t i = 0; i < a.parts.size(); ++i) {
            if (a.parts[i].weight != b.parts[i].weight) return false;
            if (!(a.parts[i].factors == b.parts[i].factors)) return false;
        }
        return true;
    }
};

namespace detail {

inline void skip_ws(std::string_view s, std::size_t& i) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
}

inline std::string parse_ident(std::string_view s, std::size_t& i) {
    skip_ws(s, i);
    const std::size_t start = i;
    while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
    if (i == start) throw InvalidInputError("term parse: expected identifier in '" + std::string(s) + "'");
    return std::string(s.substr(start, i - start));
}

inline int parse_power(std::string_view s, std::size_t& i) {
    skip_ws(s, i);
    if (i >= s.size() || s[i] != '^') return 1;
    ++i;
    skip_ws(s, i);
    std::size_t start = i;
    while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.')) ++i;
    if (i == start) throw InvalidInputError("term parse: expected power after '^'");
    const double p = parse_double(std::string_view(s).substr(start, i - start));
    const int ip = static_cast<int>(p);
    if (static_cast<double>(ip) != p || ip < 1)
        throw InvalidInputError("term parse: powers must be positive integers");
    return ip;
}

inline Factor parse_factor(std::string_view s, std::size_t& i) {
    skip_ws(s, i);
    Factor f;
    std::string name = parse_ident(s, i);
    if (name == "abs") {
        skip_ws(s, i);
        if (i >= s.size() || s[i] != '(') throw InvalidInputError("term parse: expected '(' after abs");
        ++i;
        const std::string inner = parse_ident(s, i);
        skip_ws(s, i);
        if (i >= s.size() || s[i] != ')') throw InvalidInputError("term parse: expected ')' after abs(" + inner);
        ++i;
        f.abs = true;
        name = inner;
    }
    const int idx = feature_index(name);
    if (idx == kFeatureCount)
        throw InvalidInputError("term parse: unknown feature name '" + name + "'");
    f.feature = idx;
    f.power = parse_power(s, i);
    return f;
}

// mono := '1' | 'bias' | factor ('*' factor)*
inline Monomial parse_monomial(std::string_view s, std::size_t& i) {
    Monomial m;
    skip_ws(s, i);
    if (i < s.size() && s[i] == '1' &&
        (i + 1 >= s.size() || (!std::isalnum(static_cast<unsigned char>(s[i + 1])) && s[i + 1] != '_'))) {
        ++i;
        return m;  // bias
    }
    // peek: "bias"
    {
        std::size_t j = i;
        if (s.substr(j, 4) == "bias" &&
            (j + 4 >= s.size() || (!std::isalnum(static_cast<unsigned char>(s[j + 4])) && s[j + 4] != '_'))) {
            i = j + 4;
            return m;
        }
    }
    m.factors.push_back(parse_factor(s, i));
    for (;;) {
        skip_ws(s, i);
        if (i < s.size() && s[i] == '*') {
            ++i;
            m.factors.push_back(parse_factor(s, i));
        } else {
            break;
        }
    }
    m.canonicalize();
    return m;
}

}  // namespace detail

// Parses a regressor term such as "bias", "mu_x", "abs(mu_y)*mu_z^2",
// "mu_x^2+mu_y^2" or "-mu_z+mu_vin". Accepts one redundant level of
// surrounding parentheses.
inline Term parse_term(std::string_view text) {
    std::string_view s = text;
    // strip matched outer parens
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    if (b > a + 1 && s[a] == '(' && s[b - 1] == ')') {
        int depth = 0;
        bool wraps = true;
        for (std::size_t i = a; i < b; ++i) {
            if (s[i] == '(') ++depth;
            if (s[i] == ')') {
                --depth;
                if (depth == 0 && i + 1 < b) wraps = false;
            }
        }
        if (wraps) {
            ++a;
            --b;
        }
    }
    s = s.substr(a, b - a);
    if (s.empty()) throw InvalidInputError("term parse: empty term");

    Term t;
    std::size_t i = 0;
    double sign = 1.0;
    detail::skip_ws(s, i);
    if (i < s.size() && (s[i] == '-' || s[i] == '+')) {
        sign = (s[i] == '-') ? -1.0 : 1.0;
        ++i;
    }
    for (;;) {
        Monomial m = detail::parse_monomial(s, i);
        m.weight = sign;
        t.parts.push_back(std::move(m));
        detail::skip_ws(s, i);
        if (i >= s.size()) break;
        if (s[i] == '+')
            sign = 1.0;
        else if (s[i] == '-')
            sign = -1.0;
        else
            throw InvalidInputError("term parse: unexpected character '" + std::string(1, s[i]) +
                                    "' in '" + std::string(text) + "'");
        ++i;
    }
    return t;
}

inline std::string format_factor(const Factor& f) {
    std::string s;
    const std::string& n = feature_names()[static_cast<std::size_t>(f.feature)];
    if (f.abs)
        s = "abs(" + n + ")";
    else
        s = n;
    if (f.power != 1) s += "^" + std::to_string(f.power);
    return s;
}

inline std::string format_term(const Term& t) {
    if (t.is_bias()) return "bias";
    std::string out;
    for (std::size_t i = 0; i < t.parts.size(); ++i) {
        const Monomial& m = t.parts[i];
        if (i == 0) {
            if (m.weight < 0.0) out += "-";
        } else {
            out += (m.weight < 0.0) ? "-" : "+";
        }
        if (m.factors.empty()) {
            out += "1";
        } else {
            for (std::size_t k = 0; k < m.factors.size(); ++k) {
                if (k) out += "*";
                out += format_factor(m.factors[k]);
            }
        }
    }
    return out;
}

}  // namespace quadpi::poly
