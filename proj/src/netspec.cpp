#include "sslhar/netspec.hpp"

#include <stdexcept>

namespace sslhar {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

int parse_int(const std::string& field, const std::string& token) {
    try {
        size_t consumed = 0;
        const int v = std::stoi(field, &consumed);
        if (consumed != field.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("network spec: bad integer '" + field + "' in token '" +
                                    token + "'");
    }
}

[[noreturn]] void bad_token(const std::string& token) {
    throw std::invalid_argument("network spec: unknown token '" + token + "'");
}

}  // namespace

NetworkSpec parse_spec(const std::string& s, int in_channels, int in_len, int n_classes) {
    if (s.empty()) throw std::invalid_argument("network spec: empty string");
    if (in_channels < 1 || in_len < 1) {
        throw std::invalid_argument("network spec: input shape must be positive, got " +
                                    std::to_string(in_channels) + " x " + std::to_string(in_len));
    }
    if (n_classes < 2) throw std::invalid_argument("network spec: need at least 2 classes");

    NetworkSpec spec;
    spec.source = s;
    spec.in_channels = in_channels;
    spec.in_len = in_len;
    spec.n_classes = n_classes;
    spec.shapes.push_back(LayerShape::map(in_channels, in_len));

    bool saw_fc = false;
    for (const std::string& token : split(s, '-')) {
        if (saw_fc) {
            throw std::invalid_argument("network spec: token '" + token +
                                        "' after the final fc layer");
        }
        const std::vector<std::string> fields = split(token, ':');
        const LayerShape& prev = spec.shapes.back();

        if (fields[0] == "convv") {
            if (fields.size() != 5) bad_token(token);
            LayerDesc d;
            d.kind = LayerDesc::Kind::Conv;
            d.out_ch = parse_int(fields[1], token);
            d.kernel = parse_int(fields[2], token);
            d.stride = parse_int(fields[3], token);
            const int depth_field = parse_int(fields[4], token);
            if (depth_field != 1) {
                throw std::invalid_argument("network spec: token '" + token +
                                            "' has unsupported depth field " +
                                            std::to_string(depth_field));
            }
            if (d.out_ch < 1 || d.kernel < 1 || d.stride < 1) bad_token(token);
            if (prev.flat) {
                throw std::invalid_argument("network spec: token '" + token +
                                            "' cannot follow a flat layer");
            }
            const int out_len = (prev.len - d.kernel) / d.stride + 1;
            if (prev.len < d.kernel || out_len < 1) {
                throw std::invalid_argument("network spec: token '" + token +
                                            "' produces length " + std::to_string(out_len) +
                                            " from input length " + std::to_string(prev.len));
            }
            spec.layers.push_back(d);
            spec.shapes.push_back(LayerShape::map(d.out_ch, out_len));
        } else if (fields[0] == "maxpool") {
            if (fields.size() != 3) bad_token(token);
            LayerDesc d;
            d.kind = LayerDesc::Kind::Pool;
            d.pool_size = parse_int(fields[1], token);
            d.pool_stride = parse_int(fields[2], token);
            if (d.pool_size < 1 || d.pool_stride < 1) bad_token(token);
            if (prev.flat) {
                throw std::invalid_argument("network spec: token '" + token +
                                            "' cannot follow a flat layer");
            }
            if (prev.len < d.pool_size) {
                throw std::invalid_argument("network spec: token '" + token +
                                            "' needs length >= " + std::to_string(d.pool_size) +
                                            ", input length is " + std::to_string(prev.len));
            }
            const int out_len = (prev.len - d.pool_size) / d.pool_stride + 1;
            spec.layers.push_back(d);
            spec.shapes.push_back(LayerShape::map(prev.ch, out_len));
        } else if (fields[0] == "fc") {
            if (fields.size() != 1) bad_token(token);
            LayerDesc d;
            d.kind = LayerDesc::Kind::Dense;
            d.units = n_classes;
            spec.layers.push_back(d);
            spec.shapes.push_back(LayerShape::vec(n_classes));
            saw_fc = true;
        } else {
            bad_token(token);
        }
    }
    if (!saw_fc) {
        throw std::invalid_argument("network spec: must end with an fc token");
    }
    return spec;
}

}  // namespace sslhar
