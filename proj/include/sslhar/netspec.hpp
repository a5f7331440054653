#pragma once

#include <string>
#include <vector>

namespace sslhar {

/// One encoder stage. The final stage is always Dense(n_classes); the softmax
/// classifier sits on top of it and is not a stage of its own.
struct LayerDesc {
    enum class Kind { Conv, Pool, Dense };
    Kind kind = Kind::Conv;
    // Conv
    int out_ch = 0;
    int kernel = 0;
    int stride = 1;
    // Pool
    int pool_size = 0;
    int pool_stride = 0;
    // Dense
    int units = 0;
};

/// Shape of one layer's activation: a ch x len feature map or a flat vector.
struct LayerShape {
    bool flat = false;
    int ch = 0;
    int len = 0;      // 1 for flat shapes
    int dim = 0;      // flat element count per example

    static LayerShape map(int ch, int len) { return {false, ch, len, ch * len}; }
    static LayerShape vec(int dim) { return {true, dim, 1, dim}; }
};

/// Validated layer pipeline shared by the clean encoder, the noisy encoder,
/// and the mirrored decoder.
struct NetworkSpec {
    std::string source;              // the spec string this was parsed from
    int in_channels = 0;
    int in_len = 0;
    int n_classes = 0;
    std::vector<LayerDesc> layers;   // L entries; layers[L-1] is Dense(n_classes)
    std::vector<LayerShape> shapes;  // L+1 entries; shapes[0] is the input

    int depth() const { return static_cast<int>(layers.size()); }
};

/// Grammar: '-'-separated tokens of `convv:C:K:S:1`, `maxpool:P:S`, `fc`.
/// `fc` expands to Dense(n_classes) plus the softmax head. The full shape
/// chain is validated; any intermediate length < 1 is rejected naming the
/// token and the computed length.
NetworkSpec parse_spec(const std::string& s, int in_channels, int in_len, int n_classes);

}  // namespace sslhar
